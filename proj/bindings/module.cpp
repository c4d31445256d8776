#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "cagnet/autodiff.hpp"
#include "cagnet/checkpoint.hpp"
#include "cagnet/curation.hpp"
#include "cagnet/embedding_io.hpp"
#include "cagnet/error.hpp"
#include "cagnet/evaluation.hpp"
#include "cagnet/metrics.hpp"
#include "cagnet/synthetic.hpp"
#include "cagnet/trainer.hpp"
#include "cli_commands.hpp"

namespace py = pybind11;
using namespace cagnet;

namespace {

Modality modality_arg(const std::string& name) {
  auto m = parse_modality(name);
  if (!m) throw py::value_error("unknown modality '" + name + "'");
  return *m;
}

Task task_arg(const std::string& name) {
  auto t = parse_task(name);
  if (!t) throw py::value_error("unknown task '" + name + "'");
  return *t;
}

py::dict kappa_dict(const curation::KappaReport& r) {
  py::dict d;
  d["kappa"] = r.kappa;
  d["observed"] = r.observed;
  d["expected"] = r.expected;
  d["degenerate"] = r.degenerate;
  d["items"] = r.items;
  return d;
}

py::tuple run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run_cli(args, out, err);
  return py::make_tuple(code, out.str(), err.str());
}

void write_embedding(const std::filesystem::path& path, const std::string& modality,
                     py::array_t<float, py::array::c_style | py::array::forcecast> values,
                     const std::vector<bool>& valid) {
  if (values.ndim() != 2) throw py::value_error("values must be a 2-D array (steps x dim)");
  EmbeddingSequence seq;
  seq.modality = modality_arg(modality);
  seq.length = static_cast<std::uint32_t>(values.shape(0));
  seq.dim = static_cast<std::uint32_t>(values.shape(1));
  seq.values.assign(values.data(), values.data() + values.size());
  seq.valid = valid;
  write_embedding_file(seq, path);
}

py::tuple read_embedding(const std::filesystem::path& path, std::optional<std::uint32_t> expected_dim) {
  const auto seq = read_embedding_file(path, expected_dim);
  py::array_t<float> values({static_cast<py::ssize_t>(seq.length), static_cast<py::ssize_t>(seq.dim)});
  std::copy(seq.values.begin(), seq.values.end(), values.mutable_data());
  return py::make_tuple(std::string(modality_name(seq.modality)), values, seq.valid);
}

py::array_t<double> masked_softmax(py::array_t<double, py::array::c_style | py::array::forcecast> logits,
                                   std::optional<std::vector<bool>> valid) {
  if (logits.ndim() != 2) throw py::value_error("logits must be a 2-D array");
  const Shape shape{static_cast<std::size_t>(logits.shape(0)), static_cast<std::size_t>(logits.shape(1))};
  Tensor<double> t(shape, std::vector<double>(logits.data(), logits.data() + logits.size()));
  const auto p = ad::softmax_rows(t, valid ? &*valid : nullptr);
  py::array_t<double> out({logits.shape(0), logits.shape(1)});
  std::copy(p.data().begin(), p.data().end(), out.mutable_data());
  return out;
}

py::list predict_manifest(const std::filesystem::path& checkpoint, const std::filesystem::path& manifest,
                          std::optional<std::string> missing) {
  const auto ckpt = load_checkpoint(checkpoint);
  auto samples = load_manifest(manifest);
  load_embeddings(samples, static_cast<std::uint32_t>(ckpt.config.d_model));
  InferenceOptions opts;
  opts.task = ckpt.task;
  if (missing) opts.missing = {modality_arg(*missing)};
  py::list rows;
  for (const auto& p : predict_clips(ckpt.params, ckpt.config, as_pointers(samples), opts)) {
    py::dict row;
    row["clip_id"] = p.clip_id;
    row["label"] = p.label;
    row["predicted"] = p.predicted;
    row["probabilities"] = p.probabilities;
    row["block_probabilities"] = p.block_probabilities;
    rows.append(row);
  }
  return rows;
}

}  // namespace

PYBIND11_MODULE(_cagnet, m) {
  m.doc() = "Group affect fusion engine and dataset curation toolkit";

  py::register_exception<Error>(m, "CagnetError", PyExc_RuntimeError);

  m.def("run", &run, py::arg("args"), "Run a CLI subcommand; returns (exit_code, stdout, stderr).");

  m.def(
      "resolve_votes",
      [](const std::vector<int>& primary, std::optional<int> tiebreak, std::size_t classes) {
        const auto r = curation::resolve_votes(primary, tiebreak, classes);
        py::dict d;
        d["status"] = std::string(curation::status_name(r.status));
        d["label"] = r.label ? py::cast(*r.label) : py::none();
        d["tally"] = r.tally;
        return d;
      },
      py::arg("primary"), py::arg("tiebreak") = py::none(), py::arg("classes") = 3);

  m.def("remap_emotion", [](const std::string& label) { return std::string(emotion_name(curation::remap_emotion(label))); });

  m.def(
      "cohens_kappa",
      [](const std::vector<std::string>& a, const std::vector<std::string>& b, std::vector<std::string> categories) {
        return kappa_dict(curation::cohens_kappa(a, b, categories));
      },
      py::arg("a"), py::arg("b"), py::arg("categories"));
  m.def("kappa_from_counts", [](const std::vector<std::vector<double>>& c) { return kappa_dict(curation::kappa_from_counts(c)); });

  m.def(
      "segment_plan",
      [](double duration, double clip_len, std::size_t max_segments) {
        const auto plan = curation::segment_plan(duration, clip_len, max_segments);
        std::vector<std::pair<double, double>> windows;
        for (const auto& w : plan.windows) windows.emplace_back(w.start, w.end);
        return py::make_tuple(windows, plan.warning);
      },
      py::arg("duration"), py::arg("clip_len") = 5.0, py::arg("max_segments") = 35);

  m.def(
      "fuse_block_probabilities",
      [](const std::vector<double>& va, const std::vector<double>& vc, const std::vector<double>& ac) {
        const auto f = curation::fuse_block_probabilities(va, vc, ac);
        return py::make_tuple(f.probabilities, f.label);
      },
      py::arg("va"), py::arg("vc"), py::arg("ac"));

  m.def(
      "compute_metrics",
      [](const std::vector<int>& y_true, const std::vector<int>& y_pred, std::size_t num_classes) {
        return compute_metrics(y_true, y_pred, num_classes).to_json().dump();
      },
      py::arg("y_true"), py::arg("y_pred"), py::arg("num_classes"));

  m.def("masked_softmax", &masked_softmax, py::arg("logits"), py::arg("valid") = py::none());

  m.def("write_embedding", &write_embedding, py::arg("path"), py::arg("modality"), py::arg("values"),
        py::arg("valid"));
  m.def("read_embedding", &read_embedding, py::arg("path"), py::arg("expected_dim") = py::none());

  m.def(
      "make_synthetic",
      [](const std::filesystem::path& out_dir, std::size_t clips, std::uint32_t dim, const std::string& task,
         std::uint64_t seed, bool visual_only) {
        SyntheticOptions opts;
        opts.clips = clips;
        opts.dim = dim;
        opts.task = task_arg(task);
        opts.seed = seed;
        opts.visual_only = visual_only;
        auto samples = make_synthetic(opts);
        return write_synthetic(samples, out_dir);
      },
      py::arg("out_dir"), py::arg("clips") = 64, py::arg("dim") = 16, py::arg("task") = "valence",
      py::arg("seed") = 7, py::arg("visual_only") = false);

  m.def("predict", &predict_manifest, py::arg("checkpoint"), py::arg("manifest"), py::arg("missing") = py::none());
}
