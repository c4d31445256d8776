#include "cli_commands.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "cagnet/checkpoint.hpp"
#include "cagnet/error.hpp"
#include "cagnet/evaluation.hpp"
#include "cagnet/synthetic.hpp"
#include "cagnet/trainer.hpp"
#include "run_config.hpp"

namespace cagnet::cli {

using ojson = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

// Bad flag combinations detected after parsing; reported like CLI11 errors.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw Error("write failed for " + path.string());
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  return out;
}

template <typename T>
std::array<T, 3> parse_triple(const std::string& flag, const std::string& value) {
  const auto parts = split_commas(value);
  if (parts.size() != 3) throw UsageError(flag + " expects three comma-separated values, got '" + value + "'");
  std::array<T, 3> out{};
  for (std::size_t i = 0; i < 3; ++i) {
    try {
      std::size_t used = 0;
      if constexpr (std::is_floating_point_v<T>) {
        out[i] = std::stod(parts[i], &used);
      } else {
        if (parts[i].find('-') != std::string::npos) throw std::invalid_argument("negative");
        out[i] = static_cast<T>(std::stoull(parts[i], &used));
      }
      if (used != parts[i].size()) throw std::invalid_argument("trailing");
    } catch (const std::logic_error&) {
      throw UsageError(flag + ": invalid number '" + parts[i] + "'");
    }
  }
  return out;
}

Task require_task(const std::string& name) {
  auto t = parse_task(name);
  if (!t) throw UsageError("--task must be valence or emotion, got '" + name + "'");
  return *t;
}

ojson probabilities_json(const std::vector<double>& p) { return ojson(p); }

std::string label_name(Task task, int label) { return std::string(class_name(task, label)); }

// ---- resolve --------------------------------------------------------------

struct ResolveArgs {
  std::string annotations;
  std::string predictions;
  std::string out;
  std::string task = "valence";
  std::string label_source = "vote";
};

int cmd_resolve(const ResolveArgs& a, std::ostream& out) {
  const Task task = require_task(a.task);
  std::string jsonl;
  std::map<std::string, std::size_t> counts;
  bool malformed = false;

  if (a.label_source == "vote") {
    if (a.annotations.empty()) throw UsageError("--annotations is required with --label-source vote");
    const auto records = curation::load_annotations(a.annotations);
    for (const auto& r : curation::resolve_all(records, task)) {
      ojson row;
      row["clip_id"] = r.clip_id;
      row["status"] = std::string(curation::status_name(r.status));
      row["label"] = r.label ? ojson(label_name(task, *r.label)) : ojson(nullptr);
      ojson tally = ojson::object();
      for (std::size_t c = 0; c < r.tally.size(); ++c) tally[label_name(task, static_cast<int>(c))] = r.tally[c];
      row["tally"] = tally;
      if (r.error) {
        row["error"] = *r.error;
        malformed = true;
      }
      ++counts[std::string(curation::status_name(r.status))];
      jsonl += row.dump() + "\n";
    }
  } else if (a.label_source == "prob-fusion") {
    if (a.predictions.empty()) throw UsageError("--predictions is required with --label-source prob-fusion");
    std::ifstream in(a.predictions);
    if (!in) throw Error("cannot open predictions " + a.predictions);
    std::string text;
    std::size_t line = 0;
    while (std::getline(in, text)) {
      ++line;
      if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
      ojson row;
      try {
        const auto j = ojson::parse(text);
        const auto fused = curation::fuse_block_probabilities(j.at("va").get<std::vector<double>>(),
                                                              j.at("vc").get<std::vector<double>>(),
                                                              j.at("ac").get<std::vector<double>>());
        if (fused.probabilities.size() != num_classes(task)) {
          throw ValidationError("probability vectors do not match the " + a.task + " class count");
        }
        row["clip_id"] = j.at("clip_id").get<std::string>();
        row["status"] = "Fused";
        row["label"] = label_name(task, fused.label);
        row["probabilities"] = probabilities_json(fused.probabilities);
      } catch (const nlohmann::json::exception& e) {
        throw ParseError(line, std::string("invalid prediction row: ") + e.what());
      } catch (const ValidationError& e) {
        throw ParseError(line, e.what());
      }
      ++counts["Fused"];
      jsonl += row.dump() + "\n";
    }
  } else {
    throw UsageError("--label-source must be vote or prob-fusion");
  }

  write_text(a.out, jsonl);
  for (const auto& [status, n] : counts) out << status << ": " << n << "\n";
  return malformed ? kExitFailure : kExitOk;
}

// ---- kappa ----------------------------------------------------------------

struct KappaArgs {
  std::string annotations;
  std::vector<std::string> raters;
  std::string task = "valence";
  std::size_t min_shared = 1;
  std::string out;
};

int cmd_kappa(const KappaArgs& a, std::ostream& out) {
  const Task task = require_task(a.task);
  std::vector<curation::AnnotationRecord> records;
  if (!a.annotations.empty() && !a.raters.empty()) throw UsageError("use either --annotations or --rater, not both");
  if (!a.annotations.empty()) {
    records = curation::load_annotations(a.annotations);
  } else if (a.raters.size() >= 2) {
    // Each file holds one rater's votes; the file position names the rater.
    for (std::size_t i = 0; i < a.raters.size(); ++i) {
      std::set<std::string> clips;
      for (auto r : curation::load_annotations(a.raters[i])) {
        if (r.round != curation::Round::Primary) continue;
        if (!clips.insert(r.clip_id).second) {
          throw ValidationError(a.raters[i] + ": clip '" + r.clip_id + "' rated twice in a single-rater file");
        }
        r.annotator_id = "rater" + std::to_string(i + 1);
        records.push_back(std::move(r));
      }
    }
  } else {
    throw UsageError("kappa needs --annotations FILE or at least two --rater FILE");
  }
  const auto report = curation::pairwise_kappa(records, task, a.min_shared);
  ojson j;
  j["task"] = a.task;
  j["kappa"] = report.kappa;
  j["observed_agreement"] = report.observed;
  j["expected_agreement"] = report.expected;
  j["degenerate"] = report.degenerate;
  j["items"] = report.items;
  auto pairs = ojson::array();
  for (const auto& p : report.pairs) {
    pairs.push_back({{"rater_a", p.rater_a},
                     {"rater_b", p.rater_b},
                     {"shared", p.shared},
                     {"kappa", p.kappa},
                     {"observed_agreement", p.observed},
                     {"expected_agreement", p.expected},
                     {"degenerate", p.degenerate}});
  }
  j["pairs"] = pairs;
  if (!a.out.empty()) write_text(a.out, j.dump(2) + "\n");
  out << j.dump(2) << "\n";
  return kExitOk;
}

// ---- split ----------------------------------------------------------------

struct SplitArgs {
  std::string manifest;
  std::string counts;
  std::string ratios;
  std::uint64_t seed = 42;
  std::string out;
};

int cmd_split(const SplitArgs& a, std::ostream& out) {
  if (a.counts.empty() == a.ratios.empty()) throw UsageError("give exactly one of --counts or --ratios");
  const auto samples = load_manifest(a.manifest);
  const auto targets = a.counts.empty()
                           ? curation::counts_from_ratios(parse_triple<double>("--ratios", a.ratios), samples.size())
                           : parse_triple<std::size_t>("--counts", a.counts);
  const auto split = curation::make_splits(samples, targets, a.seed);
  write_split_file(split, a.seed, a.out);
  for (std::size_t i = 0; i < 3; ++i) {
    out << curation::split_name(static_cast<curation::Split>(i)) << ": " << split.achieved[i] << " (target "
        << split.targets[i] << ")\n";
  }
  for (const auto& w : split.warnings) out << "warning: " << w << "\n";
  return kExitOk;
}

// ---- segment-plan ---------------------------------------------------------

struct SegmentArgs {
  double duration = 0;
  double clip_len = 5.0;
  std::size_t max_segments = 35;
  std::string out;
};

int cmd_segment_plan(const SegmentArgs& a, std::ostream& out, std::ostream& err) {
  const auto plan = curation::segment_plan(a.duration, a.clip_len, a.max_segments);
  ojson j;
  j["duration_s"] = a.duration;
  j["clip_len_s"] = a.clip_len;
  j["candidates"] = plan.candidates;
  auto windows = ojson::array();
  for (const auto& w : plan.windows) windows.push_back({w.start, w.end});
  j["windows"] = windows;
  j["warning"] = plan.warning ? ojson(*plan.warning) : ojson(nullptr);
  if (plan.warning) err << "warning: " << *plan.warning << "\n";
  if (!a.out.empty()) write_text(a.out, j.dump(2) + "\n");
  out << j.dump(2) << "\n";
  return kExitOk;
}

// ---- stats ----------------------------------------------------------------

ojson distribution_json(const std::vector<ClipSample>& samples, Task task) {
  const auto d = curation::class_distribution(samples, task);
  ojson counts = ojson::object();
  for (std::size_t c = 0; c < d.counts.size(); ++c) counts[label_name(task, static_cast<int>(c))] = d.counts[c];
  return {{"counts", counts}, {"unlabeled", d.unlabeled}, {"total", d.total}};
}

ojson stats_json(const std::vector<ClipSample>& samples) {
  ojson j;
  j["clips"] = samples.size();
  std::set<std::string> videos;
  ojson present = ojson::object();
  for (auto m : kModalities) {
    std::size_t n = 0;
    for (const auto& s : samples) n += s.has(m) ? 1 : 0;
    present[std::string(modality_name(m))] = n;
  }
  for (const auto& s : samples) videos.insert(s.source_video_id);
  j["source_videos"] = videos.size();
  j["modalities_present"] = present;
  j["valence"] = distribution_json(samples, Task::Valence);
  j["emotion"] = distribution_json(samples, Task::Emotion);
  return j;
}

struct StatsArgs {
  std::string manifest;
  std::string splits;
  std::string out;
};

int cmd_stats(const StatsArgs& a, std::ostream& out) {
  const auto samples = load_manifest(a.manifest);
  auto j = stats_json(samples);
  if (!a.splits.empty()) {
    const auto assignment = load_split_assignment(a.splits);
    std::array<std::vector<ClipSample>, 3> parts;
    for (const auto& s : samples) {
      auto it = assignment.find(s.clip_id);
      if (it == assignment.end()) throw ValidationError("clip '" + s.clip_id + "' is not in the splits file");
      parts[static_cast<std::size_t>(it->second)].push_back(s);
    }
    ojson per = ojson::object();
    for (std::size_t i = 0; i < 3; ++i) {
      per[std::string(curation::split_name(static_cast<curation::Split>(i)))] = stats_json(parts[i]);
    }
    j["splits"] = per;
  }
  if (!a.out.empty()) write_text(a.out, j.dump(2) + "\n");
  out << j.dump(2) << "\n";
  return kExitOk;
}

// ---- shared data selection ------------------------------------------------

std::vector<const ClipSample*> select_split(const std::vector<ClipSample>& samples,
                                            const std::map<std::string, curation::Split>& assignment,
                                            const std::set<curation::Split>& wanted) {
  std::vector<const ClipSample*> out;
  for (const auto& s : samples) {
    auto it = assignment.find(s.clip_id);
    if (it == assignment.end()) throw ValidationError("clip '" + s.clip_id + "' is not in the splits file");
    if (wanted.count(it->second)) out.push_back(&s);
  }
  return out;
}

curation::Split require_split(const std::string& name) {
  auto s = curation::parse_split(name);
  if (!s) throw UsageError("unknown split '" + name + "' (expected train, val or test)");
  return *s;
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::vector<std::string> set;
  std::string variant;
  std::string task;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
};

// Config problems are reported as usage errors before any data is read.
RunConfig resolve_train_config(const TrainArgs& a) {
  RunConfig cfg;
  KeyValues overrides;
  for (const auto& item : a.set) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--set expects key=value, got '" + item + "'");
    overrides[item.substr(0, eq)] = item.substr(eq + 1);
  }
  if (!a.variant.empty()) overrides["variant"] = a.variant;
  if (!a.task.empty()) overrides["task"] = a.task;
  if (!a.out_dir.empty()) overrides["out_dir"] = a.out_dir;
  if (a.seed) overrides["seed"] = std::to_string(*a.seed);
  try {
    cfg = load_run_config(a.config);
    apply_key_values(cfg, overrides, fs::current_path());
    validate_run_config(cfg);
  } catch (const ValidationError& e) {
    throw UsageError(e.what());
  } catch (const ParseError& e) {
    throw UsageError(a.config + ": " + e.what());
  }
  return cfg;
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
  const auto cfg = resolve_train_config(a);

  auto samples = load_manifest(cfg.manifest);
  load_embeddings(samples, static_cast<std::uint32_t>(cfg.model.d_model));
  std::vector<const ClipSample*> train_set, val_set;
  if (cfg.splits.empty()) {
    train_set = as_pointers(samples);
  } else {
    const auto assignment = load_split_assignment(cfg.splits);
    std::set<curation::Split> wanted;
    for (const auto& name : cfg.train_splits) wanted.insert(require_split(name));
    train_set = select_split(samples, assignment, wanted);
    if (cfg.train.fixed_epochs == 0) val_set = select_split(samples, assignment, {require_split(cfg.val_split)});
  }

  Rng rng(cfg.train.seed);
  auto initial = init_params<float>(cfg.model, rng);
  const auto result = fit(std::move(initial), train_set, val_set, cfg.model, cfg.train, rng);

  fs::create_directories(cfg.out_dir);
  save_checkpoint(result.params, cfg.model, cfg.train.task, cfg.out_dir / "model.ckpt");
  write_text(cfg.out_dir / "train_log.jsonl", result.log.to_jsonl(cfg.log_timing));

  InferenceOptions opts;
  opts.task = cfg.train.task;
  opts.caps = cfg.train.caps;
  opts.batch_size = cfg.train.batch_size;
  const auto train_metrics = evaluate_model(result.params, cfg.model, train_set, opts);
  ojson summary;
  summary["variant"] = std::string(variant_name(cfg.model.variant));
  summary["task"] = std::string(task_name(cfg.train.task));
  summary["seed"] = cfg.train.seed;
  summary["epochs_run"] = result.log.epochs.size();
  summary["best_epoch"] = result.log.best_epoch;
  summary["stopped_early"] = result.log.stopped_early;
  const auto& best = result.log.epochs.at(result.log.best_epoch - 1);
  summary["best_val_loss"] = best.val_loss ? ojson(*best.val_loss) : ojson(nullptr);
  summary["best_val_accuracy"] = best.val_accuracy ? ojson(*best.val_accuracy) : ojson(nullptr);
  summary["train_accuracy"] = train_metrics.accuracy;
  summary["train_clips"] = train_set.size();
  summary["val_clips"] = val_set.size();
  write_text(cfg.out_dir / "summary.json", summary.dump(2) + "\n");

  out << "best epoch " << result.log.best_epoch << " of " << result.log.epochs.size();
  if (best.val_loss) out << ": val_loss " << *best.val_loss << ", val_accuracy " << *best.val_accuracy;
  out << "; train accuracy " << train_metrics.accuracy << "\n";
  out << "wrote " << (cfg.out_dir / "model.ckpt").string() << "\n";
  return kExitOk;
}

// ---- eval / predict -------------------------------------------------------

struct InferArgs {
  std::string checkpoint;
  std::string manifest;
  std::string splits;
  std::string split;
  std::string missing;
  std::string out;
  std::size_t batch_size = 16;
  std::array<std::size_t, 3> steps{10, 0, 0};
};

struct Loaded {
  Checkpoint ckpt;
  std::vector<ClipSample> samples;
  std::vector<const ClipSample*> selected;
  InferenceOptions options;
};

Loaded load_for_inference(const InferArgs& a, bool allow_all) {
  Loaded l;
  if (!a.missing.empty() && !(allow_all && a.missing == "all")) {
    auto m = parse_modality(a.missing);
    if (!m) throw UsageError("--missing must be v, a or c" + std::string(allow_all ? " (or all)" : "") + ", got '" +
                             a.missing + "'");
    l.options.missing = {*m};
  }
  if (a.splits.empty() != a.split.empty()) throw UsageError("--splits and --split go together");
  std::optional<curation::Split> split;
  if (!a.split.empty()) split = require_split(a.split);
  l.ckpt = load_checkpoint(a.checkpoint);
  l.samples = load_manifest(a.manifest);
  load_embeddings(l.samples, static_cast<std::uint32_t>(l.ckpt.config.d_model));
  l.selected = split ? select_split(l.samples, load_split_assignment(a.splits), {*split}) : as_pointers(l.samples);
  if (l.selected.empty()) throw ValidationError("no clips selected");
  l.options.task = l.ckpt.task;
  l.options.batch_size = a.batch_size;
  l.options.caps.max_steps = a.steps;
  return l;
}

std::vector<std::string> class_names(Task task) {
  std::vector<std::string> names;
  for (std::size_t c = 0; c < num_classes(task); ++c) names.push_back(label_name(task, static_cast<int>(c)));
  return names;
}

int cmd_eval(const InferArgs& a, std::ostream& out) {
  const auto l = load_for_inference(a, true);
  const auto names = class_names(l.options.task);
  ojson j;
  if (a.missing == "all") {
    const auto rows = missing_modality_report(l.ckpt.params, l.ckpt.config, l.selected, l.options);
    for (const auto& r : rows) j[r.condition] = r.metrics.to_json(names);
    out << condition_table(rows);
  } else {
    const auto report = evaluate_model(l.ckpt.params, l.ckpt.config, l.selected, l.options);
    j = report.to_json(names);
    j["missing"] = a.missing.empty() ? ojson(nullptr) : ojson(std::string(modality_name(l.options.missing[0])));
    out << report.to_table(names);
  }
  if (!a.out.empty()) write_text(a.out, j.dump(2) + "\n");
  return kExitOk;
}

int cmd_predict(const InferArgs& a, std::ostream& out) {
  const auto l = load_for_inference(a, false);
  const auto preds = predict_clips(l.ckpt.params, l.ckpt.config, l.selected, l.options);
  std::string jsonl;
  for (const auto& p : preds) {
    ojson row;
    row["clip_id"] = p.clip_id;
    row["label"] = p.label >= 0 ? ojson(label_name(l.options.task, p.label)) : ojson(nullptr);
    row["predicted"] = label_name(l.options.task, p.predicted);
    for (std::size_t b = 0; b < kPairBlocks.size(); ++b) {
      row[kPairBlocks[b]] =
          b < p.block_probabilities.size() ? probabilities_json(p.block_probabilities[b]) : ojson(nullptr);
    }
    row["final"] = probabilities_json(p.probabilities);
    jsonl += row.dump() + "\n";
  }
  write_text(a.out, jsonl);
  out << "wrote " << preds.size() << " predictions to " << a.out << "\n";
  return kExitOk;
}

// ---- synth ----------------------------------------------------------------

struct SynthArgs {
  std::string out_dir;
  SyntheticOptions options;
  std::string task = "valence";
  std::string ratios = "0.7,0.15,0.15";
  std::uint64_t split_seed = 42;
};

int cmd_synth(SynthArgs a, std::ostream& out) {
  a.options.task = require_task(a.task);
  const auto ratios = parse_triple<double>("--ratios", a.ratios);
  auto samples = make_synthetic(a.options);
  const fs::path dir = a.out_dir;
  const auto manifest = write_synthetic(samples, dir);
  const auto split = curation::make_splits(samples, curation::counts_from_ratios(ratios, samples.size()), a.split_seed);
  write_split_file(split, a.split_seed, dir / "splits.json");
  std::ostringstream cfg;
  cfg << "# Quickstart run on the synthetic clips in this directory.\n"
      << "manifest = manifest.jsonl\n"
      << "splits = splits.json\n"
      << "out_dir = run\n"
      << "task = " << a.task << "\n"
      << "variant = cagnet\n"
      << "d_model = " << a.options.dim << "\n"
      << "heads = 2\n"
      << "ff_dim = " << 2 * a.options.dim << "\n"
      << "dropout = 0.1\n"
      << "batch_size = 8\n"
      << "max_epochs = 60\n"
      << "patience = 10\n"
      << "lr = 0.001\n"
      << "modality_dropout = 0.25\n"
      << "seed = 42\n";
  write_text(dir / "train.cfg", cfg.str());
  out << "wrote " << samples.size() << " clips, " << manifest.string() << ", splits.json and train.cfg to "
      << dir.string() << "\n";
  return kExitOk;
}

}  // namespace

ojson split_manifest_json(const curation::SplitManifest& split, std::uint64_t seed) {
  ojson j;
  j["seed"] = seed;
  ojson targets, achieved, dist;
  for (std::size_t i = 0; i < 3; ++i) {
    const std::string name(curation::split_name(static_cast<curation::Split>(i)));
    targets[name] = split.targets[i];
    achieved[name] = split.achieved[i];
    dist[name] = {{"valence", split.valence_distribution[i]}, {"emotion", split.emotion_distribution[i]}};
  }
  j["targets"] = targets;
  j["achieved"] = achieved;
  j["largest_group"] = split.largest_group;
  j["best_effort"] = split.best_effort;
  j["warnings"] = split.warnings;
  j["class_distribution"] = dist;
  ojson assignment = ojson::object();
  for (const auto& [clip, s] : split.assignment) assignment[clip] = std::string(curation::split_name(s));
  j["assignment"] = assignment;
  return j;
}

void write_split_file(const curation::SplitManifest& split, std::uint64_t seed, const fs::path& path) {
  write_text(path, split_manifest_json(split, seed).dump(2) + "\n");
}

std::map<std::string, curation::Split> load_split_assignment(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open splits file " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": invalid JSON: " + e.what());
  }
  if (!j.contains("assignment") || !j["assignment"].is_object()) {
    throw FormatError(path.string() + ": missing 'assignment' object");
  }
  std::map<std::string, curation::Split> out;
  for (const auto& [clip, name] : j["assignment"].items()) {
    auto s = name.is_string() ? curation::parse_split(name.get<std::string>()) : std::nullopt;
    if (!s) throw FormatError(path.string() + ": clip '" + clip + "' has an invalid split");
    out.emplace(clip, *s);
  }
  return out;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Group affect fusion and dataset curation toolkit", "cagnet"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  ResolveArgs resolve;
  auto* c_resolve = app.add_subcommand("resolve", "Resolve crowd votes into final labels");
  c_resolve->add_option("--annotations", resolve.annotations, "Annotation JSONL")->check(CLI::ExistingFile);
  c_resolve->add_option("--predictions", resolve.predictions, "Prediction JSONL for prob-fusion")
      ->check(CLI::ExistingFile);
  c_resolve->add_option("--out", resolve.out, "Resolution JSONL to write")->required();
  c_resolve->add_option("--task", resolve.task, "valence or emotion");
  c_resolve->add_option("--label-source", resolve.label_source, "vote or prob-fusion");

  KappaArgs kappa;
  auto* c_kappa = app.add_subcommand("kappa", "Inter-annotator agreement");
  c_kappa->add_option("--annotations", kappa.annotations, "Multi-annotator JSONL")->check(CLI::ExistingFile);
  c_kappa->add_option("--rater", kappa.raters, "One rater's JSONL (repeat)")->check(CLI::ExistingFile);
  c_kappa->add_option("--task", kappa.task, "valence or emotion");
  c_kappa->add_option("--min-shared", kappa.min_shared, "Minimum shared clips per annotator pair");
  c_kappa->add_option("--out", kappa.out, "JSON report to write");

  SplitArgs split;
  auto* c_split = app.add_subcommand("split", "Leakage-free train/val/test split by source video");
  c_split->add_option("--manifest", split.manifest, "Clip manifest JSONL")->required()->check(CLI::ExistingFile);
  c_split->add_option("--counts", split.counts, "train,val,test clip counts");
  c_split->add_option("--ratios", split.ratios, "train,val,test ratios");
  c_split->add_option("--seed", split.seed, "Random seed");
  c_split->add_option("--out", split.out, "Splits JSON to write")->required();

  SegmentArgs segment;
  auto* c_segment = app.add_subcommand("segment-plan", "Plan fixed-length clip windows for one video");
  c_segment->add_option("--duration", segment.duration, "Video duration in seconds")->required();
  c_segment->add_option("--clip-len", segment.clip_len, "Window length in seconds");
  c_segment->add_option("--max-segments", segment.max_segments, "Cap on windows per video");
  c_segment->add_option("--out", segment.out, "JSON plan to write");

  StatsArgs stats;
  auto* c_stats = app.add_subcommand("stats", "Class and modality counts of a manifest");
  c_stats->add_option("--manifest", stats.manifest, "Clip manifest JSONL")->required()->check(CLI::ExistingFile);
  c_stats->add_option("--splits", stats.splits, "Splits JSON")->check(CLI::ExistingFile);
  c_stats->add_option("--out", stats.out, "JSON report to write");

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "Train a model from a run config");
  c_train->add_option("--config", train.config, "key = value run config")->required()->check(CLI::ExistingFile);
  c_train->add_option("--set", train.set, "Override a config key (key=value, repeatable)");
  c_train->add_option("--variant", train.variant, "cagnet, merged or hierarchical");
  c_train->add_option("--task", train.task, "valence or emotion");
  c_train->add_option("--out-dir", train.out_dir, "Output directory");
  c_train->add_option("--seed", train.seed, "Random seed");

  InferArgs eval, predict;
  auto add_infer = [](CLI::App* c, InferArgs& a) {
    c->add_option("--checkpoint", a.checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
    c->add_option("--manifest", a.manifest, "Clip manifest JSONL")->required()->check(CLI::ExistingFile);
    c->add_option("--splits", a.splits, "Splits JSON")->check(CLI::ExistingFile);
    c->add_option("--split", a.split, "train, val or test");
    c->add_option("--batch-size", a.batch_size, "Inference batch size")->check(CLI::PositiveNumber);
    c->add_option("--visual-steps", a.steps[0], "Visual step cap (0 = none)");
    c->add_option("--audio-steps", a.steps[1], "Audio step cap (0 = none)");
    c->add_option("--context-steps", a.steps[2], "Context step cap (0 = none)");
  };
  auto* c_eval = app.add_subcommand("eval", "Accuracy and F1 on a labelled split");
  add_infer(c_eval, eval);
  c_eval->add_option("--missing", eval.missing, "Zero one stream: v, a, c; or all for every condition");
  c_eval->add_option("--out", eval.out, "JSON report to write");
  auto* c_predict = app.add_subcommand("predict", "Per-clip block and final probabilities");
  add_infer(c_predict, predict);
  c_predict->add_option("--missing", predict.missing, "Zero one stream: v, a or c");
  c_predict->add_option("--out", predict.out, "Prediction JSONL to write")->required();

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Write a synthetic trimodal dataset and quickstart config");
  c_synth->add_option("--out-dir", synth.out_dir, "Output directory")->required();
  c_synth->add_option("--clips", synth.options.clips, "Number of clips");
  c_synth->add_option("--dim", synth.options.dim, "Embedding width");
  c_synth->add_option("--task", synth.task, "Label the features encode");
  c_synth->add_option("--noise", synth.options.noise, "Per-coordinate noise");
  c_synth->add_option("--seed", synth.options.seed, "Data seed");
  c_synth->add_option("--ratios", synth.ratios, "train,val,test ratios");
  c_synth->add_flag("--visual-only", synth.options.visual_only, "Only the visual stream is informative");
  c_synth->add_flag("--ragged", synth.options.ragged, "Random valid lengths with NaN padding");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (c_resolve->parsed()) return cmd_resolve(resolve, out);
    if (c_kappa->parsed()) return cmd_kappa(kappa, out);
    if (c_split->parsed()) return cmd_split(split, out);
    if (c_segment->parsed()) return cmd_segment_plan(segment, out, err);
    if (c_stats->parsed()) return cmd_stats(stats, out);
    if (c_train->parsed()) return cmd_train(train, out);
    if (c_eval->parsed()) return cmd_eval(eval, out);
    if (c_predict->parsed()) return cmd_predict(predict, out);
    if (c_synth->parsed()) return cmd_synth(synth, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace cagnet::cli
