#include "cagnet/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

#include "cagnet/error.hpp"
#include "cagnet/rng.hpp"

namespace cagnet {

std::vector<ClipSample> make_synthetic(const SyntheticOptions& options) {
  if (options.clips == 0 || options.dim == 0 || options.clips_per_video == 0) {
    throw ValidationError("synthetic: clips, dim and clips_per_video must be positive");
  }
  for (auto t : options.steps)
    if (t == 0) throw ValidationError("synthetic: every modality needs at least one step");
  Rng rng(options.seed);
  const std::size_t classes = num_classes(options.task);
  const std::size_t d = options.dim;

  // prototypes[m][c] is a d-vector of norm `signal`.
  std::array<std::vector<std::vector<double>>, kNumModalities> prototypes;
  for (auto m : kModalities) {
    auto& protos = prototypes[static_cast<std::size_t>(m)];
    for (std::size_t c = 0; c < classes; ++c) {
      std::vector<double> v(d);
      double norm = 0;
      for (auto& x : v) {
        x = rng.normal();
        norm += x * x;
      }
      norm = std::sqrt(norm);
      const bool informative = !(options.visual_only && m != Modality::Visual);
      for (auto& x : v) x = informative ? x / norm * options.signal : 0.0;
      protos.push_back(std::move(v));
    }
  }

  std::vector<ClipSample> out;
  for (std::size_t i = 0; i < options.clips; ++i) {
    ClipSample s;
    char id[32];
    std::snprintf(id, sizeof id, "clip%04zu", i);
    s.clip_id = id;
    std::snprintf(id, sizeof id, "video%03zu", i / options.clips_per_video);
    s.source_video_id = id;
    const int label = static_cast<int>(i % classes);
    if (options.task == Task::Valence) {
      s.valence = static_cast<Valence>(label);
      s.emotion = static_cast<Emotion>(i % num_classes(Task::Emotion));
    } else {
      s.emotion = static_cast<Emotion>(label);
      s.valence = static_cast<Valence>(i % num_classes(Task::Valence));
    }
    for (auto m : kModalities) {
      const auto mi = static_cast<std::size_t>(m);
      EmbeddingSequence seq;
      seq.modality = m;
      seq.length = options.steps[mi];
      seq.dim = options.dim;
      std::size_t valid = seq.length;
      if (options.ragged) {
        const std::size_t lo = (seq.length + 1) / 2;
        valid = lo + rng.below(seq.length - lo + 1);
      }
      seq.valid.assign(seq.length, false);
      seq.values.assign(static_cast<std::size_t>(seq.length) * d, std::numeric_limits<float>::quiet_NaN());
      const auto& proto = prototypes[mi][static_cast<std::size_t>(label)];
      for (std::size_t t = 0; t < valid; ++t) {
        seq.valid[t] = true;
        for (std::size_t k = 0; k < d; ++k) {
          seq.values[t * d + k] = static_cast<float>(proto[k] + options.noise * rng.normal());
        }
      }
      s.paths[mi] = std::filesystem::path(s.clip_id + "_" + std::string(modality_name(m)) + ".gved");
      s.embeddings[mi] = std::move(seq);
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::filesystem::path write_synthetic(std::vector<ClipSample>& samples, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (auto& s : samples) {
    for (auto m : kModalities) {
      const auto mi = static_cast<std::size_t>(m);
      if (!s.paths[mi]) continue;
      if (!s.embeddings[mi]) throw ValidationError("synthetic: clip '" + s.clip_id + "' has no embedding in memory");
      const auto file = dir / s.paths[mi]->filename();
      write_embedding_file(*s.embeddings[mi], file);
      s.paths[mi] = file;
    }
  }
  const auto manifest = dir / "manifest.jsonl";
  write_manifest(samples, manifest);
  return manifest;
}

}  // namespace cagnet
