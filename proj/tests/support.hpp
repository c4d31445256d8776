#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "cagnet/embedding_io.hpp"
#include "cagnet/model.hpp"
#include "cagnet/rng.hpp"

namespace cagnet::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device entropy;
    path_ = std::filesystem::temp_directory_path() / ("cagnet_" + tag + "_" + std::to_string(entropy()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline double rel_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

// Random sequence with `valid` leading valid steps; invalid steps hold NaN.
inline EmbeddingSequence random_sequence(Rng& rng, Modality m, std::uint32_t length, std::uint32_t dim,
                                         std::uint32_t valid) {
  EmbeddingSequence seq;
  seq.modality = m;
  seq.length = length;
  seq.dim = dim;
  seq.valid.assign(length, false);
  seq.values.assign(static_cast<std::size_t>(length) * dim, std::numeric_limits<float>::quiet_NaN());
  for (std::uint32_t t = 0; t < valid; ++t) {
    seq.valid[t] = true;
    for (std::uint32_t k = 0; k < dim; ++k) seq.values[t * dim + k] = static_cast<float>(rng.normal());
  }
  return seq;
}

// In-memory clip with random embeddings. `missing` drops one modality.
inline ClipSample random_clip(Rng& rng, const std::string& id, std::uint32_t dim, std::array<std::uint32_t, 3> steps,
                              int label, std::optional<Modality> missing = std::nullopt) {
  ClipSample s;
  s.clip_id = id;
  s.source_video_id = "video_" + id;
  s.valence = static_cast<Valence>(label % 3);
  s.emotion = static_cast<Emotion>(label % 5);
  for (auto m : kModalities) {
    const auto i = static_cast<std::size_t>(m);
    if (missing && *missing == m) continue;
    const auto valid = static_cast<std::uint32_t>(1 + rng.below(steps[i]));
    s.paths[i] = std::filesystem::path(id + "_" + std::string(modality_name(m)) + ".gved");
    s.embeddings[i] = random_sequence(rng, m, steps[i], dim, valid);
  }
  return s;
}

inline ModelConfig toy_config(Variant v, std::size_t classes = 3) {
  ModelConfig c;
  c.d_model = 8;
  c.attention_heads = 2;
  c.ff_dim = 16;
  c.dropout_p = 0.4;
  c.num_classes = classes;
  c.se_reduction = 4;
  c.variant = v;
  return c;
}

inline constexpr std::array<Variant, 3> kVariants{Variant::CAGNet, Variant::MergedFusion,
                                                  Variant::HierarchicalFusion};

struct GradCheckResult {
  double max_rel = 0;
  std::string worst;
  std::size_t checked = 0;
};

// Central finite differences (step h) against the tape gradient for every
// parameter. Main parameters are checked against the classification loss and
// the probe head against the summed probe losses, since the probe trains on
// detached features. Train mode with a fixed dropout seed per evaluation.
inline GradCheckResult check_model_gradients(const ModelConfig& config, ModelParams<double> params,
                                             const BatchTensors& batch, double h = 1e-5) {
  auto loss_of = [&](const ModelParams<double>& p, bool probe, ModelParams<double>* grads) {
    ad::Tape<double> tape;
    ParamBinder<double> binder(tape, p);
    Rng rng(2024);
    const auto out = model_forward(binder, batch, config, true, rng);
    std::optional<ad::Var<double>> loss;
    if (probe) {
      for (const auto& block : out.block_logits) {
        auto l = ad::softmax_cross_entropy(block, batch.labels);
        loss = loss ? ad::add(*loss, l) : l;
      }
    } else {
      loss = ad::softmax_cross_entropy(out.logits, batch.labels);
    }
    const double value = loss->value().item();
    if (grads) {
      tape.backward(*loss);
      *grads = binder.gradients();
    }
    return value;
  };

  GradCheckResult result;
  for (bool probe : {false, true}) {
    if (probe && config.variant == Variant::HierarchicalFusion) continue;
    ModelParams<double> analytic;
    loss_of(params, probe, &analytic);
    for (auto& [path, tensor] : params) {
      if ((path.rfind("probe.", 0) == 0) != probe) continue;
      for (std::size_t i = 0; i < tensor.size(); ++i) {
        const double orig = tensor[i];
        tensor[i] = orig + h;
        const double up = loss_of(params, probe, nullptr);
        tensor[i] = orig - h;
        const double down = loss_of(params, probe, nullptr);
        tensor[i] = orig;
        const double numeric = (up - down) / (2 * h);
        const double err = rel_error(analytic.at(path)[i], numeric);
        ++result.checked;
        if (err > result.max_rel) {
          result.max_rel = err;
          result.worst = path + "[" + std::to_string(i) + "]";
        }
      }
    }
  }
  return result;
}

}  // namespace cagnet::testing
