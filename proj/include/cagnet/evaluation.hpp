#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cagnet/embedding_io.hpp"
#include "cagnet/metrics.hpp"
#include "cagnet/model.hpp"

namespace cagnet {

struct InferenceOptions {
  Task task = Task::Valence;
  SequenceCaps caps;
  std::size_t batch_size = 16;
  // Streams zeroed for every clip at test time. At most one.
  std::vector<Modality> missing;
};

struct ClipPrediction {
  std::string clip_id;
  int label = -1;  // -1 when unlabeled
  int predicted = 0;
  std::vector<double> probabilities;
  // VA, VC, AC probe probabilities; empty for the hierarchical variant.
  std::vector<std::vector<double>> block_probabilities;
};

// Eval-mode inference over `samples` in order.
template <typename Real>
std::vector<ClipPrediction> predict_clips(const ModelParams<Real>& params, const ModelConfig& config,
                                          const std::vector<const ClipSample*>& samples,
                                          const InferenceOptions& options);

// Every clip must be labelled for options.task.
template <typename Real>
MetricsReport evaluate_model(const ModelParams<Real>& params, const ModelConfig& config,
                             const std::vector<const ClipSample*>& samples, const InferenceOptions& options);

struct ConditionReport {
  std::string condition;  // "none", "-V", "-A", "-C"
  std::optional<Modality> missing;
  MetricsReport metrics;
};

// evaluate_model with no stream zeroed, then with each single stream zeroed.
template <typename Real>
std::vector<ConditionReport> missing_modality_report(const ModelParams<Real>& params, const ModelConfig& config,
                                                     const std::vector<const ClipSample*>& samples,
                                                     InferenceOptions options);

std::string condition_table(const std::vector<ConditionReport>& rows);

}  // namespace cagnet
