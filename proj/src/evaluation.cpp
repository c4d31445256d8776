#include "cagnet/evaluation.hpp"

#include <cctype>
#include <cstdio>
#include <set>
#include <sstream>

#include "cagnet/error.hpp"

namespace cagnet {

namespace {

template <typename Real>
std::vector<double> row_of(const Tensor<Real>& t, std::size_t r) {
  std::vector<double> out(t.cols());
  for (std::size_t c = 0; c < t.cols(); ++c) out[c] = static_cast<double>(t.at(r, c));
  return out;
}

void check_missing(const std::vector<Modality>& missing) {
  const std::set<Modality> unique(missing.begin(), missing.end());
  if (unique.size() > 1) throw ValidationError("at most one modality may be zeroed at test time");
}

}  // namespace

template <typename Real>
std::vector<ClipPrediction> predict_clips(const ModelParams<Real>& params, const ModelConfig& config,
                                          const std::vector<const ClipSample*>& samples,
                                          const InferenceOptions& options) {
  check_missing(options.missing);
  if (options.batch_size == 0) throw ValidationError("batch_size must be at least 1");
  std::vector<ClipPrediction> out;
  out.reserve(samples.size());
  for (std::size_t start = 0; start < samples.size(); start += options.batch_size) {
    const std::size_t end = std::min(samples.size(), start + options.batch_size);
    std::vector<const ClipSample*> chunk(samples.begin() + static_cast<std::ptrdiff_t>(start),
                                         samples.begin() + static_cast<std::ptrdiff_t>(end));
    auto batch = make_batch(chunk, options.caps, options.task);
    for (auto m : options.missing)
      for (std::size_t b = 0; b < batch.size; ++b) batch.drop_modality(b, m);
    ad::Tape<Real> tape(false);
    const auto res = predict(params, batch, config, tape);
    for (std::size_t b = 0; b < batch.size; ++b) {
      ClipPrediction p;
      p.clip_id = batch.clip_ids[b];
      p.label = batch.labels[b];
      p.probabilities = row_of(res.probabilities, b);
      p.predicted = argmax(p.probabilities);
      for (const auto& block : res.block_probabilities) p.block_probabilities.push_back(row_of(block, b));
      out.push_back(std::move(p));
    }
  }
  return out;
}

template <typename Real>
MetricsReport evaluate_model(const ModelParams<Real>& params, const ModelConfig& config,
                             const std::vector<const ClipSample*>& samples, const InferenceOptions& options) {
  check_missing(options.missing);
  if (samples.empty()) throw ValidationError("evaluate_model: empty split");
  for (const auto* s : samples) {
    if (s->label(options.task) < 0) {
      throw ValidationError("evaluate_model: clip '" + s->clip_id + "' has no " +
                            std::string(task_name(options.task)) + " label");
    }
  }
  const auto preds = predict_clips(params, config, samples, options);
  std::vector<int> y_true, y_pred;
  for (const auto& p : preds) {
    y_true.push_back(p.label);
    y_pred.push_back(p.predicted);
  }
  return compute_metrics(y_true, y_pred, config.num_classes);
}

template <typename Real>
std::vector<ConditionReport> missing_modality_report(const ModelParams<Real>& params, const ModelConfig& config,
                                                     const std::vector<const ClipSample*>& samples,
                                                     InferenceOptions options) {
  std::vector<ConditionReport> rows;
  options.missing.clear();
  rows.push_back({"none", std::nullopt, evaluate_model(params, config, samples, options)});
  for (auto m : kModalities) {
    options.missing = {m};
    std::string name = "-";
    name += static_cast<char>(std::toupper(modality_name(m).front()));
    rows.push_back({name, m, evaluate_model(params, config, samples, options)});
  }
  return rows;
}

std::string condition_table(const std::vector<ConditionReport>& rows) {
  std::ostringstream out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-9s %8s %9s %11s %6s\n", "condition", "accuracy", "macro_f1", "weighted_f1", "n");
  out << buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-9s %8.4f %9.4f %11.4f %6zu\n", r.condition.c_str(), r.metrics.accuracy,
                  r.metrics.macro_f1, r.metrics.weighted_f1, r.metrics.count);
    out << buf;
  }
  return out.str();
}

#define CAGNET_INSTANTIATE(Real)                                                                              \
  template std::vector<ClipPrediction> predict_clips(const ModelParams<Real>&, const ModelConfig&,           \
                                                     const std::vector<const ClipSample*>&,                  \
                                                     const InferenceOptions&);                               \
  template MetricsReport evaluate_model(const ModelParams<Real>&, const ModelConfig&,                        \
                                        const std::vector<const ClipSample*>&, const InferenceOptions&);     \
  template std::vector<ConditionReport> missing_modality_report(const ModelParams<Real>&, const ModelConfig&, \
                                                                const std::vector<const ClipSample*>&,       \
                                                                InferenceOptions);

CAGNET_INSTANTIATE(float)
CAGNET_INSTANTIATE(double)

#undef CAGNET_INSTANTIATE

}  // namespace cagnet
