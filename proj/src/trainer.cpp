#include "cagnet/trainer.hpp"

#include <chrono>
#include <cmath>
#include <nlohmann/json.hpp>
#include <numeric>

#include "cagnet/error.hpp"

namespace cagnet {

void TrainConfig::validate() const {
  if (batch_size == 0) throw ValidationError("train config: batch_size must be at least 1");
  if (patience == 0) throw ValidationError("train config: patience must be at least 1");
  if (max_epochs == 0) throw ValidationError("train config: max_epochs must be at least 1");
  if (lr < 0 || weight_decay < 0) throw ValidationError("train config: lr and weight_decay must be non-negative");
  if (!(modality_dropout_p >= 0 && modality_dropout_p <= 1)) {
    throw ValidationError("train config: modality_dropout_p must lie in [0, 1]");
  }
}

std::string TrainLog::to_jsonl(bool include_timing) const {
  std::string out;
  for (const auto& e : epochs) {
    nlohmann::ordered_json row;
    row["epoch"] = e.epoch;
    row["train_loss"] = e.train_loss;
    row["val_loss"] = e.val_loss ? nlohmann::ordered_json(*e.val_loss) : nlohmann::ordered_json(nullptr);
    row["val_accuracy"] = e.val_accuracy ? nlohmann::ordered_json(*e.val_accuracy) : nlohmann::ordered_json(nullptr);
    row["best"] = e.epoch == best_epoch;
    if (include_timing) row["wall_time_s"] = e.wall_time_s;
    out += row.dump() + "\n";
  }
  return out;
}

template <typename Real>
double cross_entropy_loss(const Tensor<Real>& probabilities, const std::vector<int>& labels) {
  if (probabilities.rank() != 2 || probabilities.rows() != labels.size()) {
    throw DimensionError("cross_entropy_loss: " + std::to_string(labels.size()) + " labels for probabilities " +
                         shape_str(probabilities.shape()));
  }
  const std::size_t classes = probabilities.cols();
  double total = 0;
  for (std::size_t r = 0; r < labels.size(); ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= classes) {
      throw ValidationError("cross_entropy_loss: label " + std::to_string(labels[r]) + " outside [0, " +
                            std::to_string(classes) + ")");
    }
    total -= std::log(static_cast<double>(probabilities.at(r, static_cast<std::size_t>(labels[r]))));
  }
  return total / static_cast<double>(labels.size());
}

std::vector<const ClipSample*> as_pointers(const std::vector<ClipSample>& samples) {
  std::vector<const ClipSample*> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(&s);
  return out;
}

namespace {

void require_labels(const BatchTensors& batch) {
  for (std::size_t b = 0; b < batch.size; ++b) {
    if (batch.labels[b] < 0) throw ValidationError("clip '" + batch.clip_ids[b] + "' has no label for the task");
  }
}

}  // namespace

template <typename Real>
EvalSummary evaluate_loss(const ModelParams<Real>& params, const ModelConfig& config,
                          const std::vector<const ClipSample*>& samples, const TrainConfig& train) {
  EvalSummary summary;
  double loss_sum = 0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < samples.size(); start += train.batch_size) {
    const std::size_t end = std::min(samples.size(), start + train.batch_size);
    std::vector<const ClipSample*> chunk(samples.begin() + static_cast<std::ptrdiff_t>(start),
                                         samples.begin() + static_cast<std::ptrdiff_t>(end));
    const auto batch = make_batch(chunk, train.caps, train.task);
    require_labels(batch);
    ad::Tape<Real> tape(false);
    const auto out = predict(params, batch, config, tape);
    // Summing per-row losses from logits keeps the value identical to the training objective.
    ad::Tape<Real> loss_tape(false);
    const auto logits = loss_tape.constant(out.logits.value());
    loss_sum += static_cast<double>(ad::softmax_cross_entropy(logits, batch.labels).value().item()) *
                static_cast<double>(batch.size);
    for (std::size_t b = 0; b < batch.size; ++b) {
      const auto row = out.probabilities.data().subspan(b * config.num_classes, config.num_classes);
      if (argmax(row) == batch.labels[b]) ++correct;
    }
    summary.count += batch.size;
  }
  if (summary.count > 0) {
    summary.loss = loss_sum / static_cast<double>(summary.count);
    summary.accuracy = static_cast<double>(correct) / static_cast<double>(summary.count);
  }
  return summary;
}

template <typename Real>
double train_epoch(ModelParams<Real>& params, AdamWState<Real>& optimizer, const std::vector<const ClipSample*>& data,
                   const ModelConfig& config, const TrainConfig& train, Rng& rng) {
  if (data.empty()) throw ValidationError("train_epoch: empty training set");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);

  double loss_sum = 0;
  std::size_t batches = 0;
  for (std::size_t start = 0; start < order.size(); start += train.batch_size) {
    const std::size_t end = std::min(order.size(), start + train.batch_size);
    std::vector<const ClipSample*> chunk;
    for (std::size_t i = start; i < end; ++i) chunk.push_back(data[order[i]]);
    auto batch = make_batch(chunk, train.caps, train.task);
    require_labels(batch);
    apply_modality_dropout(batch, rng, train.modality_dropout_p);

    ad::Tape<Real> tape;
    ParamBinder<Real> binder(tape, params);
    const auto out = model_forward(binder, batch, config, true, rng);
    auto loss = ad::softmax_cross_entropy(out.logits, batch.labels);
    const double main_loss = static_cast<double>(loss.value().item());
    if (!std::isfinite(main_loss)) {
      throw NonFiniteError("train_epoch: non-finite loss at batch " + std::to_string(batches));
    }
    for (const auto& block : out.block_logits) loss = ad::add(loss, ad::softmax_cross_entropy(block, batch.labels));
    tape.backward(loss);
    adamw_step(params, binder.gradients(), optimizer);
    loss_sum += main_loss;
    ++batches;
  }
  return loss_sum / static_cast<double>(batches);
}

bool EarlyStopping::update(std::size_t epoch, double val_loss) {
  if (best_epoch_ == 0 || val_loss < best_loss_) {
    best_loss_ = val_loss;
    best_epoch_ = epoch;
    bad_epochs_ = 0;
    return true;
  }
  ++bad_epochs_;
  return false;
}

template <typename Real>
FitResult<Real> fit(ModelParams<Real> initial, const std::vector<const ClipSample*>& train_set,
                    const std::vector<const ClipSample*>& val_set, const ModelConfig& config,
                    const TrainConfig& train, Rng& rng, ValidationOverride<Real> val_override) {
  train.validate();
  config.validate();
  validate_params(initial, config);
  if (train_set.empty()) throw ValidationError("fit: empty training set");
  const bool fixed = train.fixed_epochs > 0;
  if (!fixed && val_set.empty() && !val_override) throw ValidationError("fit: empty validation set");

  FitResult<Real> result;
  ModelParams<Real> params = std::move(initial);
  AdamWState<Real> optimizer;
  optimizer.hyper.lr = train.lr;
  optimizer.hyper.weight_decay = train.weight_decay;
  EarlyStopping stopper(train.patience);

  const std::size_t epochs = fixed ? train.fixed_epochs : train.max_epochs;
  for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = train_epoch(params, optimizer, train_set, config, train, rng);
    if (val_override) {
      rec.val_loss = val_override(params, epoch);
    } else if (!val_set.empty()) {
      const auto summary = evaluate_loss(params, config, val_set, train);
      rec.val_loss = summary.loss;
      rec.val_accuracy = summary.accuracy;
    }
    rec.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.epochs.push_back(rec);

    if (fixed) {
      result.log.best_epoch = epoch;
      continue;
    }
    if (stopper.update(epoch, *rec.val_loss)) {
      result.params = params;
      result.log.best_epoch = epoch;
    }
    if (stopper.should_stop()) {
      result.log.stopped_early = epoch < epochs;
      break;
    }
  }
  if (fixed) result.params = std::move(params);
  return result;
}

#define CAGNET_INSTANTIATE(Real)                                                                               \
  template double cross_entropy_loss(const Tensor<Real>&, const std::vector<int>&);                            \
  template EvalSummary evaluate_loss(const ModelParams<Real>&, const ModelConfig&,                             \
                                     const std::vector<const ClipSample*>&, const TrainConfig&);               \
  template double train_epoch(ModelParams<Real>&, AdamWState<Real>&, const std::vector<const ClipSample*>&,    \
                              const ModelConfig&, const TrainConfig&, Rng&);                                   \
  template FitResult<Real> fit(ModelParams<Real>, const std::vector<const ClipSample*>&,                       \
                               const std::vector<const ClipSample*>&, const ModelConfig&, const TrainConfig&,  \
                               Rng&, ValidationOverride<Real>);

CAGNET_INSTANTIATE(float)
CAGNET_INSTANTIATE(double)

#undef CAGNET_INSTANTIATE

}  // namespace cagnet
