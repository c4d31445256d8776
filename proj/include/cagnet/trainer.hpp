#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cagnet/embedding_io.hpp"
#include "cagnet/model.hpp"
#include "cagnet/optim.hpp"

namespace cagnet {

struct TrainConfig {
  std::size_t batch_size = 16;
  std::size_t max_epochs = 50;
  std::size_t patience = 5;
  double lr = 1e-4;
  double weight_decay = 1e-4;
  double modality_dropout_p = 0.25;
  std::uint64_t seed = 42;
  Task task = Task::Valence;
  // When non-zero, train exactly this many epochs with no validation set and
  // no early stopping (used for retraining on train+val).
  std::size_t fixed_epochs = 0;
  SequenceCaps caps;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0;
  std::optional<double> val_loss;
  std::optional<double> val_accuracy;
  double wall_time_s = 0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;  // 1-based; 0 before the first epoch
  bool stopped_early = false;

  // One JSON object per epoch. Wall time is left out unless requested so the
  // log is byte-reproducible for a fixed seed.
  std::string to_jsonl(bool include_timing = false) const;
};

// Mean over rows of -log p[label] from already-normalised probabilities.
template <typename Real>
double cross_entropy_loss(const Tensor<Real>& probabilities, const std::vector<int>& labels);

struct EvalSummary {
  double loss = 0;
  double accuracy = 0;
  std::size_t count = 0;
};

// Eval-mode loss and accuracy over labelled samples, in batches.
template <typename Real>
EvalSummary evaluate_loss(const ModelParams<Real>& params, const ModelConfig& config,
                          const std::vector<const ClipSample*>& samples, const TrainConfig& train);

// One pass over `data`: seeded shuffle, batching (last partial batch kept),
// modality dropout, forward, loss, backward and an AdamW step per batch.
// Returns the mean of the per-batch classification losses. The diagnostic
// probe head, when present, is trained on detached features in the same step.
template <typename Real>
double train_epoch(ModelParams<Real>& params, AdamWState<Real>& optimizer, const std::vector<const ClipSample*>& data,
                   const ModelConfig& config, const TrainConfig& train, Rng& rng);

template <typename Real>
struct FitResult {
  ModelParams<Real> params;
  TrainLog log;
};

// Overrides the validation loss computed for an epoch (testing hook).
template <typename Real>
using ValidationOverride = std::function<double(const ModelParams<Real>&, std::size_t epoch)>;

// Early-stopping bookkeeping on validation loss. An epoch improves when its
// loss is strictly below the best so far.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

  // Returns true if this epoch is the new best.
  bool update(std::size_t epoch, double val_loss);
  bool should_stop() const { return bad_epochs_ >= patience_; }
  std::size_t best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_loss_; }

 private:
  std::size_t patience_;
  std::size_t bad_epochs_ = 0;
  std::size_t best_epoch_ = 0;
  double best_loss_ = 0;
};

// Trains from `initial` and returns the parameters of the best validation-loss
// epoch (or the last epoch in fixed-epoch mode) with the per-epoch log.
template <typename Real>
FitResult<Real> fit(ModelParams<Real> initial, const std::vector<const ClipSample*>& train_set,
                    const std::vector<const ClipSample*>& val_set, const ModelConfig& config,
                    const TrainConfig& train, Rng& rng, ValidationOverride<Real> val_override = {});

std::vector<const ClipSample*> as_pointers(const std::vector<ClipSample>& samples);

}  // namespace cagnet
