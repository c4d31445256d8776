#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cagnet/autodiff.hpp"
#include "cagnet/embedding_io.hpp"
#include "cagnet/optim.hpp"

namespace cagnet {

enum class Variant { CAGNet, MergedFusion, HierarchicalFusion };

std::string_view variant_name(Variant v);
// Accepts "cagnet", "merged", "hierarchical" (and the long forms), any case.
std::optional<Variant> parse_variant(std::string_view s);

struct ModelConfig {
  std::size_t d_model = 768;
  std::size_t attention_heads = 2;
  std::size_t ff_dim = 512;
  double dropout_p = 0.4;
  std::size_t num_classes = 3;
  std::size_t se_reduction = 4;
  Variant variant = Variant::CAGNet;

  std::size_t head_dim() const { return d_model / attention_heads; }
  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Every learnable tensor the configured variant needs, by layer path.
std::map<std::string, Shape> param_shapes(const ModelConfig& config);

// Glorot-uniform weights, zero biases, unit layer-norm gains. Draws from `rng`
// in sorted path order.
template <typename Real>
ModelParams<Real> init_params(const ModelConfig& config, Rng& rng);

// Throws ValidationError naming the first missing, unexpected or mis-shaped path.
template <typename Real>
void validate_params(const ModelParams<Real>& params, const ModelConfig& config);

// Binds parameters onto a tape on first use and collects their gradients.
template <typename Real>
class ParamBinder {
 public:
  ParamBinder(ad::Tape<Real>& tape, const ModelParams<Real>& params) : tape_(tape), params_(params) {}

  ad::Var<Real> operator()(const std::string& path);
  ad::Tape<Real>& tape() { return tape_; }

  // Gradients for every parameter in the map (zeros for unused ones).
  ModelParams<Real> gradients() const;

 private:
  ad::Tape<Real>& tape_;
  const ModelParams<Real>& params_;
  std::map<std::string, ad::Var<Real>> bound_;
};

// A sequence on the tape together with its validity mask. A missing stream
// carries no values.
template <typename Real>
struct MaskedSequence {
  std::optional<ad::Var<Real>> values;  // [T×d]
  ad::Mask valid;

  bool missing() const { return !values.has_value(); }
  bool any_valid() const;
};

// Attention weights captured from one block call.
struct AttentionProbe {
  bool bypassed = false;
  std::vector<Tensor<double>> head_weights;  // per head, [T_query × T_kv]
};

template <typename Real>
struct BlockResult {
  MaskedSequence<Real> output;
  bool bypassed = false;
};

// Multi-head cross-attention: queries from `query`, keys and values from
// `kv`, kv padding masked. Post-norm residual layout:
//   x1 = LN(q + MHA(q, kv)),  out = LN(x1 + FF(x1)).
// When kv has no valid step the query passes through unchanged (bypass).
// A missing query yields a missing output.
template <typename Real>
BlockResult<Real> cross_attention_block(ParamBinder<Real>& params, const std::string& prefix,
                                        const MaskedSequence<Real>& query, const MaskedSequence<Real>& kv,
                                        const ModelConfig& config, AttentionProbe* probe = nullptr);

// Masked mean pool of a block output; a missing sequence pools to zeros.
template <typename Real>
ad::Var<Real> pool_sequence(ad::Tape<Real>& tape, const MaskedSequence<Real>& seq, std::size_t d_model);

template <typename Real>
struct FusionResult {
  ad::Var<Real> fused;    // z = w ⊙ c, [1×3d]
  ad::Var<Real> gate;     // w, [1×3d]
  ad::Var<Real> concat;   // c, [1×3d]
};

// Squeeze-excitation fusion of three pooled block outputs:
//   c = [p1 ‖ p2 ‖ p3],  w = σ(W2·relu(W1·c + b1) + b2),  z = w ⊙ c.
template <typename Real>
FusionResult<Real> gated_fusion(ParamBinder<Real>& params, const std::array<ad::Var<Real>, 3>& pooled);

// LayerNorm → Linear(in→d) → GELU → Dropout → Linear(d→classes). Returns [1×classes] logits.
template <typename Real>
ad::Var<Real> classifier_head(ParamBinder<Real>& params, ad::Var<Real> z, const ModelConfig& config, bool train,
                              Rng& rng);

template <typename Real>
struct ForwardResult {
  ad::Var<Real> logits;          // [B×C]
  Tensor<Real> probabilities;    // [B×C]
  // Diagnostic probe logits per pair block (VA, VC, AC) on detached pooled
  // features; empty for the hierarchical variant.
  std::vector<ad::Var<Real>> block_logits;
  std::vector<Tensor<Real>> block_probabilities;
  std::optional<Tensor<Real>> gate_weights;  // [B×3d], CAGNet only
  // Per sample and block, whether the block was bypassed.
  std::vector<std::vector<bool>> bypassed;
};

inline constexpr std::array<const char*, 3> kPairBlocks{"va", "vc", "ac"};

// Builds the per-sample input sequences from a batch. Invalid rows are
// zeroed without being read, so padding contents never reach the model.
template <typename Real>
std::array<MaskedSequence<Real>, 3> batch_inputs(ad::Tape<Real>& tape, const BatchTensors& batch, std::size_t b,
                                                 std::size_t d_model);

template <typename Real>
ForwardResult<Real> cagnet_forward(ParamBinder<Real>& params, const BatchTensors& batch, const ModelConfig& config,
                                   bool train, Rng& rng);

template <typename Real>
ForwardResult<Real> baseline_merged_forward(ParamBinder<Real>& params, const BatchTensors& batch,
                                            const ModelConfig& config, bool train, Rng& rng);

template <typename Real>
ForwardResult<Real> baseline_hierarchical_forward(ParamBinder<Real>& params, const BatchTensors& batch,
                                                  const ModelConfig& config, bool train, Rng& rng);

// Dispatches on config.variant.
template <typename Real>
ForwardResult<Real> model_forward(ParamBinder<Real>& params, const BatchTensors& batch, const ModelConfig& config,
                                  bool train, Rng& rng);

// Eval-mode forward without gradient recording.
template <typename Real>
ForwardResult<Real> predict(const ModelParams<Real>& params, const BatchTensors& batch, const ModelConfig& config,
                            ad::Tape<Real>& tape);

// Zeroes one present modality per sample with probability p_drop, chosen
// uniformly among the three. Samples that already miss a modality are left
// alone so that at most one stream is ever absent. Two draws per sample.
void apply_modality_dropout(BatchTensors& batch, Rng& rng, double p_drop);

// Index of the largest entry; ties go to the lowest index.
template <typename Range>
int argmax(const Range& values) {
  int best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  return best;
}

}  // namespace cagnet
