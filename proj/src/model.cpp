#include "cagnet/model.hpp"

#include <cmath>

#include "cagnet/error.hpp"

namespace cagnet {

using ad::Var;

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::CAGNet:
      return "cagnet";
    case Variant::MergedFusion:
      return "merged";
    case Variant::HierarchicalFusion:
      return "hierarchical";
  }
  return "unknown";
}

std::optional<Variant> parse_variant(std::string_view s) {
  const std::string l = to_lower(s);
  if (l == "cagnet") return Variant::CAGNet;
  if (l == "merged" || l == "mergedfusion" || l == "merged_fusion") return Variant::MergedFusion;
  if (l == "hierarchical" || l == "hierarchicalfusion" || l == "hierarchical_fusion") {
    return Variant::HierarchicalFusion;
  }
  return std::nullopt;
}

void ModelConfig::validate() const {
  if (d_model == 0 || attention_heads == 0 || d_model % attention_heads != 0) {
    throw ValidationError("model config: d_model " + std::to_string(d_model) + " is not divisible by " +
                          std::to_string(attention_heads) + " attention heads");
  }
  if (ff_dim == 0) throw ValidationError("model config: ff_dim must be positive");
  if (num_classes != 3 && num_classes != 5) {
    throw ValidationError("model config: num_classes must be 3 or 5, got " + std::to_string(num_classes));
  }
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw ValidationError("model config: dropout_p must lie in [0, 1)");
  if (se_reduction == 0 || (3 * d_model) % se_reduction != 0) {
    throw ValidationError("model config: se_reduction must divide 3*d_model");
  }
}

namespace {

void add_block_shapes(std::map<std::string, Shape>& shapes, const std::string& p, const ModelConfig& c) {
  const std::size_t d = c.d_model;
  for (const char* proj : {"q", "k", "v", "o"}) {
    shapes[p + ".attn." + proj + ".weight"] = {d, d};
    shapes[p + ".attn." + proj + ".bias"] = {d};
  }
  shapes[p + ".ff1.weight"] = {d, c.ff_dim};
  shapes[p + ".ff1.bias"] = {c.ff_dim};
  shapes[p + ".ff2.weight"] = {c.ff_dim, d};
  shapes[p + ".ff2.bias"] = {d};
  for (const char* ln : {"ln1", "ln2"}) {
    shapes[p + "." + ln + ".gamma"] = {d};
    shapes[p + "." + ln + ".beta"] = {d};
  }
}

void add_head_shapes(std::map<std::string, Shape>& shapes, std::size_t in, const ModelConfig& c) {
  shapes["head.ln.gamma"] = {in};
  shapes["head.ln.beta"] = {in};
  shapes["head.fc1.weight"] = {in, c.d_model};
  shapes["head.fc1.bias"] = {c.d_model};
  shapes["head.fc2.weight"] = {c.d_model, c.num_classes};
  shapes["head.fc2.bias"] = {c.num_classes};
}

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

std::map<std::string, Shape> param_shapes(const ModelConfig& config) {
  config.validate();
  std::map<std::string, Shape> shapes;
  const std::size_t d = config.d_model;
  if (config.variant == Variant::HierarchicalFusion) {
    add_block_shapes(shapes, "va", config);
    add_block_shapes(shapes, "vac", config);
    add_head_shapes(shapes, d, config);
    return shapes;
  }
  for (const char* block : kPairBlocks) add_block_shapes(shapes, block, config);
  if (config.variant == Variant::CAGNet) {
    const std::size_t width = 3 * d, squeezed = width / config.se_reduction;
    shapes["gate.fc1.weight"] = {width, squeezed};
    shapes["gate.fc1.bias"] = {squeezed};
    shapes["gate.fc2.weight"] = {squeezed, width};
    shapes["gate.fc2.bias"] = {width};
  }
  add_head_shapes(shapes, 3 * d, config);
  shapes["probe.weight"] = {d, config.num_classes};
  shapes["probe.bias"] = {config.num_classes};
  return shapes;
}

template <typename Real>
ModelParams<Real> init_params(const ModelConfig& config, Rng& rng) {
  ModelParams<Real> params;
  for (const auto& [path, shape] : param_shapes(config)) {
    Tensor<Real> t(shape);
    if (ends_with(path, ".weight")) {
      const double bound = std::sqrt(6.0 / static_cast<double>(shape[0] + shape[1]));
      for (auto& v : t.data()) v = static_cast<Real>(rng.uniform(-bound, bound));
    } else if (ends_with(path, ".gamma")) {
      t.fill(Real(1));
    }
    params.emplace(path, std::move(t));
  }
  return params;
}

template <typename Real>
void validate_params(const ModelParams<Real>& params, const ModelConfig& config) {
  const auto shapes = param_shapes(config);
  for (const auto& [path, shape] : shapes) {
    auto it = params.find(path);
    if (it == params.end()) throw ValidationError("parameter " + path + " is missing");
    if (it->second.shape() != shape) {
      throw ValidationError("parameter " + path + " has shape " + shape_str(it->second.shape()) + ", expected " +
                            shape_str(shape));
    }
  }
  for (const auto& [path, t] : params) {
    if (!shapes.contains(path)) throw ValidationError("unexpected parameter " + path);
  }
}

// ---- ParamBinder ----------------------------------------------------------

template <typename Real>
Var<Real> ParamBinder<Real>::operator()(const std::string& path) {
  if (auto it = bound_.find(path); it != bound_.end()) return it->second;
  auto p = params_.find(path);
  if (p == params_.end()) throw ValidationError("parameter " + path + " is missing");
  auto v = tape_.parameter(p->second);
  bound_.emplace(path, v);
  return v;
}

template <typename Real>
ModelParams<Real> ParamBinder<Real>::gradients() const {
  ModelParams<Real> grads;
  for (const auto& [path, t] : params_) {
    auto it = bound_.find(path);
    grads.emplace(path, it == bound_.end() ? Tensor<Real>(t.shape()) : tape_.grad(it->second));
  }
  return grads;
}

template <typename Real>
bool MaskedSequence<Real>::any_valid() const {
  return values.has_value() && std::find(valid.begin(), valid.end(), true) != valid.end();
}

// ---- Blocks ---------------------------------------------------------------

template <typename Real>
BlockResult<Real> cross_attention_block(ParamBinder<Real>& params, const std::string& prefix,
                                        const MaskedSequence<Real>& query, const MaskedSequence<Real>& kv,
                                        const ModelConfig& config, AttentionProbe* probe) {
  if (probe) *probe = AttentionProbe{};
  if (query.missing()) return {query, false};
  if (!kv.any_valid()) {
    if (probe) probe->bypassed = true;
    return {query, true};
  }
  const std::size_t d = config.d_model;
  const auto& qv = query.values->value();
  const auto& kvv = kv.values->value();
  if (qv.rank() != 2 || qv.cols() != d || kvv.rank() != 2 || kvv.cols() != d) {
    throw DimensionError("cross_attention_block " + prefix + ": inputs " + shape_str(qv.shape()) + " and " +
                         shape_str(kvv.shape()) + " do not have " + std::to_string(d) + " features");
  }
  if (query.valid.size() != qv.rows() || kv.valid.size() != kvv.rows()) {
    throw DimensionError("cross_attention_block " + prefix + ": mask length does not match sequence length");
  }

  const std::string a = prefix + ".attn.";
  const Var<Real> x = *query.values;
  const Var<Real> src = *kv.values;
  const auto q = ad::linear(x, params(a + "q.weight"), params(a + "q.bias"));
  const auto k = ad::linear(src, params(a + "k.weight"), params(a + "k.bias"));
  const auto v = ad::linear(src, params(a + "v.weight"), params(a + "v.bias"));

  const std::size_t dh = config.head_dim();
  const Real inv_sqrt = Real(1) / std::sqrt(static_cast<Real>(dh));
  std::vector<Var<Real>> heads;
  for (std::size_t h = 0; h < config.attention_heads; ++h) {
    const auto qh = ad::slice_cols(q, h * dh, (h + 1) * dh);
    const auto kh = ad::slice_cols(k, h * dh, (h + 1) * dh);
    const auto vh = ad::slice_cols(v, h * dh, (h + 1) * dh);
    const auto scores = ad::scale(ad::matmul(qh, ad::transpose(kh)), inv_sqrt);
    const auto weights = ad::masked_softmax(scores, kv.valid);
    if (probe) probe->head_weights.push_back(weights.value().template cast<double>());
    heads.push_back(ad::matmul(weights, vh));
  }
  const auto attended = ad::linear(ad::concat_cols(heads), params(a + "o.weight"), params(a + "o.bias"));
  const auto x1 = ad::layer_norm(ad::add(x, attended), params(prefix + ".ln1.gamma"), params(prefix + ".ln1.beta"));
  const auto hidden = ad::gelu(ad::linear(x1, params(prefix + ".ff1.weight"), params(prefix + ".ff1.bias")));
  const auto ff = ad::linear(hidden, params(prefix + ".ff2.weight"), params(prefix + ".ff2.bias"));
  const auto out = ad::layer_norm(ad::add(x1, ff), params(prefix + ".ln2.gamma"), params(prefix + ".ln2.beta"));
  return {MaskedSequence<Real>{out, query.valid}, false};
}

template <typename Real>
Var<Real> pool_sequence(ad::Tape<Real>& tape, const MaskedSequence<Real>& seq, std::size_t d_model) {
  if (seq.missing()) return tape.constant(Tensor<Real>({1, d_model}));
  return ad::reshape(ad::masked_mean_pool(*seq.values, seq.valid), Shape{1, d_model});
}

template <typename Real>
FusionResult<Real> gated_fusion(ParamBinder<Real>& params, const std::array<Var<Real>, 3>& pooled) {
  const auto c = ad::concat_cols(std::vector<Var<Real>>(pooled.begin(), pooled.end()));
  const auto squeezed = ad::relu(ad::linear(c, params("gate.fc1.weight"), params("gate.fc1.bias")));
  const auto w = ad::sigmoid(ad::linear(squeezed, params("gate.fc2.weight"), params("gate.fc2.bias")));
  return {ad::mul(w, c), w, c};
}

template <typename Real>
Var<Real> classifier_head(ParamBinder<Real>& params, Var<Real> z, const ModelConfig& config, bool train, Rng& rng) {
  auto h = ad::layer_norm(z, params("head.ln.gamma"), params("head.ln.beta"));
  h = ad::gelu(ad::linear(h, params("head.fc1.weight"), params("head.fc1.bias")));
  h = ad::dropout(h, config.dropout_p, train, rng);
  return ad::linear(h, params("head.fc2.weight"), params("head.fc2.bias"));
}

// ---- Forward passes -------------------------------------------------------

template <typename Real>
std::array<MaskedSequence<Real>, 3> batch_inputs(ad::Tape<Real>& tape, const BatchTensors& batch, std::size_t b,
                                                 std::size_t d_model) {
  std::array<MaskedSequence<Real>, 3> inputs;
  for (auto m : kModalities) {
    const auto& stream = batch.stream(m);
    auto& seq = inputs[static_cast<std::size_t>(m)];
    if (stream.is_missing(b)) {
      seq.valid.assign(std::max<std::size_t>(stream.steps, 1), false);
      continue;
    }
    if (stream.dim != d_model) {
      throw DimensionError(std::string(modality_name(m)) + " features have width " + std::to_string(stream.dim) +
                           ", model expects " + std::to_string(d_model));
    }
    seq.valid = stream.mask(b);
    Tensor<Real> values({stream.steps, d_model});
    for (std::size_t t = 0; t < stream.steps; ++t) {
      if (!seq.valid[t]) continue;
      const float* row = stream.values.data() + (b * stream.steps + t) * d_model;
      for (std::size_t j = 0; j < d_model; ++j) values[t * d_model + j] = static_cast<Real>(row[j]);
    }
    seq.values = tape.constant(std::move(values));
  }
  return inputs;
}

namespace {

template <typename Real>
void finish(ForwardResult<Real>& result, const std::vector<Var<Real>>& logits,
            const std::array<std::vector<Var<Real>>, 3>& probe_logits, bool with_probe) {
  result.logits = ad::stack_rows(logits);
  result.probabilities = ad::softmax_rows(result.logits.value());
  if (!with_probe) return;
  for (const auto& rows : probe_logits) {
    auto stacked = ad::stack_rows(rows);
    result.block_probabilities.push_back(ad::softmax_rows(stacked.value()));
    result.block_logits.push_back(stacked);
  }
}

template <typename Real>
ForwardResult<Real> pair_block_forward(ParamBinder<Real>& params, const BatchTensors& batch,
                                       const ModelConfig& config, bool train, Rng& rng, bool gated) {
  config.validate();
  auto& tape = params.tape();
  ForwardResult<Real> result;
  std::vector<Var<Real>> logits;
  std::array<std::vector<Var<Real>>, 3> probe_logits;
  std::vector<Real> gates;
  for (std::size_t b = 0; b < batch.size; ++b) {
    const auto in = batch_inputs(tape, batch, b, config.d_model);
    const auto& vis = in[0];
    const auto& aud = in[1];
    const auto& ctx = in[2];
    const std::array<std::pair<const MaskedSequence<Real>*, const MaskedSequence<Real>*>, 3> pairs{
        {{&vis, &aud}, {&vis, &ctx}, {&aud, &ctx}}};
    std::array<Var<Real>, 3> pooled;
    std::vector<bool> bypassed;
    for (std::size_t k = 0; k < 3; ++k) {
      auto block = cross_attention_block(params, kPairBlocks[k], *pairs[k].first, *pairs[k].second, config);
      bypassed.push_back(block.bypassed);
      pooled[k] = pool_sequence(tape, block.output, config.d_model);
      probe_logits[k].push_back(ad::linear(ad::detach(pooled[k]), params("probe.weight"), params("probe.bias")));
    }
    result.bypassed.push_back(std::move(bypassed));
    Var<Real> z;
    if (gated) {
      auto fusion = gated_fusion(params, pooled);
      z = fusion.fused;
      const auto& w = fusion.gate.value();
      gates.insert(gates.end(), w.data().begin(), w.data().end());
    } else {
      z = ad::concat_cols(std::vector<Var<Real>>(pooled.begin(), pooled.end()));
    }
    logits.push_back(classifier_head(params, z, config, train, rng));
  }
  finish(result, logits, probe_logits, true);
  if (gated) result.gate_weights = Tensor<Real>({batch.size, 3 * config.d_model}, std::move(gates));
  return result;
}

}  // namespace

template <typename Real>
ForwardResult<Real> cagnet_forward(ParamBinder<Real>& params, const BatchTensors& batch, const ModelConfig& config,
                                   bool train, Rng& rng) {
  return pair_block_forward(params, batch, config, train, rng, true);
}

template <typename Real>
ForwardResult<Real> baseline_merged_forward(ParamBinder<Real>& params, const BatchTensors& batch,
                                            const ModelConfig& config, bool train, Rng& rng) {
  return pair_block_forward(params, batch, config, train, rng, false);
}

template <typename Real>
ForwardResult<Real> baseline_hierarchical_forward(ParamBinder<Real>& params, const BatchTensors& batch,
                                                  const ModelConfig& config, bool train, Rng& rng) {
  config.validate();
  auto& tape = params.tape();
  ForwardResult<Real> result;
  std::vector<Var<Real>> logits;
  for (std::size_t b = 0; b < batch.size; ++b) {
    const auto in = batch_inputs(tape, batch, b, config.d_model);
    auto joint = cross_attention_block(params, "va", in[0], in[1], config);
    auto fused = cross_attention_block(params, "vac", joint.output, in[2], config);
    result.bypassed.push_back({joint.bypassed, fused.bypassed});
    const auto pooled = pool_sequence(tape, fused.output, config.d_model);
    logits.push_back(classifier_head(params, pooled, config, train, rng));
  }
  finish(result, logits, {}, false);
  return result;
}

template <typename Real>
ForwardResult<Real> model_forward(ParamBinder<Real>& params, const BatchTensors& batch, const ModelConfig& config,
                                  bool train, Rng& rng) {
  switch (config.variant) {
    case Variant::CAGNet:
      return cagnet_forward(params, batch, config, train, rng);
    case Variant::MergedFusion:
      return baseline_merged_forward(params, batch, config, train, rng);
    case Variant::HierarchicalFusion:
      return baseline_hierarchical_forward(params, batch, config, train, rng);
  }
  throw ValidationError("unknown model variant");
}

template <typename Real>
ForwardResult<Real> predict(const ModelParams<Real>& params, const BatchTensors& batch, const ModelConfig& config,
                            ad::Tape<Real>& tape) {
  ParamBinder<Real> binder(tape, params);
  Rng unused(0);
  return model_forward(binder, batch, config, false, unused);
}

void apply_modality_dropout(BatchTensors& batch, Rng& rng, double p_drop) {
  if (!(p_drop >= 0.0 && p_drop <= 1.0)) throw ValidationError("modality dropout probability must lie in [0, 1]");
  for (std::size_t b = 0; b < batch.size; ++b) {
    const bool drop = rng.uniform() < p_drop;
    const auto which = kModalities[rng.below(kNumModalities)];
    if (!drop) continue;
    const bool complete = std::none_of(kModalities.begin(), kModalities.end(),
                                       [&](Modality m) { return batch.stream(m).is_missing(b); });
    if (complete) batch.drop_modality(b, which);
  }
}

#define CAGNET_INSTANTIATE(Real)                                                                                 \
  template ModelParams<Real> init_params<Real>(const ModelConfig&, Rng&);                                        \
  template void validate_params(const ModelParams<Real>&, const ModelConfig&);                                   \
  template class ParamBinder<Real>;                                                                              \
  template struct MaskedSequence<Real>;                                                                          \
  template BlockResult<Real> cross_attention_block(ParamBinder<Real>&, const std::string&,                       \
                                                   const MaskedSequence<Real>&, const MaskedSequence<Real>&,     \
                                                   const ModelConfig&, AttentionProbe*);                         \
  template Var<Real> pool_sequence(ad::Tape<Real>&, const MaskedSequence<Real>&, std::size_t);                   \
  template FusionResult<Real> gated_fusion(ParamBinder<Real>&, const std::array<Var<Real>, 3>&);                 \
  template Var<Real> classifier_head(ParamBinder<Real>&, Var<Real>, const ModelConfig&, bool, Rng&);             \
  template std::array<MaskedSequence<Real>, 3> batch_inputs(ad::Tape<Real>&, const BatchTensors&, std::size_t,   \
                                                            std::size_t);                                        \
  template ForwardResult<Real> cagnet_forward(ParamBinder<Real>&, const BatchTensors&, const ModelConfig&, bool, \
                                              Rng&);                                                             \
  template ForwardResult<Real> baseline_merged_forward(ParamBinder<Real>&, const BatchTensors&,                  \
                                                       const ModelConfig&, bool, Rng&);                          \
  template ForwardResult<Real> baseline_hierarchical_forward(ParamBinder<Real>&, const BatchTensors&,            \
                                                             const ModelConfig&, bool, Rng&);                    \
  template ForwardResult<Real> model_forward(ParamBinder<Real>&, const BatchTensors&, const ModelConfig&, bool,  \
                                             Rng&);                                                              \
  template ForwardResult<Real> predict(const ModelParams<Real>&, const BatchTensors&, const ModelConfig&,        \
                                       ad::Tape<Real>&);

CAGNET_INSTANTIATE(float)
CAGNET_INSTANTIATE(double)

#undef CAGNET_INSTANTIATE

}  // namespace cagnet
