#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "cagnet/tensor.hpp"

namespace cagnet {

// Learnable tensors keyed by layer path, e.g. "va.attn.q.weight". Ordered so
// that iteration (initialisation, serialisation, updates) is deterministic.
template <typename Real>
using ModelParams = std::map<std::string, Tensor<Real>>;

struct AdamWConfig {
  double lr = 1e-4;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename Real>
struct AdamWState {
  AdamWConfig hyper;
  ModelParams<Real> first_moment;
  ModelParams<Real> second_moment;
  std::int64_t step = 0;
};

// One AdamW update with decoupled weight decay:
//   θ ← θ − lr·m̂/(√v̂ + eps) − lr·λ·θ
// Parameters absent from `grads` are treated as having a zero gradient.
// Every gradient is checked before anything is modified; a NaN or Inf throws
// NonFiniteError naming the parameter path and leaves params and state intact.
template <typename Real>
void adamw_step(ModelParams<Real>& params, const ModelParams<Real>& grads, AdamWState<Real>& state);

}  // namespace cagnet
