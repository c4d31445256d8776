#include "cagnet/optim.hpp"

#include <cmath>

#include "cagnet/error.hpp"

namespace cagnet {

template <typename Real>
void adamw_step(ModelParams<Real>& params, const ModelParams<Real>& grads, AdamWState<Real>& state) {
  for (const auto& [path, g] : grads) {
    auto it = params.find(path);
    if (it == params.end()) throw ValidationError("adamw_step: gradient for unknown parameter " + path);
    if (it->second.shape() != g.shape()) {
      throw DimensionError("adamw_step: gradient shape " + shape_str(g.shape()) + " for parameter " + path +
                           " of shape " + shape_str(it->second.shape()));
    }
    if (!g.all_finite()) throw NonFiniteError("adamw_step: non-finite gradient for parameter " + path);
  }

  const auto& h = state.hyper;
  const std::int64_t t = state.step + 1;
  const double bias1 = 1.0 - std::pow(h.beta1, static_cast<double>(t));
  const double bias2 = 1.0 - std::pow(h.beta2, static_cast<double>(t));

  for (auto& [path, theta] : params) {
    auto& m = state.first_moment.try_emplace(path, theta.shape()).first->second;
    auto& v = state.second_moment.try_emplace(path, theta.shape()).first->second;
    auto git = grads.find(path);
    const Tensor<Real>* g = git == grads.end() ? nullptr : &git->second;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double gi = g ? static_cast<double>((*g)[i]) : 0.0;
      const double mi = h.beta1 * m[i] + (1.0 - h.beta1) * gi;
      const double vi = h.beta2 * v[i] + (1.0 - h.beta2) * gi * gi;
      m[i] = static_cast<Real>(mi);
      v[i] = static_cast<Real>(vi);
      const double m_hat = mi / bias1;
      const double v_hat = vi / bias2;
      const double w = theta[i];
      theta[i] = static_cast<Real>(w - h.lr * m_hat / (std::sqrt(v_hat) + h.eps) - h.lr * h.weight_decay * w);
    }
  }
  state.step = t;
}

template void adamw_step(ModelParams<float>&, const ModelParams<float>&, AdamWState<float>&);
template void adamw_step(ModelParams<double>&, const ModelParams<double>&, AdamWState<double>&);

}  // namespace cagnet
