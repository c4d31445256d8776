#include "cagnet/autodiff.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace cagnet::ad {

namespace {

template <typename Real>
void require_rank2(const Tensor<Real>& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got shape " + shape_str(t.shape()));
  }
}

template <typename Real>
void require_same_shape(const Tensor<Real>& a, const Tensor<Real>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

// c[m×n] += a[m×k]·b[k×n]
template <typename Real>
void gemm_nn(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    Real* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const Real av = a[i * k + p];
      const Real* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[m×k] += a[m×n]·b[k×n]ᵀ
template <typename Real>
void gemm_nt(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const Real* arow = a + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const Real* brow = b + p * n;
      Real acc = 0;
      for (std::size_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
      c[i * k + p] += acc;
    }
  }
}

// c[k×n] += a[m×k]ᵀ·b[m×n]
template <typename Real>
void gemm_tn(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const Real* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const Real av = a[i * k + p];
      Real* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename Real>
Real normal_cdf(Real x) {
  return Real(0.5) * (Real(1) + std::erf(x / std::numbers::sqrt2_v<Real>));
}

template <typename Real>
Real normal_pdf(Real x) {
  return std::exp(Real(-0.5) * x * x) / std::sqrt(Real(2) * std::numbers::pi_v<Real>);
}

}  // namespace

// ---- Tape -----------------------------------------------------------------

template <typename Real>
Var<Real> Tape<Real>::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var<Real>{this, nodes_.size() - 1};
}

template <typename Real>
Var<Real> Tape<Real>::constant(Tensor<Real> value) {
  if (!value.all_finite()) throw NonFiniteError("constant: input holds NaN or Inf");
  Node n;
  n.op = "constant";
  n.value = std::move(value);
  return push(std::move(n));
}

template <typename Real>
Var<Real> Tape<Real>::variable(Tensor<Real> value) {
  if (!value.all_finite()) throw NonFiniteError("variable: input holds NaN or Inf");
  Node n;
  n.op = "variable";
  n.value = std::move(value);
  n.requires_grad = recording_;
  return push(std::move(n));
}

template <typename Real>
Var<Real> Tape<Real>::parameter(const Tensor<Real>& ref) {
  Node n;
  n.op = "parameter";
  n.external = &ref;
  n.requires_grad = recording_;
  return push(std::move(n));
}

template <typename Real>
const Tensor<Real>& Tape<Real>::value(Var<Real> v) const {
  const Node& n = nodes_.at(v.id);
  return n.external ? *n.external : n.value;
}

template <typename Real>
Tensor<Real> Tape<Real>::grad(Var<Real> v) const {
  const Node& n = nodes_.at(v.id);
  if (n.grad) return *n.grad;
  return Tensor<Real>(value(v).shape());
}

template <typename Real>
Tensor<Real>* Tape<Real>::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return nullptr;
  if (!n.grad) n.grad.emplace((n.external ? *n.external : n.value).shape());
  return &*n.grad;
}

template <typename Real>
Var<Real> Tape<Real>::record(const char* op, Tensor<Real> value,
                             std::initializer_list<Var<Real>> inputs, BackwardFn fn) {
  return record(op, std::move(value), std::vector<Var<Real>>(inputs), std::move(fn));
}

template <typename Real>
Var<Real> Tape<Real>::record(const char* op, Tensor<Real> value, const std::vector<Var<Real>>& inputs,
                             BackwardFn fn) {
  if (!value.all_finite()) {
    throw NonFiniteError(std::string(op) + ": forward produced NaN or Inf");
  }
  Node n;
  n.op = op;
  n.value = std::move(value);
  if (recording_) {
    for (const auto& in : inputs) {
      if (in.tape != this) throw TapeError(std::string(op) + ": input belongs to another tape");
      if (nodes_[in.id].requires_grad) n.requires_grad = true;
    }
    if (n.requires_grad) n.backward = std::move(fn);
  }
  return push(std::move(n));
}

template <typename Real>
void Tape<Real>::backward(Var<Real> loss) {
  if (consumed_) throw TapeError("backward: tape already consumed; run a new forward pass");
  if (!recording_) throw TapeError("backward: tape was created without recording");
  if (value(loss).size() != 1) {
    throw TapeError("backward: loss must be scalar, got shape " + shape_str(value(loss).shape()));
  }
  consumed_ = true;
  replayed_ = 0;
  if (!nodes_[loss.id].requires_grad) return;
  grad_buffer(loss.id)->fill(Real(1));
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || !n.grad) continue;
    n.backward(*this, i);
    ++replayed_;
    if (!n.grad->all_finite()) {
      throw NonFiniteError(std::string("backward: non-finite gradient at op ") + n.op);
    }
  }
}

// ---- Ops ------------------------------------------------------------------

template <typename Real>
Var<Real> matmul(Var<Real> a, Var<Real> b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  require_rank2(av, "matmul");
  require_rank2(bv, "matmul");
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  if (bv.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions disagree, " + shape_str(av.shape()) + " x " +
                         shape_str(bv.shape()));
  }
  Tensor<Real> out({m, n});
  gemm_nn(av.data().data(), bv.data().data(), out.data().data(), m, k, n);
  return a.tape->record("matmul", std::move(out), {a, b},
                        [a, b, m, k, n](Tape<Real>& t, std::size_t self) {
                          const auto& g = t.out_grad(self);
                          if (auto* ga = t.grad_buffer(a.id)) {
                            gemm_nt(g.data().data(), t.value(b).data().data(), ga->data().data(), m, n, k);
                          }
                          if (auto* gb = t.grad_buffer(b.id)) {
                            gemm_tn(t.value(a).data().data(), g.data().data(), gb->data().data(), m, k, n);
                          }
                        });
}

template <typename Real>
Var<Real> add_row_vector(Var<Real> x, Var<Real> row) {
  const auto& xv = x.value();
  const auto& rv = row.value();
  require_rank2(xv, "add_row_vector");
  const std::size_t m = xv.dim(0), n = xv.dim(1);
  if (rv.size() != n) {
    throw DimensionError("add_row_vector: row of " + std::to_string(rv.size()) +
                         " elements for matrix " + shape_str(xv.shape()));
  }
  Tensor<Real> out = xv;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += rv[j];
  return x.tape->record("add_row_vector", std::move(out), {x, row},
                        [x, row, m, n](Tape<Real>& t, std::size_t self) {
                          const auto& g = t.out_grad(self);
                          if (auto* gx = t.grad_buffer(x.id))
                            for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i];
                          if (auto* gr = t.grad_buffer(row.id))
                            for (std::size_t i = 0; i < m; ++i)
                              for (std::size_t j = 0; j < n; ++j) (*gr)[j] += g[i * n + j];
                        });
}

template <typename Real>
Var<Real> linear(Var<Real> x, Var<Real> weight, Var<Real> bias) {
  return add_row_vector(matmul(x, weight), bias);
}

template <typename Real>
Var<Real> transpose(Var<Real> a) {
  const auto& av = a.value();
  require_rank2(av, "transpose");
  const std::size_t m = av.dim(0), n = av.dim(1);
  Tensor<Real> out({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
  return a.tape->record("transpose", std::move(out), {a}, [a, m, n](Tape<Real>& t, std::size_t self) {
    const auto& g = t.out_grad(self);
    if (auto* ga = t.grad_buffer(a.id))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) (*ga)[i * n + j] += g[j * m + i];
  });
}

template <typename Real>
Var<Real> add(Var<Real> a, Var<Real> b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor<Real> out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return a.tape->record("add", std::move(out), {a, b}, [a, b](Tape<Real>& t, std::size_t self) {
    const auto& g = t.out_grad(self);
    for (auto id : {a.id, b.id})
      if (auto* gi = t.grad_buffer(id))
        for (std::size_t i = 0; i < g.size(); ++i) (*gi)[i] += g[i];
  });
}

template <typename Real>
Var<Real> mul(Var<Real> a, Var<Real> b) {
  require_same_shape(a.value(), b.value(), "mul");
  Tensor<Real> out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return a.tape->record("mul", std::move(out), {a, b}, [a, b](Tape<Real>& t, std::size_t self) {
    const auto& g = t.out_grad(self);
    const auto& av = t.value(a);
    const auto& bv = t.value(b);
    if (auto* ga = t.grad_buffer(a.id))
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * bv[i];
    if (auto* gb = t.grad_buffer(b.id))
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * av[i];
  });
}

template <typename Real>
Var<Real> scale(Var<Real> a, Real factor) {
  Tensor<Real> out = a.value();
  for (auto& v : out.data()) v *= factor;
  return a.tape->record("scale", std::move(out), {a}, [a, factor](Tape<Real>& t, std::size_t self) {
    const auto& g = t.out_grad(self);
    if (auto* ga = t.grad_buffer(a.id))
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * factor;
  });
}

template <typename Real>
Var<Real> gelu(Var<Real> x) {
  Tensor<Real> out = x.value();
  for (auto& v : out.data()) v = v * normal_cdf(v);
  return x.tape->record("gelu", std::move(out), {x}, [x](Tape<Real>& t, std::size_t self) {
    const auto& g = t.out_grad(self);
    const auto& xv = t.value(x);
    if (auto* gx = t.grad_buffer(x.id))
      for (std::size_t i = 0; i < g.size(); ++i) {
        const Real v = xv[i];
        (*gx)[i] += g[i] * (normal_cdf(v) + v * normal_pdf(v));
      }
  });
}

template <typename Real>
Var<Real> relu(Var<Real> x) {
  Tensor<Real> out = x.value();
  for (auto& v : out.data()) v = v > 0 ? v : Real(0);
  return x.tape->record("relu", std::move(out), {x}, [x](Tape<Real>& t, std::size_t self) {
    const auto& g = t.out_grad(self);
    const auto& xv = t.value(x);
    if (auto* gx = t.grad_buffer(x.id))
      for (std::size_t i = 0; i < g.size(); ++i)
        if (xv[i] > 0) (*gx)[i] += g[i];
  });
}

template <typename Real>
Var<Real> sigmoid(Var<Real> x) {
  Tensor<Real> out = x.value();
  for (auto& v : out.data()) {
    v = v >= 0 ? Real(1) / (Real(1) + std::exp(-v)) : std::exp(v) / (Real(1) + std::exp(v));
  }
  return x.tape->record("sigmoid", std::move(out), {x}, [x](Tape<Real>& t, std::size_t self) {
    const auto& g = t.out_grad(self);
    const auto& y = t.value_at(self);
    if (auto* gx = t.grad_buffer(x.id))
      for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i] * y[i] * (Real(1) - y[i]);
  });
}

template <typename Real>
Var<Real> dropout(Var<Real> x, double p, bool train, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw ValidationError("dropout: p must lie in [0, 1)");
  if (!train || p == 0.0) return x;
  const Real keep_scale = Real(1) / Real(1.0 - p);
  Tensor<Real> factor(x.shape());
  for (auto& f : factor.data()) f = rng.uniform() >= p ? keep_scale : Real(0);
  Tensor<Real> out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= factor[i];
  return x.tape->record("dropout", std::move(out), {x},
                        [x, factor = std::move(factor)](Tape<Real>& t, std::size_t self) {
                          const auto& g = t.out_grad(self);
                          if (auto* gx = t.grad_buffer(x.id))
                            for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i] * factor[i];
                        });
}

template <typename Real>
Var<Real> detach(Var<Real> x) {
  return x.tape->record("detach", x.value(), std::vector<Var<Real>>{}, nullptr);
}

template <typename Real>
Var<Real> reshape(Var<Real> x, Shape shape) {
  if (shape_numel(shape) != x.value().size()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  Tensor<Real> out(std::move(shape), x.value().storage());
  return x.tape->record("reshape", std::move(out), {x}, [x](Tape<Real>& t, std::size_t self) {
    const auto& g = t.out_grad(self);
    if (auto* gx = t.grad_buffer(x.id))
      for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i];
  });
}

template <typename Real>
Var<Real> slice_cols(Var<Real> x, std::size_t begin, std::size_t end) {
  const auto& xv = x.value();
  require_rank2(xv, "slice_cols");
  const std::size_t m = xv.dim(0), n = xv.dim(1);
  if (begin >= end || end > n) {
    throw DimensionError("slice_cols: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") outside " + shape_str(xv.shape()));
  }
  const std::size_t w = end - begin;
  Tensor<Real> out({m, w});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = xv[i * n + begin + j];
  return x.tape->record("slice_cols", std::move(out), {x},
                        [x, m, n, w, begin](Tape<Real>& t, std::size_t self) {
                          const auto& g = t.out_grad(self);
                          if (auto* gx = t.grad_buffer(x.id))
                            for (std::size_t i = 0; i < m; ++i)
                              for (std::size_t j = 0; j < w; ++j) (*gx)[i * n + begin + j] += g[i * w + j];
                        });
}

template <typename Real>
Var<Real> concat_cols(const std::vector<Var<Real>>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const bool flat = parts.front().value().rank() == 1;
  const std::size_t m = flat ? 1 : parts.front().value().rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    const auto& v = p.value();
    if ((v.rank() == 1) != flat || (!flat && (v.rank() != 2 || v.dim(0) != m))) {
      throw DimensionError("concat_cols: incompatible part of shape " + shape_str(v.shape()));
    }
    widths.push_back(v.cols());
    total += v.cols();
  }
  Tensor<Real> out(flat ? Shape{total} : Shape{m, total});
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& v = parts[k].value();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < widths[k]; ++j) out[i * total + offset + j] = v[i * widths[k] + j];
    offset += widths[k];
  }
  return parts.front().tape->record(
      "concat_cols", std::move(out), parts, [parts, widths, m, total](Tape<Real>& t, std::size_t self) {
        const auto& g = t.out_grad(self);
        std::size_t off = 0;
        for (std::size_t k = 0; k < parts.size(); ++k) {
          if (auto* gp = t.grad_buffer(parts[k].id))
            for (std::size_t i = 0; i < m; ++i)
              for (std::size_t j = 0; j < widths[k]; ++j) (*gp)[i * widths[k] + j] += g[i * total + off + j];
          off += widths[k];
        }
      });
}

template <typename Real>
Var<Real> stack_rows(const std::vector<Var<Real>>& rows) {
  if (rows.empty()) throw DimensionError("stack_rows: no inputs");
  const std::size_t n = rows.front().value().size();
  Tensor<Real> out({rows.size(), n});
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto& v = rows[k].value();
    if (v.size() != n) throw DimensionError("stack_rows: rows differ in length");
    std::copy(v.data().begin(), v.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(k * n));
  }
  return rows.front().tape->record("stack_rows", std::move(out), rows,
                                   [rows, n](Tape<Real>& t, std::size_t self) {
                                     const auto& g = t.out_grad(self);
                                     for (std::size_t k = 0; k < rows.size(); ++k)
                                       if (auto* gr = t.grad_buffer(rows[k].id))
                                         for (std::size_t j = 0; j < n; ++j) (*gr)[j] += g[k * n + j];
                                   });
}

template <typename Real>
Tensor<Real> softmax_rows(const Tensor<Real>& logits, const Mask* valid) {
  const std::size_t n = logits.cols();
  const std::size_t rows = logits.size() / n;
  if (valid && valid->size() != n) {
    throw DimensionError("masked_softmax: mask of length " + std::to_string(valid->size()) +
                         " for rows of length " + std::to_string(n));
  }
  constexpr Real neg_inf = -std::numeric_limits<Real>::infinity();
  Tensor<Real> out(logits.shape());
  std::vector<Real> shifted(n);
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* in = logits.data().data() + r * n;
    Real* o = out.data().data() + r * n;
    Real row_max = neg_inf;
    for (std::size_t j = 0; j < n; ++j) {
      shifted[j] = (valid && !(*valid)[j]) ? neg_inf : in[j];
      row_max = std::max(row_max, shifted[j]);
    }
    if (row_max == neg_inf) {
      throw DegenerateError("masked_softmax: row " + std::to_string(r) + " has every position masked");
    }
    Real total = 0;
    for (std::size_t j = 0; j < n; ++j) {
      o[j] = shifted[j] == neg_inf ? Real(0) : std::exp(shifted[j] - row_max);
      total += o[j];
    }
    for (std::size_t j = 0; j < n; ++j) o[j] /= total;
  }
  return out;
}

template <typename Real>
Var<Real> masked_softmax(Var<Real> logits, const Mask& valid) {
  Tensor<Real> out = softmax_rows(logits.value(), &valid);
  return logits.tape->record("masked_softmax", std::move(out), {logits},
                             [logits](Tape<Real>& t, std::size_t self) {
                               auto* gx = t.grad_buffer(logits.id);
                               if (!gx) return;
                               const auto& g = t.out_grad(self);
                               const auto& y = t.value_at(self);
                               const std::size_t n = y.cols();
                               for (std::size_t r = 0; r < y.size() / n; ++r) {
                                 Real dot = 0;
                                 for (std::size_t j = 0; j < n; ++j) dot += g[r * n + j] * y[r * n + j];
                                 for (std::size_t j = 0; j < n; ++j)
                                   (*gx)[r * n + j] += y[r * n + j] * (g[r * n + j] - dot);
                               }
                             });
}

template <typename Real>
Var<Real> softmax(Var<Real> logits) {
  return masked_softmax(logits, Mask(logits.value().cols(), true));
}

template <typename Real>
Var<Real> layer_norm(Var<Real> x, Var<Real> gamma, Var<Real> beta, Real eps) {
  const auto& xv = x.value();
  const std::size_t d = xv.cols();
  if (gamma.value().size() != d || beta.value().size() != d) {
    throw DimensionError("layer_norm: affine parameters do not match feature width " + std::to_string(d));
  }
  if (!(eps > 0)) throw ValidationError("layer_norm: eps must be positive");
  const std::size_t rows = xv.size() / d;
  Tensor<Real> normed(xv.shape());
  std::vector<Real> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* in = xv.data().data() + r * d;
    Real mu = 0;
    for (std::size_t j = 0; j < d; ++j) mu += in[j];
    mu /= Real(d);
    Real var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (in[j] - mu) * (in[j] - mu);
    var /= Real(d);
    inv_std[r] = Real(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) normed[r * d + j] = (in[j] - mu) * inv_std[r];
  }
  Tensor<Real> out(xv.shape());
  const auto& gv = gamma.value();
  const auto& bv = beta.value();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = normed[r * d + j] * gv[j] + bv[j];
  return x.tape->record(
      "layer_norm", std::move(out), {x, gamma, beta},
      [x, gamma, beta, d, rows, normed = std::move(normed), inv_std = std::move(inv_std)](
          Tape<Real>& t, std::size_t self) {
        const auto& g = t.out_grad(self);
        const auto& gv = t.value(gamma);
        if (auto* gg = t.grad_buffer(gamma.id))
          for (std::size_t i = 0; i < g.size(); ++i) (*gg)[i % d] += g[i] * normed[i];
        if (auto* gb = t.grad_buffer(beta.id))
          for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i % d] += g[i];
        if (auto* gx = t.grad_buffer(x.id)) {
          for (std::size_t r = 0; r < rows; ++r) {
            Real sum_dn = 0, sum_dn_n = 0;
            for (std::size_t j = 0; j < d; ++j) {
              const Real dn = g[r * d + j] * gv[j];
              sum_dn += dn;
              sum_dn_n += dn * normed[r * d + j];
            }
            for (std::size_t j = 0; j < d; ++j) {
              const Real dn = g[r * d + j] * gv[j];
              (*gx)[r * d + j] +=
                  inv_std[r] * (dn - sum_dn / Real(d) - normed[r * d + j] * sum_dn_n / Real(d));
            }
          }
        }
      });
}

template <typename Real>
Var<Real> masked_mean_pool(Var<Real> x, const Mask& valid) {
  const auto& xv = x.value();
  require_rank2(xv, "masked_mean_pool");
  const std::size_t steps = xv.dim(0), d = xv.dim(1);
  if (valid.size() != steps) {
    throw DimensionError("masked_mean_pool: mask of length " + std::to_string(valid.size()) + " for " +
                         std::to_string(steps) + " steps");
  }
  std::size_t count = 0;
  Tensor<Real> out({d});
  for (std::size_t s = 0; s < steps; ++s) {
    if (!valid[s]) continue;
    ++count;
    for (std::size_t j = 0; j < d; ++j) out[j] += xv[s * d + j];
  }
  if (count == 0) throw DegenerateError("masked_mean_pool: sequence has no valid steps");
  for (auto& v : out.data()) v /= Real(count);
  return x.tape->record("masked_mean_pool", std::move(out), {x},
                        [x, valid, d, count](Tape<Real>& t, std::size_t self) {
                          const auto& g = t.out_grad(self);
                          if (auto* gx = t.grad_buffer(x.id))
                            for (std::size_t s = 0; s < valid.size(); ++s)
                              if (valid[s])
                                for (std::size_t j = 0; j < d; ++j) (*gx)[s * d + j] += g[j] / Real(count);
                        });
}

template <typename Real>
Var<Real> sum(Var<Real> x) {
  Real total = 0;
  for (auto v : x.value().data()) total += v;
  return x.tape->record("sum", Tensor<Real>::scalar(total), {x}, [x](Tape<Real>& t, std::size_t self) {
    const Real g = t.out_grad(self)[0];
    if (auto* gx = t.grad_buffer(x.id))
      for (auto& v : gx->data()) v += g;
  });
}

template <typename Real>
Var<Real> mean(Var<Real> x) {
  return scale(sum(x), Real(1) / Real(x.value().size()));
}

template <typename Real>
Var<Real> softmax_cross_entropy(Var<Real> logits, const std::vector<int>& labels) {
  const auto& lv = logits.value();
  require_rank2(lv, "softmax_cross_entropy");
  const std::size_t batch = lv.dim(0), classes = lv.dim(1);
  if (labels.size() != batch) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(batch) + " rows");
  }
  Real total = 0;
  for (std::size_t r = 0; r < batch; ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= classes) {
      throw ValidationError("softmax_cross_entropy: label " + std::to_string(labels[r]) +
                            " outside [0, " + std::to_string(classes) + ")");
    }
    const Real* row = lv.data().data() + r * classes;
    const Real row_max = *std::max_element(row, row + classes);
    Real acc = 0;
    for (std::size_t j = 0; j < classes; ++j) acc += std::exp(row[j] - row_max);
    total += row_max + std::log(acc) - row[labels[r]];
  }
  return logits.tape->record(
      "softmax_cross_entropy", Tensor<Real>::scalar(total / Real(batch)), {logits},
      [logits, labels, batch, classes](Tape<Real>& t, std::size_t self) {
        auto* gx = t.grad_buffer(logits.id);
        if (!gx) return;
        const Real g = t.out_grad(self)[0] / Real(batch);
        const Tensor<Real> p = softmax_rows(t.value(logits));
        for (std::size_t r = 0; r < batch; ++r)
          for (std::size_t j = 0; j < classes; ++j) {
            const Real target = static_cast<int>(j) == labels[r] ? Real(1) : Real(0);
            (*gx)[r * classes + j] += g * (p[r * classes + j] - target);
          }
      });
}

#define CAGNET_INSTANTIATE(Real)                                                              \
  template class Tape<Real>;                                                                  \
  template Var<Real> matmul(Var<Real>, Var<Real>);                                            \
  template Var<Real> linear(Var<Real>, Var<Real>, Var<Real>);                                 \
  template Var<Real> transpose(Var<Real>);                                                    \
  template Var<Real> add(Var<Real>, Var<Real>);                                               \
  template Var<Real> mul(Var<Real>, Var<Real>);                                               \
  template Var<Real> scale(Var<Real>, Real);                                                  \
  template Var<Real> add_row_vector(Var<Real>, Var<Real>);                                    \
  template Var<Real> gelu(Var<Real>);                                                         \
  template Var<Real> relu(Var<Real>);                                                         \
  template Var<Real> sigmoid(Var<Real>);                                                      \
  template Var<Real> dropout(Var<Real>, double, bool, Rng&);                                  \
  template Var<Real> detach(Var<Real>);                                                       \
  template Var<Real> reshape(Var<Real>, Shape);                                               \
  template Var<Real> slice_cols(Var<Real>, std::size_t, std::size_t);                         \
  template Var<Real> concat_cols(const std::vector<Var<Real>>&);                              \
  template Var<Real> stack_rows(const std::vector<Var<Real>>&);                               \
  template Var<Real> masked_softmax(Var<Real>, const Mask&);                                  \
  template Var<Real> softmax(Var<Real>);                                                      \
  template Var<Real> layer_norm(Var<Real>, Var<Real>, Var<Real>, Real);                       \
  template Var<Real> masked_mean_pool(Var<Real>, const Mask&);                                \
  template Var<Real> sum(Var<Real>);                                                          \
  template Var<Real> mean(Var<Real>);                                                         \
  template Var<Real> softmax_cross_entropy(Var<Real>, const std::vector<int>&);               \
  template Tensor<Real> softmax_rows(const Tensor<Real>&, const Mask*);

CAGNET_INSTANTIATE(float)
CAGNET_INSTANTIATE(double)

#undef CAGNET_INSTANTIATE

}  // namespace cagnet::ad
