#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cagnet/rng.hpp"
#include "cagnet/tensor.hpp"

// Reverse-mode differentiation over dense tensors.
//
// A Tape records every op in execution order. Each recorded node owns its
// forward value and, when any input requires a gradient, a closure that
// pushes the node's output gradient into the gradient buffers of its inputs.
// backward() walks the nodes once in reverse order. A tape can be replayed
// only once; build a fresh tape per forward pass.
namespace cagnet::ad {

using Mask = std::vector<bool>;

template <typename Real>
class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
template <typename Real>
struct Var {
  Tape<Real>* tape = nullptr;
  std::size_t id = 0;

  const Tensor<Real>& value() const { return tape->value(*this); }
  const Shape& shape() const { return value().shape(); }
};

template <typename Real>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  // With record=false no backward closures are kept (inference).
  explicit Tape(bool record = true) : recording_(record) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<Real> constant(Tensor<Real> value);
  Var<Real> variable(Tensor<Real> value);
  // Leaf that references `ref` without copying; `ref` must outlive the tape.
  Var<Real> parameter(const Tensor<Real>& ref);

  const Tensor<Real>& value(Var<Real> v) const;
  bool requires_grad(Var<Real> v) const { return nodes_.at(v.id).requires_grad; }

  // Gradient of the last backward() loss with respect to v. Nodes that did
  // not require a gradient, or received none, report zeros.
  Tensor<Real> grad(Var<Real> v) const;

  // Fills gradient buffers for every node that requires one. The loss must
  // hold exactly one element. Throws TapeError on a second call.
  void backward(Var<Real> loss);

  bool recording() const noexcept { return recording_; }
  bool consumed() const noexcept { return consumed_; }
  std::size_t size() const noexcept { return nodes_.size(); }
  // Number of node closures run by the last backward().
  std::size_t replayed_ops() const noexcept { return replayed_; }

  // Used by op implementations.
  Var<Real> record(const char* op, Tensor<Real> value, std::initializer_list<Var<Real>> inputs,
                   BackwardFn fn);
  Var<Real> record(const char* op, Tensor<Real> value, const std::vector<Var<Real>>& inputs,
                   BackwardFn fn);
  // Gradient buffer for accumulation, allocated on first use. Returns nullptr
  // for nodes that do not require a gradient.
  Tensor<Real>* grad_buffer(std::size_t id);
  const Tensor<Real>& out_grad(std::size_t id) const { return *nodes_[id].grad; }
  const Tensor<Real>& value_at(std::size_t id) const { return value(Var<Real>{nullptr, id}); }

 private:
  struct Node {
    const char* op = "";
    Tensor<Real> value;
    const Tensor<Real>* external = nullptr;
    bool requires_grad = false;
    std::optional<Tensor<Real>> grad;
    BackwardFn backward;
  };

  Var<Real> push(Node node);

  std::vector<Node> nodes_;
  bool recording_;
  bool consumed_ = false;
  std::size_t replayed_ = 0;
};

// ---- Linear algebra -------------------------------------------------------

// [m×k]·[k×n] -> [m×n]. dA = dC·Bᵀ, dB = Aᵀ·dC.
template <typename Real>
Var<Real> matmul(Var<Real> a, Var<Real> b);

// x·W + b for x [m×in], W [in×out], b [out].
template <typename Real>
Var<Real> linear(Var<Real> x, Var<Real> weight, Var<Real> bias);

template <typename Real>
Var<Real> transpose(Var<Real> a);

// ---- Elementwise ----------------------------------------------------------

template <typename Real>
Var<Real> add(Var<Real> a, Var<Real> b);

template <typename Real>
Var<Real> mul(Var<Real> a, Var<Real> b);

template <typename Real>
Var<Real> scale(Var<Real> a, Real factor);

// Adds a length-n vector to every row of an [m×n] tensor.
template <typename Real>
Var<Real> add_row_vector(Var<Real> x, Var<Real> row);

template <typename Real>
Var<Real> gelu(Var<Real> x);

template <typename Real>
Var<Real> relu(Var<Real> x);

template <typename Real>
Var<Real> sigmoid(Var<Real> x);

// Inverted dropout: keeps each element with probability 1-p and scales kept
// elements by 1/(1-p). Identity when train is false or p is zero.
template <typename Real>
Var<Real> dropout(Var<Real> x, double p, bool train, Rng& rng);

// Value passes through; no gradient flows back to x.
template <typename Real>
Var<Real> detach(Var<Real> x);

// ---- Shape ----------------------------------------------------------------

template <typename Real>
Var<Real> reshape(Var<Real> x, Shape shape);

// Columns [begin, end) of an [m×n] tensor.
template <typename Real>
Var<Real> slice_cols(Var<Real> x, std::size_t begin, std::size_t end);

// Joins [m×n_i] tensors along columns. Rank-1 inputs are joined end to end.
template <typename Real>
Var<Real> concat_cols(const std::vector<Var<Real>>& parts);

// Stacks k equally sized tensors into [k×n].
template <typename Real>
Var<Real> stack_rows(const std::vector<Var<Real>>& rows);

// ---- Normalization and reductions ----------------------------------------

// Softmax over the last axis restricted to positions where valid[j] is true.
// Masked positions are exactly zero. Throws DegenerateError if every
// position is masked.
template <typename Real>
Var<Real> masked_softmax(Var<Real> logits, const Mask& valid);

template <typename Real>
Var<Real> softmax(Var<Real> logits);

template <typename Real>
Var<Real> layer_norm(Var<Real> x, Var<Real> gamma, Var<Real> beta, Real eps = Real(1e-5));

// Mean over the rows of x [T×d] whose valid flag is set; invalid rows are
// never read. Returns shape [d].
template <typename Real>
Var<Real> masked_mean_pool(Var<Real> x, const Mask& valid);

template <typename Real>
Var<Real> sum(Var<Real> x);

template <typename Real>
Var<Real> mean(Var<Real> x);

// Mean over rows of -log softmax(logits)[label], via log-sum-exp.
template <typename Real>
Var<Real> softmax_cross_entropy(Var<Real> logits, const std::vector<int>& labels);

// ---- Non-recording kernels ------------------------------------------------

template <typename Real>
Tensor<Real> softmax_rows(const Tensor<Real>& logits, const Mask* valid = nullptr);

}  // namespace cagnet::ad
