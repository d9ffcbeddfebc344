#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "meshmotion/tensor.hpp"

namespace meshmotion {

/// Trainable tensor with its accumulated gradient.
template <class T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  void zero_grad() { grad = Tensor<T>(value.shape()); }
};

template <class T>
class Tape;

/// Handle to a value recorded on a Tape.
template <class T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Tensor<T>& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

/// Row-compressed sparse matrix consumed by the unpooling op.
template <class T>
struct CsrMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> row_ptr{0};
  std::vector<Index> col;
  std::vector<T> weight;
};

/// Records operations in execution order; backward() replays them in
/// reverse. Parameters' gradients are accumulated into Parameter::grad.
template <class T>
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value);
  Var<T> parameter(Parameter<T>& p);
  Var<T> record(Tensor<T> value, std::vector<std::size_t> inputs, Backward backward);

  const Tensor<T>& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  /// Gradient buffer of node `id`, zero-initialised on first access.
  Tensor<T>& grad(std::size_t id);
  const Tensor<T>& grad_or_empty(std::size_t id) const { return nodes_[id].grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Requires a 1 x 1 output. Throws if the output is not scalar.
  void backward(Var<T> output);

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    Backward backward;
    Parameter<T>* param = nullptr;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
};

template <class T>
const Tensor<T>& Var<T>::value() const {
  return tape->value(id);
}

namespace ad {

template <class T> Var<T> matmul(Var<T> a, Var<T> b);
template <class T> Var<T> transpose(Var<T> a);
template <class T> Var<T> add(Var<T> a, Var<T> b);
template <class T> Var<T> sub(Var<T> a, Var<T> b);
template <class T> Var<T> mul(Var<T> a, Var<T> b);
template <class T> Var<T> scale(Var<T> a, T factor);
/// a (r x c) plus the row vector b (1 x c) on every row.
template <class T> Var<T> add_row(Var<T> a, Var<T> b);
/// Row j of the result is row indices[j] of x, or zeros for index -1.
template <class T> Var<T> gather_rows(Var<T> x, std::span<const Index> indices);
template <class T> Var<T> concat_rows(const std::vector<Var<T>>& parts);
template <class T> Var<T> slice_rows(Var<T> x, std::size_t begin, std::size_t end);
template <class T> Var<T> slice_cols(Var<T> x, std::size_t begin, std::size_t end);
template <class T> Var<T> reshape(Var<T> x, std::size_t rows, std::size_t cols);
template <class T> Var<T> relu(Var<T> x);
template <class T> Var<T> sigmoid(Var<T> x);
template <class T> Var<T> tanh(Var<T> x);
template <class T> Var<T> sum(Var<T> x);
template <class T> Var<T> mean(Var<T> x);
/// mean |a - b|; the subgradient at a == b is 0.
template <class T> Var<T> l1_loss(Var<T> a, Var<T> b);
/// Applies q to each of the x.rows / q.cols stacked blocks of x. `q` must
/// outlive the tape's backward pass.
template <class T> Var<T> sparse_matmul(const CsrMatrix<T>& q, Var<T> x);
/// Mean negative log-likelihood of softmax(logits) at the given class labels.
template <class T> Var<T> softmax_cross_entropy(Var<T> logits, std::span<const int> labels);

}  // namespace ad

Tensor<double> softmax_rows(const Tensor<double>& logits);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// L2 decay folded into the gradient: g += weight_decay * theta.
  double weight_decay = 0.0;
};

template <class T>
struct AdamState {
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
  std::int64_t step = 0;
};

enum class StepStatus { Applied, RejectedNonFinite };

/// One bias-corrected Adam update from each parameter's `grad`. A non-finite
/// gradient anywhere rejects the whole step and leaves params and state untouched.
template <class T>
StepStatus adam_step(std::span<Parameter<T>* const> params, AdamState<T>& state, const AdamConfig& config);

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst;
  std::size_t coordinates = 0;
};

/// Compares backward() gradients with central differences of `loss`.
/// Relative error per coordinate is |a - n| / max(|a|, |n|, floor).
/// `max_coords` > 0 samples that many coordinates per parameter (seeded).
GradCheckResult check_gradients(std::span<Parameter<double>* const> params,
                                const std::function<Var<double>(Tape<double>&)>& loss, double h = 1e-5,
                                std::size_t max_coords = 0, std::uint64_t seed = 0, double floor = 1e-6);

}  // namespace meshmotion
