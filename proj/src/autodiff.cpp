#include "meshmotion/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <random>

namespace meshmotion {

namespace {

template <class T>
using MatMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <class T>
using ConstMatMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

template <class T>
ConstMatMap<T> as_matrix(const Tensor<T>& t) {
  return ConstMatMap<T>(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}
template <class T>
MatMap<T> as_matrix(Tensor<T>& t) {
  return MatMap<T>(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

template <class T>
void require_2d(const Tensor<T>& t, const char* op) {
  if (t.rank() != 2) throw Error(std::string(op) + ": expected a rank-2 tensor, got " + t.shape_string());
}

template <class T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw Error(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string());
  }
}

template <class T>
T stable_sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

}  // namespace

template <class T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, false});
  return {this, nodes_.size() - 1};
}

template <class T>
Var<T> Tape<T>::parameter(Parameter<T>& p) {
  nodes_.push_back(Node{p.value, {}, {}, &p, true});
  return {this, nodes_.size() - 1};
}

template <class T>
Var<T> Tape<T>::record(Tensor<T> value, std::vector<std::size_t> inputs, Backward backward) {
  bool needs = false;
  for (std::size_t i : inputs) needs = needs || nodes_[i].requires_grad;
  nodes_.push_back(Node{std::move(value), {}, needs ? std::move(backward) : Backward{}, nullptr, needs});
  return {this, nodes_.size() - 1};
}

template <class T>
Tensor<T>& Tape<T>::grad(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.shape() != n.value.shape()) n.grad = Tensor<T>(n.value.shape());
  return n.grad;
}

template <class T>
void Tape<T>::backward(Var<T> output) {
  if (output.tape != this) throw Error("backward: variable belongs to a different tape");
  if (nodes_[output.id].value.size() != 1) {
    throw Error("backward: output must be scalar, got " + nodes_[output.id].value.shape_string());
  }
  for (Node& n : nodes_) n.grad = Tensor<T>();
  grad(output.id)[0] = T(1);
  for (std::size_t i = output.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) n.backward(*this, i);
    if (n.param) {
      if (n.param->grad.shape() != n.param->value.shape()) n.param->grad = Tensor<T>(n.param->value.shape());
      auto& dst = n.param->grad.storage();
      const auto& src = n.grad.storage();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    }
  }
}

namespace ad {

template <class T>
Var<T> matmul(Var<T> a, Var<T> b) {
  Tape<T>& tape = *a.tape;
  const Tensor<T>& A = a.value();
  const Tensor<T>& B = b.value();
  require_2d(A, "matmul");
  require_2d(B, "matmul");
  if (A.cols() != B.rows()) throw Error("matmul: inner dimensions differ " + A.shape_string() + " x " + B.shape_string());
  Tensor<T> out = Tensor<T>::matrix(A.rows(), B.cols());
  as_matrix(out).noalias() = as_matrix(A) * as_matrix(B);
  return tape.record(std::move(out), {a.id, b.id}, [ia = a.id, ib = b.id](Tape<T>& t, std::size_t self) {
    const auto g = as_matrix(t.grad_or_empty(self));
    if (t.requires_grad(ia)) as_matrix(t.grad(ia)).noalias() += g * as_matrix(t.value(ib)).transpose();
    if (t.requires_grad(ib)) as_matrix(t.grad(ib)).noalias() += as_matrix(t.value(ia)).transpose() * g;
  });
}

template <class T>
Var<T> transpose(Var<T> a) {
  const Tensor<T>& A = a.value();
  require_2d(A, "transpose");
  Tensor<T> out = Tensor<T>::matrix(A.cols(), A.rows());
  as_matrix(out) = as_matrix(A).transpose();
  return a.tape->record(std::move(out), {a.id}, [ia = a.id](Tape<T>& t, std::size_t self) {
    as_matrix(t.grad(ia)) += as_matrix(t.grad_or_empty(self)).transpose();
  });
}

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor<T> out = a.value();
  const auto& bv = b.value().storage();
  auto& o = out.storage();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i];
  return a.tape->record(std::move(out), {a.id, b.id}, [ia = a.id, ib = b.id](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad_or_empty(self).storage();
    for (std::size_t in : {ia, ib}) {
      if (!t.requires_grad(in)) continue;
      auto& d = t.grad(in).storage();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
    }
  });
}

template <class T>
Var<T> sub(Var<T> a, Var<T> b) {
  require_same_shape(a.value(), b.value(), "sub");
  Tensor<T> out = a.value();
  const auto& bv = b.value().storage();
  auto& o = out.storage();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bv[i];
  return a.tape->record(std::move(out), {a.id, b.id}, [ia = a.id, ib = b.id](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad_or_empty(self).storage();
    if (t.requires_grad(ia)) {
      auto& d = t.grad(ia).storage();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
    }
    if (t.requires_grad(ib)) {
      auto& d = t.grad(ib).storage();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] -= g[i];
    }
  });
}

template <class T>
Var<T> mul(Var<T> a, Var<T> b) {
  require_same_shape(a.value(), b.value(), "mul");
  Tensor<T> out = a.value();
  const auto& bv = b.value().storage();
  auto& o = out.storage();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
  return a.tape->record(std::move(out), {a.id, b.id}, [ia = a.id, ib = b.id](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad_or_empty(self).storage();
    if (t.requires_grad(ia)) {
      const auto& bv = t.value(ib).storage();
      auto& d = t.grad(ia).storage();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * bv[i];
    }
    if (t.requires_grad(ib)) {
      const auto& av = t.value(ia).storage();
      auto& d = t.grad(ib).storage();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * av[i];
    }
  });
}

template <class T>
Var<T> scale(Var<T> a, T factor) {
  Tensor<T> out = a.value();
  for (T& x : out.storage()) x *= factor;
  return a.tape->record(std::move(out), {a.id}, [ia = a.id, factor](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad_or_empty(self).storage();
    auto& d = t.grad(ia).storage();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += factor * g[i];
  });
}

template <class T>
Var<T> add_row(Var<T> a, Var<T> b) {
  const Tensor<T>& A = a.value();
  const Tensor<T>& B = b.value();
  require_2d(A, "add_row");
  if (B.rows() != 1 || B.cols() != A.cols()) {
    throw Error("add_row: bias " + B.shape_string() + " does not match " + A.shape_string());
  }
  Tensor<T> out = A;
  const std::size_t r = A.rows(), c = A.cols();
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] += B[j];
  }
  return a.tape->record(std::move(out), {a.id, b.id}, [ia = a.id, ib = b.id, r, c](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad_or_empty(self).storage();
    if (t.requires_grad(ia)) {
      auto& d = t.grad(ia).storage();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
    }
    if (t.requires_grad(ib)) {
      auto& d = t.grad(ib).storage();
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) d[j] += g[i * c + j];
      }
    }
  });
}

template <class T>
Var<T> gather_rows(Var<T> x, std::span<const Index> indices) {
  const Tensor<T>& X = x.value();
  require_2d(X, "gather_rows");
  const std::size_t n = X.rows(), d = X.cols();
  Tensor<T> out = Tensor<T>::matrix(indices.size(), d);
  for (std::size_t j = 0; j < indices.size(); ++j) {
    const Index src = indices[j];
    if (src == -1) continue;
    if (src < 0 || static_cast<std::size_t>(src) >= n) {
      throw Error("gather_rows: index " + std::to_string(src) + " out of range for " + std::to_string(n) + " rows");
    }
    std::copy_n(X.data() + static_cast<std::size_t>(src) * d, d, out.data() + j * d);
  }
  std::vector<Index> idx(indices.begin(), indices.end());
  return x.tape->record(std::move(out), {x.id}, [ix = x.id, idx = std::move(idx), d](Tape<T>& t, std::size_t self) {
    const T* g = t.grad_or_empty(self).data();
    T* dx = t.grad(ix).data();
    for (std::size_t j = 0; j < idx.size(); ++j) {
      if (idx[j] < 0) continue;
      T* row = dx + static_cast<std::size_t>(idx[j]) * d;
      const T* src = g + j * d;
      for (std::size_t k = 0; k < d; ++k) row[k] += src[k];
    }
  });
}

template <class T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw Error("concat_rows: no inputs");
  const std::size_t c = parts.front().value().cols();
  std::size_t rows = 0;
  std::vector<std::size_t> ids, offsets;
  for (const Var<T>& p : parts) {
    require_2d(p.value(), "concat_rows");
    if (p.value().cols() != c) throw Error("concat_rows: column count mismatch");
    ids.push_back(p.id);
    offsets.push_back(rows);
    rows += p.value().rows();
  }
  Tensor<T> out = Tensor<T>::matrix(rows, c);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor<T>& v = parts[k].value();
    std::copy(v.storage().begin(), v.storage().end(), out.data() + offsets[k] * c);
  }
  return parts.front().tape->record(std::move(out), ids, [ids, offsets, c](Tape<T>& t, std::size_t self) {
    const T* g = t.grad_or_empty(self).data();
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!t.requires_grad(ids[k])) continue;
      auto& d = t.grad(ids[k]).storage();
      const T* src = g + offsets[k] * c;
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += src[i];
    }
  });
}

template <class T>
Var<T> slice_rows(Var<T> x, std::size_t begin, std::size_t end) {
  const Tensor<T>& X = x.value();
  require_2d(X, "slice_rows");
  if (begin > end || end > X.rows()) throw Error("slice_rows: range out of bounds");
  const std::size_t c = X.cols();
  Tensor<T> out = Tensor<T>::matrix(end - begin, c);
  std::copy(X.data() + begin * c, X.data() + end * c, out.data());
  return x.tape->record(std::move(out), {x.id}, [ix = x.id, begin, c](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad_or_empty(self).storage();
    T* d = t.grad(ix).data() + begin * c;
    for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
  });
}

template <class T>
Var<T> slice_cols(Var<T> x, std::size_t begin, std::size_t end) {
  const Tensor<T>& X = x.value();
  require_2d(X, "slice_cols");
  if (begin > end || end > X.cols()) throw Error("slice_cols: range out of bounds");
  const std::size_t r = X.rows(), c = X.cols(), w = end - begin;
  Tensor<T> out = Tensor<T>::matrix(r, w);
  for (std::size_t i = 0; i < r; ++i) std::copy_n(X.data() + i * c + begin, w, out.data() + i * w);
  return x.tape->record(std::move(out), {x.id}, [ix = x.id, begin, r, c, w](Tape<T>& t, std::size_t self) {
    const T* g = t.grad_or_empty(self).data();
    T* d = t.grad(ix).data();
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < w; ++j) d[i * c + begin + j] += g[i * w + j];
    }
  });
}

template <class T>
Var<T> reshape(Var<T> x, std::size_t rows, std::size_t cols) {
  const Tensor<T>& X = x.value();
  if (rows * cols != X.size()) {
    throw Error("reshape: cannot view " + X.shape_string() + " as " + std::to_string(rows) + "x" + std::to_string(cols));
  }
  return x.tape->record(X.reshaped({rows, cols}), {x.id}, [ix = x.id](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad_or_empty(self).storage();
    auto& d = t.grad(ix).storage();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
  });
}

template <class T>
Var<T> relu(Var<T> x) {
  Tensor<T> out = x.value();
  for (T& v : out.storage()) v = v > T(0) ? v : T(0);
  return x.tape->record(std::move(out), {x.id}, [ix = x.id](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad_or_empty(self).storage();
    const auto& in = t.value(ix).storage();
    auto& d = t.grad(ix).storage();
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (in[i] > T(0)) d[i] += g[i];
    }
  });
}

template <class T>
Var<T> sigmoid(Var<T> x) {
  Tensor<T> out = x.value();
  for (T& v : out.storage()) v = stable_sigmoid(v);
  return x.tape->record(std::move(out), {x.id}, [ix = x.id](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad_or_empty(self).storage();
    const auto& y = t.value(self).storage();
    auto& d = t.grad(ix).storage();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * y[i] * (T(1) - y[i]);
  });
}

template <class T>
Var<T> tanh(Var<T> x) {
  Tensor<T> out = x.value();
  for (T& v : out.storage()) v = std::tanh(v);
  return x.tape->record(std::move(out), {x.id}, [ix = x.id](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad_or_empty(self).storage();
    const auto& y = t.value(self).storage();
    auto& d = t.grad(ix).storage();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * (T(1) - y[i] * y[i]);
  });
}

template <class T>
Var<T> sum(Var<T> x) {
  T total = T(0);
  for (T v : x.value().storage()) total += v;
  return x.tape->record(Tensor<T>({1, 1}, total), {x.id}, [ix = x.id](Tape<T>& t, std::size_t self) {
    const T g = t.grad_or_empty(self)[0];
    for (T& d : t.grad(ix).storage()) d += g;
  });
}

template <class T>
Var<T> mean(Var<T> x) {
  const std::size_t n = x.value().size();
  if (n == 0) throw Error("mean: empty tensor");
  T total = T(0);
  for (T v : x.value().storage()) total += v;
  return x.tape->record(Tensor<T>({1, 1}, total / static_cast<T>(n)), {x.id}, [ix = x.id, n](Tape<T>& t, std::size_t self) {
    const T g = t.grad_or_empty(self)[0] / static_cast<T>(n);
    for (T& d : t.grad(ix).storage()) d += g;
  });
}

template <class T>
Var<T> l1_loss(Var<T> a, Var<T> b) {
  require_same_shape(a.value(), b.value(), "l1_loss");
  const auto& av = a.value().storage();
  const auto& bv = b.value().storage();
  const std::size_t n = av.size();
  if (n == 0) throw Error("l1_loss: empty tensors");
  T total = T(0);
  for (std::size_t i = 0; i < n; ++i) total += std::abs(av[i] - bv[i]);
  return a.tape->record(Tensor<T>({1, 1}, total / static_cast<T>(n)), {a.id, b.id},
                        [ia = a.id, ib = b.id, n](Tape<T>& t, std::size_t self) {
                          const T g = t.grad_or_empty(self)[0] / static_cast<T>(n);
                          const auto& av = t.value(ia).storage();
                          const auto& bv = t.value(ib).storage();
                          const bool ga = t.requires_grad(ia), gb = t.requires_grad(ib);
                          T* da = ga ? t.grad(ia).data() : nullptr;
                          T* db = gb ? t.grad(ib).data() : nullptr;
                          for (std::size_t i = 0; i < n; ++i) {
                            const T diff = av[i] - bv[i];
                            const T s = diff > T(0) ? g : (diff < T(0) ? -g : T(0));
                            if (ga) da[i] += s;
                            if (gb) db[i] -= s;
                          }
                        });
}

template <class T>
Var<T> sparse_matmul(const CsrMatrix<T>& q, Var<T> x) {
  const Tensor<T>& X = x.value();
  require_2d(X, "sparse_matmul");
  if (q.cols == 0 || X.rows() % q.cols != 0) {
    throw Error("sparse_matmul: " + std::to_string(X.rows()) + " rows are not a multiple of " + std::to_string(q.cols));
  }
  const std::size_t blocks = X.rows() / q.cols, d = X.cols();
  Tensor<T> out = Tensor<T>::matrix(blocks * q.rows, d);
  for (std::size_t b = 0; b < blocks; ++b) {
    const T* in = X.data() + b * q.cols * d;
    T* o = out.data() + b * q.rows * d;
    for (std::size_t i = 0; i < q.rows; ++i) {
      T* orow = o + i * d;
      for (std::size_t e = q.row_ptr[i]; e < q.row_ptr[i + 1]; ++e) {
        const T w = q.weight[e];
        const T* irow = in + static_cast<std::size_t>(q.col[e]) * d;
        for (std::size_t k = 0; k < d; ++k) orow[k] += w * irow[k];
      }
    }
  }
  return x.tape->record(std::move(out), {x.id}, [ix = x.id, qp = &q, blocks, d](Tape<T>& t, std::size_t self) {
    const CsrMatrix<T>& q = *qp;
    const T* g = t.grad_or_empty(self).data();
    T* dx = t.grad(ix).data();
    for (std::size_t b = 0; b < blocks; ++b) {
      const T* gb = g + b * q.rows * d;
      T* db = dx + b * q.cols * d;
      for (std::size_t i = 0; i < q.rows; ++i) {
        const T* grow = gb + i * d;
        for (std::size_t e = q.row_ptr[i]; e < q.row_ptr[i + 1]; ++e) {
          const T w = q.weight[e];
          T* drow = db + static_cast<std::size_t>(q.col[e]) * d;
          for (std::size_t k = 0; k < d; ++k) drow[k] += w * grow[k];
        }
      }
    }
  });
}

template <class T>
Var<T> softmax_cross_entropy(Var<T> logits, std::span<const int> labels) {
  const Tensor<T>& L = logits.value();
  require_2d(L, "softmax_cross_entropy");
  const std::size_t b = L.rows(), c = L.cols();
  if (labels.size() != b) throw Error("softmax_cross_entropy: label count does not match batch");
  Tensor<T> probs = Tensor<T>::matrix(b, c);
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c) throw Error("softmax_cross_entropy: label out of range");
    const T* row = L.data() + i * c;
    const T mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(static_cast<double>(row[j] - mx));
    for (std::size_t j = 0; j < c; ++j) probs(i, j) = static_cast<T>(std::exp(static_cast<double>(row[j] - mx)) / z);
    total += std::log(z) + static_cast<double>(mx) - static_cast<double>(row[labels[i]]);
  }
  std::vector<int> lab(labels.begin(), labels.end());
  return logits.tape->record(Tensor<T>({1, 1}, static_cast<T>(total / static_cast<double>(b))), {logits.id},
                             [il = logits.id, probs = std::move(probs), lab = std::move(lab), b, c](Tape<T>& t, std::size_t self) {
                               const T g = t.grad_or_empty(self)[0] / static_cast<T>(b);
                               T* d = t.grad(il).data();
                               for (std::size_t i = 0; i < b; ++i) {
                                 for (std::size_t j = 0; j < c; ++j) {
                                   const T target = static_cast<int>(j) == lab[i] ? T(1) : T(0);
                                   d[i * c + j] += g * (probs(i, j) - target);
                                 }
                               }
                             });
}

}  // namespace ad

Tensor<double> softmax_rows(const Tensor<double>& logits) {
  Tensor<double> out = logits;
  const std::size_t b = logits.rows(), c = logits.cols();
  for (std::size_t i = 0; i < b; ++i) {
    double* row = out.data() + i * c;
    const double mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += (row[j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < c; ++j) row[j] /= z;
  }
  return out;
}

template <class T>
StepStatus adam_step(std::span<Parameter<T>* const> params, AdamState<T>& state, const AdamConfig& config) {
  for (const Parameter<T>* p : params) {
    if (p->grad.shape() != p->value.shape()) throw Error("adam_step: parameter " + p->name + " has no gradient");
    for (T g : p->grad.storage()) {
      if (!std::isfinite(static_cast<double>(g))) return StepStatus::RejectedNonFinite;
    }
  }
  if (state.m.size() != params.size()) {
    state.m.clear();
    state.v.clear();
    for (const Parameter<T>* p : params) {
      state.m.emplace_back(p->value.shape());
      state.v.emplace_back(p->value.shape());
    }
    state.step = 0;
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& theta = params[k]->value.storage();
    const auto& grad = params[k]->grad.storage();
    auto& m = state.m[k].storage();
    auto& v = state.v[k].storage();
    if (m.size() != theta.size()) throw Error("adam_step: state shape mismatch for " + params[k]->name);
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double g = static_cast<double>(grad[i]) + config.weight_decay * static_cast<double>(theta[i]);
      const double mi = config.beta1 * static_cast<double>(m[i]) + (1.0 - config.beta1) * g;
      const double vi = config.beta2 * static_cast<double>(v[i]) + (1.0 - config.beta2) * g * g;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double step = config.learning_rate * (mi / c1) / (std::sqrt(vi / c2) + config.eps);
      theta[i] = static_cast<T>(static_cast<double>(theta[i]) - step);
    }
  }
  return StepStatus::Applied;
}

GradCheckResult check_gradients(std::span<Parameter<double>* const> params,
                                const std::function<Var<double>(Tape<double>&)>& loss, double h,
                                std::size_t max_coords, std::uint64_t seed, double floor) {
  for (Parameter<double>* p : params) p->zero_grad();
  {
    Tape<double> tape;
    tape.backward(loss(tape));
  }
  auto evaluate = [&]() {
    Tape<double> tape;
    return loss(tape).value()[0];
  };
  GradCheckResult result;
  std::mt19937_64 rng(seed);
  for (Parameter<double>* p : params) {
    std::vector<std::size_t> coords(p->value.size());
    std::iota(coords.begin(), coords.end(), 0);
    if (max_coords > 0 && coords.size() > max_coords) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(max_coords);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t i : coords) {
      const double original = p->value[i];
      p->value[i] = original + h;
      const double up = evaluate();
      p->value[i] = original - h;
      const double down = evaluate();
      p->value[i] = original;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = p->grad[i];
      const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
      ++result.coordinates;
      if (rel > result.max_relative_error) {
        result.max_relative_error = rel;
        result.worst = p->name + "[" + std::to_string(i) + "] analytic=" + std::to_string(analytic) +
                       " numeric=" + std::to_string(numeric);
      }
    }
  }
  return result;
}

#define MESHMOTION_INSTANTIATE(T)                                                                  \
  template class Tape<T>;                                                                          \
  template Var<T> ad::matmul(Var<T>, Var<T>);                                                      \
  template Var<T> ad::transpose(Var<T>);                                                           \
  template Var<T> ad::add(Var<T>, Var<T>);                                                         \
  template Var<T> ad::sub(Var<T>, Var<T>);                                                         \
  template Var<T> ad::mul(Var<T>, Var<T>);                                                         \
  template Var<T> ad::scale(Var<T>, T);                                                            \
  template Var<T> ad::add_row(Var<T>, Var<T>);                                                     \
  template Var<T> ad::gather_rows(Var<T>, std::span<const Index>);                                 \
  template Var<T> ad::concat_rows(const std::vector<Var<T>>&);                                     \
  template Var<T> ad::slice_rows(Var<T>, std::size_t, std::size_t);                                \
  template Var<T> ad::slice_cols(Var<T>, std::size_t, std::size_t);                                \
  template Var<T> ad::reshape(Var<T>, std::size_t, std::size_t);                                  \
  template Var<T> ad::relu(Var<T>);                                                                \
  template Var<T> ad::sigmoid(Var<T>);                                                             \
  template Var<T> ad::tanh(Var<T>);                                                                \
  template Var<T> ad::sum(Var<T>);                                                                 \
  template Var<T> ad::mean(Var<T>);                                                                \
  template Var<T> ad::l1_loss(Var<T>, Var<T>);                                                     \
  template Var<T> ad::sparse_matmul(const CsrMatrix<T>&, Var<T>);                                  \
  template Var<T> ad::softmax_cross_entropy(Var<T>, std::span<const int>);                        \
  template StepStatus adam_step(std::span<Parameter<T>* const>, AdamState<T>&, const AdamConfig&);

MESHMOTION_INSTANTIATE(float)
MESHMOTION_INSTANTIATE(double)

#undef MESHMOTION_INSTANTIATE

}  // namespace meshmotion
