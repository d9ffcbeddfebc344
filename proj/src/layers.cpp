#include "meshmotion/layers.hpp"

#include <string>

namespace meshmotion {

template <class T>
CsrMatrix<T> to_csr(const SparseMatrix& q) {
  CsrMatrix<T> out;
  out.rows = static_cast<std::size_t>(q.rows());
  out.cols = static_cast<std::size_t>(q.cols());
  out.row_ptr.assign(out.rows + 1, 0);
  for (const Triplet& t : q.entries()) {
    ++out.row_ptr[static_cast<std::size_t>(t.row) + 1];
    out.col.push_back(t.col);
    out.weight.push_back(static_cast<T>(t.weight));
  }
  for (std::size_t r = 0; r < out.rows; ++r) out.row_ptr[r + 1] += out.row_ptr[r];
  return out;
}

std::vector<Index> stacked_spiral_indices(const SpiralTable& table, std::size_t frames) {
  const std::size_t n = static_cast<std::size_t>(table.num_vertices());
  std::vector<Index> out;
  out.reserve(table.indices.size() * frames);
  for (std::size_t f = 0; f < frames; ++f) {
    const Index offset = static_cast<Index>(f * n);
    for (Index idx : table.indices) out.push_back(idx == kPad ? kPad : idx + offset);
  }
  return out;
}

template <class T>
Var<T> spiral_conv(Var<T> features, std::span<const Index> indices, Index length, Var<T> weight, Var<T> bias) {
  const std::size_t rows = features.rows(), d_in = features.cols();
  if (length <= 0 || indices.size() != rows * static_cast<std::size_t>(length)) {
    throw Error("spiral_conv: " + std::to_string(indices.size()) + " spiral indices for " + std::to_string(rows) +
                " rows of length " + std::to_string(length));
  }
  if (weight.rows() != static_cast<std::size_t>(length) * d_in) {
    throw Error("spiral_conv: weight has " + std::to_string(weight.rows()) + " rows, expected L*d_in = " +
                std::to_string(static_cast<std::size_t>(length) * d_in));
  }
  Var<T> gathered = ad::gather_rows(features, indices);
  Var<T> patches = ad::reshape(gathered, rows, static_cast<std::size_t>(length) * d_in);
  return ad::add_row(ad::matmul(patches, weight), bias);
}

template <class T>
Var<T> spiral_conv(Var<T> features, const SpiralTable& table, Var<T> weight, Var<T> bias) {
  const std::size_t n = static_cast<std::size_t>(table.num_vertices());
  if (n == 0 || features.rows() % n != 0) throw Error("spiral_conv: feature rows do not match the spiral table");
  const auto indices = stacked_spiral_indices(table, features.rows() / n);
  return spiral_conv(features, std::span<const Index>(indices), table.length, weight, bias);
}

template <class T>
Var<T> dense(Var<T> x, Var<T> weight, Var<T> bias) {
  if (x.cols() != weight.cols()) {
    throw Error("dense: input width " + std::to_string(x.cols()) + " does not match weight " +
                weight.value().shape_string());
  }
  return ad::add_row(ad::matmul(x, ad::transpose(weight)), bias);
}

template <class T>
LstmState<T> lstm_cell(Var<T> input_proj, LstmState<T> prev, Var<T> w_hh, Var<T> bias) {
  const std::size_t h = prev.h.cols();
  if (input_proj.cols() != 4 * h || w_hh.rows() != 4 * h || w_hh.cols() != h || bias.cols() != 4 * h) {
    throw Error("lstm: inconsistent gate shapes for hidden size " + std::to_string(h));
  }
  Var<T> gates = ad::add_row(ad::add(input_proj, ad::matmul(prev.h, ad::transpose(w_hh))), bias);
  Var<T> i = ad::sigmoid(ad::slice_cols(gates, 0, h));
  Var<T> f = ad::sigmoid(ad::slice_cols(gates, h, 2 * h));
  Var<T> g = ad::tanh(ad::slice_cols(gates, 2 * h, 3 * h));
  Var<T> o = ad::sigmoid(ad::slice_cols(gates, 3 * h, 4 * h));
  Var<T> c = ad::add(ad::mul(f, prev.c), ad::mul(i, g));
  return {ad::mul(o, ad::tanh(c)), c};
}

template <class T>
LstmState<T> lstm_step(Var<T> x, LstmState<T> prev, Var<T> w_ih, Var<T> w_hh, Var<T> bias) {
  if (x.cols() != w_ih.cols()) throw Error("lstm: input width does not match input weights");
  return lstm_cell(ad::matmul(x, ad::transpose(w_ih)), prev, w_hh, bias);
}

template <class T>
void init_uniform(Parameter<T>& p, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (T& v : p.value.storage()) v = static_cast<T>(dist(rng));
}

#define MESHMOTION_INSTANTIATE(T)                                                                        \
  template CsrMatrix<T> to_csr<T>(const SparseMatrix&);                                                  \
  template Var<T> spiral_conv(Var<T>, std::span<const Index>, Index, Var<T>, Var<T>);                    \
  template Var<T> spiral_conv(Var<T>, const SpiralTable&, Var<T>, Var<T>);                               \
  template Var<T> dense(Var<T>, Var<T>, Var<T>);                                                         \
  template LstmState<T> lstm_cell(Var<T>, LstmState<T>, Var<T>, Var<T>);                                \
  template LstmState<T> lstm_step(Var<T>, LstmState<T>, Var<T>, Var<T>, Var<T>);                         \
  template void init_uniform(Parameter<T>&, double, std::mt19937_64&);

MESHMOTION_INSTANTIATE(float)
MESHMOTION_INSTANTIATE(double)

#undef MESHMOTION_INSTANTIATE

}  // namespace meshmotion
