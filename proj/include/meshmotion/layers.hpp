#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "meshmotion/autodiff.hpp"
#include "meshmotion/sampling.hpp"
#include "meshmotion/spiral.hpp"

namespace meshmotion {

template <class T>
CsrMatrix<T> to_csr(const SparseMatrix& q);

/// Spiral indices for `frames` stacked copies of a level: frame f's rows are
/// offset by f * N. PAD entries stay kPad.
std::vector<Index> stacked_spiral_indices(const SpiralTable& table, std::size_t frames);

/// f*(v) = sum_j f(S_j(v)) W_j + b over the spiral rows, PAD slots
/// contributing zero. `features` holds frames stacked as (frames * N) x d_in,
/// `indices` comes from stacked_spiral_indices and `weight` is (L * d_in) x d_out.
template <class T>
Var<T> spiral_conv(Var<T> features, std::span<const Index> indices, Index length, Var<T> weight, Var<T> bias);

template <class T>
Var<T> spiral_conv(Var<T> features, const SpiralTable& table, Var<T> weight, Var<T> bias);

template <class T>
Var<T> unpool(Var<T> features, const CsrMatrix<T>& q) {
  return ad::sparse_matmul(q, features);
}

/// x W^T + b with W stored d_out x d_in; x may hold several rows.
template <class T>
Var<T> dense(Var<T> x, Var<T> weight, Var<T> bias);

template <class T>
struct LstmState {
  Var<T> h;
  Var<T> c;
};

/// Single-layer LSTM cell, gate order (input, forget, cell, output):
/// c' = f * c + i * g, h' = o * tanh(c'). `input_proj` is x_t W_ih^T (1 x 4h),
/// so the input projection of a whole sequence can be done in one product.
template <class T>
LstmState<T> lstm_cell(Var<T> input_proj, LstmState<T> prev, Var<T> w_hh, Var<T> bias);

template <class T>
LstmState<T> lstm_step(Var<T> x, LstmState<T> prev, Var<T> w_ih, Var<T> w_hh, Var<T> bias);

template <class T>
void init_uniform(Parameter<T>& p, double bound, std::mt19937_64& rng);

}  // namespace meshmotion
