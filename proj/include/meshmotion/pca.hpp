#pragma once

#include <Eigen/Core>

#include "meshmotion/sampling.hpp"

namespace meshmotion {

/// Principal components of row samples, by descending variance. Each
/// component's largest-magnitude coefficient is positive.
struct PcaBasis {
  Eigen::RowVectorXd mean;
  /// k x D, orthonormal rows.
  RowMatrix components;
  Eigen::VectorXd variance;

  int k() const { return static_cast<int>(components.rows()); }
  int dim() const { return static_cast<int>(mean.size()); }
};

/// `samples` is M x D. Throws if k exceeds the sample count or the dimension.
PcaBasis fit_pca(const RowMatrix& samples, int k);

/// M x k coefficients of the centred samples.
RowMatrix pca_project(const PcaBasis& basis, const RowMatrix& samples);

/// mean + coefficients * components.
RowMatrix pca_reconstruct(const PcaBasis& basis, const RowMatrix& coefficients);

}  // namespace meshmotion
