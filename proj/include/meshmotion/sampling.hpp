#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <span>
#include <vector>

#include "meshmotion/mesh.hpp"

namespace meshmotion {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Triplet {
  Index row;
  Index col;
  double weight;

  friend bool operator==(const Triplet&, const Triplet&) = default;
};

/// Row-sorted sparse matrix. `row_ptr[r]..row_ptr[r+1]` indexes the entries of row r.
class SparseMatrix {
 public:
  SparseMatrix() = default;
  /// Sorts the triplets by (row, col); throws on out-of-range or duplicate entries.
  SparseMatrix(Index rows, Index cols, std::vector<Triplet> entries);

  Index rows() const { return rows_; }
  Index cols() const { return cols_; }
  const std::vector<Triplet>& entries() const { return entries_; }
  std::span<const Triplet> row(Index r) const {
    return {entries_.data() + row_ptr_[r], entries_.data() + row_ptr_[r + 1]};
  }
  RowMatrix to_dense() const;

  friend bool operator==(const SparseMatrix& a, const SparseMatrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.entries_ == b.entries_;
  }

 private:
  Index rows_ = 0;
  Index cols_ = 0;
  std::vector<Triplet> entries_;
  std::vector<std::size_t> row_ptr_{0};
};

struct Decimation {
  Mesh coarse;
  /// kept[i] is the fine vertex that became coarse vertex i (increasing).
  std::vector<Index> kept;
  /// True when no valid collapse remained before reaching the target.
  bool stopped_early = false;
};

/// Quadric-error edge collapse where the surviving vertex keeps its position,
/// so coarse vertices are a subset of the fine ones. Collapses that would
/// break manifoldness, flip a face or shrink an open boundary are refused.
/// Deterministic: equal costs are ordered by (removed, kept) vertex index.
Decimation decimate(const Mesh& mesh, Index target_count);

struct UpMatrixStats {
  /// Discarded vertices whose plane projection fell outside the chosen
  /// triangle and were clamped to its nearest point.
  std::size_t clamped = 0;
};

SparseMatrix build_up_matrix(const Mesh& fine, const Mesh& coarse, const std::vector<Index>& kept,
                             UpMatrixStats* stats = nullptr);

/// Levels are ordered coarse to fine. up[k] maps level k features to level
/// k+1; kept[k] maps level-k vertices to their level-(k+1) originals.
struct SamplingHierarchy {
  std::vector<Mesh> levels;
  std::vector<SparseMatrix> up;
  std::vector<std::vector<Index>> kept;
  std::vector<int> factors;

  std::size_t num_levels() const { return levels.size(); }
  std::vector<Index> level_sizes() const;
};

/// Successive decimation by ceil(n / factor) per step; factors are applied
/// from the finest level down.
SamplingHierarchy build_hierarchy(const Mesh& mesh, const std::vector<int>& factors);

RowMatrix upsample(const RowMatrix& features, const SparseMatrix& q);

/// Closest point on triangle (a, b, c) to p, as barycentric weights.
Vec3 closest_point_barycentric(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

}  // namespace meshmotion
