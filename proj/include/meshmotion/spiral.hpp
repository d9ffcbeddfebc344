#pragma once

#include <span>
#include <vector>

#include "meshmotion/mesh.hpp"
#include "meshmotion/sampling.hpp"

namespace meshmotion {

/// Padding sentinel in spiral tables; gathers of PAD yield zero features.
inline constexpr Index kPad = -1;

/// Per-vertex spiral orderings of one mesh level, stored row-major as N x length.
struct SpiralTable {
  int level = 0;
  int rings = 1;
  Index length = 0;
  Index reference_vertex = 0;
  std::vector<Index> indices;

  Index num_vertices() const { return length ? static_cast<Index>(indices.size() / length) : 0; }
  std::span<const Index> row(Index v) const { return {indices.data() + static_cast<std::size_t>(v) * length, static_cast<std::size_t>(length)}; }

  friend bool operator==(const SpiralTable&, const SpiralTable&) = default;
};

/// Vertices at exactly k hops, built by the ring/disk recursion. Sorted.
std::vector<Index> k_ring(const AdjacencyList& adj, Index v, int k);
/// Vertices at most k hops away. Sorted.
std::vector<Index> k_disk(const AdjacencyList& adj, Index v, int k);

/// Rings 0..k around v concatenated. Each ring runs counter-clockwise; ring 1
/// starts at the neighbor nearest to the reference vertex (by `geodesic`,
/// ties to the lower index), and ring r > 1 starts at the nearest vertex
/// adjacent to the start of ring r - 1. Open rings around boundary vertices
/// are walked from their nearer endpoint.
std::vector<Index> spiral(const AdjacencyList& adj, Index v, int k, std::span<const double> geodesic);

/// Largest |disk(k)| over all vertices.
Index max_disk_size(const AdjacencyList& adj, int k);

/// Vertex with the largest z coordinate, lowest index on ties.
Index default_reference_vertex(const Mesh& mesh);

/// `length` <= 0 selects max_disk_size(k). Rows are truncated or padded with kPad.
SpiralTable build_spiral_table(const Mesh& mesh, int k, Index length, Index reference_vertex);

struct SpiralConfig {
  int rings = 1;
  /// <= 0: per-level default (max disk size).
  Index length = 0;
  /// Reference vertex on the finest level; < 0 selects default_reference_vertex.
  Index reference_vertex = -1;
};

/// One table per hierarchy level. The finest-level reference vertex is
/// carried down through the kept maps; when it was discarded, the coarse
/// vertex nearest to its position is used.
std::vector<SpiralTable> build_spiral_tables(const SamplingHierarchy& hierarchy, const SpiralConfig& config);

}  // namespace meshmotion
