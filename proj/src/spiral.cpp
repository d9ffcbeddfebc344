#include "meshmotion/spiral.hpp"

#include <algorithm>
#include <limits>
#include <string>

namespace meshmotion {

namespace {

void check_vertex(const AdjacencyList& adj, Index v) {
  if (v < 0 || v >= adj.size()) throw Error("vertex " + std::to_string(v) + " out of range");
}

// Grows `disk` (sorted) by one ring and returns the new ring (sorted).
std::vector<Index> next_ring(const AdjacencyList& adj, const std::vector<Index>& ring, std::vector<Index>& disk) {
  std::vector<Index> reach;
  for (Index u : ring) reach.insert(reach.end(), adj.neighbors[u].begin(), adj.neighbors[u].end());
  std::sort(reach.begin(), reach.end());
  reach.erase(std::unique(reach.begin(), reach.end()), reach.end());
  std::vector<Index> fresh;
  std::set_difference(reach.begin(), reach.end(), disk.begin(), disk.end(), std::back_inserter(fresh));
  std::vector<Index> merged;
  std::merge(disk.begin(), disk.end(), fresh.begin(), fresh.end(), std::back_inserter(merged));
  disk = std::move(merged);
  return fresh;
}

Index argmin_geodesic(std::span<const Index> candidates, std::span<const double> geodesic) {
  Index best = kPad;
  double best_d = std::numeric_limits<double>::infinity();
  for (Index c : candidates) {
    const double d = geodesic[c];
    if (best == kPad || d < best_d || (d == best_d && c < best)) {
      best = c;
      best_d = d;
    }
  }
  return best;
}

bool contains(const std::vector<Index>& sorted, Index v) { return std::binary_search(sorted.begin(), sorted.end(), v); }

}  // namespace

std::vector<Index> k_ring(const AdjacencyList& adj, Index v, int k) {
  check_vertex(adj, v);
  if (k < 0) throw Error("ring index must be >= 0");
  std::vector<Index> ring{v}, disk{v};
  for (int r = 0; r < k; ++r) ring = next_ring(adj, ring, disk);
  return ring;
}

std::vector<Index> k_disk(const AdjacencyList& adj, Index v, int k) {
  check_vertex(adj, v);
  if (k < 0) throw Error("disk radius must be >= 0");
  std::vector<Index> ring{v}, disk{v};
  for (int r = 0; r < k; ++r) ring = next_ring(adj, ring, disk);
  return disk;
}

std::vector<Index> spiral(const AdjacencyList& adj, Index v, int k, std::span<const double> geodesic) {
  check_vertex(adj, v);
  if (static_cast<Index>(geodesic.size()) != adj.size()) throw Error("geodesic field size mismatch");
  std::vector<Index> out{v};
  std::vector<Index> disk{v};
  std::vector<Index> prev{v};
  for (int r = 1; r <= k; ++r) {
    std::vector<Index> ring_set;
    {
      std::vector<Index> scratch = disk;
      ring_set = next_ring(adj, prev, scratch);
    }
    if (ring_set.empty()) break;

    // Walk the previous ring in order; for each vertex emit its outward
    // neighbors counter-clockwise, starting where its one-ring leaves the disk.
    std::vector<Index> ordered;
    std::vector<Index> emitted;
    for (Index p : prev) {
      const auto& ring = adj.one_ring[p];
      const std::size_t m = ring.size();
      std::size_t start = 0;
      if (!adj.boundary[p]) {
        for (std::size_t i = 0; i < m; ++i) {
          if (contains(disk, ring[(i + m - 1) % m]) && !contains(disk, ring[i])) {
            start = i;
            break;
          }
        }
      }
      for (std::size_t i = 0; i < m; ++i) {
        const Index w = ring[(start + i) % m];
        if (!contains(ring_set, w)) continue;
        auto pos = std::lower_bound(emitted.begin(), emitted.end(), w);
        if (pos != emitted.end() && *pos == w) continue;
        emitted.insert(pos, w);
        ordered.push_back(w);
      }
    }

    if (adj.boundary[v]) {
      // Open ring: begin at whichever end is nearer the reference.
      const Index first = ordered.front(), last = ordered.back();
      const Index pick = argmin_geodesic(std::vector<Index>{std::min(first, last), std::max(first, last)}, geodesic);
      if (pick == last && first != last) std::reverse(ordered.begin(), ordered.end());
    } else {
      Index start;
      if (r == 1) {
        start = argmin_geodesic(ordered, geodesic);
      } else {
        const auto& anchor_nbrs = adj.neighbors[prev.front()];
        std::vector<Index> adjacent;
        for (Index w : ordered) {
          if (std::binary_search(anchor_nbrs.begin(), anchor_nbrs.end(), w)) adjacent.push_back(w);
        }
        start = argmin_geodesic(adjacent.empty() ? ordered : adjacent, geodesic);
      }
      std::rotate(ordered.begin(), std::find(ordered.begin(), ordered.end(), start), ordered.end());
    }

    out.insert(out.end(), ordered.begin(), ordered.end());
    std::vector<Index> merged;
    std::merge(disk.begin(), disk.end(), ring_set.begin(), ring_set.end(), std::back_inserter(merged));
    disk = std::move(merged);
    prev = std::move(ordered);
  }
  return out;
}

Index max_disk_size(const AdjacencyList& adj, int k) {
  Index best = 0;
  for (Index v = 0; v < adj.size(); ++v) best = std::max(best, static_cast<Index>(k_disk(adj, v, k).size()));
  return best;
}

Index default_reference_vertex(const Mesh& mesh) {
  if (mesh.vertices.empty()) throw Error("empty mesh has no reference vertex");
  Index best = 0;
  for (Index i = 1; i < mesh.num_vertices(); ++i) {
    if (mesh.vertices[i][2] > mesh.vertices[best][2]) best = i;
  }
  return best;
}

SpiralTable build_spiral_table(const Mesh& mesh, int k, Index length, Index reference_vertex) {
  if (k < 0) throw Error("spiral ring count must be >= 0");
  if (reference_vertex < 0 || reference_vertex >= mesh.num_vertices()) {
    throw Error("reference vertex " + std::to_string(reference_vertex) + " out of range");
  }
  const AdjacencyList adj = build_adjacency(mesh);
  if (length <= 0) length = max_disk_size(adj, k);
  const std::vector<double> geodesic = graph_geodesic(mesh, adj, reference_vertex);
  SpiralTable table;
  table.rings = k;
  table.length = length;
  table.reference_vertex = reference_vertex;
  table.indices.assign(static_cast<std::size_t>(mesh.num_vertices()) * length, kPad);
  for (Index v = 0; v < mesh.num_vertices(); ++v) {
    const auto s = spiral(adj, v, k, geodesic);
    const std::size_t n = std::min<std::size_t>(s.size(), static_cast<std::size_t>(length));
    std::copy_n(s.begin(), n, table.indices.begin() + static_cast<std::ptrdiff_t>(v) * length);
  }
  return table;
}

std::vector<SpiralTable> build_spiral_tables(const SamplingHierarchy& hierarchy, const SpiralConfig& config) {
  if (hierarchy.levels.empty()) throw Error("empty hierarchy");
  const std::size_t n = hierarchy.levels.size();
  std::vector<Index> reference(n);
  const Mesh& finest = hierarchy.levels.back();
  reference[n - 1] = config.reference_vertex >= 0 ? config.reference_vertex : default_reference_vertex(finest);
  if (reference[n - 1] >= finest.num_vertices()) throw Error("reference vertex out of range");
  const Vec3 anchor = finest.vertices[reference[n - 1]];
  for (std::size_t level = n - 1; level-- > 0;) {
    const auto& kept = hierarchy.kept[level];
    auto it = std::find(kept.begin(), kept.end(), reference[level + 1]);
    if (it != kept.end()) {
      reference[level] = static_cast<Index>(it - kept.begin());
      continue;
    }
    const Mesh& mesh = hierarchy.levels[level];
    Index best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Index i = 0; i < mesh.num_vertices(); ++i) {
      const Vec3 d = sub(mesh.vertices[i], anchor);
      if (dot(d, d) < best_d) {
        best_d = dot(d, d);
        best = i;
      }
    }
    reference[level] = best;
  }
  std::vector<SpiralTable> tables;
  for (std::size_t level = 0; level < n; ++level) {
    SpiralTable t = build_spiral_table(hierarchy.levels[level], config.rings, config.length, reference[level]);
    t.level = static_cast<int>(level);
    tables.push_back(std::move(t));
  }
  return tables;
}

}  // namespace meshmotion
