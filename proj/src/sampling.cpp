#include "meshmotion/sampling.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <string>

namespace meshmotion {

SparseMatrix::SparseMatrix(Index rows, Index cols, std::vector<Triplet> entries)
    : rows_(rows), cols_(cols), entries_(std::move(entries)) {
  std::sort(entries_.begin(), entries_.end(), [](const Triplet& a, const Triplet& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  row_ptr_.assign(static_cast<std::size_t>(rows_) + 1, 0);
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const Triplet& t = entries_[i];
    if (t.row < 0 || t.row >= rows_ || t.col < 0 || t.col >= cols_) {
      throw Error("sparse entry (" + std::to_string(t.row) + ", " + std::to_string(t.col) +
                  ") outside shape " + std::to_string(rows_) + "x" + std::to_string(cols_));
    }
    if (i > 0 && entries_[i - 1].row == t.row && entries_[i - 1].col == t.col) {
      throw Error("duplicate sparse entry (" + std::to_string(t.row) + ", " + std::to_string(t.col) + ")");
    }
    ++row_ptr_[t.row + 1];
  }
  for (Index r = 0; r < rows_; ++r) row_ptr_[r + 1] += row_ptr_[r];
}

RowMatrix SparseMatrix::to_dense() const {
  RowMatrix m = RowMatrix::Zero(rows_, cols_);
  for (const Triplet& t : entries_) m(t.row, t.col) = t.weight;
  return m;
}

std::vector<Index> SamplingHierarchy::level_sizes() const {
  std::vector<Index> sizes;
  for (const Mesh& m : levels) sizes.push_back(m.num_vertices());
  return sizes;
}

namespace {

constexpr double kBoundaryWeight = 100.0;

class EdgeCollapser {
 public:
  explicit EdgeCollapser(const Mesh& mesh)
      : pos_(mesh.vertices),
        faces_(mesh.faces),
        face_alive_(mesh.faces.size(), true),
        vfaces_(mesh.vertices.size()),
        removed_(mesh.vertices.size(), false),
        version_(mesh.vertices.size(), 0),
        quadric_(mesh.vertices.size(), Eigen::Matrix4d::Zero()),
        alive_count_(mesh.num_vertices()) {
    for (std::size_t f = 0; f < faces_.size(); ++f) {
      for (Index v : faces_[f]) vfaces_[v].push_back(static_cast<Index>(f));
    }
    init_quadrics();
  }

  Index alive_count() const { return alive_count_; }

  /// Returns false if it ran out of valid collapses before the target.
  bool run(Index target) {
    bool rebuilt_without_progress = false;
    fill_queue();
    while (alive_count_ > target) {
      if (queue_.empty()) {
        if (rebuilt_without_progress) return false;
        fill_queue();
        rebuilt_without_progress = true;
        continue;
      }
      const Candidate c = queue_.top();
      queue_.pop();
      if (removed_[c.remove] || removed_[c.keep] || version_[c.remove] != c.ver_remove ||
          version_[c.keep] != c.ver_keep) {
        continue;
      }
      if (!can_collapse(c.remove, c.keep)) continue;
      collapse(c.remove, c.keep);
      rebuilt_without_progress = false;
    }
    return true;
  }

  Decimation result() const {
    Decimation out;
    std::vector<Index> remap(pos_.size(), -1);
    for (std::size_t v = 0; v < pos_.size(); ++v) {
      if (!removed_[v]) {
        remap[v] = static_cast<Index>(out.kept.size());
        out.kept.push_back(static_cast<Index>(v));
        out.coarse.vertices.push_back(pos_[v]);
      }
    }
    for (std::size_t f = 0; f < faces_.size(); ++f) {
      if (!face_alive_[f]) continue;
      const Face& face = faces_[f];
      out.coarse.faces.push_back({remap[face[0]], remap[face[1]], remap[face[2]]});
    }
    return out;
  }

 private:
  struct Candidate {
    double cost;
    Index remove;
    Index keep;
    std::uint32_t ver_remove;
    std::uint32_t ver_keep;
  };
  struct Later {
    bool operator()(const Candidate& a, const Candidate& b) const {
      if (a.cost != b.cost) return a.cost > b.cost;
      if (a.remove != b.remove) return a.remove > b.remove;
      return a.keep > b.keep;
    }
  };

  static Eigen::Matrix4d plane_quadric(const Vec3& n, const Vec3& p, double weight) {
    Eigen::Vector4d plane(n[0], n[1], n[2], -dot(n, p));
    return weight * plane * plane.transpose();
  }

  void init_quadrics() {
    // Directed-edge count tells which edges lie on the open boundary.
    std::vector<std::vector<Index>> out_edges(pos_.size());
    for (const Face& f : faces_) {
      for (int k = 0; k < 3; ++k) out_edges[f[k]].push_back(f[(k + 1) % 3]);
    }
    auto has_edge = [&](Index a, Index b) {
      const auto& e = out_edges[a];
      return std::find(e.begin(), e.end(), b) != e.end();
    };
    for (const Face& f : faces_) {
      const Vec3& a = pos_[f[0]];
      Vec3 n = cross(sub(pos_[f[1]], a), sub(pos_[f[2]], a));
      const double len = norm(n);
      if (len == 0.0) continue;
      const double area = 0.5 * len;
      n = scale(n, 1.0 / len);
      const Eigen::Matrix4d kf = plane_quadric(n, a, area);
      for (Index v : f) quadric_[v] += kf;
      for (int k = 0; k < 3; ++k) {
        const Index p = f[k], q = f[(k + 1) % 3];
        if (has_edge(q, p)) continue;
        const Vec3 e = sub(pos_[q], pos_[p]);
        Vec3 bn = cross(e, n);
        const double bl = norm(bn);
        if (bl == 0.0) continue;
        bn = scale(bn, 1.0 / bl);
        const Eigen::Matrix4d kb = plane_quadric(bn, pos_[p], kBoundaryWeight * dot(e, e));
        quadric_[p] += kb;
        quadric_[q] += kb;
      }
    }
  }

  double cost(Index remove, Index keep) const {
    const Vec3& p = pos_[keep];
    const Eigen::Vector4d x(p[0], p[1], p[2], 1.0);
    return x.dot((quadric_[remove] + quadric_[keep]) * x);
  }

  std::vector<Index> neighbors(Index v) const {
    std::vector<Index> out;
    for (Index f : vfaces_[v]) {
      for (Index w : faces_[f]) {
        if (w != v) out.push_back(w);
      }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  int faces_on_edge(Index a, Index b) const {
    int count = 0;
    for (Index f : vfaces_[a]) {
      const Face& face = faces_[f];
      if (face[0] == b || face[1] == b || face[2] == b) ++count;
    }
    return count;
  }

  bool is_boundary(Index v) const {
    for (Index w : neighbors(v)) {
      if (faces_on_edge(v, w) == 1) return true;
    }
    return false;
  }

  bool can_collapse(Index u, Index v) const {
    if (alive_count_ <= 4) return false;
    std::vector<Index> opposite;
    for (Index f : vfaces_[u]) {
      const Face& face = faces_[f];
      if (face[0] != v && face[1] != v && face[2] != v) continue;
      for (Index w : face) {
        if (w != u && w != v) opposite.push_back(w);
      }
    }
    if (opposite.empty() || opposite.size() > 2) return false;
    const bool boundary_edge = opposite.size() == 1;
    if (is_boundary(u) && !boundary_edge) return false;

    // Link condition: the only shared neighbors are the edge's opposite vertices.
    const auto nu = neighbors(u), nv = neighbors(v);
    std::vector<Index> common;
    std::set_intersection(nu.begin(), nu.end(), nv.begin(), nv.end(), std::back_inserter(common));
    std::sort(opposite.begin(), opposite.end());
    if (common != opposite) return false;

    for (Index w : opposite) {
      const std::size_t degree = neighbors(w).size();
      if (degree < (is_boundary(w) ? 3u : 4u)) return false;
    }

    for (Index f : vfaces_[u]) {
      const Face& face = faces_[f];
      if (face[0] == v || face[1] == v || face[2] == v) continue;
      std::array<Vec3, 3> before{}, after{};
      for (int k = 0; k < 3; ++k) {
        before[k] = pos_[face[k]];
        after[k] = face[k] == u ? pos_[v] : pos_[face[k]];
      }
      const Vec3 n0 = cross(sub(before[1], before[0]), sub(before[2], before[0]));
      const Vec3 n1 = cross(sub(after[1], after[0]), sub(after[2], after[0]));
      const double l0 = norm(n0), l1 = norm(n1);
      if (l1 <= 1e-12 * std::max(l0, 1e-300)) return false;
      if (dot(n0, n1) <= 0.0) return false;
    }
    return true;
  }

  void collapse(Index u, Index v) {
    for (Index f : vfaces_[u]) {
      Face& face = faces_[f];
      const bool on_edge = face[0] == v || face[1] == v || face[2] == v;
      if (on_edge) {
        face_alive_[f] = false;
        for (Index w : face) {
          if (w == u) continue;
          auto& list = vfaces_[w];
          list.erase(std::remove(list.begin(), list.end(), f), list.end());
        }
      } else {
        for (Index& w : face) {
          if (w == u) w = v;
        }
        vfaces_[v].push_back(f);
      }
    }
    vfaces_[u].clear();
    std::sort(vfaces_[v].begin(), vfaces_[v].end());
    removed_[u] = true;
    --alive_count_;
    quadric_[v] += quadric_[u];
    ++version_[u];
    ++version_[v];
    for (Index w : neighbors(v)) {
      push(w, v);
      push(v, w);
    }
  }

  void push(Index remove, Index keep) {
    queue_.push({cost(remove, keep), remove, keep, version_[remove], version_[keep]});
  }

  void fill_queue() {
    queue_ = {};
    for (std::size_t f = 0; f < faces_.size(); ++f) {
      if (!face_alive_[f]) continue;
      const Face& face = faces_[f];
      for (int k = 0; k < 3; ++k) {
        const Index a = face[k], b = face[(k + 1) % 3];
        // Each undirected edge is seen from both faces; push once per direction.
        if (a < b || faces_on_edge(a, b) == 1) {
          push(a, b);
          push(b, a);
        }
      }
    }
  }

  std::vector<Vec3> pos_;
  std::vector<Face> faces_;
  std::vector<bool> face_alive_;
  std::vector<std::vector<Index>> vfaces_;
  std::vector<bool> removed_;
  std::vector<std::uint32_t> version_;
  std::vector<Eigen::Matrix4d> quadric_;
  Index alive_count_;
  std::priority_queue<Candidate, std::vector<Candidate>, Later> queue_;
};

}  // namespace

Decimation decimate(const Mesh& mesh, Index target_count) {
  if (target_count < 4) throw Error("decimation target must be at least 4, got " + std::to_string(target_count));
  validate_mesh(mesh);
  build_adjacency(mesh);  // rejects non-manifold input
  if (target_count >= mesh.num_vertices()) {
    Decimation identity;
    identity.coarse = mesh;
    identity.kept.resize(mesh.vertices.size());
    for (Index i = 0; i < mesh.num_vertices(); ++i) identity.kept[i] = i;
    return identity;
  }
  EdgeCollapser collapser(mesh);
  const bool reached = collapser.run(target_count);
  Decimation out = collapser.result();
  out.stopped_early = !reached;
  validate_mesh(out.coarse);
  build_adjacency(out.coarse);
  return out;
}

Vec3 closest_point_barycentric(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = sub(b, a), ac = sub(c, a), ap = sub(p, a);
  const double d1 = dot(ab, ap), d2 = dot(ac, ap);
  if (d1 <= 0.0 && d2 <= 0.0) return {1.0, 0.0, 0.0};
  const Vec3 bp = sub(p, b);
  const double d3 = dot(ab, bp), d4 = dot(ac, bp);
  if (d3 >= 0.0 && d4 <= d3) return {0.0, 1.0, 0.0};
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
    const double t = d1 / (d1 - d3);
    return {1.0 - t, t, 0.0};
  }
  const Vec3 cp = sub(p, c);
  const double d5 = dot(ab, cp), d6 = dot(ac, cp);
  if (d6 >= 0.0 && d5 <= d6) return {0.0, 0.0, 1.0};
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
    const double t = d2 / (d2 - d6);
    return {1.0 - t, 0.0, t};
  }
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    const double t = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return {0.0, 1.0 - t, t};
  }
  const double denom = 1.0 / (va + vb + vc);
  const double w1 = vb * denom, w2 = vc * denom;
  return {1.0 - w1 - w2, w1, w2};
}

namespace {

double point_from_barycentric_dist2(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& w) {
  const Vec3 q = add(add(scale(a, w[0]), scale(b, w[1])), scale(c, w[2]));
  const Vec3 d = sub(p, q);
  return dot(d, d);
}

// True when the orthogonal projection of p onto the triangle's plane lies inside it.
bool projects_inside(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 n = cross(sub(b, a), sub(c, a));
  const double nn = dot(n, n);
  if (nn == 0.0) return false;
  const double u = dot(cross(sub(c, b), sub(p, b)), n) / nn;
  const double v = dot(cross(sub(a, c), sub(p, c)), n) / nn;
  const double w = 1.0 - u - v;
  return u >= 0.0 && v >= 0.0 && w >= 0.0;
}

}  // namespace

SparseMatrix build_up_matrix(const Mesh& fine, const Mesh& coarse, const std::vector<Index>& kept,
                             UpMatrixStats* stats) {
  if (kept.size() != coarse.vertices.size()) throw Error("kept map size does not match coarse vertex count");
  const Index nf = fine.num_vertices(), nc = coarse.num_vertices();
  std::vector<Index> coarse_of(nf, -1);
  for (Index i = 0; i < nc; ++i) {
    if (kept[i] < 0 || kept[i] >= nf) throw Error("kept map entry out of range");
    coarse_of[kept[i]] = i;
  }
  const std::size_t mc = coarse.faces.size();
  std::vector<Vec3> lo(mc), hi(mc);
  std::vector<std::vector<Index>> vfaces(nc);
  for (std::size_t f = 0; f < mc; ++f) {
    const Face& face = coarse.faces[f];
    for (int k = 0; k < 3; ++k) {
      const Vec3& p = coarse.vertices[face[k]];
      for (int d = 0; d < 3; ++d) {
        lo[f][d] = k == 0 ? p[d] : std::min(lo[f][d], p[d]);
        hi[f][d] = k == 0 ? p[d] : std::max(hi[f][d], p[d]);
      }
      vfaces[face[k]].push_back(static_cast<Index>(f));
    }
  }

  std::vector<Triplet> entries;
  entries.reserve(static_cast<std::size_t>(nf) * 3);
  std::size_t clamped = 0;
  for (Index i = 0; i < nf; ++i) {
    if (coarse_of[i] >= 0) {
      entries.push_back({i, coarse_of[i], 1.0});
      continue;
    }
    const Vec3& p = fine.vertices[i];
    double best = std::numeric_limits<double>::infinity();
    Index best_face = -1;
    Vec3 best_w{};
    auto consider = [&](Index f) {
      const Face& face = coarse.faces[f];
      const Vec3 &a = coarse.vertices[face[0]], &b = coarse.vertices[face[1]], &c = coarse.vertices[face[2]];
      const Vec3 w = closest_point_barycentric(p, a, b, c);
      const double d2 = point_from_barycentric_dist2(p, a, b, c, w);
      if (d2 < best || (d2 == best && f < best_face)) {
        best = d2;
        best_face = f;
        best_w = w;
      }
    };
    // Seed with the fan of the nearest coarse vertex, then prune the full scan by box distance.
    Index nearest = 0;
    double nearest_d2 = std::numeric_limits<double>::infinity();
    for (Index j = 0; j < nc; ++j) {
      const Vec3 d = sub(p, coarse.vertices[j]);
      const double d2 = dot(d, d);
      if (d2 < nearest_d2) {
        nearest_d2 = d2;
        nearest = j;
      }
    }
    for (Index f : vfaces[nearest]) consider(f);
    for (std::size_t f = 0; f < mc; ++f) {
      double box2 = 0.0;
      for (int d = 0; d < 3; ++d) {
        const double g = p[d] < lo[f][d] ? lo[f][d] - p[d] : (p[d] > hi[f][d] ? p[d] - hi[f][d] : 0.0);
        box2 += g * g;
      }
      if (box2 <= best) consider(static_cast<Index>(f));
    }
    if (best_face < 0) throw Error("coarse mesh has no faces to project onto");
    const Face& face = coarse.faces[best_face];
    if (!projects_inside(p, coarse.vertices[face[0]], coarse.vertices[face[1]], coarse.vertices[face[2]])) {
      ++clamped;
    }
    const double total = best_w[0] + best_w[1] + best_w[2];
    std::array<std::pair<Index, double>, 3> row{};
    for (int k = 0; k < 3; ++k) row[k] = {face[k], std::max(0.0, best_w[k]) / total};
    std::sort(row.begin(), row.end());
    for (auto [col, w] : row) entries.push_back({i, col, w});
  }
  if (stats) stats->clamped = clamped;
  return SparseMatrix(nf, nc, std::move(entries));
}

SamplingHierarchy build_hierarchy(const Mesh& mesh, const std::vector<int>& factors) {
  if (factors.empty()) throw Error("hierarchy needs at least one reduction factor");
  for (int f : factors) {
    if (f < 1) throw Error("reduction factors must be >= 1");
  }
  std::vector<Mesh> fine_to_coarse{mesh};
  std::vector<std::vector<Index>> kept_maps;
  for (int factor : factors) {
    const Mesh& current = fine_to_coarse.back();
    const Index target = static_cast<Index>((current.num_vertices() + factor - 1) / factor);
    Decimation d = decimate(current, std::max<Index>(target, 4));
    if (d.stopped_early) {
      throw Error("decimation stopped at " + std::to_string(d.coarse.num_vertices()) + " vertices (target " +
                  std::to_string(target) + ")");
    }
    kept_maps.push_back(std::move(d.kept));
    fine_to_coarse.push_back(std::move(d.coarse));
  }
  SamplingHierarchy h;
  h.factors = factors;
  h.levels.assign(fine_to_coarse.rbegin(), fine_to_coarse.rend());
  h.kept.assign(kept_maps.rbegin(), kept_maps.rend());
  for (std::size_t k = 0; k + 1 < h.levels.size(); ++k) {
    h.up.push_back(build_up_matrix(h.levels[k + 1], h.levels[k], h.kept[k]));
  }
  return h;
}

RowMatrix upsample(const RowMatrix& features, const SparseMatrix& q) {
  if (features.rows() != q.cols()) {
    throw Error("upsample: features have " + std::to_string(features.rows()) + " rows, matrix expects " +
                std::to_string(q.cols()));
  }
  RowMatrix out = RowMatrix::Zero(q.rows(), features.cols());
  for (const Triplet& t : q.entries()) out.row(t.row) += t.weight * features.row(t.col);
  return out;
}

}  // namespace meshmotion
