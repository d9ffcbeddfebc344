#include <doctest.h>

#include <cmath>
#include <numbers>
#include <queue>
#include <set>

#include "meshmotion/primitives.hpp"
#include "meshmotion/spiral.hpp"
#include "meshmotion/topology_cache.hpp"
#include "test_util.hpp"

using namespace meshmotion;

namespace {

// Hop distances by breadth-first search over face edges.
std::vector<int> bfs_depth(const Mesh& m, Index source) {
  std::vector<std::set<Index>> nbr(m.vertices.size());
  for (const Face& f : m.faces)
    for (int a = 0; a < 3; ++a) nbr[f[a]].insert(f[(a + 1) % 3]), nbr[f[(a + 1) % 3]].insert(f[a]);
  std::vector<int> depth(m.vertices.size(), -1);
  std::queue<Index> q;
  depth[source] = 0;
  q.push(source);
  while (!q.empty()) {
    const Index v = q.front();
    q.pop();
    for (Index u : nbr[v]) {
      if (depth[u] < 0) {
        depth[u] = depth[v] + 1;
        q.push(u);
      }
    }
  }
  return depth;
}

void check_table_invariants(const SpiralTable& t) {
  for (Index v = 0; v < t.num_vertices(); ++v) {
    const auto row = t.row(v);
    CHECK(row[0] == v);
    std::set<Index> seen;
    bool in_pad = false;
    for (Index x : row) {
      if (x == kPad) {
        in_pad = true;
        continue;
      }
      CHECK_FALSE(in_pad);
      CHECK(seen.insert(x).second);
    }
  }
}

}  // namespace

TEST_CASE("rings on the fan") {
  const AdjacencyList adj = build_adjacency(make_fan(6));
  CHECK(k_ring(adj, 3, 0) == std::vector<Index>{3});
  CHECK(k_ring(adj, 0, 1) == std::vector<Index>{1, 2, 3, 4, 5, 6});
  CHECK(k_ring(adj, 0, 2).empty());
}

TEST_CASE("rings and disks equal BFS layers") {
  for (const Mesh& m : {make_icosphere(2), make_face_patch(12, 14)}) {
    REQUIRE(m.num_vertices() <= 200);
    const AdjacencyList adj = build_adjacency(m);
    for (Index v = 0; v < m.num_vertices(); ++v) {
      const auto depth = bfs_depth(m, v);
      CHECK(k_ring(adj, v, 1).size() == adj.neighbors[v].size());
      for (int k = 0; k <= 3; ++k) {
        std::vector<Index> ring, disk;
        for (Index u = 0; u < m.num_vertices(); ++u) {
          if (depth[u] == k) ring.push_back(u);
          if (depth[u] >= 0 && depth[u] <= k) disk.push_back(u);
        }
        CHECK(k_ring(adj, v, k) == ring);
        CHECK(k_disk(adj, v, k) == disk);
      }
    }
  }
}

TEST_CASE("fan spiral matches an angular sort") {
  const Mesh fan = make_fan(6);
  const AdjacencyList adj = build_adjacency(fan);
  const auto geo = graph_geodesic(fan, adj, 1);
  const auto s = spiral(adj, 0, 1, geo);
  // Oracle: sort ring vertices by CCW angle measured from the reference vertex 1.
  std::vector<std::pair<double, Index>> by_angle;
  for (Index v = 1; v <= 6; ++v) {
    double a = std::atan2(fan.vertices[v][1], fan.vertices[v][0]);
    if (a < -1e-12) a += 2 * std::numbers::pi;
    by_angle.push_back({a, v});
  }
  std::sort(by_angle.begin(), by_angle.end());
  std::vector<Index> expected{0};
  for (auto [a, v] : by_angle) expected.push_back(v);
  CHECK(s == expected);
  CHECK(s == std::vector<Index>{0, 1, 2, 3, 4, 5, 6});
  CHECK(spiral(adj, 4, 0, geo) == std::vector<Index>{4});
}

TEST_CASE("fan spiral starts at the neighbor nearest the reference") {
  const Mesh fan = make_fan(6);
  const AdjacencyList adj = build_adjacency(fan);
  const auto geo = graph_geodesic(fan, adj, 4);
  CHECK(spiral(adj, 0, 1, geo) == std::vector<Index>{0, 4, 5, 6, 1, 2, 3});
}

TEST_CASE("two-ring spirals cover ring 1 and ring 2 exactly once") {
  const Mesh m = make_icosphere(3);
  const AdjacencyList adj = build_adjacency(m);
  const auto geo = graph_geodesic(m, adj, default_reference_vertex(m));
  for (Index v = 0; v < m.num_vertices(); ++v) {
    const auto s = spiral(adj, v, 2, geo);
    const auto r1 = k_ring(adj, v, 1), r2 = k_ring(adj, v, 2);
    CHECK(s.size() == 1 + r1.size() + r2.size());
    std::vector<Index> first(s.begin() + 1, s.begin() + 1 + static_cast<std::ptrdiff_t>(r1.size()));
    std::sort(first.begin(), first.end());
    CHECK(first == r1);
    std::set<Index> uniq(s.begin(), s.end());
    CHECK(uniq.size() == s.size());
  }
}

TEST_CASE("spiral table truncation and padding on the fan") {
  const Mesh fan = make_fan(6);
  CHECK(build_spiral_table(fan, 1, 7, 1).row(0)[6] == 6);
  const SpiralTable full = build_spiral_table(fan, 1, 7, 1);
  CHECK(std::vector<Index>(full.row(0).begin(), full.row(0).end()) == std::vector<Index>{0, 1, 2, 3, 4, 5, 6});
  const SpiralTable cut = build_spiral_table(fan, 1, 4, 1);
  CHECK(std::vector<Index>(cut.row(0).begin(), cut.row(0).end()) == std::vector<Index>{0, 1, 2, 3});
  const SpiralTable pad = build_spiral_table(fan, 1, 9, 1);
  CHECK(std::vector<Index>(pad.row(0).begin(), pad.row(0).end()) ==
        std::vector<Index>{0, 1, 2, 3, 4, 5, 6, kPad, kPad});
  // Default length is the largest one-disk (7 at the center).
  CHECK(build_spiral_table(fan, 1, 0, 1).length == 7);
  check_table_invariants(pad);
}

TEST_CASE("spiral tables are invariant to rotation and uniform scaling") {
  const Mesh m = make_face_patch(15, 17);
  Mesh moved = m;
  for (Vec3& v : moved.vertices) v = {-2.0 * v[1], 2.0 * v[0], 2.0 * v[2] + 8.0};
  const Index ref = default_reference_vertex(m);
  CHECK(default_reference_vertex(moved) == ref);
  const SpiralTable a = build_spiral_table(m, 2, 0, ref);
  const SpiralTable b = build_spiral_table(moved, 2, 0, ref);
  CHECK(a == b);
  CHECK(a == build_spiral_table(m, 2, 0, ref));
  check_table_invariants(a);
}

TEST_CASE("hierarchy spiral tables and cache round trip") {
  TempDir dir;
  const TopologyCache cache = build_topology_cache(make_icosphere(3, 40.0), {4, 4}, {});
  REQUIRE(cache.spirals.size() == 3);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(cache.spirals[k].num_vertices() == cache.hierarchy.levels[k].num_vertices());
    check_table_invariants(cache.spirals[k]);
  }
  save_cache(cache, dir.path / "topo.bin");
  const TopologyCache back = load_cache(dir.path / "topo.bin");
  CHECK(back == cache);
  CHECK(serialize_cache(back) == serialize_cache(cache));
  CHECK(cache_hash(back) == cache_hash(cache));

  TopologyCache tagged = cache;
  tagged.metadata["config_hash"] = "0123456789abcdef";
  save_cache(tagged, dir.path / "tagged.bin");
  CHECK(load_cache(dir.path / "tagged.bin").metadata == tagged.metadata);
  CHECK(cache_hash(tagged) == cache_hash(cache));

  std::string bytes = serialize_cache(cache);
  bytes[8] = 99;
  CHECK_THROWS_WITH_AS(parse_cache(bytes), doctest::Contains("version"), Error);
  CHECK_THROWS_AS(parse_cache(bytes.substr(0, 40)), Error);
  CHECK_THROWS_AS(parse_cache("not a cache"), Error);
}
