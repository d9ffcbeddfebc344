#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>

#include "meshmotion/mesh.hpp"
#include "meshmotion/primitives.hpp"
#include "test_util.hpp"

using namespace meshmotion;

namespace {

// Floyd-Warshall over the edge graph, independent of the Dijkstra path.
std::vector<std::vector<double>> all_pairs(const Mesh& m) {
  const std::size_t n = m.vertices.size();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> d(n, std::vector<double>(n, inf));
  for (std::size_t i = 0; i < n; ++i) d[i][i] = 0.0;
  for (const Face& f : m.faces) {
    for (int k = 0; k < 3; ++k) {
      const Index a = f[k], b = f[(k + 1) % 3];
      const double len = edge_length(m, a, b);
      d[a][b] = std::min(d[a][b], len);
      d[b][a] = std::min(d[b][a], len);
    }
  }
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) d[i][j] = std::min(d[i][j], d[i][k] + d[k][j]);
  return d;
}

}  // namespace

TEST_CASE("OBJ tetrahedron parses with vertex and face order preserved") {
  const std::string obj = "# tet\nv 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\nf 1 3 2\nf 1 2 4\nf 1 4 3\nf 2 3 4\n";
  const Mesh m = parse_obj(obj);
  CHECK(m.num_vertices() == 4);
  CHECK(m.num_faces() == 4);
  CHECK(m.vertices[1] == Vec3{1, 0, 0});
  CHECK(m.faces[0] == Face{0, 2, 1});
}

TEST_CASE("OBJ index 0 is a parse error") {
  CHECK_THROWS_WITH_AS(parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n"), doctest::Contains("index 0"), Error);
}

TEST_CASE("malformed and invalid inputs are rejected") {
  CHECK_THROWS_AS(parse_obj("v 0 zero 0\n"), Error);
  CHECK_THROWS_AS(parse_obj(""), Error);
  CHECK_THROWS_AS(parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\nf 1 2 3 4\n"), Error);
  // Two faces with the same winding over edge (1,2) -> inconsistent orientation.
  CHECK_THROWS_WITH_AS(parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\nf 1 2 3\nf 2 3 4\n"),
                       doctest::Contains("edge (1, 2)"), Error);
  CHECK_THROWS_AS(parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 1 2\n"), Error);
}

TEST_CASE("icosphere with 4 subdivisions has 2562 vertices and 5120 faces after a file round trip") {
  TempDir dir;
  const Mesh ico = make_icosphere(4, 1.0);
  save_mesh(ico, dir.path / "ico.obj");
  const Mesh m = load_mesh(dir.path / "ico.obj");
  CHECK(m.num_vertices() == 10 * 256 + 2);
  CHECK(m.num_faces() == 5120);
}

TEST_CASE("save/load round trip is exact for OBJ and PLY") {
  TempDir dir;
  Mesh m = make_icosphere(2, 37.5);
  m.vertices[0][0] = 1.25;
  for (auto fmt : {MeshFormat::Obj, MeshFormat::Ply}) {
    const auto path = dir.path / (fmt == MeshFormat::Obj ? "m.obj" : "m.ply");
    save_mesh(m, path, fmt, {"config_hash deadbeef"});
    const Mesh back = load_mesh(path, fmt);
    CHECK(back == m);
  }
  std::ifstream in(dir.path / "m.obj");
  std::string first_vertex;
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("v ", 0) == 0) {
      first_vertex = line;
      break;
    }
  }
  CHECK(first_vertex.rfind("v 1.25 ", 0) == 0);
}

TEST_CASE("saving to an unwritable path fails") {
  CHECK_THROWS_AS(save_mesh(make_tetrahedron(), "/nonexistent-dir/x.obj"), Error);
}

TEST_CASE("PLY with extra vertex properties") {
  const std::string ply =
      "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\n"
      "property uchar red\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n"
      "0 0 0 255\n1 0 0 255\n0 1 0 255\n3 0 1 2\n";
  const Mesh m = parse_ply(ply);
  CHECK(m.num_vertices() == 3);
  CHECK(m.faces[0] == Face{0, 1, 2});
  CHECK_THROWS_AS(parse_ply("ply\nformat binary_little_endian 1.0\nend_header\n"), Error);
}

TEST_CASE("tetrahedron adjacency is K4") {
  const AdjacencyList adj = build_adjacency(make_tetrahedron());
  for (Index v = 0; v < 4; ++v) {
    CHECK(adj.neighbors[v].size() == 3);
    CHECK(adj.one_ring[v].size() == 3);
    CHECK_FALSE(adj.boundary[v]);
  }
}

TEST_CASE("fan one-ring is counter-clockwise") {
  const AdjacencyList adj = build_adjacency(make_fan(6));
  CHECK(adj.one_ring[0] == std::vector<Index>{1, 2, 3, 4, 5, 6});
  CHECK_FALSE(adj.boundary[0]);
  CHECK(adj.boundary[1]);
  // Boundary vertex 1: faces (0,1,2) and (0,6,1); CCW around 1 the path runs 2 -> 0 -> 6.
  CHECK(adj.one_ring[1] == std::vector<Index>{2, 0, 6});
}

TEST_CASE("adjacency invariants on the icosphere") {
  const Mesh m = make_icosphere(4);
  const AdjacencyList adj = build_adjacency(m);
  // Degree by brute force over faces.
  std::vector<std::set<Index>> brute(m.vertices.size());
  for (const Face& f : m.faces) {
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b)
        if (a != b) brute[f[a]].insert(f[b]);
  }
  int deg5 = 0, deg6 = 0;
  for (Index v = 0; v < m.num_vertices(); ++v) {
    CHECK(std::vector<Index>(brute[v].begin(), brute[v].end()) == adj.neighbors[v]);
    deg5 += brute[v].size() == 5;
    deg6 += brute[v].size() == 6;
    for (Index u : adj.neighbors[v]) CHECK(std::binary_search(adj.neighbors[u].begin(), adj.neighbors[u].end(), v));
  }
  CHECK(deg5 == 12);
  CHECK(deg6 == m.num_vertices() - 12);
  // Orientation: consecutive ring vertices (a, b) around v form the CCW face (v, a, b).
  std::set<std::array<Index, 3>> faces;
  for (const Face& f : m.faces) {
    faces.insert(f);
    faces.insert({f[1], f[2], f[0]});
    faces.insert({f[2], f[0], f[1]});
  }
  for (Index v = 0; v < m.num_vertices(); ++v) {
    const auto& ring = adj.one_ring[v];
    for (std::size_t i = 0; i < ring.size(); ++i) CHECK(faces.count({v, ring[i], ring[(i + 1) % ring.size()]}) == 1);
  }
}

TEST_CASE("non-manifold vertex is reported") {
  // Two triangles touching only at vertex 0.
  Mesh m;
  m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {-1, 0, 0}, {0, -1, 0}};
  m.faces = {{0, 1, 2}, {0, 3, 4}};
  CHECK_THROWS_WITH_AS(build_adjacency(m), doctest::Contains("non-manifold vertex 0"), Error);
}

TEST_CASE("graph geodesic on simple meshes") {
  const Mesh tet = make_tetrahedron(1.0);
  const auto d = graph_geodesic(tet, 0);
  CHECK(d[0] == 0.0);
  for (int i = 1; i < 4; ++i) CHECK(d[i] == doctest::Approx(1.0).epsilon(1e-12));

  const Mesh strip = make_strip(10, 1.0);
  const auto ds = graph_geodesic(strip, 0);
  for (int i = 0; i <= 10; ++i) CHECK(ds[2 * i] == doctest::Approx(i).epsilon(1e-12));
}

TEST_CASE("graph geodesic pole to pole is at least the chord") {
  const double r = 50.0;
  const Mesh m = make_icosphere(3, r);
  Index top = 0, bottom = 0;
  for (Index i = 0; i < m.num_vertices(); ++i) {
    if (m.vertices[i][2] > m.vertices[top][2]) top = i;
    if (m.vertices[i][2] < m.vertices[bottom][2]) bottom = i;
  }
  const auto d = graph_geodesic(m, top);
  CHECK(d[bottom] >= 2.0 * r);
  CHECK(d[bottom] <= std::numbers::pi * r * 1.2);
}

TEST_CASE("graph geodesic equals Floyd-Warshall on small meshes") {
  for (const Mesh& m : {make_icosphere(1, 3.0), make_fan(7), make_strip(20, 0.5), make_face_patch(8, 9)}) {
    REQUIRE(m.num_vertices() <= 100);
    const auto oracle = all_pairs(m);
    const AdjacencyList adj = build_adjacency(m);
    for (Index s = 0; s < m.num_vertices(); s += 3) {
      const auto d = graph_geodesic(m, adj, s);
      for (Index v = 0; v < m.num_vertices(); ++v) CHECK(d[v] == doctest::Approx(oracle[s][v]).epsilon(1e-12));
      // Triangle inequality along edges.
      for (Index v = 0; v < m.num_vertices(); ++v)
        for (Index u : adj.neighbors[v]) CHECK(d[u] <= d[v] + edge_length(m, u, v) + 1e-12);
    }
  }
}

TEST_CASE("disconnected components get infinite distance") {
  Mesh m = make_tetrahedron();
  const Mesh other = make_tetrahedron();
  for (const Vec3& v : other.vertices) m.vertices.push_back(add(v, {10, 0, 0}));
  for (const Face& f : other.faces) m.faces.push_back({f[0] + 4, f[1] + 4, f[2] + 4});
  const auto d = graph_geodesic(m, 0);
  CHECK(std::isinf(d[5]));
  CHECK(std::isfinite(d[3]));
}
