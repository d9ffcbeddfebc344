#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace meshmotion {

using Index = std::int32_t;
using Vec3 = std::array<double, 3>;
using Face = std::array<Index, 3>;

/// Base error type for every failure the library reports.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Fixed-topology triangle mesh. Coordinates are millimetres.
struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<Face> faces;

  Index num_vertices() const { return static_cast<Index>(vertices.size()); }
  Index num_faces() const { return static_cast<Index>(faces.size()); }

  friend bool operator==(const Mesh&, const Mesh&) = default;
};

/// Throws Error naming the offending face or edge when `mesh` has an index
/// out of range, a degenerate face, an edge shared by more than two faces or
/// an interior edge traversed twice in the same direction.
void validate_mesh(const Mesh& mesh);

bool same_topology(const Mesh& a, const Mesh& b);

enum class MeshFormat { Obj, Ply };

MeshFormat format_from_path(const std::filesystem::path& path);

Mesh load_mesh(const std::filesystem::path& path, MeshFormat format);
Mesh load_mesh(const std::filesystem::path& path);

/// Coordinates are written in shortest round-trip decimal form, so a reload
/// reproduces them bit-exactly. `header_comment` lines are emitted as comments.
void save_mesh(const Mesh& mesh, const std::filesystem::path& path, MeshFormat format,
               const std::vector<std::string>& header_comment = {});
void save_mesh(const Mesh& mesh, const std::filesystem::path& path,
               const std::vector<std::string>& header_comment = {});

Mesh parse_obj(const std::string& text);
Mesh parse_ply(const std::string& text);

struct AdjacencyList {
  /// Sorted neighbor indices per vertex.
  std::vector<std::vector<Index>> neighbors;
  /// Neighbors in counter-clockwise order around each vertex (seen from the
  /// side the face normals point to). Closed rings start at the smallest
  /// index; open rings (boundary vertices) start at the path end.
  std::vector<std::vector<Index>> one_ring;
  std::vector<bool> boundary;

  Index size() const { return static_cast<Index>(neighbors.size()); }
};

AdjacencyList build_adjacency(const Mesh& mesh);

/// Shortest path lengths along mesh edges weighted by Euclidean edge length.
/// Unreachable vertices get +infinity. Equal tentative distances are settled
/// in increasing vertex order.
std::vector<double> graph_geodesic(const Mesh& mesh, const AdjacencyList& adj, Index source);
std::vector<double> graph_geodesic(const Mesh& mesh, Index source);

double edge_length(const Mesh& mesh, Index a, Index b);
double mean_edge_length(const Mesh& mesh);

// Small vector helpers shared across modules.
inline Vec3 sub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 add(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 scale(const Vec3& a, double s) { return {a[0] * s, a[1] * s, a[2] * s}; }
inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
double norm(const Vec3& a);

}  // namespace meshmotion
