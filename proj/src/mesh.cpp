#include "meshmotion/mesh.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <queue>
#include <sstream>
#include <unordered_map>

namespace meshmotion {

namespace {

std::uint64_t edge_key(Index a, Index b) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
         static_cast<std::uint32_t>(b);
}

std::string edge_str(Index a, Index b) {
  return "(" + std::to_string(a) + ", " + std::to_string(b) + ")";
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open mesh file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double parse_double(std::string_view tok, std::size_t line_no) {
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    throw Error("line " + std::to_string(line_no) + ": malformed number '" + std::string(tok) + "'");
  }
  return value;
}

long parse_long(std::string_view tok, std::size_t line_no) {
  long value = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    throw Error("line " + std::to_string(line_no) + ": malformed integer '" + std::string(tok) + "'");
  }
  return value;
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    lines.push_back(text.substr(start, end - start));
    start = end + 1;
  }
  return lines;
}

void append_double(std::string& out, double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, ptr);
}

}  // namespace

double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

void validate_mesh(const Mesh& mesh) {
  if (mesh.vertices.empty() || mesh.faces.empty()) throw Error("empty mesh");
  const Index n = mesh.num_vertices();
  std::unordered_map<std::uint64_t, Index> directed;
  directed.reserve(mesh.faces.size() * 3);
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const Face& face = mesh.faces[f];
    for (Index idx : face) {
      if (idx < 0 || idx >= n) {
        throw Error("face " + std::to_string(f) + " references vertex " + std::to_string(idx) +
                    " outside [0, " + std::to_string(n) + ")");
      }
    }
    if (face[0] == face[1] || face[1] == face[2] || face[0] == face[2]) {
      throw Error("degenerate face " + std::to_string(f));
    }
    for (int k = 0; k < 3; ++k) {
      Index a = face[k], b = face[(k + 1) % 3];
      auto [it, inserted] = directed.emplace(edge_key(a, b), static_cast<Index>(f));
      if (!inserted) {
        throw Error("edge " + edge_str(a, b) + " traversed in the same direction by faces " +
                    std::to_string(it->second) + " and " + std::to_string(f) +
                    " (non-manifold or inconsistently oriented)");
      }
    }
  }
}

bool same_topology(const Mesh& a, const Mesh& b) {
  return a.vertices.size() == b.vertices.size() && a.faces == b.faces;
}

MeshFormat format_from_path(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".obj") return MeshFormat::Obj;
  if (ext == ".ply") return MeshFormat::Ply;
  throw Error("unknown mesh extension '" + ext + "' for " + path.string());
}

Mesh parse_obj(const std::string& text) {
  Mesh mesh;
  std::vector<std::array<long, 3>> raw_faces;
  std::vector<std::size_t> face_lines;
  const auto lines = split_lines(text);
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    const auto toks = split_ws(lines[ln]);
    if (toks.empty() || toks[0].front() == '#') continue;
    const std::size_t line_no = ln + 1;
    if (toks[0] == "v") {
      if (toks.size() < 4) throw Error("line " + std::to_string(line_no) + ": vertex needs 3 coordinates");
      mesh.vertices.push_back({parse_double(toks[1], line_no), parse_double(toks[2], line_no),
                               parse_double(toks[3], line_no)});
    } else if (toks[0] == "f") {
      if (toks.size() != 4) {
        throw Error("line " + std::to_string(line_no) + ": only triangular faces are supported");
      }
      std::array<long, 3> f{};
      for (int k = 0; k < 3; ++k) {
        std::string_view tok = toks[k + 1];
        tok = tok.substr(0, tok.find('/'));
        f[k] = parse_long(tok, line_no);
        if (f[k] == 0) throw Error("line " + std::to_string(line_no) + ": OBJ face index 0 (indices are 1-based)");
      }
      raw_faces.push_back(f);
      face_lines.push_back(line_no);
    }
  }
  const long nv = static_cast<long>(mesh.vertices.size());
  mesh.faces.reserve(raw_faces.size());
  for (std::size_t i = 0; i < raw_faces.size(); ++i) {
    Face face{};
    for (int k = 0; k < 3; ++k) {
      long idx = raw_faces[i][k];
      idx = idx > 0 ? idx - 1 : nv + idx;
      if (idx < 0 || idx >= nv) {
        throw Error("line " + std::to_string(face_lines[i]) + ": face index " +
                    std::to_string(raw_faces[i][k]) + " out of range");
      }
      face[k] = static_cast<Index>(idx);
    }
    mesh.faces.push_back(face);
  }
  validate_mesh(mesh);
  return mesh;
}

Mesh parse_ply(const std::string& text) {
  const auto lines = split_lines(text);
  if (lines.empty() || split_ws(lines[0]).empty() || split_ws(lines[0])[0] != "ply") {
    throw Error("line 1: missing 'ply' magic");
  }
  std::size_t ln = 1;
  long n_vertices = -1, n_faces = -1;
  std::vector<std::string> vertex_props;
  std::string current;
  bool ascii = false;
  for (; ln < lines.size(); ++ln) {
    const auto toks = split_ws(lines[ln]);
    if (toks.empty()) continue;
    if (toks[0] == "end_header") {
      ++ln;
      break;
    }
    if (toks[0] == "format") {
      if (toks.size() < 2 || toks[1] != "ascii") throw Error("only ascii PLY is supported");
      ascii = true;
    } else if (toks[0] == "element" && toks.size() == 3) {
      current = std::string(toks[1]);
      long count = parse_long(toks[2], ln + 1);
      if (current == "vertex") n_vertices = count;
      else if (current == "face") n_faces = count;
      else if (count != 0) throw Error("unsupported PLY element '" + current + "'");
    } else if (toks[0] == "property" && current == "vertex") {
      vertex_props.emplace_back(toks.back());
    }
  }
  if (!ascii) throw Error("PLY header lacks 'format ascii'");
  if (n_vertices < 0 || n_faces < 0) throw Error("PLY header lacks vertex or face element");
  auto prop_index = [&](const std::string& name) {
    auto it = std::find(vertex_props.begin(), vertex_props.end(), name);
    if (it == vertex_props.end()) throw Error("PLY vertex element lacks property " + name);
    return static_cast<std::size_t>(it - vertex_props.begin());
  };
  const std::size_t ix = prop_index("x"), iy = prop_index("y"), iz = prop_index("z");

  Mesh mesh;
  auto next_data_line = [&]() {
    while (ln < lines.size()) {
      auto toks = split_ws(lines[ln]);
      ++ln;
      if (!toks.empty()) return std::make_pair(toks, ln);
    }
    throw Error("unexpected end of PLY data");
  };
  for (long i = 0; i < n_vertices; ++i) {
    auto [toks, line_no] = next_data_line();
    if (toks.size() < vertex_props.size()) throw Error("line " + std::to_string(line_no) + ": short vertex record");
    mesh.vertices.push_back({parse_double(toks[ix], line_no), parse_double(toks[iy], line_no),
                             parse_double(toks[iz], line_no)});
  }
  for (long i = 0; i < n_faces; ++i) {
    auto [toks, line_no] = next_data_line();
    if (toks.size() != 4 || parse_long(toks[0], line_no) != 3) {
      throw Error("line " + std::to_string(line_no) + ": only triangular faces are supported");
    }
    Face face{};
    for (int k = 0; k < 3; ++k) {
      long idx = parse_long(toks[k + 1], line_no);
      if (idx < 0 || idx >= n_vertices) {
        throw Error("line " + std::to_string(line_no) + ": face index " + std::to_string(idx) + " out of range");
      }
      face[k] = static_cast<Index>(idx);
    }
    mesh.faces.push_back(face);
  }
  validate_mesh(mesh);
  return mesh;
}

Mesh load_mesh(const std::filesystem::path& path, MeshFormat format) {
  const std::string text = read_file(path);
  try {
    return format == MeshFormat::Obj ? parse_obj(text) : parse_ply(text);
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

Mesh load_mesh(const std::filesystem::path& path) { return load_mesh(path, format_from_path(path)); }

void save_mesh(const Mesh& mesh, const std::filesystem::path& path, MeshFormat format,
               const std::vector<std::string>& header_comment) {
  std::string out;
  out.reserve(mesh.vertices.size() * 48 + mesh.faces.size() * 24);
  if (format == MeshFormat::Obj) {
    for (const auto& c : header_comment) out += "# " + c + "\n";
    for (const auto& v : mesh.vertices) {
      out += "v ";
      append_double(out, v[0]);
      out += ' ';
      append_double(out, v[1]);
      out += ' ';
      append_double(out, v[2]);
      out += '\n';
    }
    for (const auto& f : mesh.faces) {
      out += "f " + std::to_string(f[0] + 1) + ' ' + std::to_string(f[1] + 1) + ' ' + std::to_string(f[2] + 1) + '\n';
    }
  } else {
    out += "ply\nformat ascii 1.0\n";
    for (const auto& c : header_comment) out += "comment " + c + "\n";
    out += "element vertex " + std::to_string(mesh.vertices.size()) + "\n";
    out += "property double x\nproperty double y\nproperty double z\n";
    out += "element face " + std::to_string(mesh.faces.size()) + "\n";
    out += "property list uchar int vertex_indices\nend_header\n";
    for (const auto& v : mesh.vertices) {
      append_double(out, v[0]);
      out += ' ';
      append_double(out, v[1]);
      out += ' ';
      append_double(out, v[2]);
      out += '\n';
    }
    for (const auto& f : mesh.faces) {
      out += "3 " + std::to_string(f[0]) + ' ' + std::to_string(f[1]) + ' ' + std::to_string(f[2]) + '\n';
    }
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw Error("cannot write mesh file: " + path.string());
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw Error("failed writing mesh file: " + path.string());
}

void save_mesh(const Mesh& mesh, const std::filesystem::path& path,
               const std::vector<std::string>& header_comment) {
  save_mesh(mesh, path, format_from_path(path), header_comment);
}

AdjacencyList build_adjacency(const Mesh& mesh) {
  const Index n = mesh.num_vertices();
  // For vertex v in CCW face (v, a, b), a precedes b in v's CCW ring.
  std::vector<std::vector<std::pair<Index, Index>>> wedges(n);
  for (const Face& f : mesh.faces) {
    wedges[f[0]].push_back({f[1], f[2]});
    wedges[f[1]].push_back({f[2], f[0]});
    wedges[f[2]].push_back({f[0], f[1]});
  }
  AdjacencyList adj;
  adj.neighbors.resize(n);
  adj.one_ring.resize(n);
  adj.boundary.assign(n, false);
  for (Index v = 0; v < n; ++v) {
    auto& w = wedges[v];
    if (w.empty()) continue;
    std::map<Index, Index> next;
    std::map<Index, int> in_degree;
    for (auto [a, b] : w) {
      if (!next.emplace(a, b).second) {
        throw Error("non-manifold vertex " + std::to_string(v) + " at edge " + edge_str(v, a));
      }
      if (++in_degree[b] > 1) {
        throw Error("non-manifold vertex " + std::to_string(v) + " at edge " + edge_str(b, v));
      }
    }
    std::vector<Index> starts;
    for (auto [a, b] : next) {
      if (!in_degree.count(a)) starts.push_back(a);
    }
    if (starts.size() > 1) {
      throw Error("non-manifold vertex " + std::to_string(v) + ": one-ring splits into " +
                  std::to_string(starts.size()) + " fans");
    }
    const bool open = !starts.empty();
    Index cur = open ? starts.front() : next.begin()->first;
    std::vector<Index> ring{cur};
    while (true) {
      auto it = next.find(cur);
      if (it == next.end()) break;
      cur = it->second;
      if (!open && cur == ring.front()) break;
      ring.push_back(cur);
      if (ring.size() > w.size() + 1) break;
    }
    std::vector<Index> sorted = ring;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t expected = open ? w.size() + 1 : w.size();
    if (ring.size() != expected || std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      throw Error("non-manifold vertex " + std::to_string(v) + ": one-ring is not a single cycle or path");
    }
    adj.boundary[v] = open;
    adj.one_ring[v] = std::move(ring);
    adj.neighbors[v] = std::move(sorted);
  }
  return adj;
}

double edge_length(const Mesh& mesh, Index a, Index b) { return norm(sub(mesh.vertices[a], mesh.vertices[b])); }

double mean_edge_length(const Mesh& mesh) {
  double total = 0.0;
  std::size_t count = 0;
  for (const Face& f : mesh.faces) {
    for (int k = 0; k < 3; ++k) {
      total += edge_length(mesh, f[k], f[(k + 1) % 3]);
      ++count;
    }
  }
  return count ? total / static_cast<double>(count) : 0.0;
}

std::vector<double> graph_geodesic(const Mesh& mesh, const AdjacencyList& adj, Index source) {
  const Index n = mesh.num_vertices();
  if (source < 0 || source >= n) throw Error("geodesic source " + std::to_string(source) + " out of range");
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  std::vector<bool> settled(n, false);
  using Item = std::pair<double, Index>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
  dist[source] = 0.0;
  queue.push({0.0, source});
  while (!queue.empty()) {
    auto [d, v] = queue.top();
    queue.pop();
    if (settled[v]) continue;
    settled[v] = true;
    for (Index u : adj.neighbors[v]) {
      const double cand = d + edge_length(mesh, v, u);
      if (cand < dist[u]) {
        dist[u] = cand;
        queue.push({cand, u});
      }
    }
  }
  return dist;
}

std::vector<double> graph_geodesic(const Mesh& mesh, Index source) {
  return graph_geodesic(mesh, build_adjacency(mesh), source);
}

}  // namespace meshmotion
