#include "meshmotion/primitives.hpp"

#include <cmath>
#include <map>
#include <numbers>

namespace meshmotion {

Mesh make_tetrahedron(double edge) {
  const double s = edge / std::sqrt(8.0);
  Mesh m;
  m.vertices = {{s, s, s}, {s, -s, -s}, {-s, s, -s}, {-s, -s, s}};
  m.faces = {{0, 1, 2}, {0, 3, 1}, {0, 2, 3}, {1, 3, 2}};
  return m;
}

Mesh make_fan(int ring) {
  Mesh m;
  m.vertices.push_back({0.0, 0.0, 0.0});
  for (int i = 0; i < ring; ++i) {
    const double a = 2.0 * std::numbers::pi * i / ring;
    m.vertices.push_back({std::cos(a), std::sin(a), 0.0});
  }
  for (int i = 0; i < ring; ++i) {
    m.faces.push_back({0, static_cast<Index>(1 + i), static_cast<Index>(1 + (i + 1) % ring)});
  }
  return m;
}

Mesh make_icosphere(int subdivisions, double radius) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  Mesh m;
  m.vertices = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  m.faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
             {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
             {3, 8, 9},  {4, 9, 5},  {2, 4, 11}, {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  auto project = [](Vec3 v) { return scale(v, 1.0 / norm(v)); };
  for (auto& v : m.vertices) v = project(v);
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<Index, Index>, Index> midpoint;
    auto mid = [&](Index a, Index b) {
      auto key = std::minmax(a, b);
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      const Index idx = m.num_vertices();
      m.vertices.push_back(project(scale(add(m.vertices[a], m.vertices[b]), 0.5)));
      midpoint.emplace(key, idx);
      return idx;
    };
    std::vector<Face> faces;
    faces.reserve(m.faces.size() * 4);
    for (const Face& f : m.faces) {
      const Index ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
      faces.push_back({f[0], ab, ca});
      faces.push_back({f[1], bc, ab});
      faces.push_back({f[2], ca, bc});
      faces.push_back({ab, bc, ca});
    }
    m.faces = std::move(faces);
  }
  for (auto& v : m.vertices) v = scale(v, radius);
  return m;
}

Mesh make_face_patch(int cols, int rows, double width, double height) {
  Mesh m;
  const double hw = width / 2.0, hh = height / 2.0;
  for (int j = 0; j < rows; ++j) {
    for (int i = 0; i < cols; ++i) {
      const double x = -hw + width * i / (cols - 1);
      const double y = -hh + height * j / (rows - 1);
      const double u = x / hw, w = y / hh;
      const double cap = 40.0 * std::sqrt(std::max(0.0, 1.0 - 0.5 * u * u - 0.35 * w * w));
      const double nose = 22.0 * std::exp(-(u * u) / 0.012 - ((w + 0.05) * (w + 0.05)) / 0.05);
      m.vertices.push_back({x, y, cap + nose});
    }
  }
  auto id = [cols](int i, int j) { return static_cast<Index>(j * cols + i); };
  for (int j = 0; j + 1 < rows; ++j) {
    for (int i = 0; i + 1 < cols; ++i) {
      m.faces.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      m.faces.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  }
  return m;
}

Mesh make_strip(int segments, double spacing) {
  Mesh m;
  for (int i = 0; i <= segments; ++i) {
    m.vertices.push_back({spacing * i, 0.0, 0.0});
    m.vertices.push_back({spacing * i, spacing, 0.0});
  }
  for (int i = 0; i < segments; ++i) {
    const Index a = 2 * i, b = 2 * i + 1, c = 2 * i + 2, d = 2 * i + 3;
    m.faces.push_back({a, c, d});
    m.faces.push_back({a, d, b});
  }
  return m;
}

}  // namespace meshmotion
