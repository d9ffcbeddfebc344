#pragma once

#include "meshmotion/mesh.hpp"

namespace meshmotion {

Mesh make_tetrahedron(double edge = 1.0);

/// Closed fan: center vertex 0 at the origin, ring vertices 1..`ring` on the
/// unit circle in counter-clockwise order, faces oriented towards +z.
Mesh make_fan(int ring = 6);

/// Icosahedron loop-subdivided `subdivisions` times and projected onto the
/// sphere: 10 * 4^k + 2 vertices, 20 * 4^k faces.
Mesh make_icosphere(int subdivisions, double radius = 1.0);

/// Open face-like height field on a cols x rows grid facing +z: an
/// ellipsoidal cap with a nose bump, so the maximal-z vertex is the nose tip.
Mesh make_face_patch(int cols, int rows, double width = 160.0, double height = 200.0);

/// Triangle strip along +x with unit spacing; 2 * `segments` + 2 vertices.
Mesh make_strip(int segments, double spacing = 1.0);

}  // namespace meshmotion
