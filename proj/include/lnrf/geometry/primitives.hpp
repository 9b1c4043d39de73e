#pragma once

#include <cmath>

#include "lnrf/geometry/mesh.hpp"

namespace lnrf {

// Axis-aligned box, outward-facing triangles, 8 vertices / 12 triangles.
inline Mesh make_box(const Vec3& lo, const Vec3& hi) {
  Mesh m;
  for (int i = 0; i < 8; ++i)
    m.vertices.emplace_back(i & 1 ? hi.x() : lo.x(), i & 2 ? hi.y() : lo.y(), i & 4 ? hi.z() : lo.z());
  // Each quad listed counter-clockwise as seen from outside.
  const int quads[6][4] = {{0, 4, 6, 2}, {1, 3, 7, 5}, {0, 1, 5, 4}, {2, 6, 7, 3}, {0, 2, 3, 1}, {4, 5, 7, 6}};
  for (const auto& q : quads) {
    m.triangles.push_back({q[0], q[1], q[2]});
    m.triangles.push_back({q[0], q[2], q[3]});
  }
  return m;
}

// Latitude/longitude sphere with 2 * slices * (stacks - 1) triangles.
// With max_polar < pi the cap around the south pole is left open.
inline Mesh make_uv_sphere(const Vec3& center, double radius, int slices, int stacks, double max_polar = kPi) {
  Mesh m;
  const bool closed = max_polar >= kPi;
  m.vertices.push_back(center + Vec3(0, radius, 0));
  for (int i = 1; i < stacks; ++i) {
    const double polar = max_polar * i / (closed ? stacks : stacks - 1);
    for (int j = 0; j < slices; ++j) {
      const double az = 2.0 * kPi * j / slices;
      m.vertices.push_back(center + radius * Vec3(std::sin(polar) * std::sin(az), std::cos(polar),
                                                  std::sin(polar) * std::cos(az)));
    }
  }
  const auto ring = [&](int i, int j) { return 1 + (i - 1) * slices + (j % slices); };
  for (int j = 0; j < slices; ++j) m.triangles.push_back({0, ring(1, j), ring(1, j + 1)});
  for (int i = 1; i + 1 < stacks; ++i)
    for (int j = 0; j < slices; ++j) {
      m.triangles.push_back({ring(i, j), ring(i + 1, j), ring(i + 1, j + 1)});
      m.triangles.push_back({ring(i, j), ring(i + 1, j + 1), ring(i, j + 1)});
    }
  if (closed) {
    const int south = static_cast<int>(m.vertices.size());
    m.vertices.push_back(center - Vec3(0, radius, 0));
    for (int j = 0; j < slices; ++j) m.triangles.push_back({south, ring(stacks - 1, j + 1), ring(stacks - 1, j)});
  }
  return m;
}

// Appends `other` to `mesh` (primitive assemblies for sketch shapes).
inline void append_mesh(Mesh& mesh, const Mesh& other) {
  const int base = static_cast<int>(mesh.vertices.size());
  mesh.vertices.insert(mesh.vertices.end(), other.vertices.begin(), other.vertices.end());
  for (auto t : other.triangles) mesh.triangles.push_back({t[0] + base, t[1] + base, t[2] + base});
  if (mesh.has_uvs() && other.has_uvs())
    mesh.uvs.insert(mesh.uvs.end(), other.uvs.begin(), other.uvs.end());
  else
    mesh.uvs.clear();
}

}  // namespace lnrf
