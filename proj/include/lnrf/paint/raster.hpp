#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "lnrf/field/camera.hpp"
#include "lnrf/geometry/mesh.hpp"

namespace lnrf {

// Per-triangle square charts on a grid: triangle i occupies the lower-left
// half of cell i. Replaces any existing UVs.
inline void assign_naive_atlas(Mesh& mesh, double padding = 0.1) {
  const std::size_t n = mesh.size();
  const int cells = std::max(1, static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n)))));
  const double s = 1.0 / cells;
  const double pad = padding * s;
  mesh.uvs.resize(n);
  for (std::size_t t = 0; t < n; ++t) {
    const double u0 = (t % cells) * s, v0 = (t / cells) * s;
    mesh.uvs[t] = {Vec2(u0 + pad, v0 + pad), Vec2(u0 + s - pad, v0 + pad), Vec2(u0 + pad, v0 + s - pad)};
  }
}

struct GBuffer {
  static constexpr int kBackground = -1;
  int resolution = 0;
  std::vector<int> face;                  // triangle index or kBackground
  std::vector<std::array<double, 3>> bary;  // perspective-correct, w.r.t. the mesh triangle
  std::vector<Vec2> uv;
  std::vector<double> depth;

  bool covered(std::size_t pix) const { return face[pix] != kBackground; }
  std::size_t coverage() const {
    return static_cast<std::size_t>(std::count_if(face.begin(), face.end(), [](int f) { return f != kBackground; }));
  }
};

struct RasterOptions {
  int resolution = 64;
  double near = 1e-3;
  bool auto_atlas = false;  // assign a naive atlas when the mesh has no UVs
};

namespace detail {

struct ClipVertex {
  Vec3 cam;  // camera-space (right, up, depth)
  std::array<double, 3> bary;
};

inline std::vector<ClipVertex> clip_near(const std::array<ClipVertex, 3>& tri, double near) {
  std::vector<ClipVertex> out;
  for (int i = 0; i < 3; ++i) {
    const ClipVertex& a = tri[i];
    const ClipVertex& b = tri[(i + 1) % 3];
    const bool ina = a.cam.z() >= near, inb = b.cam.z() >= near;
    if (ina) out.push_back(a);
    if (ina != inb) {
      const double t = (near - a.cam.z()) / (b.cam.z() - a.cam.z());
      ClipVertex c;
      c.cam = a.cam + t * (b.cam - a.cam);
      for (int k = 0; k < 3; ++k) c.bary[k] = a.bary[k] + t * (b.bary[k] - a.bary[k]);
      out.push_back(c);
    }
  }
  return out;
}

// Tie-break for pixel centers exactly on an edge; antisymmetric in the edge
// direction so shared edges are owned by exactly one triangle.
inline bool owns_edge(double dx, double dy) { return dy > 0.0 || (dy == 0.0 && dx < 0.0); }

}  // namespace detail

// Z-buffered perspective rasterization sampled at pixel centers.
inline GBuffer rasterize(const Mesh& mesh_in, const Camera& cam, const RasterOptions& opt = {}) {
  const Mesh* mesh = &mesh_in;
  Mesh with_atlas;
  if (!mesh_in.has_uvs()) {
    if (!opt.auto_atlas) throw ConfigError("rasterize: mesh has no UVs and the naive atlas is disabled");
    with_atlas = mesh_in;
    assign_naive_atlas(with_atlas);
    mesh = &with_atlas;
  }
  const int res = opt.resolution;
  GBuffer gb;
  gb.resolution = res;
  gb.face.assign(std::size_t(res) * res, GBuffer::kBackground);
  gb.bary.assign(std::size_t(res) * res, {0, 0, 0});
  gb.uv.assign(std::size_t(res) * res, Vec2::Zero());
  gb.depth.assign(std::size_t(res) * res, std::numeric_limits<double>::infinity());

  Vec3 right, up, forward;
  cam.basis(right, up, forward);
  const double tan_half = std::tan(0.5 * cam.fov_y);
  const auto to_screen = [&](const Vec3& c) {
    const double nx = c.x() / (c.z() * tan_half), ny = c.y() / (c.z() * tan_half);
    return Vec2((nx + 1.0) * 0.5 * res, (1.0 - ny) * 0.5 * res);
  };

  for (std::size_t t = 0; t < mesh->size(); ++t) {
    std::array<detail::ClipVertex, 3> tri;
    for (int k = 0; k < 3; ++k) {
      const Vec3 d = mesh->corner(t, k) - cam.position;
      tri[k].cam = Vec3(d.dot(right), d.dot(up), d.dot(forward));
      tri[k].bary = {0, 0, 0};
      tri[k].bary[k] = 1.0;
    }
    const auto poly = detail::clip_near(tri, opt.near);
    for (std::size_t f = 1; f + 1 < poly.size(); ++f) {
      std::array<const detail::ClipVertex*, 3> v = {&poly[0], &poly[f], &poly[f + 1]};
      std::array<Vec2, 3> s = {to_screen(v[0]->cam), to_screen(v[1]->cam), to_screen(v[2]->cam)};
      const auto edge = [](const Vec2& a, const Vec2& b, const Vec2& p) {
        return (b.x() - a.x()) * (p.y() - a.y()) - (b.y() - a.y()) * (p.x() - a.x());
      };
      double area = edge(s[0], s[1], s[2]);
      if (area == 0.0 || !std::isfinite(area)) continue;
      if (area < 0.0) {
        std::swap(s[1], s[2]);
        std::swap(v[1], v[2]);
        area = -area;
      }
      const double minx = std::min({s[0].x(), s[1].x(), s[2].x()});
      const double maxx = std::max({s[0].x(), s[1].x(), s[2].x()});
      const double miny = std::min({s[0].y(), s[1].y(), s[2].y()});
      const double maxy = std::max({s[0].y(), s[1].y(), s[2].y()});
      const int x0 = std::max(0, static_cast<int>(std::floor(minx - 0.5)));
      const int x1 = std::min(res - 1, static_cast<int>(std::ceil(maxx - 0.5)));
      const int y0 = std::max(0, static_cast<int>(std::floor(miny - 0.5)));
      const int y1 = std::min(res - 1, static_cast<int>(std::ceil(maxy - 0.5)));
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
          const Vec2 p(x + 0.5, y + 0.5);
          std::array<double, 3> e;
          bool inside = true;
          for (int k = 0; k < 3 && inside; ++k) {
            const Vec2& a = s[(k + 1) % 3];
            const Vec2& b = s[(k + 2) % 3];
            e[k] = edge(a, b, p);
            inside = e[k] > 0.0 || (e[k] == 0.0 && detail::owns_edge(b.x() - a.x(), b.y() - a.y()));
          }
          if (!inside) continue;
          // Perspective-correct interpolation via 1/z.
          double inv_z = 0.0;
          std::array<double, 3> attr{0, 0, 0};
          for (int k = 0; k < 3; ++k) {
            const double l = e[k] / area / v[k]->cam.z();
            inv_z += l;
            for (int j = 0; j < 3; ++j) attr[j] += l * v[k]->bary[j];
          }
          const double depth = 1.0 / inv_z;
          const std::size_t pix = std::size_t(y) * res + x;
          if (!(depth < gb.depth[pix])) continue;
          double sum = 0.0;
          for (double& a : attr) {
            a = std::clamp(a * depth, 0.0, 1.0);
            sum += a;
          }
          for (double& a : attr) a /= sum;
          gb.depth[pix] = depth;
          gb.face[pix] = static_cast<int>(t);
          gb.bary[pix] = attr;
          const auto& uvs = mesh->uvs[t];
          gb.uv[pix] = (attr[0] * uvs[0] + attr[1] * uvs[1] + attr[2] * uvs[2]).cwiseMax(Vec2::Zero()).cwiseMin(Vec2::Ones());
        }
    }
  }
  return gb;
}

}  // namespace lnrf
