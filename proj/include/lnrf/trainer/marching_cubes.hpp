#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <unordered_map>
#include <vector>

#include "lnrf/field/field.hpp"
#include "lnrf/geometry/mesh.hpp"

namespace lnrf {

namespace detail {

// Cube corner k sits at (k & 1, (k >> 1) & 1, (k >> 2) & 1).
inline Vec3 cube_corner(int k) { return Vec3(k & 1, (k >> 1) & 1, (k >> 2) & 1); }

struct CubeTables {
  std::array<std::array<int, 2>, 12> edges{};
  // Per corner-sign case: closed loops of crossed edges, each ordered
  // counter-clockwise seen from the outside region.
  std::array<std::vector<std::vector<int>>, 256> loops;
};

// The case table is derived rather than transcribed. On every cube face the
// crossed edges are paired into segments; on faces with two diagonal inside
// corners each inside corner is cut off separately, which neighbouring cubes
// reproduce on their shared face, so the surface closes. Segments are
// oriented so that the inside lies on a fixed side, then chained into loops.
inline CubeTables build_cube_tables() {
  CubeTables tab;
  int ne = 0;
  for (int a = 0; a < 8; ++a)
    for (int bit = 0; bit < 3; ++bit)
      if (!(a & (1 << bit))) tab.edges[ne++] = {a, a | (1 << bit)};
  const auto edge_of = [&](int a, int b) {
    for (int e = 0; e < 12; ++e)
      if ((tab.edges[e][0] == a && tab.edges[e][1] == b) || (tab.edges[e][0] == b && tab.edges[e][1] == a)) return e;
    return -1;
  };
  const auto midpoint = [&](int e) -> Vec3 { return 0.5 * (cube_corner(tab.edges[e][0]) + cube_corner(tab.edges[e][1])); };

  for (int cs = 0; cs < 256; ++cs) {
    const auto inside = [&](int k) { return (cs >> k) & 1; };
    std::array<int, 12> next;
    next.fill(-1);
    for (int axis = 0; axis < 3; ++axis)
      for (int side = 0; side < 2; ++side) {
        const int u = axis == 0 ? 1 : 0, v = axis == 2 ? 1 : 2;
        std::array<int, 4> quad{};
        const int uv[4][2] = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
        for (int i = 0; i < 4; ++i) quad[i] = (side << axis) | (uv[i][0] << u) | (uv[i][1] << v);
        Vec3 normal = Vec3::Zero();
        normal[axis] = side ? 1.0 : -1.0;
        int nin = 0;
        for (int k : quad) nin += inside(k);
        if (nin == 0 || nin == 4) continue;
        std::vector<std::array<int, 2>> segs;
        std::vector<Vec3> grads;
        const bool diagonal = nin == 2 && inside(quad[0]) == inside(quad[2]);
        if (diagonal) {
          for (int i = 0; i < 4; ++i) {
            if (!inside(quad[i])) continue;
            segs.push_back({edge_of(quad[i], quad[(i + 3) % 4]), edge_of(quad[i], quad[(i + 1) % 4])});
            grads.push_back(0.25 * (cube_corner(quad[0]) + cube_corner(quad[1]) + cube_corner(quad[2]) +
                                    cube_corner(quad[3])) -
                            cube_corner(quad[i]));
          }
        } else {
          std::array<int, 2> s{};
          int n = 0;
          Vec3 in_mean = Vec3::Zero(), out_mean = Vec3::Zero();
          for (int i = 0; i < 4; ++i) {
            const int a = quad[i], b = quad[(i + 1) % 4];
            if (inside(a) != inside(b)) s[n++] = edge_of(a, b);
            (inside(a) ? in_mean : out_mean) += cube_corner(a);
          }
          segs.push_back(s);
          grads.push_back(out_mean / (4 - nin) - in_mean / nin);
        }
        for (std::size_t i = 0; i < segs.size(); ++i) {
          auto [e0, e1] = segs[i];
          if ((midpoint(e1) - midpoint(e0)).dot(grads[i].cross(normal)) < 0.0) std::swap(e0, e1);
          next[e0] = e1;
        }
      }
    std::array<bool, 12> used{};
    for (int start = 0; start < 12; ++start) {
      if (next[start] < 0 || used[start]) continue;
      std::vector<int> loop;
      for (int e = start; !used[e]; e = next[e]) {
        used[e] = true;
        loop.push_back(e);
      }
      tab.loops[cs].push_back(std::move(loop));
    }
  }
  return tab;
}

inline const CubeTables& cube_tables() {
  static const CubeTables tables = build_cube_tables();
  return tables;
}

}  // namespace detail

// Extracts the iso-surface {f = iso} of a scalar field sampled on a res^3
// grid over [-bound, bound]^3. The inside is f > iso and triangles face
// outward.
inline Mesh marching_cubes(const std::function<double(const Vec3&)>& f, int res, double iso = 0.5,
                           double bound = 1.0) {
  if (res < 8) throw ConfigError("marching_cubes needs res >= 8");
  if (!(bound > 0.0)) throw ConfigError("marching_cubes bound must be > 0");
  const double h = 2.0 * bound / (res - 1);
  const auto point = [&](int i, int j, int k) { return Vec3(-bound + i * h, -bound + j * h, -bound + k * h); };
  const auto gid = [&](int i, int j, int k) { return (std::size_t(k) * res + j) * res + i; };
  std::vector<double> val(std::size_t(res) * res * res);
  for (int k = 0; k < res; ++k)
    for (int j = 0; j < res; ++j)
      for (int i = 0; i < res; ++i) {
        const double v = f(point(i, j, k));
        if (!std::isfinite(v)) throw NumericError("marching_cubes: non-finite field value");
        val[gid(i, j, k)] = v;
      }

  const auto& tab = detail::cube_tables();
  Mesh mesh;
  std::unordered_map<std::size_t, int> vertex_of_edge;
  for (int k = 0; k + 1 < res; ++k)
    for (int j = 0; j + 1 < res; ++j)
      for (int i = 0; i + 1 < res; ++i) {
        std::array<double, 8> cv;
        int cs = 0;
        for (int c = 0; c < 8; ++c) {
          cv[c] = val[gid(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1))];
          if (cv[c] > iso) cs |= 1 << c;
        }
        if (cs == 0 || cs == 255) continue;
        std::array<int, 12> vid;
        vid.fill(-1);
        for (const auto& loop : tab.loops[cs]) {
          for (int e : loop) {
            if (vid[e] >= 0) continue;
            const int a = tab.edges[e][0], b = tab.edges[e][1];
            const int ai = i + (a & 1), aj = j + ((a >> 1) & 1), ak = k + ((a >> 2) & 1);
            const int axis = (a ^ b) == 1 ? 0 : (a ^ b) == 2 ? 1 : 2;
            const std::size_t key = gid(ai, aj, ak) * 3 + axis;
            auto it = vertex_of_edge.find(key);
            if (it == vertex_of_edge.end()) {
              // Keep vertices off the grid corners so faces never collapse.
              const double t = std::clamp((iso - cv[a]) / (cv[b] - cv[a]), 1e-4, 1.0 - 1e-4);
              Vec3 p = point(ai, aj, ak);
              p[axis] += t * h;
              it = vertex_of_edge.emplace(key, static_cast<int>(mesh.vertices.size())).first;
              mesh.vertices.push_back(p);
            }
            vid[e] = it->second;
          }
          for (std::size_t q = 1; q + 1 < loop.size(); ++q)
            mesh.triangles.push_back({vid[loop[0]], vid[loop[q]], vid[loop[q + 1]]});
        }
      }
  if (mesh.triangles.empty()) warn("marching_cubes: no surface at iso " + std::to_string(iso));
  return mesh;
}

// Surface of the field's single-point occupancy at level `iso`.
inline Mesh marching_cubes(const FieldParams& params, int res, double iso = 0.5, double delta_ref = 0.0) {
  const double dref = delta_ref > 0.0 ? delta_ref : 2.0 * params.config.bound / 64.0;
  FieldEvaluator ev(params, /*apply_adapter=*/false);
  return marching_cubes([&](const Vec3& p) { return occupancy_from_sigma(ev.sample(p).sigma, dref); }, res, iso,
                        params.config.bound);
}

}  // namespace lnrf
