#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "lnrf/common.hpp"

namespace lnrf {

using Triangle = std::array<int, 3>;
using TriangleUv = std::array<Vec2, 3>;

inline constexpr double kDegenerateArea = 1e-12;

// Indexed triangle mesh. `uvs` is either empty or holds one UV triple per
// triangle (per-corner coordinates).
struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<Triangle> triangles;
  std::vector<TriangleUv> uvs;

  bool empty() const { return triangles.empty(); }
  bool has_uvs() const { return !uvs.empty() && uvs.size() == triangles.size(); }
  std::size_t size() const { return triangles.size(); }

  Vec3 corner(std::size_t tri, int k) const { return vertices[triangles[tri][k]]; }

  // Half the cross product: area times unit normal (right-hand winding).
  Vec3 area_normal(std::size_t tri) const {
    const Vec3 a = corner(tri, 0), b = corner(tri, 1), c = corner(tri, 2);
    return 0.5 * (b - a).cross(c - a);
  }
  double area(std::size_t tri) const { return area_normal(tri).norm(); }
  Vec3 centroid(std::size_t tri) const { return (corner(tri, 0) + corner(tri, 1) + corner(tri, 2)) / 3.0; }

  void validate() const {
    const int n = static_cast<int>(vertices.size());
    for (std::size_t t = 0; t < triangles.size(); ++t)
      for (int idx : triangles[t])
        if (idx < 0 || idx >= n)
          throw IndexError("triangle " + std::to_string(t) + " references vertex " + std::to_string(idx) +
                           " but mesh has " + std::to_string(n) + " vertices");
    if (!uvs.empty() && uvs.size() != triangles.size())
      throw ShapeError("uv count does not match triangle count");
  }

  // Drops triangles with area <= kDegenerateArea; returns how many were removed.
  std::size_t drop_degenerate() {
    std::size_t kept = 0;
    const bool with_uv = has_uvs();
    for (std::size_t t = 0; t < triangles.size(); ++t) {
      if (area(t) <= kDegenerateArea) continue;
      triangles[kept] = triangles[t];
      if (with_uv) uvs[kept] = uvs[t];
      ++kept;
    }
    const std::size_t dropped = triangles.size() - kept;
    triangles.resize(kept);
    if (with_uv) uvs.resize(kept);
    return dropped;
  }
};

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
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

inline double parse_double(std::string_view tok, int line_no) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size())
    throw ParseError("line " + std::to_string(line_no) + ": malformed number '" + std::string(tok) + "'");
  return v;
}

inline long parse_index(std::string_view tok, int line_no) {
  long v = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size() || v == 0)
    throw ParseError("line " + std::to_string(line_no) + ": malformed index '" + std::string(tok) + "'");
  return v;
}

// OBJ indices are 1-based; negative values count back from the current end.
inline int resolve_index(long raw, std::size_t count, int line_no, const char* what) {
  const long idx = raw > 0 ? raw - 1 : static_cast<long>(count) + raw;
  if (idx < 0 || idx >= static_cast<long>(count))
    throw IndexError("line " + std::to_string(line_no) + ": " + what + " index " + std::to_string(raw) +
                     " out of range (" + std::to_string(count) + " defined)");
  return static_cast<int>(idx);
}

}  // namespace detail

// Parses ASCII OBJ (v / vt / f records). Faces with more than three corners
// are fan-triangulated. UVs are kept only if every face carries vt indices.
inline Mesh parse_obj(std::istream& in) {
  Mesh mesh;
  std::vector<Vec2> texcoords;
  struct FaceRef {
    Triangle v;
    std::array<int, 3> vt;
    bool has_vt;
  };
  std::vector<FaceRef> faces;
  bool all_vt = true;

  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view sv(line);
    if (auto hash = sv.find('#'); hash != std::string_view::npos) sv = sv.substr(0, hash);
    const auto tok = detail::split_ws(sv);
    if (tok.empty()) continue;
    if (tok[0] == "v") {
      if (tok.size() < 4) throw ParseError("line " + std::to_string(line_no) + ": vertex needs 3 coordinates");
      mesh.vertices.emplace_back(detail::parse_double(tok[1], line_no), detail::parse_double(tok[2], line_no),
                                 detail::parse_double(tok[3], line_no));
    } else if (tok[0] == "vt") {
      if (tok.size() < 3) throw ParseError("line " + std::to_string(line_no) + ": texcoord needs 2 coordinates");
      texcoords.emplace_back(detail::parse_double(tok[1], line_no), detail::parse_double(tok[2], line_no));
    } else if (tok[0] == "f") {
      if (tok.size() < 4) throw ParseError("line " + std::to_string(line_no) + ": face needs at least 3 corners");
      std::vector<int> vi, ti;
      bool face_vt = true;
      for (std::size_t k = 1; k < tok.size(); ++k) {
        const std::string_view c = tok[k];
        const auto s1 = c.find('/');
        vi.push_back(detail::resolve_index(detail::parse_index(c.substr(0, s1), line_no), mesh.vertices.size(),
                                           line_no, "vertex"));
        if (s1 == std::string_view::npos) {
          face_vt = false;
          continue;
        }
        const auto rest = c.substr(s1 + 1);
        const auto s2 = rest.find('/');
        const auto vt_tok = rest.substr(0, s2);
        if (vt_tok.empty()) {
          face_vt = false;
          continue;
        }
        ti.push_back(
            detail::resolve_index(detail::parse_index(vt_tok, line_no), texcoords.size(), line_no, "texcoord"));
      }
      all_vt = all_vt && face_vt;
      for (std::size_t k = 1; k + 1 < vi.size(); ++k) {
        FaceRef f{{vi[0], vi[k], vi[k + 1]}, {0, 0, 0}, face_vt};
        if (face_vt) f.vt = {ti[0], ti[k], ti[k + 1]};
        faces.push_back(f);
      }
    }
    // vn, o, g, s, usemtl, mtllib and other records carry nothing we use.
  }

  all_vt = all_vt && !faces.empty();
  for (const auto& f : faces) {
    mesh.triangles.push_back(f.v);
    if (all_vt) mesh.uvs.push_back({texcoords[f.vt[0]], texcoords[f.vt[1]], texcoords[f.vt[2]]});
  }
  if (const auto dropped = mesh.drop_degenerate(); dropped > 0)
    warn("dropped " + std::to_string(dropped) + " degenerate triangle(s)");
  return mesh;
}

inline Mesh load_obj(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open OBJ file '" + path + "'");
  try {
    return parse_obj(in);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  } catch (const IndexError& e) {
    throw IndexError(path + ": " + e.what());
  }
}

// Writes v, vt (one per corner when UVs are present) and f records. When
// `mtl_file` is non-empty the OBJ references it with a single material.
inline void write_obj(std::ostream& out, const Mesh& mesh, const std::string& mtl_file = {},
                      const std::string& material = "material0") {
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  if (!mtl_file.empty()) out << "mtllib " << mtl_file << '\n';
  for (const auto& v : mesh.vertices) out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  const bool uv = mesh.has_uvs();
  if (uv)
    for (const auto& tri : mesh.uvs)
      for (const auto& t : tri) out << "vt " << t.x() << ' ' << t.y() << '\n';
  if (!mtl_file.empty()) out << "usemtl " << material << '\n';
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    out << 'f';
    for (int k = 0; k < 3; ++k) {
      out << ' ' << mesh.triangles[t][k] + 1;
      if (uv) out << '/' << 3 * t + k + 1;
    }
    out << '\n';
  }
}

inline void save_obj(const std::string& path, const Mesh& mesh, const std::string& mtl_file = {}) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write OBJ file '" + path + "'");
  write_obj(out, mesh, mtl_file);
  if (!out) throw IoError("failed writing OBJ file '" + path + "'");
}

}  // namespace lnrf
