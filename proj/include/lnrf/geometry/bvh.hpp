#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "lnrf/geometry/mesh.hpp"
#include "lnrf/geometry/multipole.hpp"
#include "lnrf/geometry/triangle.hpp"

namespace lnrf {

struct Aabb {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = Vec3::Constant(-std::numeric_limits<double>::infinity());

  void extend(const Vec3& p) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  void extend(const Aabb& b) {
    lo = lo.cwiseMin(b.lo);
    hi = hi.cwiseMax(b.hi);
  }
  bool contains(const Aabb& b) const {
    return (lo.array() <= b.lo.array()).all() && (hi.array() >= b.hi.array()).all();
  }
  int longest_axis() const {
    const Vec3 e = hi - lo;
    return e.x() >= e.y() ? (e.x() >= e.z() ? 0 : 2) : (e.y() >= e.z() ? 1 : 2);
  }
  double squared_distance(const Vec3& p) const {
    const Vec3 d = (lo - p).cwiseMax(p - hi).cwiseMax(Vec3::Zero());
    return d.squaredNorm();
  }
};

struct BvhNode {
  Aabb box;
  int left = -1;
  int right = -1;
  int first = 0;  // triangle range [first, first + count) in the BVH mesh
  int count = 0;
  Vec3 centroid = Vec3::Zero();  // area-weighted triangle centroid, the expansion center
  double radius = 0.0;           // max distance from centroid to any corner

  bool is_leaf() const { return left < 0; }
};

struct SurfaceQuery {
  double winding = 0.0;
  double distance = 0.0;
  Vec3 closest_point = Vec3::Zero();
};

inline constexpr double kDefaultBeta = 2.0;
inline constexpr int kDefaultExpansionOrder = 6;
inline constexpr double kWindingThreshold = 0.5;

// Median-split BVH over a triangle mesh. The mesh is stored with its
// triangles permuted into leaf order, so node ranges index `mesh()` directly;
// `source_triangle(i)` maps back to the caller's ordering.
class Bvh {
 public:
  Bvh() = default;

  // `max_order` bounds the far-field expansion order winding_fast may use.
  Bvh(Mesh mesh, int leaf_size = 8, int max_order = kDefaultExpansionOrder)
      : leaf_size_(std::max(1, leaf_size)), max_order_(max_order) {
    if (max_order < 1 || max_order > kMaxExpansionOrder)
      throw ConfigError("expansion order must be in [1, " + std::to_string(kMaxExpansionOrder) + "]");
    if (mesh.empty()) throw ShapeError("cannot build a BVH over an empty mesh");
    mesh.validate();
    const std::size_t n = mesh.size();
    order_.resize(n);
    std::iota(order_.begin(), order_.end(), 0);
    std::vector<Vec3> centers(n);
    for (std::size_t t = 0; t < n; ++t) centers[t] = mesh.centroid(t);
    nodes_.reserve(2 * n / leaf_size_ + 1);
    build(mesh, centers, 0, static_cast<int>(n));

    Mesh sorted;
    sorted.vertices = std::move(mesh.vertices);
    sorted.triangles.reserve(n);
    const bool uv = mesh.has_uvs();
    for (int src : order_) {
      sorted.triangles.push_back(mesh.triangles[src]);
      if (uv) sorted.uvs.push_back(mesh.uvs[src]);
    }
    mesh_ = std::move(sorted);
    stride_ = 3 * MultiIndexSet::count(max_order_ - 1);
    moments_.assign(nodes_.size() * stride_, 0.0);
    compute_moments(0);
  }

  const Mesh& mesh() const { return mesh_; }
  const std::vector<BvhNode>& nodes() const { return nodes_; }
  int leaf_size() const { return leaf_size_; }
  int source_triangle(int i) const { return order_[i]; }
  int max_order() const { return max_order_; }
  // Moments mu_{i, j} of node `id` about its centroid, laid out [i][j].
  const double* moments(int id) const { return moments_.data() + std::size_t(id) * stride_; }
  // Integral of the unit normal over the node's triangles.
  Vec3 dipole(int id) const {
    const std::size_t n = stride_ / 3;
    const double* mu = moments(id);
    return Vec3(mu[0], mu[n], mu[2 * n]);
  }

 private:
  int build(const Mesh& mesh, const std::vector<Vec3>& centers, int first, int last) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    Aabb box, cbox;
    for (int i = first; i < last; ++i) {
      const int t = order_[i];
      for (int k = 0; k < 3; ++k) box.extend(mesh.corner(t, k));
      cbox.extend(centers[t]);
    }
    nodes_[id].box = box;
    nodes_[id].first = first;
    nodes_[id].count = last - first;
    if (last - first <= leaf_size_) return id;

    const int axis = cbox.longest_axis();
    const int mid = first + (last - first) / 2;
    std::nth_element(order_.begin() + first, order_.begin() + mid, order_.begin() + last, [&](int a, int b) {
      const double ca = centers[a][axis], cb = centers[b][axis];
      return ca < cb || (ca == cb && a < b);
    });
    const int l = build(mesh, centers, first, mid);
    const int r = build(mesh, centers, mid, last);
    nodes_[id].left = l;
    nodes_[id].right = r;
    return id;
  }

  void compute_moments(int id) {
    BvhNode& node = nodes_[id];
    if (!node.is_leaf()) {
      compute_moments(node.left);
      compute_moments(node.right);
    }
    Vec3 weighted = Vec3::Zero();
    double area = 0.0;
    for (int t = node.first; t < node.first + node.count; ++t) {
      const double a = mesh_.area_normal(t).norm();
      weighted += a * mesh_.centroid(t);
      area += a;
    }
    node.centroid = area > 0.0 ? Vec3(weighted / area) : Vec3(0.5 * (node.box.lo + node.box.hi));
    double r2 = 0.0;
    for (int t = node.first; t < node.first + node.count; ++t)
      for (int k = 0; k < 3; ++k) r2 = std::max(r2, (mesh_.corner(t, k) - node.centroid).squaredNorm());
    node.radius = std::sqrt(r2);

    double* mu = moments_.data() + std::size_t(id) * stride_;
    const int degree = max_order_ - 1;
    if (node.is_leaf()) {
      for (int t = node.first; t < node.first + node.count; ++t)
        add_triangle_moments(mesh_.corner(t, 0), mesh_.corner(t, 1), mesh_.corner(t, 2), node.centroid, degree, mu);
    } else {
      for (int c : {node.left, node.right})
        translate_moments(moments(c), nodes_[c].centroid, node.centroid, degree, mu);
    }
  }

  Mesh mesh_;
  std::vector<BvhNode> nodes_;
  std::vector<int> order_;
  int leaf_size_ = 8;
  int max_order_ = kDefaultExpansionOrder;
  std::size_t stride_ = 0;
  std::vector<double> moments_;
};

inline Bvh build_bvh(Mesh mesh, int leaf_size = 8, int max_order = kDefaultExpansionOrder) {
  return Bvh(std::move(mesh), leaf_size, max_order);
}

// Generalized winding number: sum of signed solid angles over 4*pi.
inline double winding_exact(const Mesh& mesh, const Vec3& p) {
  double sum = 0.0;
  for (std::size_t t = 0; t < mesh.size(); ++t) sum += solid_angle(mesh.corner(t, 0), mesh.corner(t, 1), mesh.corner(t, 2), p);
  return sum / (4.0 * kPi);
}

// Hierarchical winding number. A node whose centroid is farther than
// beta * radius from p contributes its far-field expansion (order -1 means
// the BVH's max_order); otherwise the
// traversal descends, and leaves are summed exactly in mesh order. With
// beta = inf no node is accepted and the result is bitwise
// winding_exact(bvh.mesh(), p).
inline double winding_fast(const Bvh& bvh, const Vec3& p, double beta = kDefaultBeta, int order = -1) {
  if (order < 0) order = bvh.max_order();
  if (order < 1 || order > bvh.max_order())
    throw ConfigError("expansion order " + std::to_string(order) + " exceeds the BVH's " +
                      std::to_string(bvh.max_order()));
  const auto& nodes = bvh.nodes();
  const Mesh& mesh = bvh.mesh();
  double sum = 0.0;
  int stack[128];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const int id = stack[--top];
    const BvhNode& node = nodes[id];
    if ((node.centroid - p).norm() > beta * node.radius) {
      sum += multipole_solid_angle(bvh.moments(id), node.centroid, p, order, bvh.max_order());
      continue;
    }
    if (node.is_leaf()) {
      for (int t = node.first; t < node.first + node.count; ++t)
        sum += solid_angle(mesh.corner(t, 0), mesh.corner(t, 1), mesh.corner(t, 2), p);
      continue;
    }
    // Right pushed first so the left subtree is summed first (mesh order).
    stack[top++] = node.right;
    stack[top++] = node.left;
  }
  return sum / (4.0 * kPi);
}

struct ClosestPoint {
  double squared_distance = std::numeric_limits<double>::infinity();
  Vec3 point = Vec3::Zero();
  int triangle = -1;
};

// Exact unsigned closest point by branch and bound over node boxes.
inline ClosestPoint closest_point(const Bvh& bvh, const Vec3& p) {
  const auto& nodes = bvh.nodes();
  const Mesh& mesh = bvh.mesh();
  ClosestPoint best;
  int stack[128];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const BvhNode& node = nodes[stack[--top]];
    if (node.box.squared_distance(p) > best.squared_distance) continue;
    if (node.is_leaf()) {
      for (int t = node.first; t < node.first + node.count; ++t) {
        const Vec3 q = closest_point_on_triangle(p, mesh.corner(t, 0), mesh.corner(t, 1), mesh.corner(t, 2));
        const double d2 = (q - p).squaredNorm();
        if (d2 < best.squared_distance) best = {d2, q, t};
      }
      continue;
    }
    const double dl = nodes[node.left].box.squared_distance(p);
    const double dr = nodes[node.right].box.squared_distance(p);
    if (dl <= dr) {
      stack[top++] = node.right;
      stack[top++] = node.left;
    } else {
      stack[top++] = node.left;
      stack[top++] = node.right;
    }
  }
  return best;
}

inline SurfaceQuery surface_query(const Bvh& bvh, const Vec3& p, double beta = kDefaultBeta) {
  const ClosestPoint cp = closest_point(bvh, p);
  return {winding_fast(bvh, p, beta), (cp.point - p).norm(), cp.point};
}

inline int occupancy_indicator(const Bvh& bvh, const Vec3& p, double threshold = kWindingThreshold,
                               double beta = kDefaultBeta) {
  return winding_fast(bvh, p, beta) > threshold ? 1 : 0;
}

}  // namespace lnrf
