#pragma once

// Cartesian multipole machinery for far-field winding numbers.
//
// A cluster of oriented triangles seen from p subtends
//   Omega(p) = integral of (x - p) . n / |x - p|^3 dA.
// With r = c - p for an expansion center c and u = x - c, write the Taylor
// series 1/|r + u| = sum_k a_k(r) u^k over multi-indices k. Then
//   Omega(p) = -sum_i sum_j (j_i + 1) a_{j + e_i}(r) mu_{i, j},
//   mu_{i, j} = integral of n_i u^j dA,
// truncated at |j| <= order - 1 (order 1 is the dipole term).

#include <array>
#include <cmath>
#include <vector>

#include "lnrf/common.hpp"

namespace lnrf {

inline constexpr int kMaxExpansionOrder = 8;

// Multi-indices (a, b, c) with a + b + c <= degree, sorted by total degree.
class MultiIndexSet {
 public:
  explicit MultiIndexSet(int degree) : degree_(degree) {
    lookup_.assign(std::size_t(degree + 1) * (degree + 1) * (degree + 1), -1);
    for (int n = 0; n <= degree; ++n)
      for (int a = n; a >= 0; --a)
        for (int b = n - a; b >= 0; --b) {
          const int c = n - a - b;
          lookup_[key(a, b, c)] = static_cast<int>(idx_.size());
          idx_.push_back({a, b, c});
        }
  }

  int degree() const { return degree_; }
  std::size_t size() const { return idx_.size(); }
  const std::array<int, 3>& operator[](std::size_t i) const { return idx_[i]; }
  // Number of multi-indices of total degree <= n.
  static constexpr std::size_t count(int n) { return n < 0 ? 0 : std::size_t(n + 1) * (n + 2) * (n + 3) / 6; }
  int index(int a, int b, int c) const {
    if (a < 0 || b < 0 || c < 0 || a + b + c > degree_) return -1;
    return lookup_[key(a, b, c)];
  }

 private:
  std::size_t key(int a, int b, int c) const { return (std::size_t(a) * (degree_ + 1) + b) * (degree_ + 1) + c; }

  int degree_;
  std::vector<std::array<int, 3>> idx_;
  std::vector<int> lookup_;
};

inline const MultiIndexSet& multi_indices() {
  static const MultiIndexSet set(kMaxExpansionOrder);
  return set;
}

// Taylor coefficients a_k(r) of u -> 1/|r + u| for |k| <= degree, in
// multi_indices() order. From s = |r + u|^2 and u . grad(s^{-1/2}) one gets
//   n |r|^2 a_k = -(2n - 1) sum_i r_i a_{k - e_i} - (n - 1) sum_i a_{k - 2 e_i}.
inline void inverse_distance_taylor(const Vec3& r, int degree, double* a) {
  const MultiIndexSet& mi = multi_indices();
  const double r2 = r.squaredNorm();
  a[0] = 1.0 / std::sqrt(r2);
  const std::size_t n_terms = MultiIndexSet::count(degree);
  for (std::size_t t = 1; t < n_terms; ++t) {
    const auto& k = mi[t];
    const int n = k[0] + k[1] + k[2];
    double s1 = 0.0, s2 = 0.0;
    for (int i = 0; i < 3; ++i) {
      std::array<int, 3> km = k;
      if (--km[i] >= 0) {
        s1 += r[i] * a[mi.index(km[0], km[1], km[2])];
        if (--km[i] >= 0) s2 += a[mi.index(km[0], km[1], km[2])];
      }
    }
    a[t] = (-(2 * n - 1) * s1 - (n - 1) * s2) / (n * r2);
  }
}

// Monomial u^k.
inline void monomials(const Vec3& u, int degree, double* out) {
  const MultiIndexSet& mi = multi_indices();
  std::array<std::array<double, kMaxExpansionOrder + 1>, 3> pw;
  for (int d = 0; d < 3; ++d) {
    pw[d][0] = 1.0;
    for (int e = 1; e <= degree; ++e) pw[d][e] = pw[d][e - 1] * u[d];
  }
  const std::size_t n = MultiIndexSet::count(degree);
  for (std::size_t t = 0; t < n; ++t) out[t] = pw[0][mi[t][0]] * pw[1][mi[t][1]] * pw[2][mi[t][2]];
}

// Symmetric quadrature on the reference triangle, exact for polynomials up to
// degree 9 (collapsed 5x5 Gauss-Legendre). Points are barycentric (l1, l2);
// weights sum to 1.
struct TriangleRule {
  std::vector<std::array<double, 3>> points;  // (l1, l2, weight)
};

inline const TriangleRule& triangle_rule() {
  static const TriangleRule rule = [] {
    const double x[5] = {-0.9061798459386640, -0.5384693101056831, 0.0, 0.5384693101056831, 0.9061798459386640};
    const double w[5] = {0.2369268850561891, 0.4786286704993665, 0.5688888888888889, 0.4786286704993665,
                         0.2369268850561891};
    TriangleRule r;
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 5; ++j) {
        const double s = 0.5 * (x[i] + 1.0), t = 0.5 * (x[j] + 1.0);
        // (s, t) in the unit square -> (l1, l2) = (s, (1 - s) t), Jacobian (1 - s).
        r.points.push_back({s, (1.0 - s) * t, 0.25 * w[i] * w[j] * (1.0 - s) * 2.0});
      }
    return r;
  }();
  return rule;
}

// Moments mu_{i, j} of one triangle about `center`, |j| <= degree, added into
// `mu` laid out as [i][j] with stride count(degree).
inline void add_triangle_moments(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& center, int degree,
                                 double* mu) {
  const Vec3 an = 0.5 * (b - a).cross(c - a);  // area times unit normal
  const std::size_t n = MultiIndexSet::count(degree);
  std::array<double, MultiIndexSet::count(kMaxExpansionOrder)> mono{};
  for (const auto& q : triangle_rule().points) {
    const Vec3 x = a + q[0] * (b - a) + q[1] * (c - a);
    monomials(x - center, degree, mono.data());
    for (int i = 0; i < 3; ++i) {
      const double f = q[2] * an[i];
      if (f == 0.0) continue;
      for (std::size_t t = 0; t < n; ++t) mu[i * n + t] += f * mono[t];
    }
  }
}

// Re-centers moments from `from` to `to` and adds them into `dst`:
// (u + d)^j = sum_{l <= j} C(j, l) d^(j - l) u^l with d = from - to.
inline void translate_moments(const double* src, const Vec3& from, const Vec3& to, int degree, double* dst) {
  const MultiIndexSet& mi = multi_indices();
  const std::size_t n = MultiIndexSet::count(degree);
  const Vec3 d = from - to;
  std::array<std::array<double, kMaxExpansionOrder + 1>, 3> pw;
  for (int k = 0; k < 3; ++k) {
    pw[k][0] = 1.0;
    for (int e = 1; e <= degree; ++e) pw[k][e] = pw[k][e - 1] * d[k];
  }
  static const auto binom = [] {
    std::array<std::array<double, kMaxExpansionOrder + 1>, kMaxExpansionOrder + 1> c{};
    for (int i = 0; i <= kMaxExpansionOrder; ++i) {
      c[i][0] = 1.0;
      for (int j = 1; j <= i; ++j) c[i][j] = c[i - 1][j - 1] + (j <= i - 1 ? c[i - 1][j] : 0.0);
    }
    return c;
  }();
  for (std::size_t t = 0; t < n; ++t) {
    const auto& j = mi[t];
    for (int l0 = 0; l0 <= j[0]; ++l0)
      for (int l1 = 0; l1 <= j[1]; ++l1)
        for (int l2 = 0; l2 <= j[2]; ++l2) {
          const double coef = binom[j[0]][l0] * binom[j[1]][l1] * binom[j[2]][l2] * pw[0][j[0] - l0] *
                              pw[1][j[1] - l1] * pw[2][j[2] - l2];
          const std::size_t s = static_cast<std::size_t>(mi.index(l0, l1, l2));
          for (int i = 0; i < 3; ++i) dst[i * n + t] += coef * src[i * n + s];
        }
  }
}

// Far-field solid angle from moments about `center`. The moments were stored
// for `stored_order` >= order.
inline double multipole_solid_angle(const double* mu, const Vec3& center, const Vec3& p, int order,
                                    int stored_order) {
  const MultiIndexSet& mi = multi_indices();
  const std::size_t n = MultiIndexSet::count(order - 1);
  const std::size_t stride = MultiIndexSet::count(stored_order - 1);
  std::array<double, MultiIndexSet::count(kMaxExpansionOrder)> a{};
  inverse_distance_taylor(center - p, order, a.data());
  double s = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const auto& j = mi[t];
    s += (j[0] + 1) * a[mi.index(j[0] + 1, j[1], j[2])] * mu[t];
    s += (j[1] + 1) * a[mi.index(j[0], j[1] + 1, j[2])] * mu[stride + t];
    s += (j[2] + 1) * a[mi.index(j[0], j[1], j[2] + 1)] * mu[2 * stride + t];
  }
  return -s;
}

}  // namespace lnrf
