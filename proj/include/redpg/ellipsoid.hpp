#pragma once

#include <vector>

#include "redpg/linalg.hpp"

namespace redpg {

// Solid ellipsoid { x : (x - c)^T Q^-1 (x - c) <= 1 } with SPD shape Q.
struct Ellipsoid {
  Vec center;
  Mat shape;
};

inline Ellipsoid make_ellipsoid(const Vec& center, const Mat& shape) {
  if (shape.rows() != shape.cols() || shape.rows() != center.size())
    throw InputError("make_ellipsoid: center/shape dimension mismatch");
  if (!is_symmetric(shape, 1e-10))
    throw InputError("make_ellipsoid: shape must be symmetric");
  Ellipsoid e{center, symmetrize(shape)};
  if (min_eigenvalue(e.shape) <= 0.0)
    throw InputError("make_ellipsoid: shape must be positive definite");
  return e;
}

inline bool contains(const Ellipsoid& e, const Vec& x, double tol = 1e-12) {
  if (x.size() != e.center.size()) throw InputError("contains: dimension mismatch");
  const Vec d = x - e.center;
  return d.dot(e.shape.llt().solve(d)) <= 1.0 + tol;
}

inline Ellipsoid translate(const Ellipsoid& e, const Vec& c) {
  if (c.size() != e.center.size()) throw InputError("translate: dimension mismatch");
  return Ellipsoid{c, e.shape};
}

// Tight outer ellipsoid of the Minkowski sum of concentric ellipsoids:
// (sum_i sqrt(tr Q_i)) * (sum_i Q_i / sqrt(tr Q_i)).
inline Mat boxplus(const std::vector<Mat>& shapes) {
  if (shapes.empty()) throw InputError("boxplus: empty shape list");
  const Eigen::Index n = shapes.front().rows();
  double trace_scale = 0.0;
  Mat weighted = Mat::Zero(n, n);
  for (const Mat& q : shapes) {
    if (q.rows() != n || q.cols() != n) throw InputError("boxplus: dimension mismatch");
    if (!is_symmetric(q, 1e-10) || min_eigenvalue(symmetrize(q)) <= 0.0)
      throw InputError("boxplus: shapes must be SPD");
    const double root_trace = std::sqrt(q.trace());
    trace_scale += root_trace;
    weighted += q / root_trace;
  }
  return symmetrize(trace_scale * weighted);
}

inline Mat boxplus(const Mat& q1, const Mat& q2) { return boxplus(std::vector<Mat>{q1, q2}); }

// Collision margin of Eq.-style penalty: quadratic form of the center offset in
// the combined (boxplus) shape, minus one. Positive certifies disjoint
// position ellipsoids under the outer approximation.
inline double separation_margin(const Vec& p_i, const Vec& p_j, const Mat& q_i_pos,
                                const Mat& q_j_pos) {
  if (p_i.size() != p_j.size() || p_i.size() != q_i_pos.rows())
    throw InputError("separation_margin: dimension mismatch");
  const Eigen::Index n = p_i.size();
  // 1e-9 ridge keeps near-singular combined shapes invertible
  Mat s = boxplus(q_i_pos, q_j_pos) + 1e-9 * Mat::Identity(n, n);
  Eigen::LLT<Mat> llt(s);
  if (llt.info() != Eigen::Success)
    throw NumericalError("separation_margin: combined shape not factorizable");
  const Vec d = p_i - p_j;
  const double quad = d.dot(llt.solve(d));
  if (!std::isfinite(quad)) throw NumericalError("separation_margin: non-finite margin");
  return quad - 1.0;
}

// Exact membership value of d in the Minkowski sum of origin-centered E(Q1),
// E(Q2): the sum equals the intersection over lambda of E(Q1/lambda +
// Q2/(1-lambda)), so d belongs iff the concave function
//   g(lambda) = lambda (1-lambda) d^T [(1-lambda) Q1 + lambda Q2]^-1 d
// stays <= 1 at its maximum. Golden-section search is enough: g is a pointwise
// minimum of affine functions of lambda, hence concave.
inline double minkowski_sum_quadform(const Vec& d, const Mat& q1, const Mat& q2) {
  if (d.squaredNorm() == 0.0) return 0.0;
  const auto g = [&](double lam) {
    const Mat mix = (1.0 - lam) * q1 + lam * q2;
    return lam * (1.0 - lam) * d.dot(mix.llt().solve(d));
  };
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double lo = 0.0, hi = 1.0;
  double x1 = hi - invphi * (hi - lo), x2 = lo + invphi * (hi - lo);
  double f1 = g(x1), f2 = g(x2);
  for (int iter = 0; iter < 90; ++iter) {
    if (f1 < f2) {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + invphi * (hi - lo);
      f2 = g(x2);
    } else {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - invphi * (hi - lo);
      f1 = g(x1);
    }
  }
  return std::max(f1, f2);
}

enum class IntersectionMethod { Fast, Exact };

// Fast path: conservative boxplus test (what the planning penalty uses).
// Exact path: two-ellipsoid overlap via the Minkowski-sum criterion.
// Exact overlap implies the fast path reports overlap, not conversely.
inline bool intersects(const Ellipsoid& e1, const Ellipsoid& e2,
                       IntersectionMethod method = IntersectionMethod::Fast) {
  if (e1.center.size() != e2.center.size()) throw InputError("intersects: dimension mismatch");
  if (method == IntersectionMethod::Fast)
    return separation_margin(e1.center, e2.center, e1.shape, e2.shape) <= 0.0;
  return minkowski_sum_quadform(e2.center - e1.center, e1.shape, e2.shape) <= 1.0 + 1e-12;
}

}  // namespace redpg
