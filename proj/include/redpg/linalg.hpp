#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/KroneckerProduct>
#include <cmath>
#include <string>

#include "redpg/errors.hpp"

namespace redpg {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline Mat symmetrize(const Mat& m) { return 0.5 * (m + m.transpose()); }

inline bool is_symmetric(const Mat& m, double tol = 1e-10) {
  if (m.rows() != m.cols()) return false;
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= tol * (1.0 + m.cwiseAbs().maxCoeff());
}

inline double min_eigenvalue(const Mat& sym) {
  Eigen::SelfAdjointEigenSolver<Mat> es(sym, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

// Clamp the spectrum of a symmetric matrix from below.
inline Mat eigen_floor(const Mat& sym, double floor_value) {
  Eigen::SelfAdjointEigenSolver<Mat> es(sym);
  Vec ev = es.eigenvalues();
  for (Eigen::Index i = 0; i < ev.size(); ++i) ev[i] = std::max(ev[i], floor_value);
  return symmetrize(es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose());
}

inline bool is_spd(const Mat& m, double sym_tol = 1e-10) {
  if (!is_symmetric(m, sym_tol)) return false;
  return min_eigenvalue(symmetrize(m)) > 0.0;
}

inline bool all_finite(const Mat& m) { return m.allFinite(); }

// Solves A X + X A^T = C by Kronecker vectorization. Column-major vec:
// vec(AX) = (I (x) A) vec X, vec(X A^T) = (A (x) I) vec X.
inline Mat solve_lyapunov(const Mat& a, const Mat& c) {
  const Eigen::Index n = a.rows();
  if (a.cols() != n) throw InputError("solve_lyapunov: A must be square");
  if (c.rows() != n || c.cols() != n) throw InputError("solve_lyapunov: C must match A");
  const Mat eye = Mat::Identity(n, n);
  Mat coeff = Eigen::kroneckerProduct(eye, a) + Eigen::kroneckerProduct(a, eye);
  Eigen::FullPivLU<Mat> lu(coeff);
  if (!lu.isInvertible())
    throw SolverError("solve_lyapunov: singular pencil (A and -A share an eigenvalue)");
  Vec vec_c = Eigen::Map<const Vec>(c.data(), n * n);
  Vec vec_x = lu.solve(vec_c);
  Mat x = Eigen::Map<const Mat>(vec_x.data(), n, n);
  const double resid = (a * x + x * a.transpose() - c).norm();
  const double scale = std::max(1.0, c.norm());
  if (!(resid <= 1e-9 * scale))
    throw SolverError("solve_lyapunov: residual " + std::to_string(resid) +
                      " exceeds tolerance");
  return x;
}

inline bool is_hurwitz(const Mat& a, double margin = 0.0) {
  Eigen::EigenSolver<Mat> es(a, false);
  return (es.eigenvalues().real().array() < -margin).all();
}

namespace detail {

inline double log_abs_det(const Eigen::PartialPivLU<Mat>& lu) {
  double acc = 0.0;
  const auto& u = lu.matrixLU();
  for (Eigen::Index i = 0; i < u.rows(); ++i) acc += std::log(std::abs(u(i, i)));
  return acc;
}

}  // namespace detail

// Continuous-time algebraic Riccati equation A^T P + P A - P B R^-1 B^T P + Q = 0.
// Matrix-sign iteration with determinant scaling locates the stable invariant
// subspace; Newton-Kleinman steps then polish the residual to solver precision.
inline Mat solve_care(const Mat& a, const Mat& b, const Mat& q, const Mat& r) {
  const Eigen::Index n = a.rows();
  if (a.cols() != n) throw InputError("solve_care: A must be square");
  if (b.rows() != n) throw InputError("solve_care: B row count must match A");
  if (q.rows() != n || q.cols() != n) throw InputError("solve_care: Q must match A");
  if (r.rows() != b.cols() || r.cols() != b.cols())
    throw InputError("solve_care: R must be m x m for B with m columns");
  if (!is_symmetric(q) || min_eigenvalue(symmetrize(q)) < -1e-12)
    throw InputError("solve_care: Q must be symmetric positive semidefinite");
  if (!is_spd(r)) throw InputError("solve_care: R must be symmetric positive definite");

  const Mat r_inv = r.llt().solve(Mat::Identity(r.rows(), r.rows()));
  const Mat s = b * r_inv * b.transpose();

  Mat h(2 * n, 2 * n);
  h << a, -s, -symmetrize(q), -a.transpose();

  Mat z = h;
  for (int iter = 0; iter < 100; ++iter) {
    Eigen::PartialPivLU<Mat> lu(z);
    const Mat z_inv = lu.inverse();
    if (!all_finite(z_inv)) throw SolverError("solve_care: sign iteration became singular");
    const double c = std::exp(detail::log_abs_det(lu) / static_cast<double>(2 * n));
    Mat z_next = 0.5 * (z / c + c * z_inv);
    const double change = (z_next - z).norm();
    z = z_next;
    if (change <= 1e-13 * z.norm() && iter >= 2) break;
  }

  // sign(H) = Z; the stable subspace is the kernel of Z + I. Solve
  // [Z12; Z22 + I] P = -[Z11 + I; Z21] in the least-squares sense.
  Mat lhs(2 * n, n), rhs(2 * n, n);
  lhs.topRows(n) = z.topRightCorner(n, n);
  lhs.bottomRows(n) = z.bottomRightCorner(n, n) + Mat::Identity(n, n);
  rhs.topRows(n) = -(z.topLeftCorner(n, n) + Mat::Identity(n, n));
  rhs.bottomRows(n) = -z.bottomLeftCorner(n, n);
  Mat p = symmetrize(lhs.colPivHouseholderQr().solve(rhs));

  const auto residual_of = [&](const Mat& pm) {
    return (a.transpose() * pm + pm * a - pm * s * pm + q).norm();
  };

  // Newton-Kleinman: with K_k = R^-1 B^T P_k, P_{k+1} solves
  // (A - B K_k)^T P + P (A - B K_k) = -Q - K_k^T R K_k.
  double resid = residual_of(p);
  for (int iter = 0; iter < 30 && resid > 1e-12 * std::max(1.0, q.norm()); ++iter) {
    const Mat k = r_inv * b.transpose() * p;
    const Mat a_cl = a - b * k;
    if (!is_hurwitz(a_cl)) break;
    Mat p_next;
    try {
      p_next = symmetrize(solve_lyapunov(a_cl.transpose(), -symmetrize(q) - k.transpose() * r * k));
    } catch (const SolverError&) {
      break;
    }
    const double resid_next = residual_of(p_next);
    if (!all_finite(p_next) || resid_next >= resid) break;
    p = p_next;
    resid = resid_next;
  }

  if (!all_finite(p)) throw SolverError("solve_care: non-finite solution");
  if (!(resid <= 1e-8 * std::max(1.0, q.norm())))
    throw SolverError("solve_care: residual " + std::to_string(resid) +
                      " exceeds tolerance; is (A, B) stabilizable?");
  if (!is_hurwitz(a - s * p))
    throw SolverError("solve_care: closed loop not asymptotically stable");
  return p;
}

}  // namespace redpg
