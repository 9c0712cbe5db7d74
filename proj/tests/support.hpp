#pragma once

#include <random>

#include "redpg/linalg.hpp"

namespace testsupport {

using redpg::Mat;
using redpg::Vec;

inline std::mt19937_64 make_rng(std::uint64_t seed) { return std::mt19937_64(seed); }

inline Vec random_vec(std::mt19937_64& rng, int n, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  Vec v(n);
  for (int i = 0; i < n; ++i) v[i] = dist(rng);
  return v;
}

inline Mat random_mat(std::mt19937_64& rng, int rows, int cols, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = dist(rng);
  return m;
}

inline Mat random_spd(std::mt19937_64& rng, int n, double min_eig = 0.1) {
  Mat g = random_mat(rng, n, n);
  return redpg::symmetrize(g * g.transpose()) + min_eig * Mat::Identity(n, n);
}

// Random Hurwitz matrix: shift a random matrix left of its spectral abscissa.
inline Mat random_stable(std::mt19937_64& rng, int n) {
  Mat a = random_mat(rng, n, n);
  Eigen::EigenSolver<Mat> es(a, false);
  const double abscissa = es.eigenvalues().real().maxCoeff();
  return a - (abscissa + 0.5 + std::uniform_real_distribution<double>(0.0, 1.0)(rng)) *
                 Mat::Identity(n, n);
}

}  // namespace testsupport
