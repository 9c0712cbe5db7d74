#include <catch2/catch_amalgamated.hpp>

#include "redpg/linalg.hpp"
#include "support.hpp"

using namespace redpg;
using testsupport::make_rng;
using testsupport::random_mat;
using testsupport::random_spd;
using testsupport::random_stable;

TEST_CASE("symmetrize and spd checks") {
  Mat m(2, 2);
  m << 1.0, 2.0, 0.0, 1.0;
  Mat s = symmetrize(m);
  CHECK(s(0, 1) == Catch::Approx(1.0));
  CHECK(is_symmetric(s));
  CHECK(is_spd(Mat::Identity(3, 3)));
  CHECK_FALSE(is_spd(-Mat::Identity(3, 3)));
  Mat floored = eigen_floor(-Mat::Identity(2, 2), 0.5);
  CHECK(min_eigenvalue(floored) == Catch::Approx(0.5));
}

TEST_CASE("lyapunov solve recovers hand-checked solutions") {
  // -x - x = 1  =>  x = -1/2
  Mat a1(1, 1), c1(1, 1);
  a1 << -1.0;
  c1 << 1.0;
  CHECK(solve_lyapunov(a1, c1)(0, 0) == Catch::Approx(-0.5).margin(1e-14));

  Mat a = -Mat::Identity(2, 2);
  Mat c = -2.0 * Mat::Identity(2, 2);
  CHECK((solve_lyapunov(a, c) - Mat::Identity(2, 2)).norm() < 1e-12);
}

TEST_CASE("lyapunov residual stays small on random stable systems") {
  auto rng = make_rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + static_cast<int>(trial % 5);
    Mat a = random_stable(rng, n);
    Mat c = symmetrize(random_mat(rng, n, n));
    Mat x = solve_lyapunov(a, c);
    CHECK((a * x + x * a.transpose() - c).norm() <= 1e-9 * std::max(1.0, c.norm()));
    // symmetric C gives symmetric X
    CHECK((x - x.transpose()).norm() < 1e-9 * std::max(1.0, x.norm()));
  }
}

TEST_CASE("lyapunov rejects a singular pencil") {
  Mat a(2, 2);
  a << 1.0, 0.0, 0.0, -1.0;  // A and -A share spectrum
  CHECK_THROWS_AS(solve_lyapunov(a, Mat::Identity(2, 2)), SolverError);
}

TEST_CASE("care solves the scalar and double-integrator cases exactly") {
  Mat a1(1, 1), b1(1, 1), q1(1, 1), r1(1, 1);
  a1 << 0.0;
  b1 << 1.0;
  q1 << 1.0;
  r1 << 1.0;
  CHECK(solve_care(a1, b1, q1, r1)(0, 0) == Catch::Approx(1.0).margin(1e-10));

  Mat a(2, 2), b(2, 1);
  a << 0.0, 1.0, 0.0, 0.0;
  b << 0.0, 1.0;
  Mat p = solve_care(a, b, Mat::Identity(2, 2), Mat::Identity(1, 1));
  const double s3 = std::sqrt(3.0);
  Mat expect(2, 2);
  expect << s3, 1.0, 1.0, s3;
  CHECK((p - expect).norm() < 1e-8);
}

namespace {

// Independent oracle: integrate dP/dt = A^T P + P A - P B R^-1 B^T P + Q
// from P(0) = 0 until stationary; the limit is the stabilizing CARE solution.
Mat care_by_ode(const Mat& a, const Mat& b, const Mat& q, const Mat& r) {
  const Mat s = b * r.llt().solve(b.transpose());
  Mat p = Mat::Zero(a.rows(), a.cols());
  const auto f = [&](const Mat& pm) -> Mat {
    return a.transpose() * pm + pm * a - pm * s * pm + q;
  };
  const double h = 5e-4;
  for (int step = 0; step < 400000; ++step) {
    Mat k1 = f(p);
    Mat k2 = f(p + 0.5 * h * k1);
    Mat k3 = f(p + 0.5 * h * k2);
    Mat k4 = f(p + h * k3);
    Mat next = p + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if ((next - p).norm() < 1e-13) return next;
    p = next;
  }
  return p;
}

}  // namespace

TEST_CASE("care matches a backward riccati ode integration") {
  auto rng = make_rng(23);
  Mat a = random_mat(rng, 3, 3);
  a -= 0.2 * Mat::Identity(3, 3);
  Mat b = random_mat(rng, 3, 2);
  Mat q = Mat::Identity(3, 3);
  Mat r = random_spd(rng, 2, 0.5);
  Mat p = solve_care(a, b, q, r);
  Mat p_ode = care_by_ode(a, b, q, r);
  CHECK((p - p_ode).norm() < 1e-6 * std::max(1.0, p.norm()));
}

TEST_CASE("care returns stabilizing solutions on random controllable draws") {
  auto rng = make_rng(37);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + static_cast<int>(trial % 3);
    const int m = 1 + static_cast<int>(trial % 2);
    Mat a = random_mat(rng, n, n);
    Mat b = random_mat(rng, n, m);
    Mat q = random_spd(rng, n, 0.2);
    Mat r = random_spd(rng, m, 0.3);
    Mat p = solve_care(a, b, q, r);
    CHECK(min_eigenvalue(symmetrize(p)) > -1e-10);
    const Mat s = b * r.llt().solve(b.transpose());
    CHECK(is_hurwitz(a - s * p));
    CHECK((a.transpose() * p + p * a - p * s * p + q).norm() <=
          1e-8 * std::max(1.0, q.norm()));
  }
}

TEST_CASE("care rejects an unstabilizable pair") {
  Mat a(2, 2), b(2, 1);
  a << 1.0, 0.0, 0.0, 2.0;
  b << 1.0, 0.0;  // the eigenvalue-2 mode is unreachable and unstable
  CHECK_THROWS_AS(solve_care(a, b, Mat::Identity(2, 2), Mat::Identity(1, 1)), SolverError);
}

TEST_CASE("care validates shapes and weights") {
  Mat a = Mat::Zero(2, 2), b = Mat::Zero(2, 1);
  CHECK_THROWS_AS(solve_care(a, b, Mat::Identity(3, 3), Mat::Identity(1, 1)), InputError);
  CHECK_THROWS_AS(solve_care(a, b, Mat::Identity(2, 2), -Mat::Identity(1, 1)), InputError);
}
