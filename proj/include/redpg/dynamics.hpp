#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "redpg/linalg.hpp"

namespace redpg {

// Continuous-time control-affine-in-disturbance agent model dx/dt = f(x, u, w).
// jacobian is optional; when absent, linearize() falls back to finite differences.
// trim_control supplies the nominal control that holds the reference motion
// (hover thrust, matched wheel speeds); linearization and feedback design use it.
struct AgentModel {
  int state_dim = 0;
  int control_dim = 0;
  int disturbance_dim = 0;
  std::function<Vec(const Vec&, const Vec&, const Vec&)> deriv;
  std::function<void(const Vec&, const Vec&, const Vec&, Mat&, Mat&, Mat&)> jacobian;
  std::vector<int> position_indices;
  std::vector<int> velocity_indices;
  Vec control_lower;  // size 0 means unbounded
  Vec control_upper;
  std::function<Vec(const Vec&, const Vec&, double)> trim_control;  // (x0, goal, duration)
  std::string tag;
};

struct Trajectory {
  std::vector<Vec> states;    // length T+1
  std::vector<Vec> controls;  // length T
};

struct Linearization {
  Mat a, b, d;
  Vec x0, u0;
};

struct FeedbackGain {
  Mat k;  // u = trim + K (x - x_ref)
  Mat p;  // Riccati solution used to build it
};

inline void check_model_dims(const AgentModel& m, const Vec& x, const Vec& u, const Vec& w) {
  if (x.size() != m.state_dim) throw InputError("state vector has wrong dimension");
  if (u.size() != m.control_dim) throw InputError("control vector has wrong dimension");
  if (w.size() != m.disturbance_dim) throw InputError("disturbance vector has wrong dimension");
}

// One RK4 step of dx/dt = f(x, u, w) with u, w held over the interval.
inline Vec step(const AgentModel& m, const Vec& x, const Vec& u, const Vec& w, double dt) {
  check_model_dims(m, x, u, w);
  if (dt < 0.0) throw InputError("step: dt must be nonnegative");
  if (dt == 0.0) return x;
  const Vec k1 = m.deriv(x, u, w);
  const Vec k2 = m.deriv(x + 0.5 * dt * k1, u, w);
  const Vec k3 = m.deriv(x + 0.5 * dt * k2, u, w);
  const Vec k4 = m.deriv(x + dt * k3, u, w);
  Vec next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  if (!next.allFinite()) throw NumericalError("step: state became non-finite");
  return next;
}

// Jacobians of f at (x0, u0, w = 0) by central differences,
// h = 1e-6 * (1 + |component|). Analytic model Jacobians are used elsewhere
// for speed; this operation is deliberately derivative-free.
inline Linearization linearize(const AgentModel& m, const Vec& x0, const Vec& u0) {
  const Vec w0 = Vec::Zero(m.disturbance_dim);
  check_model_dims(m, x0, u0, w0);
  Linearization lin;
  lin.x0 = x0;
  lin.u0 = u0;
  lin.a.resize(m.state_dim, m.state_dim);
  lin.b.resize(m.state_dim, m.control_dim);
  lin.d.resize(m.state_dim, m.disturbance_dim);

  const auto column = [&](auto&& eval, double center, int k, Mat& out) {
    const double h = 1e-6 * (1.0 + std::abs(center));
    out.col(k) = (eval(center + h) - eval(center - h)) / (2.0 * h);
  };
  for (int k = 0; k < m.state_dim; ++k) {
    Vec x = x0;
    column([&](double v) { x[k] = v; return m.deriv(x, u0, w0); }, x0[k], k, lin.a);
  }
  for (int k = 0; k < m.control_dim; ++k) {
    Vec u = u0;
    column([&](double v) { u[k] = v; return m.deriv(x0, u, w0); }, u0[k], k, lin.b);
  }
  for (int k = 0; k < m.disturbance_dim; ++k) {
    Vec w = w0;
    column([&](double v) { w[k] = v; return m.deriv(x0, u0, w); }, 0.0, k, lin.d);
  }
  if (!lin.a.allFinite() || !lin.b.allFinite() || !lin.d.allFinite())
    throw NumericalError("linearize: non-finite Jacobian");
  return lin;
}

// Infinite-horizon continuous LQR: K = -R^-1 B^T P with P from the Riccati
// equation, so A + B K is Hurwitz whenever (A, B) is stabilizable.
inline FeedbackGain lqr_gain(const Mat& a, const Mat& b, const Mat& q, const Mat& r) {
  FeedbackGain g;
  g.p = solve_care(a, b, q, r);
  g.k = -r.llt().solve(b.transpose() * g.p);
  if (!is_hurwitz(a + b * g.k))
    throw SolverError("lqr_gain: closed loop not asymptotically stable");
  return g;
}

// 12-state quadrotor: body rates, small-angle Euler attitude, world velocity,
// world position. Control (thrust, torques); bounded disturbance enters the
// three acceleration channels. m = 1 kg, J = diag(0.02, 0.02, 0.04), g = 9.81.
inline AgentModel quadrotor_model() {
  constexpr double mass = 1.0;
  constexpr double jx = 0.02, jy = 0.02, jz = 0.04;
  constexpr double grav = 9.81;

  AgentModel m;
  m.state_dim = 12;
  m.control_dim = 4;
  m.disturbance_dim = 3;
  m.position_indices = {9, 10, 11};
  m.velocity_indices = {6, 7, 8};
  m.tag = "quadrotor";

  m.deriv = [=](const Vec& x, const Vec& u, const Vec& w) {
    const double wx = x[0], wy = x[1], wz = x[2];
    const double cr = std::cos(x[3]), sr = std::sin(x[3]);
    const double cp = std::cos(x[4]), sp = std::sin(x[4]);
    const double cy = std::cos(x[5]), sy = std::sin(x[5]);
    const double thrust = u[0] / mass;
    Vec dx(12);
    dx[0] = (u[1] - (jz - jy) * wy * wz) / jx;
    dx[1] = (u[2] - (jx - jz) * wz * wx) / jy;
    dx[2] = (u[3] - (jy - jx) * wx * wy) / jz;
    dx.segment<3>(3) = x.segment<3>(0);
    dx[6] = thrust * (cy * sp * cr + sy * sr) + w[0];
    dx[7] = thrust * (sy * sp * cr - cy * sr) + w[1];
    dx[8] = thrust * (cp * cr) - grav + w[2];
    dx.segment<3>(9) = x.segment<3>(6);
    return dx;
  };

  m.jacobian = [=](const Vec& x, const Vec& u, const Vec&, Mat& a, Mat& b, Mat& d) {
    const double wx = x[0], wy = x[1], wz = x[2];
    const double cr = std::cos(x[3]), sr = std::sin(x[3]);
    const double cp = std::cos(x[4]), sp = std::sin(x[4]);
    const double cy = std::cos(x[5]), sy = std::sin(x[5]);
    const double thrust = u[0] / mass;
    a = Mat::Zero(12, 12);
    b = Mat::Zero(12, 4);
    d = Mat::Zero(12, 3);
    a(0, 1) = -(jz - jy) * wz / jx;
    a(0, 2) = -(jz - jy) * wy / jx;
    a(1, 0) = -(jx - jz) * wz / jy;
    a(1, 2) = -(jx - jz) * wx / jy;
    a(2, 0) = -(jy - jx) * wy / jz;
    a(2, 1) = -(jy - jx) * wx / jz;
    a.block<3, 3>(3, 0).setIdentity();
    // thrust direction R e3 differentiated in roll, pitch, yaw
    a(6, 3) = thrust * (-cy * sp * sr + sy * cr);
    a(6, 4) = thrust * (cy * cp * cr);
    a(6, 5) = thrust * (-sy * sp * cr + cy * sr);
    a(7, 3) = thrust * (-sy * sp * sr - cy * cr);
    a(7, 4) = thrust * (sy * cp * cr);
    a(7, 5) = thrust * (cy * sp * cr + sy * sr);
    a(8, 3) = thrust * (-cp * sr);
    a(8, 4) = thrust * (-sp * cr);
    a.block<3, 3>(9, 6).setIdentity();
    b(0, 1) = 1.0 / jx;
    b(1, 2) = 1.0 / jy;
    b(2, 3) = 1.0 / jz;
    b(6, 0) = (cy * sp * cr + sy * sr) / mass;
    b(7, 0) = (sy * sp * cr - cy * sr) / mass;
    b(8, 0) = (cp * cr) / mass;
    d.block<3, 3>(6, 0).setIdentity();
  };

  m.trim_control = [=](const Vec&, const Vec&, double) {
    Vec u = Vec::Zero(4);
    u[0] = mass * grav;
    return u;
  };
  return m;
}

// Differential-drive ground vehicle, state (px, py, heading), control
// (left, right wheel speed). Disturbance perturbs the wheel speeds directly.
inline AgentModel fourwd_model(double wheelbase) {
  if (!(wheelbase > 0.0)) throw InputError("fourwd_model: wheelbase must be positive");
  AgentModel m;
  m.state_dim = 3;
  m.control_dim = 2;
  m.disturbance_dim = 2;
  m.position_indices = {0, 1};
  m.velocity_indices = {};  // no velocity states; speed limits live in the wheels
  m.tag = "fourwd";

  m.deriv = [=](const Vec& x, const Vec& u, const Vec& w) {
    const double left = u[0] + w[0];
    const double right = u[1] + w[1];
    const double speed = 0.5 * (left + right);
    Vec dx(3);
    dx[0] = speed * std::cos(x[2]);
    dx[1] = speed * std::sin(x[2]);
    dx[2] = (right - left) / wheelbase;
    return dx;
  };

  m.jacobian = [=](const Vec& x, const Vec& u, const Vec& w, Mat& a, Mat& b, Mat& d) {
    const double speed = 0.5 * (u[0] + w[0] + u[1] + w[1]);
    const double c = std::cos(x[2]), s = std::sin(x[2]);
    a = Mat::Zero(3, 3);
    a(0, 2) = -speed * s;
    a(1, 2) = speed * c;
    b = Mat::Zero(3, 2);
    b(0, 0) = 0.5 * c;
    b(0, 1) = 0.5 * c;
    b(1, 0) = 0.5 * s;
    b(1, 1) = 0.5 * s;
    b(2, 0) = -1.0 / wheelbase;
    b(2, 1) = 1.0 / wheelbase;
    d = b;
  };

  // Matched wheel speeds realizing the straight-line reference speed. The rest
  // linearization is uncontrollable, so feedback design must happen here.
  m.trim_control = [](const Vec& x0, const Vec& goal, double duration) {
    const double dist = (goal.head(2) - x0.head(2)).norm();
    const double speed = duration > 0.0 ? dist / duration : 0.0;
    Vec u(2);
    u << speed, speed;
    return u;
  };
  return m;
}

// Point mass with direct acceleration control, state (position, velocity).
inline AgentModel double_integrator_model(int dim) {
  if (dim != 2 && dim != 3) throw InputError("double_integrator_model: dim must be 2 or 3");
  AgentModel m;
  m.state_dim = 2 * dim;
  m.control_dim = dim;
  m.disturbance_dim = dim;
  for (int i = 0; i < dim; ++i) m.position_indices.push_back(i);
  for (int i = 0; i < dim; ++i) m.velocity_indices.push_back(dim + i);
  m.tag = "double_integrator";

  m.deriv = [dim](const Vec& x, const Vec& u, const Vec& w) {
    Vec dx(2 * dim);
    dx.head(dim) = x.tail(dim);
    dx.tail(dim) = u + w;
    return dx;
  };
  m.jacobian = [dim](const Vec&, const Vec&, const Vec&, Mat& a, Mat& b, Mat& d) {
    a = Mat::Zero(2 * dim, 2 * dim);
    a.topRightCorner(dim, dim).setIdentity();
    b = Mat::Zero(2 * dim, dim);
    b.bottomRows(dim).setIdentity();
    d = b;
  };
  m.trim_control = [dim](const Vec&, const Vec&, double) { return Vec::Zero(dim); };
  return m;
}

inline AgentModel make_model(const std::string& tag, double wheelbase = 0.5,
                             int state_dim_hint = 0) {
  if (tag == "quadrotor") return quadrotor_model();
  if (tag == "fourwd") return fourwd_model(wheelbase);
  if (tag == "double_integrator") {
    const int dim = state_dim_hint > 0 ? state_dim_hint / 2 : 3;
    return double_integrator_model(dim);
  }
  throw InputError("unknown model tag \"" + tag + "\"");
}

}  // namespace redpg
