#pragma once

#include <cmath>
#include <deque>
#include <utility>
#include <vector>

#include "redpg/costs.hpp"

namespace redpg {

struct SolveReport {
  double final_objective = 0.0;
  int iterations = 0;
  double gradient_norm = 0.0;
  bool converged = false;
  int line_search_failures = 0;
};

struct MinimizeResult {
  Vec point;
  SolveReport report;
};

// Deterministic (w=0) forward-Euler rollout of a flattened control sequence.
inline std::vector<Vec> rollout(const AgentModel& model, const Vec& x0, const Vec& controls,
                                double dt) {
  if (model.control_dim < 1 || controls.size() % model.control_dim != 0)
    throw InputError("rollout: control vector length is not a horizon multiple");
  const int horizon = static_cast<int>(controls.size()) / model.control_dim;
  if (horizon < 1) throw InputError("rollout: horizon must be >= 1");
  return euler_rollout(model, x0, controls, horizon, dt);
}

// One agent's best-response subproblem with every other agent's trajectory
// frozen at its current profile. objective() equals agent_cost at the same
// point; gradient() is the exact reverse-mode derivative of objective()
// through the Euler rollout, so finite-difference agreement is limited only
// by the difference step.
class BestResponseProblem {
 public:
  BestResponseProblem(const PlanningContext& ctx, int agent, const StrategyProfile& profile)
      : ctx_(&ctx), agent_(agent), states_(roll_profile(ctx, profile)) {
    if (agent < 0 || agent >= ctx.agent_count())
      throw InputError("best response: agent index out of range");
  }

  int decision_dim() const { return ctx_->horizon * ctx_->models[agent_].control_dim; }

  double objective(const Vec& controls) {
    states_[agent_] = euler_rollout(ctx_->models[agent_], ctx_->x0[agent_], controls,
                                    ctx_->horizon, ctx_->dt);
    return detail::localized_cost(*ctx_, agent_, states_, controls);
  }

  Vec gradient(const Vec& controls) {
    const PlanningContext& ctx = *ctx_;
    const AgentModel& m = ctx.models[agent_];
    const int h = ctx.horizon, nu = m.control_dim, nx = m.state_dim;
    states_[agent_] = euler_rollout(m, ctx.x0[agent_], controls, h, ctx.dt);
    const std::vector<Vec>& xs = states_[agent_];
    const CostWeights& w = ctx.weights[agent_];

    std::vector<Vec> gx(h + 1);
    for (int k = 0; k <= h; ++k) {
      const Vec& x = xs[k];
      const Mat& q = (k < h) ? w.q_track : w.q_terminal;
      Vec gk = 2.0 * (q * (x - ctx.refs[agent_][k]));

      const Vec v = ctx.velocity_of(agent_, x);
      const double vn = v.norm();
      if (vn > 1e-12) {
        const double scale = w.lambda_v * std::exp(-w.lambda_v * (w.v_max - vn)) / vn;
        for (std::size_t r = 0; r < m.velocity_indices.size(); ++r)
          gk[m.velocity_indices[r]] += scale * v[r];
      }

      const auto& neighbors = ctx.schedule.sets[k][agent_];
      if (!neighbors.empty()) {
        const Vec p = ctx.position_of(agent_, x);
        for (int j : neighbors) {
          const Vec gp =
              coupling_gradient(ctx, k, agent_, j, p, ctx.position_of(j, states_[j][k]));
          for (std::size_t r = 0; r < m.position_indices.size(); ++r)
            gk[m.position_indices[r]] += gp[r];
        }
      }
      gx[k] = std::move(gk);
    }

    // adjoint sweep through x^(k+1) = x^(k) + dt f(x^(k), u^(k), 0)
    Vec grad(h * nu);
    Vec lam = gx[h];
    Mat a(nx, nx), b(nx, nu), d(nx, m.disturbance_dim);
    const Vec w0 = Vec::Zero(m.disturbance_dim);
    for (int k = h - 1; k >= 0; --k) {
      const Vec u = controls.segment(static_cast<Eigen::Index>(k) * nu, nu);
      if (m.jacobian) {
        m.jacobian(xs[k], u, w0, a, b, d);
      } else {
        const Linearization lin = linearize(m, xs[k], u);
        a = lin.a;
        b = lin.b;
      }
      grad.segment(static_cast<Eigen::Index>(k) * nu, nu) =
          2.0 * (w.r_control * u) + ctx.dt * (b.transpose() * lam);
      if (k > 0) lam = (gx[k] + lam + ctx.dt * (a.transpose() * lam)).eval();
    }
    return grad;
  }

 private:
  const PlanningContext* ctx_;
  int agent_;
  std::vector<std::vector<Vec>> states_;
};

namespace detail {

inline Vec project_box(Vec x, const Vec& lower, const Vec& upper) {
  if (lower.size() > 0) x = x.cwiseMax(lower);
  if (upper.size() > 0) x = x.cwiseMin(upper);
  return x;
}

}  // namespace detail

// Limited-memory BFGS with Armijo backtracking. Optional box bounds are
// enforced by projecting every trial point; convergence is then measured on
// the projected gradient x - P(x - g). Terminates on gradient_norm <= tol,
// objective decrease <= 1e-12, or max_iter accepted steps. Fully
// deterministic: no randomization anywhere.
template <typename F, typename G>
MinimizeResult minimize(F&& objective, G&& gradient, const Vec& init, double tol = 1e-6,
                        int max_iter = 200, const Vec& lower = Vec(), const Vec& upper = Vec()) {
  if (!(tol > 0.0)) throw InputError("minimize: tol must be positive");
  if (max_iter < 1) throw InputError("minimize: max_iter must be >= 1");
  const Eigen::Index n = init.size();
  if ((lower.size() > 0 && lower.size() != n) || (upper.size() > 0 && upper.size() != n))
    throw InputError("minimize: bound vectors must match the decision dimension");
  const bool bounded = lower.size() > 0 || upper.size() > 0;

  constexpr int kMemory = 10;
  constexpr double kArmijo = 1e-4;

  MinimizeResult res;
  res.point = detail::project_box(init, lower, upper);
  Vec x = res.point;
  double f = objective(x);
  Vec g = gradient(x);
  const auto measure_of = [&](const Vec& pt, const Vec& grd) {
    return bounded ? (pt - detail::project_box(pt - grd, lower, upper)).norm() : grd.norm();
  };
  double measure = measure_of(x, g);

  std::deque<std::pair<Vec, Vec>> pairs;  // (s, y)
  SolveReport& rep = res.report;

  while (measure > tol && rep.iterations < max_iter) {
    // two-loop recursion
    Vec dir = -g;
    if (!pairs.empty()) {
      std::vector<double> alpha(pairs.size());
      for (int idx = static_cast<int>(pairs.size()) - 1; idx >= 0; --idx) {
        const auto& [s, y] = pairs[idx];
        alpha[idx] = s.dot(dir) / s.dot(y);
        dir -= alpha[idx] * y;
      }
      const auto& [s_last, y_last] = pairs.back();
      dir *= s_last.dot(y_last) / y_last.squaredNorm();
      for (std::size_t idx = 0; idx < pairs.size(); ++idx) {
        const auto& [s, y] = pairs[idx];
        dir += (alpha[idx] - y.dot(dir) / s.dot(y)) * s;
      }
    }
    if (g.dot(dir) >= -1e-12 * g.norm() * dir.norm()) {
      pairs.clear();
      dir = -g;
    }

    double alpha = 1.0;
    bool accepted = false;
    Vec x_trial;
    double f_trial = 0.0;
    while (alpha >= 1e-16) {
      x_trial = detail::project_box(x + alpha * dir, lower, upper);
      const Vec step = x_trial - x;
      const double slope = g.dot(step);
      if (slope < 0.0) {
        bool ok = true;
        try {
          f_trial = objective(x_trial);
        } catch (const NumericalError&) {
          ok = false;
        }
        if (ok && std::isfinite(f_trial) && f_trial <= f + kArmijo * slope) {
          accepted = true;
          break;
        }
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      ++rep.line_search_failures;
      break;
    }

    Vec g_trial = gradient(x_trial);
    const Vec s = x_trial - x;
    Vec y = g_trial - g;
    // Powell damping against the diagonal seed B0 = I/gamma keeps the pair
    // usable where the objective has negative curvature along the step;
    // undamped skipping stalls the memory in such regions.
    const double gamma = pairs.empty() ? 1.0
                                       : pairs.back().first.dot(pairs.back().second) /
                                             pairs.back().second.squaredNorm();
    const double s_b_s = s.squaredNorm() / gamma;
    double sy = s.dot(y);
    if (sy < 0.2 * s_b_s) {
      const double theta = 0.8 * s_b_s / (s_b_s - sy);
      y = theta * y + ((1.0 - theta) / gamma) * s;
      sy = s.dot(y);
    }
    if (sy > 0.0) {
      pairs.emplace_back(s, std::move(y));
      if (pairs.size() > static_cast<std::size_t>(kMemory)) pairs.pop_front();
    }
    const double decrease = f - f_trial;
    x = std::move(x_trial);
    g = std::move(g_trial);
    f = f_trial;
    measure = measure_of(x, g);
    ++rep.iterations;
    if (decrease <= 1e-12) break;
  }

  res.point = std::move(x);
  rep.final_objective = f;
  rep.gradient_norm = measure;
  rep.converged = measure <= tol;
  return res;
}

}  // namespace redpg
