#pragma once

#include <limits>
#include <vector>

#include "redpg/dynamics.hpp"
#include "redpg/ellipsoid.hpp"

namespace redpg {

struct CostWeights {
  Mat q_track;     // n_x x n_x PSD
  Mat q_terminal;  // n_x x n_x PSD
  Mat r_control;   // n_u x n_u PSD
  double lambda_v = 10.0;
  double lambda_frs = 10.0;
  double v_max = 5.0;
};

inline void validate_cost_weights(const CostWeights& w, int n_x, int n_u) {
  const auto check_psd = [](const Mat& m, Eigen::Index n, const char* name) {
    if (m.rows() != n || m.cols() != n)
      throw InputError(std::string("cost weights: ") + name + " has wrong dimension");
    if (!is_symmetric(m, 1e-10) || min_eigenvalue(symmetrize(m)) < -1e-10)
      throw InputError(std::string("cost weights: ") + name + " must be PSD");
  };
  check_psd(w.q_track, n_x, "q_track");
  check_psd(w.q_terminal, n_x, "q_terminal");
  check_psd(w.r_control, n_u, "r_control");
  if (!(w.lambda_v > 0.0)) throw InputError("cost weights: lambda_v must be positive");
  if (!(w.lambda_frs > 0.0)) throw InputError("cost weights: lambda_frs must be positive");
  if (!(w.v_max > 0.0)) throw InputError("cost weights: v_max must be positive");
}

struct ReferenceTrajectory {
  std::vector<Vec> points;  // length T+1; back() is the terminal reference
};

// Straight-line reference: positions interpolate x0 -> goal over T intervals,
// velocities hold the constant segment velocity, other components copy the
// goal. Endpoints are the exact start and goal states.
inline ReferenceTrajectory reference_trajectory(const AgentModel& model, const Vec& x0,
                                                const Vec& goal, int t_steps, double dt) {
  if (t_steps < 1) throw InputError("reference_trajectory: T must be >= 1");
  if (x0.size() != model.state_dim || goal.size() != model.state_dim)
    throw InputError("reference_trajectory: state dimension mismatch");
  if (!(dt > 0.0)) throw InputError("reference_trajectory: dt must be positive");

  ReferenceTrajectory ref;
  ref.points.reserve(t_steps + 1);
  Vec seg_vel = Vec::Zero(model.velocity_indices.size());
  for (std::size_t k = 0; k < model.velocity_indices.size(); ++k)
    seg_vel[k] = (goal[model.position_indices[k]] - x0[model.position_indices[k]]) /
                 (t_steps * dt);
  for (int t = 0; t <= t_steps; ++t) {
    if (t == 0) {
      ref.points.push_back(x0);
      continue;
    }
    if (t == t_steps) {
      ref.points.push_back(goal);
      continue;
    }
    Vec r = goal;
    const double alpha = static_cast<double>(t) / t_steps;
    for (std::size_t k = 0; k < model.position_indices.size(); ++k) {
      const int idx = model.position_indices[k];
      r[idx] = x0[idx] + alpha * (goal[idx] - x0[idx]);
    }
    for (std::size_t k = 0; k < model.velocity_indices.size(); ++k)
      r[model.velocity_indices[k]] = seg_vel[k];
    ref.points.push_back(r);
  }
  return ref;
}

inline double tracking_stage(const Vec& x, const Vec& u, const Vec& r, const CostWeights& w) {
  if (x.size() != r.size() || x.size() != w.q_track.rows() || u.size() != w.r_control.rows())
    throw InputError("tracking_stage: dimension mismatch");
  const Vec e = x - r;
  return e.dot(w.q_track * e) + u.dot(w.r_control * u);
}

inline double tracking_terminal(const Vec& x_t, const Vec& r_f, const CostWeights& w) {
  if (x_t.size() != r_f.size() || x_t.size() != w.q_terminal.rows())
    throw InputError("tracking_terminal: dimension mismatch");
  const Vec e = x_t - r_f;
  return e.dot(w.q_terminal * e);
}

// Smooth speed barrier: near 0 below the limit, grows exponentially past it.
inline double velocity_penalty(const Vec& v, const CostWeights& w) {
  return std::exp(-w.lambda_v * (w.v_max - v.norm()));
}

inline double frs_penalty(double xi, const CostWeights& w) {
  return std::exp(-w.lambda_frs * xi);
}

// Full-horizon control profile, one flattened (H * n_u) vector per agent.
struct StrategyProfile {
  std::vector<Vec> controls;
};

// Per-window neighbor sets: sets[k][i] lists the agents coupled to i at
// window step k (i excluded, indices sorted). mode/d_prox record how the
// sets were screened.
struct NeighborSchedule {
  enum class Mode { Euclidean, Anisotropic };
  std::vector<std::vector<std::vector<int>>> sets;
  Mode mode = Mode::Euclidean;
  double d_prox = std::numeric_limits<double>::infinity();
};

enum class CouplingMode { FrsMargin, EuclideanBarrier };

// Everything one planning window needs: models, window-start states, sliced
// references and FRS position shapes, weights, neighbor schedule. finalize()
// validates and precomputes the pairwise combined-shape inverses the coupling
// penalty evaluates in the optimizer's hot loop.
struct PlanningContext {
  std::vector<AgentModel> models;
  std::vector<Vec> x0;
  std::vector<std::vector<Vec>> refs;        // [agent][k], k = 0..H
  std::vector<CostWeights> weights;          // per agent
  std::vector<std::vector<Mat>> pos_shapes;  // [agent][k] FRS position blocks
  NeighborSchedule schedule;
  double dt = 0.0;
  int horizon = 0;
  CouplingMode coupling = CouplingMode::FrsMargin;
  double d_col = 0.5;

  std::vector<std::vector<Mat>> pair_inverse;  // [k][i * N + j], i < j

  int agent_count() const { return static_cast<int>(models.size()); }

  void finalize() {
    const int n = agent_count();
    if (n == 0) throw InputError("planning context: no agents");
    if (!(dt > 0.0)) throw InputError("planning context: dt must be positive");
    if (horizon < 1) throw InputError("planning context: horizon must be >= 1");
    if (!(d_col > 0.0)) throw InputError("planning context: d_col must be positive");
    const std::size_t np = models.front().position_indices.size();
    for (int i = 0; i < n; ++i) {
      if (models[i].position_indices.size() != np)
        throw InputError("planning context: mixed position dimensions");
      validate_cost_weights(weights.at(i), models[i].state_dim, models[i].control_dim);
      if (x0.at(i).size() != models[i].state_dim)
        throw InputError("planning context: initial state dimension mismatch");
      if (refs.at(i).size() != static_cast<std::size_t>(horizon) + 1)
        throw InputError("planning context: reference window length mismatch");
      if (pos_shapes.at(i).size() != static_cast<std::size_t>(horizon) + 1)
        throw InputError("planning context: shape window length mismatch");
      if (weights[i].lambda_frs != weights[0].lambda_frs)
        throw InputError("planning context: coupling weight must be shared");
    }
    if (schedule.sets.size() != static_cast<std::size_t>(horizon) + 1)
      throw InputError("planning context: schedule window length mismatch");
    for (const auto& per_agent : schedule.sets)
      if (per_agent.size() != static_cast<std::size_t>(n))
        throw InputError("planning context: schedule agent count mismatch");

    pair_inverse.assign(horizon + 1, {});
    if (coupling == CouplingMode::FrsMargin) {
      const Mat ridge = 1e-9 * Mat::Identity(np, np);
      for (int k = 0; k <= horizon; ++k) {
        pair_inverse[k].assign(static_cast<std::size_t>(n) * n, Mat());
        for (int i = 0; i < n; ++i) {
          for (int j = i + 1; j < n; ++j) {
            const Mat s = boxplus(pos_shapes[i][k], pos_shapes[j][k]) + ridge;
            pair_inverse[k][static_cast<std::size_t>(i) * n + j] = s.inverse();
          }
        }
      }
    }
  }

  const Mat& combined_inverse(int k, int i, int j) const {
    const int n = agent_count();
    return i < j ? pair_inverse[k][static_cast<std::size_t>(i) * n + j]
                 : pair_inverse[k][static_cast<std::size_t>(j) * n + i];
  }

  Vec position_of(int agent, const Vec& x) const {
    const auto& idx = models[agent].position_indices;
    Vec p(idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r) p[r] = x[idx[r]];
    return p;
  }

  Vec velocity_of(int agent, const Vec& x) const {
    const auto& idx = models[agent].velocity_indices;
    Vec v(idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r) v[r] = x[idx[r]];
    return v;
  }
};

// Pairwise coupling penalty at window step k. FRS mode: exp(-lambda xi) with
// xi the separation margin in the combined time-k shapes. Ablation mode:
// exp(-lambda (|d| - d_col)), FRS geometry replaced by plain distance.
inline double coupling_value(const PlanningContext& ctx, int k, int i, int j, const Vec& p_i,
                             const Vec& p_j) {
  const double lambda = ctx.weights[i].lambda_frs;
  const Vec d = p_i - p_j;
  if (ctx.coupling == CouplingMode::FrsMargin) {
    const double xi = d.dot(ctx.combined_inverse(k, i, j) * d) - 1.0;
    return std::exp(-lambda * xi);
  }
  const double dist = std::max(d.norm(), 1e-9);
  return std::exp(-lambda * (dist - ctx.d_col));
}

// d(coupling)/d(p_i); the j-gradient is its negation.
inline Vec coupling_gradient(const PlanningContext& ctx, int k, int i, int j, const Vec& p_i,
                             const Vec& p_j) {
  const double lambda = ctx.weights[i].lambda_frs;
  const Vec d = p_i - p_j;
  if (ctx.coupling == CouplingMode::FrsMargin) {
    const Vec s_inv_d = ctx.combined_inverse(k, i, j) * d;
    const double xi = d.dot(s_inv_d) - 1.0;
    return std::exp(-lambda * xi) * (-lambda) * 2.0 * s_inv_d;
  }
  const double dist = std::max(d.norm(), 1e-9);
  return std::exp(-lambda * (dist - ctx.d_col)) * (-lambda) * (d / dist);
}

// Localized stage cost of agent i at window step k: tracking + speed barrier
// + coupling against the listed neighbors, using both agents' time-k shapes.
inline double stage_cost(const PlanningContext& ctx, int i, int k,
                         const std::vector<Vec>& states_at_k, const Vec& u_i,
                         const std::vector<int>& neighbors) {
  const CostWeights& w = ctx.weights[i];
  double cost = tracking_stage(states_at_k[i], u_i, ctx.refs[i][k], w) +
                velocity_penalty(ctx.velocity_of(i, states_at_k[i]), w);
  const Vec p_i = ctx.position_of(i, states_at_k[i]);
  for (int j : neighbors) {
    if (j == i) throw InputError("stage_cost: neighbor set contains the agent itself");
    cost += coupling_value(ctx, k, i, j, p_i, ctx.position_of(j, states_at_k[j]));
  }
  return cost;
}

// Forward-Euler rollout used by planning costs (simulation truth uses RK4).
inline std::vector<Vec> euler_rollout(const AgentModel& model, const Vec& x0,
                                      const Vec& controls_flat, int horizon, double dt) {
  if (controls_flat.size() != static_cast<Eigen::Index>(horizon) * model.control_dim)
    throw InputError("rollout: control vector has wrong length");
  const Vec w = Vec::Zero(model.disturbance_dim);
  std::vector<Vec> states;
  states.reserve(horizon + 1);
  states.push_back(x0);
  for (int k = 0; k < horizon; ++k) {
    const Vec u = controls_flat.segment(static_cast<Eigen::Index>(k) * model.control_dim,
                                        model.control_dim);
    Vec next = states.back() + dt * model.deriv(states.back(), u, w);
    if (!next.allFinite()) throw NumericalError("rollout: state became non-finite");
    states.push_back(std::move(next));
  }
  return states;
}

inline std::vector<std::vector<Vec>> roll_profile(const PlanningContext& ctx,
                                                  const StrategyProfile& profile) {
  if (profile.controls.size() != static_cast<std::size_t>(ctx.agent_count()))
    throw InputError("profile: agent count mismatch");
  std::vector<std::vector<Vec>> states(ctx.agent_count());
  for (int i = 0; i < ctx.agent_count(); ++i)
    states[i] = euler_rollout(ctx.models[i], ctx.x0[i], profile.controls[i], ctx.horizon,
                              ctx.dt);
  return states;
}

namespace detail {

// Shared cost kernel over pre-rolled states. Localized: agent i's tracking,
// barrier, and schedule-listed couplings. Potential: everyone's tracking and
// barrier plus every unordered pair coupling counted once.
inline double localized_cost(const PlanningContext& ctx, int i,
                             const std::vector<std::vector<Vec>>& states,
                             const Vec& controls_i) {
  const CostWeights& w = ctx.weights[i];
  double total = 0.0;
  for (int k = 0; k < ctx.horizon; ++k) {
    const Vec u = controls_i.segment(static_cast<Eigen::Index>(k) * ctx.models[i].control_dim,
                                     ctx.models[i].control_dim);
    const Vec& x = states[i][k];
    total += tracking_stage(x, u, ctx.refs[i][k], w) +
             velocity_penalty(ctx.velocity_of(i, x), w);
    const Vec p_i = ctx.position_of(i, x);
    for (int j : ctx.schedule.sets[k][i])
      total += coupling_value(ctx, k, i, j, p_i, ctx.position_of(j, states[j][k]));
  }
  const Vec& x_h = states[i][ctx.horizon];
  total += tracking_terminal(x_h, ctx.refs[i][ctx.horizon], w) +
           velocity_penalty(ctx.velocity_of(i, x_h), w);
  const Vec p_i = ctx.position_of(i, x_h);
  for (int j : ctx.schedule.sets[ctx.horizon][i])
    total += coupling_value(ctx, ctx.horizon, i, j, p_i,
                            ctx.position_of(j, states[j][ctx.horizon]));
  return total;
}

}  // namespace detail

// Neighborhood-localized cost of agent i under the full profile.
inline double agent_cost(int i, const StrategyProfile& profile, const PlanningContext& ctx) {
  if (i < 0 || i >= ctx.agent_count()) throw InputError("agent_cost: agent index out of range");
  const auto states = roll_profile(ctx, profile);
  return detail::localized_cost(ctx, i, states, profile.controls[i]);
}

// Global potential: per-agent tracking and barrier terms plus full all-pairs
// coupling, each unordered pair once. Unilateral improvements of any agent's
// localized full-coupling cost lower this by exactly the same amount.
inline double potential_value(const StrategyProfile& profile, const PlanningContext& ctx) {
  const auto states = roll_profile(ctx, profile);
  const int n = ctx.agent_count();
  double total = 0.0;
  for (int k = 0; k <= ctx.horizon; ++k) {
    std::vector<Vec> positions(n);
    for (int i = 0; i < n; ++i) {
      const Vec& x = states[i][k];
      const CostWeights& w = ctx.weights[i];
      if (k < ctx.horizon) {
        const Vec u = profile.controls[i].segment(
            static_cast<Eigen::Index>(k) * ctx.models[i].control_dim,
            ctx.models[i].control_dim);
        total += tracking_stage(x, u, ctx.refs[i][k], w);
      } else {
        total += tracking_terminal(x, ctx.refs[i][ctx.horizon], w);
      }
      total += velocity_penalty(ctx.velocity_of(i, x), w);
      positions[i] = ctx.position_of(i, x);
    }
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        total += coupling_value(ctx, k, i, j, positions[i], positions[j]);
  }
  return total;
}

}  // namespace redpg
