#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "redpg/costs.hpp"
#include "redpg/reachability.hpp"

namespace redpg {

// Independent deterministic RNG streams: one seed, distinct salts. splitmix64
// whitens the (seed, salt) pair before it feeds the mt19937_64 engine, so
// streams never overlap even for adjacent seeds.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::mt19937_64 seed_stream(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t state = seed ^ (0xa0761d6478bd642fULL * (salt + 1));
  const std::uint64_t a = splitmix64(state);
  const std::uint64_t b = splitmix64(state);
  std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
  return std::mt19937_64(seq);
}

// Per-channel zero-mean Gaussian with standard deviation sigma, rejection
// sampled into [-sigma, sigma]. sigma doubles as the hard bound the
// reachability analysis assumes. sigma = 0 draws nothing.
inline Vec sample_disturbance(double sigma, int n_w, std::mt19937_64& rng) {
  if (sigma < 0.0) throw InputError("sample_disturbance: sigma must be nonnegative");
  if (n_w < 0) throw InputError("sample_disturbance: channel count must be nonnegative");
  Vec w = Vec::Zero(n_w);
  if (sigma == 0.0) return w;
  std::normal_distribution<double> gauss(0.0, sigma);
  for (int c = 0; c < n_w; ++c) {
    double draw = gauss(rng);
    while (std::abs(draw) > sigma) draw = gauss(rng);
    w[c] = draw;
  }
  return w;
}

struct BoxBounds {
  Vec lower, upper;  // position-space box
};

struct AgentSpec {
  Vec x0;
  Vec goal;
};

// FRS construction knobs. The initial shape is diagonal: the position block
// carries the agent's collision radius plus tracking slack, every other state
// gets a thin q0_other band.
struct FrsSettings {
  double q0_pos_radius = 0.3;
  double q0_other = 1e-4;
  double eta = 1e-3;
  int calibration_samples = 300;
  double min_containment = 0.99;
};

struct Scenario {
  std::string model_tag = "double_integrator";
  int position_dim = 3;  // double_integrator only; other models fix their own
  double wheelbase = 0.5;
  std::vector<AgentSpec> agents;
  int t_steps = 50;
  double dt = 0.2;
  int mpc_horizon = 20;
  CostWeights weights;
  FrsSettings frs;
  double sigma = 0.0;
  double d_col = 0.5;
  double d_prox = 2.0;
  NeighborSchedule::Mode neighbor_mode = NeighborSchedule::Mode::Euclidean;
  CouplingMode coupling = CouplingMode::FrsMargin;
  double epsilon = 1e-2;
  int k_max = 10;
  double solver_tol = 1e-6;
  int solver_max_iter = 200;
  std::uint64_t seed = 0;
  bool has_seed = false;
  BoxBounds bounds;
  double min_sep = 1.0;
  bool randomize_each_trial = false;
  Vec control_lower, control_upper;  // optional, tiled over all agents
};

inline AgentModel scenario_model(const Scenario& s) {
  AgentModel m = make_model(s.model_tag, s.wheelbase, 2 * s.position_dim);
  if (s.control_lower.size() > 0 || s.control_upper.size() > 0) {
    if (s.control_lower.size() != m.control_dim || s.control_upper.size() != m.control_dim)
      throw InputError("scenario: control bounds must match the model's control dimension");
    m.control_lower = s.control_lower;
    m.control_upper = s.control_upper;
  }
  return m;
}

// Paper-style tracking weights: position components weighted 10, everything
// else free, identity control effort.
inline CostWeights default_scenario_weights(const AgentModel& model) {
  CostWeights w;
  w.q_track = Mat::Zero(model.state_dim, model.state_dim);
  for (int idx : model.position_indices) w.q_track(idx, idx) = 10.0;
  w.q_terminal = w.q_track;
  w.r_control = Mat::Identity(model.control_dim, model.control_dim);
  return w;
}

inline void validate_scenario(const Scenario& s) {
  const AgentModel model = scenario_model(s);
  if (s.agents.empty()) throw InputError("scenario: agents must be nonempty");
  if (s.t_steps < 1) throw InputError("scenario: t_steps must be >= 1");
  if (s.mpc_horizon < 1 || s.mpc_horizon > s.t_steps)
    throw InputError("scenario: mpc_horizon must satisfy 1 <= mpc_horizon <= t_steps");
  if (!(s.dt > 0.0)) throw InputError("scenario: dt must be positive");
  if (s.sigma < 0.0) throw InputError("scenario: sigma must be nonnegative");
  if (!(s.d_col > 0.0)) throw InputError("scenario: d_col must be positive");
  if (!(s.epsilon > 0.0)) throw InputError("scenario: epsilon must be positive");
  if (s.k_max < 1) throw InputError("scenario: k_max must be >= 1");
  if (!(s.frs.q0_pos_radius > 0.0)) throw InputError("scenario: q0_pos_radius must be positive");
  if (!(s.frs.q0_other > 0.0)) throw InputError("scenario: q0_other must be positive");
  if (!(s.frs.eta > 0.0)) throw InputError("scenario: eta must be positive");
  validate_cost_weights(s.weights, model.state_dim, model.control_dim);
  if (!(s.d_prox >= 2.0 * s.weights.v_max * s.dt))
    throw InputError("scenario: d_prox must cover the one-step closing distance 2 v_max dt");
  const std::size_t np = model.position_indices.size();
  if (s.bounds.lower.size() > 0 &&
      (s.bounds.lower.size() != static_cast<Eigen::Index>(np) ||
       s.bounds.upper.size() != static_cast<Eigen::Index>(np) ||
       !((s.bounds.upper - s.bounds.lower).array() > 0.0).all()))
    throw InputError("scenario: bounds must be a nonempty box over the position space");
  for (const AgentSpec& a : s.agents)
    if (a.x0.size() != model.state_dim || a.goal.size() != model.state_dim)
      throw InputError("scenario: agent state dimension mismatch");
  for (std::size_t i = 0; i < s.agents.size(); ++i)
    for (std::size_t j = i + 1; j < s.agents.size(); ++j) {
      Vec dp_start(np), dp_goal(np);
      for (std::size_t r = 0; r < np; ++r) {
        const int idx = model.position_indices[r];
        dp_start[r] = s.agents[i].x0[idx] - s.agents[j].x0[idx];
        dp_goal[r] = s.agents[i].goal[idx] - s.agents[j].goal[idx];
      }
      if (dp_start.norm() < s.min_sep || dp_goal.norm() < s.min_sep)
        throw InputError("scenario: start/goal separation below min_sep");
    }
}

// Rest state at a position; a fourwd vehicle is additionally pointed along
// the heading argument.
inline Vec state_at_position(const AgentModel& model, const Vec& position, double heading = 0.0) {
  if (position.size() != static_cast<Eigen::Index>(model.position_indices.size()))
    throw InputError("state_at_position: position dimension mismatch");
  Vec x = Vec::Zero(model.state_dim);
  for (std::size_t r = 0; r < model.position_indices.size(); ++r)
    x[model.position_indices[r]] = position[r];
  if (model.tag == "fourwd") x[2] = heading;
  return x;
}

namespace detail {

// Rejection-pack points into the box at pairwise min_sep. Total draw budget
// 1e5 across the set; overruns report a generation failure.
inline std::vector<Vec> pack_points(int n, const BoxBounds& bounds, double min_sep,
                                    std::mt19937_64& rng) {
  const Eigen::Index np = bounds.lower.size();
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<Vec> points;
  long draws = 0;
  while (static_cast<int>(points.size()) < n) {
    if (++draws > 100000)
      throw SolverError("random_scenario: could not pack points at the requested separation");
    Vec p(np);
    for (Eigen::Index c = 0; c < np; ++c)
      p[c] = bounds.lower[c] + unif(rng) * (bounds.upper[c] - bounds.lower[c]);
    bool ok = true;
    for (const Vec& q : points)
      if ((p - q).norm() < min_sep) {
        ok = false;
        break;
      }
    if (ok) points.push_back(std::move(p));
  }
  return points;
}

}  // namespace detail

// Uniformly drawn starts and goals, each set pairwise separated by min_sep.
// The template supplies every non-placement field.
inline Scenario random_scenario(Scenario base, int n, std::uint64_t seed) {
  if (n < 1) throw InputError("random_scenario: need at least one agent");
  if (base.bounds.lower.size() == 0)
    throw InputError("random_scenario: scenario bounds are required");
  const AgentModel model = scenario_model(base);
  if (base.bounds.lower.size() != static_cast<Eigen::Index>(model.position_indices.size()))
    throw InputError("random_scenario: bounds dimension mismatch");

  std::mt19937_64 rng = seed_stream(seed, 0x706c6163ULL);  // placement stream
  const auto starts = detail::pack_points(n, base.bounds, base.min_sep, rng);
  const auto goals = detail::pack_points(n, base.bounds, base.min_sep, rng);

  base.agents.clear();
  for (int i = 0; i < n; ++i) {
    const Vec dir = goals[i].head(2) - starts[i].head(2);
    const double heading = std::atan2(dir[1], dir[0]);
    base.agents.push_back(AgentSpec{state_at_position(model, starts[i], heading),
                                    state_at_position(model, goals[i], heading)});
  }
  base.seed = seed;
  base.has_seed = true;
  return base;
}

// Symmetric four-way crossing reconstruction: 2 m approach legs, 0.2 m lane
// offsets, one straight crosser and two left-turners. Variant 2 adds a fourth
// vehicle far outside the interaction region.
inline Scenario intersection_scenario(int variant = 1) {
  if (variant != 1 && variant != 2)
    throw InputError("intersection_scenario: variant must be 1 or 2");
  Scenario s;
  s.model_tag = "fourwd";
  s.wheelbase = 0.5;
  s.t_steps = 75;  // 15 s at 0.2 s steps
  s.dt = 0.2;
  s.mpc_horizon = 10;
  s.sigma = 0.02;
  s.d_col = 0.3;
  s.d_prox = 2.0;
  s.epsilon = 1e-2;
  s.k_max = 10;
  s.min_sep = 0.35;  // the eastbound lanes end 0.4 m apart by design
  s.frs.q0_pos_radius = 0.2;
  s.seed = 1;
  s.has_seed = true;

  const AgentModel model = scenario_model(s);
  s.weights = default_scenario_weights(model);
  s.weights.v_max = 1.0;
  s.control_lower = Vec::Constant(2, -1.0);
  s.control_upper = Vec::Constant(2, 1.0);

  const double pi = std::acos(-1.0);
  const auto vehicle = [&](double sx, double sy, double sth, double gx, double gy, double gth) {
    Vec start(2), goal(2);
    start << sx, sy;
    goal << gx, gy;
    AgentSpec spec;
    spec.x0 = state_at_position(model, start, sth);
    spec.goal = state_at_position(model, goal, gth);
    return spec;
  };
  s.agents.push_back(vehicle(-2.0, -0.2, 0.0, 2.0, -0.2, 0.0));        // straight crosser
  s.agents.push_back(vehicle(0.2, -2.0, pi / 2, -2.0, 0.2, pi));       // left turn to west
  s.agents.push_back(vehicle(-0.2, 2.0, -pi / 2, 2.0, 0.2, 0.0));      // left turn to east
  if (variant == 2) s.agents.push_back(vehicle(6.0, 6.0, 0.0, 8.0, 6.0, 0.0));  // bystander

  Vec lo(2), hi(2);
  lo << -10.0, -10.0;
  hi << 10.0, 10.0;
  s.bounds = BoxBounds{lo, hi};
  validate_scenario(s);
  return s;
}

// Global straight-line reference of one agent: arrive at t = T-5 (clamped to
// at least one step), then dwell at the goal. Length t_steps + 1.
inline std::vector<Vec> global_reference(const Scenario& s, const AgentModel& model, int agent) {
  const int arrival = std::max(1, s.t_steps - 5);
  const AgentSpec& spec = s.agents.at(agent);
  std::vector<Vec> ref =
      reference_trajectory(model, spec.x0, spec.goal, arrival, s.dt).points;
  Vec dwell = spec.goal;
  while (static_cast<int>(ref.size()) < s.t_steps + 1) ref.push_back(dwell);
  return ref;
}

}  // namespace redpg
