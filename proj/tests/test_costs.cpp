#include <catch2/catch_amalgamated.hpp>

#include "redpg/costs.hpp"
#include "support.hpp"

using namespace redpg;
using testsupport::make_rng;
using testsupport::random_vec;

namespace {

CostWeights unit_weights(int n_x, int n_u) {
  CostWeights w;
  w.q_track = Mat::Identity(n_x, n_x);
  w.q_terminal = Mat::Identity(n_x, n_x);
  w.r_control = Mat::Identity(n_u, n_u);
  return w;
}

NeighborSchedule complete_schedule(int n, int horizon) {
  NeighborSchedule s;
  s.sets.assign(horizon + 1, std::vector<std::vector<int>>(n));
  for (int k = 0; k <= horizon; ++k)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (j != i) s.sets[k][i].push_back(j);
  return s;
}

NeighborSchedule empty_schedule(int n, int horizon) {
  NeighborSchedule s;
  s.sets.assign(horizon + 1, std::vector<std::vector<int>>(n));
  return s;
}

// 2D double-integrator context with constant position shapes.
PlanningContext di_context(const std::vector<Vec>& starts, const std::vector<Vec>& goals,
                           int horizon, bool coupled = true) {
  PlanningContext ctx;
  const int n = static_cast<int>(starts.size());
  ctx.dt = 0.2;
  ctx.horizon = horizon;
  for (int i = 0; i < n; ++i) {
    ctx.models.push_back(double_integrator_model(2));
    ctx.x0.push_back(starts[i]);
    ctx.weights.push_back(unit_weights(4, 2));
    ReferenceTrajectory ref =
        reference_trajectory(ctx.models[i], starts[i], goals[i], horizon, ctx.dt);
    ctx.refs.push_back(ref.points);
    ctx.pos_shapes.emplace_back(horizon + 1, 0.09 * Mat::Identity(2, 2));
  }
  ctx.schedule = coupled ? complete_schedule(n, horizon) : empty_schedule(n, horizon);
  ctx.finalize();
  return ctx;
}

Vec rest_state(double px, double py) {
  Vec x = Vec::Zero(4);
  x[0] = px;
  x[1] = py;
  return x;
}

}  // namespace

TEST_CASE("reference trajectory interpolates the line") {
  AgentModel m = double_integrator_model(2);
  Vec x0 = rest_state(0.0, 0.0);
  Vec goal = rest_state(10.0, 0.0);
  ReferenceTrajectory ref = reference_trajectory(m, x0, goal, 50, 0.2);
  REQUIRE(ref.points.size() == 51);
  for (int t = 0; t <= 50; ++t)
    CHECK(ref.points[t][0] == Catch::Approx(0.2 * t).margin(1e-12));
  CHECK((ref.points.front() - x0).norm() == 0.0);
  CHECK((ref.points.back() - goal).norm() == 0.0);
  // interior velocity holds the segment velocity (10 m over 10 s)
  CHECK(ref.points[25][2] == Catch::Approx(1.0));
  CHECK(ref.points[25][3] == Catch::Approx(0.0));
}

TEST_CASE("degenerate reference stays at the start") {
  AgentModel m = double_integrator_model(3);
  Vec x0 = Vec::Zero(6);
  x0.head(3) << 1.0, 2.0, 3.0;
  ReferenceTrajectory ref = reference_trajectory(m, x0, x0, 10, 0.2);
  for (const Vec& r : ref.points) CHECK((r - x0).norm() == 0.0);
}

TEST_CASE("tracking costs evaluate quadratic forms") {
  CostWeights w = unit_weights(4, 2);
  Vec r = Vec::Zero(4);
  CHECK(tracking_stage(r, Vec::Zero(2), r, w) == 0.0);

  Vec x = Vec::Zero(4);
  x[0] = 1.0;
  Vec u(2);
  u << 2.0, 0.0;
  CHECK(tracking_stage(x, u, r, w) == Catch::Approx(5.0));

  Vec e = Vec::Zero(4);
  e[0] = 3.0;
  e[1] = 4.0;
  CHECK(tracking_terminal(e, Vec::Zero(4), w) == Catch::Approx(25.0));
  CostWeights w2 = w;
  w2.q_terminal *= 2.0;
  CHECK(tracking_terminal(e, Vec::Zero(4), w2) == Catch::Approx(50.0));
}

TEST_CASE("position-only weights count only position error") {
  AgentModel m = quadrotor_model();
  CostWeights w = unit_weights(12, 4);
  w.q_track = Mat::Zero(12, 12);
  for (int i = 9; i < 12; ++i) w.q_track(i, i) = 10.0;
  Vec r = Vec::Zero(12);
  Vec x = Vec::Zero(12);
  x.segment<3>(3).setConstant(7.0);   // attitude error is free
  x.segment<3>(9).setConstant(1.0);   // position error costs 10 each
  Vec u(4);
  u << 1.0, 2.0, 0.0, 0.0;
  CHECK(tracking_stage(x, u, r, w) == Catch::Approx(30.0 + 5.0));
}

TEST_CASE("velocity barrier values") {
  CostWeights w = unit_weights(4, 2);
  w.lambda_v = 10.0;
  w.v_max = 5.0;
  Vec v(2);
  v << 5.0, 0.0;
  CHECK(velocity_penalty(v, w) == Catch::Approx(1.0));
  v << 4.5, 0.0;
  CHECK(velocity_penalty(v, w) == Catch::Approx(std::exp(-5.0)).epsilon(1e-12));
  v << 5.1, 0.0;
  CHECK(velocity_penalty(v, w) == Catch::Approx(std::exp(1.0)).epsilon(1e-12));
  CHECK(velocity_penalty(Vec::Zero(0), w) == Catch::Approx(std::exp(-50.0)));
}

TEST_CASE("frs penalty values") {
  CostWeights w = unit_weights(4, 2);
  w.lambda_frs = 10.0;
  CHECK(frs_penalty(0.0, w) == 1.0);
  CHECK(frs_penalty(1.0, w) == Catch::Approx(std::exp(-10.0)).epsilon(1e-12));
  CHECK(frs_penalty(-1.0, w) == Catch::Approx(std::exp(10.0)).epsilon(1e-12));
}

TEST_CASE("stage cost reduces to the resting barrier when alone on reference") {
  PlanningContext ctx = di_context({rest_state(0, 0)}, {rest_state(0, 0)}, 5, false);
  std::vector<Vec> states{rest_state(0, 0)};
  const double c = stage_cost(ctx, 0, 0, states, Vec::Zero(2), {});
  CHECK(c == Catch::Approx(std::exp(-50.0)).epsilon(1e-12));
}

TEST_CASE("distant agents contribute negligible coupling") {
  PlanningContext ctx =
      di_context({rest_state(0, 0), rest_state(30, 0)}, {rest_state(0, 0), rest_state(30, 0)}, 5);
  std::vector<Vec> states{rest_state(0, 0), rest_state(30, 0)};
  const double with_neighbor = stage_cost(ctx, 0, 0, states, Vec::Zero(2), {1});
  const double alone = stage_cost(ctx, 0, 0, states, Vec::Zero(2), {});
  CHECK(with_neighbor - alone < 1e-20);
  CHECK(with_neighbor - alone >= 0.0);
}

TEST_CASE("coupling is symmetric between the pair") {
  auto rng = make_rng(61);
  PlanningContext ctx =
      di_context({rest_state(0, 0), rest_state(1, 0)}, {rest_state(2, 2), rest_state(-1, 3)}, 5);
  for (int trial = 0; trial < 20; ++trial) {
    Vec p1 = random_vec(rng, 2), p2 = random_vec(rng, 2);
    CHECK(coupling_value(ctx, 2, 0, 1, p1, p2) == coupling_value(ctx, 2, 1, 0, p2, p1));
  }
}

TEST_CASE("stage cost rejects self-neighboring") {
  PlanningContext ctx = di_context({rest_state(0, 0)}, {rest_state(1, 1)}, 5, false);
  std::vector<Vec> states{rest_state(0, 0)};
  CHECK_THROWS_AS(stage_cost(ctx, 0, 0, states, Vec::Zero(2), {0}), InputError);
}

TEST_CASE("agent at its goal pays only barrier residuals") {
  const int horizon = 8;
  PlanningContext ctx = di_context({rest_state(3, -1)}, {rest_state(3, -1)}, horizon, false);
  StrategyProfile profile;
  profile.controls.push_back(Vec::Zero(2 * horizon));
  const double cost = agent_cost(0, profile, ctx);
  CHECK(cost == Catch::Approx((horizon + 1) * std::exp(-50.0)).epsilon(1e-10));
}

TEST_CASE("localized cost with a complete schedule equals the full-coupling cost") {
  auto rng = make_rng(67);
  const int horizon = 6;
  PlanningContext ctx = di_context({rest_state(0, 0), rest_state(1.2, 0), rest_state(0, 1.1)},
                                   {rest_state(2, 2), rest_state(-1, 1), rest_state(1, -2)},
                                   horizon);
  StrategyProfile profile;
  for (int i = 0; i < 3; ++i) profile.controls.push_back(random_vec(rng, 2 * horizon, 0.5));

  // manual full-coupling cost of agent 0
  auto states = roll_profile(ctx, profile);
  double manual = 0.0;
  for (int k = 0; k <= horizon; ++k) {
    const Vec& x = states[0][k];
    if (k < horizon) {
      manual += tracking_stage(x, profile.controls[0].segment(2 * k, 2), ctx.refs[0][k],
                               ctx.weights[0]);
    } else {
      manual += tracking_terminal(x, ctx.refs[0][horizon], ctx.weights[0]);
    }
    manual += velocity_penalty(ctx.velocity_of(0, x), ctx.weights[0]);
    for (int j = 1; j < 3; ++j)
      manual += coupling_value(ctx, k, 0, j, ctx.position_of(0, x),
                               ctx.position_of(j, states[j][k]));
  }
  CHECK(agent_cost(0, profile, ctx) == Catch::Approx(manual).epsilon(1e-12));
}

TEST_CASE("potential equals the localized cost for a single agent") {
  const int horizon = 5;
  PlanningContext ctx = di_context({rest_state(0, 0)}, {rest_state(4, 1)}, horizon, false);
  StrategyProfile profile;
  profile.controls.push_back(Vec::Ones(2 * horizon) * 0.3);
  CHECK(potential_value(profile, ctx) ==
        Catch::Approx(agent_cost(0, profile, ctx)).epsilon(1e-12));
}

TEST_CASE("pair coupling is counted once in the potential, twice across agents") {
  auto rng = make_rng(71);
  const int horizon = 6;
  std::vector<Vec> starts{rest_state(0, 0), rest_state(0.8, 0.2)};
  std::vector<Vec> goals{rest_state(1, 1), rest_state(-1, 0.5)};
  PlanningContext coupled = di_context(starts, goals, horizon, true);
  PlanningContext uncoupled = di_context(starts, goals, horizon, false);

  StrategyProfile profile;
  for (int i = 0; i < 2; ++i) profile.controls.push_back(random_vec(rng, 2 * horizon, 0.4));

  const double phi_coupling =
      potential_value(profile, coupled) -
      (agent_cost(0, profile, uncoupled) + agent_cost(1, profile, uncoupled));
  const double agent_couplings =
      (agent_cost(0, profile, coupled) - agent_cost(0, profile, uncoupled)) +
      (agent_cost(1, profile, coupled) - agent_cost(1, profile, uncoupled));
  CHECK(phi_coupling == Catch::Approx(agent_couplings / 2.0).epsilon(1e-10));
  CHECK(phi_coupling > 0.0);
}

TEST_CASE("unilateral cost changes equal potential changes") {
  auto rng = make_rng(73);
  const int horizon = 7;
  PlanningContext ctx = di_context({rest_state(0, 0), rest_state(1, 0), rest_state(0.5, 0.9)},
                                   {rest_state(2, 1), rest_state(-1, 1), rest_state(0.5, -1)},
                                   horizon);
  for (int trial = 0; trial < 10; ++trial) {
    StrategyProfile a;
    for (int i = 0; i < 3; ++i) a.controls.push_back(random_vec(rng, 2 * horizon, 0.5));
    const int mover = trial % 3;
    StrategyProfile b = a;
    b.controls[mover] = random_vec(rng, 2 * horizon, 0.5);

    const double dj = agent_cost(mover, a, ctx) - agent_cost(mover, b, ctx);
    const double dphi = potential_value(a, ctx) - potential_value(b, ctx);
    CHECK(dj == Catch::Approx(dphi).margin(1e-8));
  }
}

TEST_CASE("weight validation rejects bad inputs") {
  CostWeights w = unit_weights(4, 2);
  w.lambda_v = 0.0;
  CHECK_THROWS_AS(validate_cost_weights(w, 4, 2), InputError);
  w = unit_weights(4, 2);
  w.q_track = -Mat::Identity(4, 4);
  CHECK_THROWS_AS(validate_cost_weights(w, 4, 2), InputError);
  w = unit_weights(4, 2);
  CHECK_THROWS_AS(validate_cost_weights(w, 6, 2), InputError);
}

TEST_CASE("context validation catches inconsistent windows") {
  PlanningContext ctx = di_context({rest_state(0, 0)}, {rest_state(1, 1)}, 5, false);
  ctx.refs[0].pop_back();
  CHECK_THROWS_AS(ctx.finalize(), InputError);
}

TEST_CASE("rollout diverging to non-finite states is reported") {
  AgentModel m = double_integrator_model(2);
  Vec huge = Vec::Constant(2 * 5, 1e160);
  // accelerates to overflow through repeated Euler squaring of tracking error
  AgentModel blow = m;
  blow.deriv = [](const Vec& x, const Vec& u, const Vec&) {
    Vec dx(4);
    dx.head(2) = x.tail(2);
    dx.tail(2) = u.array().square().matrix() * 1e200;
    return dx;
  };
  CHECK_THROWS_AS(euler_rollout(blow, Vec::Zero(4), huge, 5, 0.2), NumericalError);
}
