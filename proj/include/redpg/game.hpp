#pragma once

#include <algorithm>
#include <optional>
#include <vector>

#include "redpg/optimizer.hpp"

namespace redpg {

enum class Termination { Epsilon, IterationCap };

// Certificate of the iterated best-response solve: the potential value after
// every accepted update, the improvements that were accepted, and the largest
// residual improvement seen in the final candidate round.
struct NeCertificate {
  double epsilon = 0.0;
  int iterations_used = 0;
  std::vector<double> potential_trace;
  std::vector<double> accepted_improvements;
  double max_residual_improvement = 0.0;
  Termination terminated_by = Termination::Epsilon;
};

struct GameOptions {
  double epsilon = 1e-2;
  int k_max = 50;
  double solver_tol = 1e-6;
  int solver_max_iter = 200;
  bool reuse_candidates = true;  // skip re-solving agents the accept cannot affect
};

// Euclidean proximity screening on nominal position predictions:
// j is listed for i at step t iff |p_i - p_j| < d_prox. Pass the worst-case
// one-step closing distance 2 v_max dt as min_d_prox to enforce the screening
// soundness bound; zero skips the check.
inline NeighborSchedule neighbor_sets(const std::vector<std::vector<Vec>>& positions,
                                      double d_prox, double min_d_prox = 0.0) {
  if (!(d_prox > 0.0)) throw InputError("neighbor_sets: d_prox must be positive");
  if (d_prox < min_d_prox)
    throw InputError("neighbor_sets: d_prox below the one-step closing distance");
  const int n = static_cast<int>(positions.size());
  if (n == 0) throw InputError("neighbor_sets: no agents");
  const std::size_t steps = positions.front().size();
  for (const auto& per_agent : positions)
    if (per_agent.size() != steps) throw InputError("neighbor_sets: ragged position windows");

  NeighborSchedule schedule;
  schedule.mode = NeighborSchedule::Mode::Euclidean;
  schedule.d_prox = d_prox;
  schedule.sets.assign(steps, std::vector<std::vector<int>>(n));
  for (std::size_t t = 0; t < steps; ++t)
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        if ((positions[i][t] - positions[j][t]).norm() < d_prox) {
          schedule.sets[t][i].push_back(j);
          schedule.sets[t][j].push_back(i);
        }
  return schedule;
}

// Shape-aware variant: j is listed for i at step t iff p_j lies inside the
// combined reachable position shape, i.e. the pair's separation margin is
// nonpositive. Reduces to a euclidean threshold of 2r on isotropic shapes.
inline NeighborSchedule neighbor_sets_anisotropic(
    const std::vector<std::vector<Vec>>& positions,
    const std::vector<std::vector<Mat>>& pos_shapes) {
  const int n = static_cast<int>(positions.size());
  if (n == 0) throw InputError("neighbor_sets: no agents");
  if (pos_shapes.size() != positions.size())
    throw InputError("neighbor_sets: one shape window per agent required");
  const std::size_t steps = positions.front().size();
  for (int i = 0; i < n; ++i)
    if (positions[i].size() != steps || pos_shapes[i].size() != steps)
      throw InputError("neighbor_sets: ragged windows");

  NeighborSchedule schedule;
  schedule.mode = NeighborSchedule::Mode::Anisotropic;
  schedule.sets.assign(steps, std::vector<std::vector<int>>(n));
  for (std::size_t t = 0; t < steps; ++t)
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        if (separation_margin(positions[i][t], positions[j][t], pos_shapes[i][t],
                              pos_shapes[j][t]) <= 0.0) {
          schedule.sets[t][i].push_back(j);
          schedule.sets[t][j].push_back(i);
        }
  return schedule;
}

inline StrategyProfile zero_profile(const PlanningContext& ctx) {
  StrategyProfile profile;
  for (int i = 0; i < ctx.agent_count(); ++i)
    profile.controls.push_back(
        Vec::Zero(static_cast<Eigen::Index>(ctx.horizon) * ctx.models[i].control_dim));
  return profile;
}

struct BestResponse {
  Vec controls;
  double improvement = 0.0;
  SolveReport report;
};

namespace detail {

inline Vec tile_bound(const Vec& per_step, int horizon) {
  if (per_step.size() == 0) return Vec();
  Vec full(per_step.size() * horizon);
  for (int k = 0; k < horizon; ++k) full.segment(k * per_step.size(), per_step.size()) = per_step;
  return full;
}

}  // namespace detail

// Solve agent i's localized subproblem with the others frozen, warm-started
// from its current controls. The result never worsens the localized cost: a
// regressing solve hands back the old controls with zero improvement.
inline BestResponse best_response(const PlanningContext& ctx, int i,
                                  const StrategyProfile& profile,
                                  const GameOptions& options = {}) {
  BestResponseProblem problem(ctx, i, profile);
  const double j_old = problem.objective(profile.controls[i]);
  auto result = minimize([&problem](const Vec& u) { return problem.objective(u); },
                         [&problem](const Vec& u) { return problem.gradient(u); },
                         profile.controls[i], options.solver_tol, options.solver_max_iter,
                         detail::tile_bound(ctx.models[i].control_lower, ctx.horizon),
                         detail::tile_bound(ctx.models[i].control_upper, ctx.horizon));
  BestResponse br;
  if (result.report.final_objective < j_old) {
    br.controls = std::move(result.point);
    br.improvement = j_old - result.report.final_objective;
  } else {
    br.controls = profile.controls[i];
    br.improvement = 0.0;
  }
  br.report = result.report;
  return br;
}

struct EpsilonNeResult {
  StrategyProfile profile;
  NeCertificate certificate;
};

// Iterated epsilon-best-response on the localized costs. Each round solves a
// candidate per agent against the frozen profile; if the best improvement is
// below epsilon the profile is certified, otherwise exactly that candidate is
// accepted (ties break to the lowest agent index) and only the agents whose
// costs can see the accepted agent are re-solved.
inline EpsilonNeResult solve_epsilon_ne(const PlanningContext& ctx,
                                        const GameOptions& options = {},
                                        std::optional<StrategyProfile> initial = std::nullopt) {
  if (!(options.epsilon > 0.0)) throw InputError("solve_epsilon_ne: epsilon must be positive");
  if (options.k_max < 1) throw InputError("solve_epsilon_ne: k_max must be >= 1");
  const int n = ctx.agent_count();

  EpsilonNeResult out;
  out.profile = initial ? std::move(*initial) : zero_profile(ctx);
  if (out.profile.controls.size() != static_cast<std::size_t>(n))
    throw InputError("solve_epsilon_ne: initial profile agent count mismatch");

  NeCertificate& cert = out.certificate;
  cert.epsilon = options.epsilon;
  cert.potential_trace.push_back(potential_value(out.profile, ctx));

  // reads_agent[j][i]: agent j's localized cost reads agent i's trajectory
  std::vector<std::vector<bool>> reads_agent(n, std::vector<bool>(n, false));
  for (const auto& per_agent : ctx.schedule.sets)
    for (int j = 0; j < n; ++j)
      for (int i : per_agent[j]) reads_agent[j][i] = true;

  std::vector<BestResponse> candidates(n);
  std::vector<bool> stale(n, true);

  while (true) {
    for (int i = 0; i < n; ++i) {
      if (!stale[i]) continue;
      try {
        candidates[i] = best_response(ctx, i, out.profile, options);
      } catch (const NumericalError&) {
        candidates[i] = BestResponse{out.profile.controls[i], 0.0, {}};
      } catch (const SolverError&) {
        candidates[i] = BestResponse{out.profile.controls[i], 0.0, {}};
      }
      stale[i] = false;
    }

    int best = 0;
    for (int i = 1; i < n; ++i)
      if (candidates[i].improvement > candidates[best].improvement) best = i;
    cert.max_residual_improvement = candidates[best].improvement;

    if (candidates[best].improvement < options.epsilon) {
      cert.terminated_by = Termination::Epsilon;
      break;
    }

    out.profile.controls[best] = candidates[best].controls;
    cert.accepted_improvements.push_back(candidates[best].improvement);
    cert.potential_trace.push_back(potential_value(out.profile, ctx));
    ++cert.iterations_used;

    for (int j = 0; j < n; ++j)
      if (j == best || reads_agent[j][best] || !options.reuse_candidates) stale[j] = true;

    if (cert.iterations_used >= options.k_max) {
      cert.terminated_by = Termination::IterationCap;
      break;
    }
  }
  return out;
}

}  // namespace redpg
