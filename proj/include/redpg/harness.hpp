#pragma once

#include <array>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "redpg/game.hpp"
#include "redpg/scenario.hpp"

namespace redpg {

// One trial's full story: disturbance-free planned trajectories, the
// disturbed closed-loop execution, the drawn disturbances, one equilibrium
// certificate per planning step, and the reachability tubes used.
struct ExecutionRecord {
  std::vector<Trajectory> nominal;
  std::vector<Trajectory> executed;
  std::vector<std::vector<Vec>> disturbances;  // [agent][t]
  std::vector<NeCertificate> certificates;     // one per planning step
  std::vector<std::shared_ptr<const CalibratedFrs>> frs;  // per agent
};

struct Metrics {
  double tracking_cost = 0.0;         // identity-weight cost of the executed run
  double dist_to_goal_at_tm5 = 0.0;   // mean goal distance 5 steps before the end
  double collision_ratio = 0.0;       // fraction of instants with any pair < d_col
  double min_pairwise_distance = 0.0; // -1 when fewer than two agents
  double near_collision_count = 0.0;  // instants with min distance < d_col + 0.05
  double avg_neighbors = 0.0;         // time-and-agent-averaged euclidean neighbors
  double ne_iterations = 0.0;         // mean accepted updates per planning step
};

namespace detail {

struct ContentHash {
  std::uint64_t h = 1469598103934665603ULL;
  void bytes(const void* p, std::size_t n) {
    const unsigned char* c = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= c[i];
      h *= 1099511628211ULL;
    }
  }
  void add(double v) { bytes(&v, sizeof v); }
  void add(int v) { bytes(&v, sizeof v); }
  void add(const std::string& s) { bytes(s.data(), s.size()); }
  void add(const Vec& v) {
    add(static_cast<int>(v.size()));
    if (v.size() > 0) bytes(v.data(), sizeof(double) * v.size());
  }
};

// Reachability tubes depend on the linearization point, not on where the
// agent sits, so they are shared process-wide by content. The calibration
// seed derives from the same content so cache hits and misses agree bitwise.
inline std::shared_ptr<const CalibratedFrs> cached_frs(const AgentModel& model,
                                                       const Scenario& s, const Vec& x_lin,
                                                       const Vec& u_trim) {
  ContentHash key;
  key.add(model.tag);
  key.add(model.state_dim);
  key.add(s.wheelbase);
  key.add(x_lin);
  key.add(u_trim);
  key.add(s.sigma);
  key.add(s.frs.q0_pos_radius);
  key.add(s.frs.q0_other);
  key.add(s.frs.eta);
  key.add(s.frs.calibration_samples);
  key.add(s.frs.min_containment);
  key.add(s.dt);
  key.add(s.t_steps);

  static std::mutex mutex;
  static std::map<std::uint64_t, std::shared_ptr<const CalibratedFrs>> cache;
  {
    std::lock_guard<std::mutex> lock(mutex);
    auto it = cache.find(key.h);
    if (it != cache.end()) return it->second;
  }

  FrsConfig cfg;
  cfg.initial_shape = s.frs.q0_other * Mat::Identity(model.state_dim, model.state_dim);
  for (int idx : model.position_indices)
    cfg.initial_shape(idx, idx) = s.frs.q0_pos_radius * s.frs.q0_pos_radius;
  cfg.disturbance_bound = s.sigma;
  cfg.eta = s.frs.eta;
  std::tie(cfg.lqr_q, cfg.lqr_r) = default_lqr_weights(model);

  Trajectory stub;
  stub.states.assign(s.t_steps + 1, x_lin);
  stub.controls.assign(s.t_steps, u_trim);
  auto computed = std::make_shared<const CalibratedFrs>(
      calibrate_frs_sequence(model, stub, cfg, s.dt, s.frs.calibration_samples, key.h,
                             s.frs.min_containment));

  std::lock_guard<std::mutex> lock(mutex);
  auto [it, inserted] = cache.emplace(key.h, std::move(computed));
  return it->second;
}

// Canonical linearization state: the agent's start with its position zeroed
// (translation never enters the jacobians; heading and the like do).
inline Vec canonical_lin_state(const AgentModel& model, const Vec& x0) {
  Vec x = x0;
  for (int idx : model.position_indices) x[idx] = 0.0;
  return x;
}

inline Vec clamp_control(const AgentModel& model, Vec u) {
  if (model.control_lower.size() > 0) u = u.cwiseMax(model.control_lower);
  if (model.control_upper.size() > 0) u = u.cwiseMin(model.control_upper);
  return u;
}

}  // namespace detail

// Receding-horizon planning of the disturbance-free trajectories. The FRS
// tubes are computed once per trial (cache-shared across trials); each step
// re-screens neighbors from the warm profile's predictions, re-solves the
// equilibrium over the window (warm-started), commits the first control, and
// advances the nominal states without disturbance.
inline ExecutionRecord plan_nominal(const Scenario& s) {
  validate_scenario(s);
  const AgentModel model = scenario_model(s);
  const int n = static_cast<int>(s.agents.size());
  const int t_total = s.t_steps, horizon = s.mpc_horizon;
  const int n_u = model.control_dim;
  const double trial_duration = t_total * s.dt;

  ExecutionRecord record;
  record.nominal.resize(n);
  std::vector<std::vector<Vec>> refs(n);
  for (int i = 0; i < n; ++i) {
    refs[i] = global_reference(s, model, i);
    record.nominal[i].states.push_back(s.agents[i].x0);
    const Vec u_trim = model.trim_control
                           ? model.trim_control(s.agents[i].x0, s.agents[i].goal, trial_duration)
                           : Vec::Zero(n_u);
    record.frs.push_back(detail::cached_frs(
        model, s, detail::canonical_lin_state(model, s.agents[i].x0), u_trim));
  }

  GameOptions options;
  options.epsilon = s.epsilon;
  options.k_max = s.k_max;
  options.solver_tol = s.solver_tol;
  options.solver_max_iter = s.solver_max_iter;

  StrategyProfile warm;
  for (int i = 0; i < n; ++i)
    warm.controls.push_back(Vec::Zero(static_cast<Eigen::Index>(horizon) * n_u));
  const Vec w_free = Vec::Zero(model.disturbance_dim);

  for (int t = 0; t < t_total; ++t) {
    PlanningContext ctx;
    ctx.dt = s.dt;
    ctx.horizon = horizon;
    ctx.coupling = s.coupling;
    ctx.d_col = s.d_col;
    ctx.models.assign(n, model);
    for (int i = 0; i < n; ++i) {
      ctx.x0.push_back(record.nominal[i].states.back());
      ctx.weights.push_back(s.weights);
      std::vector<Vec> ref_window;
      std::vector<Mat> shape_window;
      for (int k = 0; k <= horizon; ++k) {
        const int idx = std::min(t + k, t_total);
        ref_window.push_back(refs[i][idx]);
        shape_window.push_back(record.frs[i]->frs.position_shapes[idx]);
      }
      ctx.refs.push_back(std::move(ref_window));
      ctx.pos_shapes.push_back(std::move(shape_window));
    }

    std::vector<std::vector<Vec>> predictions(n);
    for (int i = 0; i < n; ++i) {
      const auto rolled = euler_rollout(model, ctx.x0[i], warm.controls[i], horizon, s.dt);
      for (const Vec& x : rolled) predictions[i].push_back(ctx.position_of(i, x));
    }
    ctx.schedule = s.neighbor_mode == NeighborSchedule::Mode::Euclidean
                       ? neighbor_sets(predictions, s.d_prox, 2.0 * s.weights.v_max * s.dt)
                       : neighbor_sets_anisotropic(predictions, ctx.pos_shapes);
    ctx.finalize();

    auto result = solve_epsilon_ne(ctx, options, warm);
    record.certificates.push_back(std::move(result.certificate));

    for (int i = 0; i < n; ++i) {
      const Vec u = result.profile.controls[i].head(n_u);
      record.nominal[i].controls.push_back(u);
      record.nominal[i].states.push_back(
          step(model, record.nominal[i].states.back(), u, w_free, s.dt));
      Vec shifted(static_cast<Eigen::Index>(horizon) * n_u);
      shifted.head(static_cast<Eigen::Index>(horizon - 1) * n_u) =
          result.profile.controls[i].tail(static_cast<Eigen::Index>(horizon - 1) * n_u);
      shifted.tail(n_u) = result.profile.controls[i].tail(n_u);
      warm.controls[i] = std::move(shifted);
    }
  }
  return record;
}

// Closed-loop execution under truncated-Gaussian disturbances: each agent
// tracks its nominal trajectory with the same feedback gain its reachability
// tube was derived with. sigma = 0 consumes no randomness and reproduces the
// nominal run bitwise.
inline void execute_tracked(const Scenario& s, ExecutionRecord& record, std::uint64_t seed) {
  const AgentModel model = scenario_model(s);
  const int n = static_cast<int>(record.nominal.size());
  if (n == 0) throw InputError("execute_tracked: empty record");

  std::mt19937_64 rng = seed_stream(seed, 0x64697374ULL);  // disturbance stream
  record.executed.assign(n, Trajectory{});
  record.disturbances.assign(n, {});
  for (int i = 0; i < n; ++i) record.executed[i].states.push_back(record.nominal[i].states[0]);

  for (int t = 0; t < s.t_steps; ++t) {
    for (int i = 0; i < n; ++i) {
      const Vec w = sample_disturbance(s.sigma, model.disturbance_dim, rng);
      const Vec& x = record.executed[i].states.back();
      const Vec e = x - record.nominal[i].states[t];
      const Vec u = detail::clamp_control(
          model, record.nominal[i].controls[t] + record.frs[i]->frs.gain.k * e);
      record.executed[i].states.push_back(step(model, x, u, w, s.dt));
      record.executed[i].controls.push_back(u);
      record.disturbances[i].push_back(w);
    }
  }
}

inline Metrics compute_metrics(const ExecutionRecord& record, const Scenario& s) {
  const AgentModel model = scenario_model(s);
  const int n = static_cast<int>(record.executed.size());
  if (n == 0) throw InputError("compute_metrics: record has no executed trajectories");
  const int t_total = s.t_steps;

  Metrics m;

  // identity-weight tracking cost vs the global reference, mean over agents
  double cost_sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto refs = global_reference(s, model, i);
    double cost = 0.0;
    for (int t = 0; t < t_total; ++t)
      cost += (record.executed[i].states[t] - refs[t]).squaredNorm() +
              record.executed[i].controls[t].squaredNorm();
    cost += (record.executed[i].states[t_total] - refs[t_total]).squaredNorm();
    cost_sum += cost;
  }
  m.tracking_cost = cost_sum / n;

  const int t_check = std::max(0, t_total - 5);
  double goal_dist_sum = 0.0;
  for (int i = 0; i < n; ++i) {
    Vec dp(model.position_indices.size());
    for (std::size_t r = 0; r < model.position_indices.size(); ++r) {
      const int idx = model.position_indices[r];
      dp[r] = record.executed[i].states[t_check][idx] - s.agents[i].goal[idx];
    }
    goal_dist_sum += dp.norm();
  }
  m.dist_to_goal_at_tm5 = goal_dist_sum / n;

  if (n >= 2) {
    int collision_instants = 0, near_instants = 0;
    double min_dist = std::numeric_limits<double>::infinity();
    for (int t = 0; t <= t_total; ++t) {
      double instant_min = std::numeric_limits<double>::infinity();
      for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
          double d2 = 0.0;
          for (int idx : model.position_indices) {
            const double diff =
                record.executed[i].states[t][idx] - record.executed[j].states[t][idx];
            d2 += diff * diff;
          }
          instant_min = std::min(instant_min, std::sqrt(d2));
        }
      min_dist = std::min(min_dist, instant_min);
      if (instant_min < s.d_col) ++collision_instants;
      if (instant_min < s.d_col + 0.05) ++near_instants;
    }
    m.collision_ratio = static_cast<double>(collision_instants) / (t_total + 1);
    m.near_collision_count = near_instants;
    m.min_pairwise_distance = min_dist;
  } else {
    m.min_pairwise_distance = -1.0;
  }

  // neighborhood statistic over the nominal plan, euclidean screening
  if (n >= 2 && !record.nominal.empty()) {
    long total = 0;
    for (int t = 0; t < t_total; ++t)
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          if (j == i) continue;
          double d2 = 0.0;
          for (int idx : model.position_indices) {
            const double diff =
                record.nominal[i].states[t][idx] - record.nominal[j].states[t][idx];
            d2 += diff * diff;
          }
          if (std::sqrt(d2) < s.d_prox) ++total;
        }
    m.avg_neighbors = static_cast<double>(total) / (static_cast<double>(n) * t_total);
  }

  if (!record.certificates.empty()) {
    double iter_sum = 0.0;
    for (const NeCertificate& c : record.certificates) iter_sum += c.iterations_used;
    m.ne_iterations = iter_sum / record.certificates.size();
  }
  return m;
}

struct TrialOutcome {
  int trial = 0;
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
  Metrics metrics;
  ExecutionRecord record;
};

struct MonteCarloResult {
  Metrics mean;
  Metrics stddev;
  std::vector<TrialOutcome> trials;
  int failed_count = 0;
};

namespace detail {

inline std::array<double, 7> metric_array(const Metrics& m) {
  return {m.tracking_cost,       m.dist_to_goal_at_tm5, m.collision_ratio,
          m.min_pairwise_distance, m.near_collision_count, m.avg_neighbors,
          m.ne_iterations};
}

inline Metrics metrics_from_array(const std::array<double, 7>& a) {
  Metrics m;
  m.tracking_cost = a[0];
  m.dist_to_goal_at_tm5 = a[1];
  m.collision_ratio = a[2];
  m.min_pairwise_distance = a[3];
  m.near_collision_count = a[4];
  m.avg_neighbors = a[5];
  m.ne_iterations = a[6];
  return m;
}

}  // namespace detail

// One seeded trial end to end. Scenarios flagged randomize_each_trial get a
// fresh placement drawn from the trial seed; fixed scenarios keep their
// geometry and vary only in disturbances.
inline TrialOutcome run_trial(const Scenario& s, int trial_index, std::uint64_t seed,
                              bool keep_record = true) {
  TrialOutcome out;
  out.trial = trial_index;
  out.seed = seed;
  try {
    Scenario instance = s;
    if (s.randomize_each_trial)
      instance = random_scenario(s, static_cast<int>(s.agents.size()), seed);
    out.record = plan_nominal(instance);
    execute_tracked(instance, out.record, seed);
    out.metrics = compute_metrics(out.record, instance);
  } catch (const std::exception& e) {
    out.failed = true;
    out.error = e.what();
    out.record = ExecutionRecord{};
  }
  if (!keep_record) out.record = ExecutionRecord{};
  return out;
}

// Seeded Monte Carlo over trials base_seed .. base_seed + trials - 1.
// Aggregation runs in trial order whatever the parallelism, so aggregates are
// bitwise reproducible. Failed trials are counted and excluded from moments.
inline MonteCarloResult monte_carlo(const Scenario& s, int trials, std::uint64_t base_seed,
                                    int jobs = 1, bool keep_records = true) {
  if (trials < 1) throw InputError("monte_carlo: trials must be >= 1");
  if (jobs < 1) throw InputError("monte_carlo: jobs must be >= 1");

  MonteCarloResult result;
  result.trials.resize(trials);
  if (jobs == 1) {
    for (int t = 0; t < trials; ++t)
      result.trials[t] = run_trial(s, t, base_seed + static_cast<std::uint64_t>(t), keep_records);
  } else {
    for (int begin = 0; begin < trials; begin += jobs) {
      const int end = std::min(trials, begin + jobs);
      std::vector<std::future<TrialOutcome>> wave;
      for (int t = begin; t < end; ++t)
        wave.push_back(std::async(std::launch::async, [&s, t, base_seed, keep_records] {
          return run_trial(s, t, base_seed + static_cast<std::uint64_t>(t), keep_records);
        }));
      for (int t = begin; t < end; ++t) result.trials[t] = wave[t - begin].get();
    }
  }

  std::array<double, 7> sum{}, sumsq{};
  int ok = 0;
  for (const TrialOutcome& trial : result.trials) {
    if (trial.failed) {
      ++result.failed_count;
      continue;
    }
    const auto a = detail::metric_array(trial.metrics);
    for (std::size_t k = 0; k < a.size(); ++k) {
      sum[k] += a[k];
      sumsq[k] += a[k] * a[k];
    }
    ++ok;
  }
  if (ok > 0) {
    std::array<double, 7> mean{}, sd{};
    for (std::size_t k = 0; k < sum.size(); ++k) {
      mean[k] = sum[k] / ok;
      const double var = ok > 1 ? std::max(0.0, (sumsq[k] - ok * mean[k] * mean[k]) / (ok - 1))
                                : 0.0;
      sd[k] = std::sqrt(var);
    }
    result.mean = detail::metrics_from_array(mean);
    result.stddev = detail::metrics_from_array(sd);
  }
  return result;
}

// The coupling ablation: identical pipeline with the reachability margin
// penalty swapped for the plain euclidean barrier around d_col.
inline Scenario ablation_euclidean(Scenario s) {
  s.coupling = CouplingMode::EuclideanBarrier;
  return s;
}

inline void apply_scenario_param(Scenario& s, const std::string& key, double value) {
  if (key == "lambda_frs") s.weights.lambda_frs = value;
  else if (key == "lambda_v") s.weights.lambda_v = value;
  else if (key == "v_max") s.weights.v_max = value;
  else if (key == "sigma") s.sigma = value;
  else if (key == "d_col") s.d_col = value;
  else if (key == "d_prox") s.d_prox = value;
  else if (key == "epsilon") s.epsilon = value;
  else if (key == "eta") s.frs.eta = value;
  else if (key == "q0_pos_radius") s.frs.q0_pos_radius = value;
  else throw InputError("unknown sweep parameter \"" + key + "\"");
}

struct SweepCell {
  std::vector<std::pair<std::string, double>> params;
  Metrics mean;
  Metrics stddev;
  int failed_count = 0;
};

struct SweepResult {
  std::vector<SweepCell> cells;
  int winner = -1;  // index into cells; -1 when every cell collides
};

// Full-factorial sweep in lexicographic cell order. Safety first: cells with
// any collisions or failures are discarded; survivors rank by tracking cost,
// ties by goal distance.
inline SweepResult grid_sweep(const Scenario& s,
                              const std::vector<std::pair<std::string, std::vector<double>>>& grid,
                              int trials, std::uint64_t base_seed, int jobs = 1) {
  if (grid.empty()) throw InputError("grid_sweep: empty grid");
  for (const auto& [key, values] : grid)
    if (values.empty()) throw InputError("grid_sweep: empty value list for \"" + key + "\"");

  SweepResult result;
  std::vector<std::size_t> index(grid.size(), 0);
  while (true) {
    SweepCell cell;
    Scenario cell_scenario = s;
    for (std::size_t d = 0; d < grid.size(); ++d) {
      cell.params.emplace_back(grid[d].first, grid[d].second[index[d]]);
      apply_scenario_param(cell_scenario, grid[d].first, grid[d].second[index[d]]);
    }
    const MonteCarloResult mc = monte_carlo(cell_scenario, trials, base_seed, jobs, false);
    cell.mean = mc.mean;
    cell.stddev = mc.stddev;
    cell.failed_count = mc.failed_count;
    result.cells.push_back(std::move(cell));

    std::size_t d = grid.size();
    while (d > 0) {
      --d;
      if (++index[d] < grid[d].second.size()) break;
      index[d] = 0;
      if (d == 0) d = grid.size() + 1;  // full wrap: done
    }
    if (d == grid.size() + 1 || grid.size() == 0) break;
    if (d == 0 && index[0] == 0) break;
  }

  for (std::size_t c = 0; c < result.cells.size(); ++c) {
    const SweepCell& cell = result.cells[c];
    if (cell.failed_count > 0 || cell.mean.collision_ratio > 0.0) continue;
    if (result.winner < 0) {
      result.winner = static_cast<int>(c);
      continue;
    }
    const SweepCell& best = result.cells[result.winner];
    if (cell.mean.tracking_cost < best.mean.tracking_cost ||
        (cell.mean.tracking_cost == best.mean.tracking_cost &&
         cell.mean.dist_to_goal_at_tm5 < best.mean.dist_to_goal_at_tm5))
      result.winner = static_cast<int>(c);
  }
  return result;
}

}  // namespace redpg
