#pragma once

#include <unsupported/Eigen/MatrixFunctions>
#include <random>
#include <vector>

#include "redpg/dynamics.hpp"
#include "redpg/ellipsoid.hpp"

namespace redpg {

// Error-state forward-reachable-set configuration. disturbance_bound is the
// per-channel interval bound (matches truncated simulation noise); eta is the
// shape regularizer, calibrated upward by the harness when containment of
// sampled rollouts falls short.
struct FrsConfig {
  Mat initial_shape;
  double disturbance_bound = 0.0;
  double eta = 1e-3;
  Mat lqr_q, lqr_r;
};

struct FrsSequence {
  std::vector<Mat> shapes;           // t = 0..T, full-state
  std::vector<Mat> position_shapes;  // principal position submatrices
  FeedbackGain gain;
  Mat closed_loop;  // Phi = A + B K
  Linearization lin;
  double dt = 0.0;
};

// Tracking-LQR weights used for gain synthesis. The quadrotor's torque
// channels see an input gain of 1/J (25..50), so unit control weights would
// place attitude poles near -50 rad/s and blow up the forward-Euler error
// recurrence at dt = 0.2; weighting the torques keeps the loop at a few rad/s.
inline std::pair<Mat, Mat> default_lqr_weights(const AgentModel& model) {
  Mat q = Mat::Identity(model.state_dim, model.state_dim);
  Mat r = Mat::Identity(model.control_dim, model.control_dim);
  if (model.tag == "quadrotor") {
    r.diagonal() << 1.0, 25.0, 25.0, 50.0;
  }
  return {q, r};
}

inline void validate_frs_config(const FrsConfig& cfg, int state_dim) {
  if (cfg.initial_shape.rows() != state_dim || cfg.initial_shape.cols() != state_dim)
    throw InputError("frs config: initial shape dimension mismatch");
  if (!is_spd(cfg.initial_shape)) throw InputError("frs config: initial shape must be SPD");
  if (!(cfg.disturbance_bound >= 0.0))
    throw InputError("frs config: disturbance bound must be nonnegative");
  if (!(cfg.eta > 0.0)) throw InputError("frs config: eta must be positive");
}

// Per-channel disturbance shape at elapsed time t: solves
//   -Phi (Q~ - eta t^2 I) - (Q~ - eta t^2 I) Phi^T = exp(-t Phi) N exp(-t Phi^T) - N,
// whose solution is the accumulated disturbance Gramian in backward form,
// then adds the eta t^2 regularizer. Later propagation by exp(t Phi) turns it
// into the forward Gramian exactly.
inline Mat channel_shape(const Mat& phi, const Mat& n_mw, double t, double eta) {
  const Eigen::Index n = phi.rows();
  if (n_mw.rows() != n || n_mw.cols() != n)
    throw InputError("channel_shape: dimension mismatch");
  if (t < 0.0) throw InputError("channel_shape: t must be nonnegative");
  if (t == 0.0) return Mat::Zero(n, n);
  const Mat decay = (-t * phi).exp();
  const Mat rhs = symmetrize(decay * n_mw * decay.transpose() - n_mw);
  Mat shape = symmetrize(solve_lyapunov(-phi, rhs)) +
              eta * t * t * Mat::Identity(n, n);
  if (!shape.allFinite()) throw NumericalError("channel_shape: non-finite shape");
  if (min_eigenvalue(shape) < 1e-12) shape = eigen_floor(shape, 1e-12);
  return shape;
}

// Boxplus over the nonzero channel shapes; zero matrices are degenerate
// summands and are skipped. All-zero input combines to the zero matrix.
inline Mat combine_channels(const std::vector<Mat>& channel_shapes) {
  if (channel_shapes.empty()) throw InputError("combine_channels: empty list");
  const Eigen::Index n = channel_shapes.front().rows();
  std::vector<Mat> nonzero;
  for (const Mat& q : channel_shapes) {
    if (q.rows() != n || q.cols() != n)
      throw InputError("combine_channels: dimension mismatch");
    if (q.norm() > 0.0) nonzero.push_back(q);
  }
  if (nonzero.empty()) return Mat::Zero(n, n);
  return boxplus(nonzero);
}

// exp(t Phi) (Q0 [+] Q~t) exp(t Phi^T), with Q0 [+] 0 := Q0.
inline Mat propagate(const Mat& q0, const Mat& qt, const Mat& phi, double t) {
  if (t < 0.0) throw InputError("propagate: t must be nonnegative");
  const Mat inner = qt.norm() > 0.0 ? boxplus(q0, qt) : q0;
  const Mat expo = (t * phi).exp();
  Mat out = symmetrize(expo * inner * expo.transpose());
  if (!out.allFinite()) throw NumericalError("propagate: exponential overflow");
  return out;
}

// FRS sequence along a nominal trajectory: one linearization at the initial
// nominal point, one LQR synthesis, then per-step channel accumulation,
// combination, and propagation. Computed once per trial and reused by every
// planning step; homogeneous agents can share the result.
inline FrsSequence compute_frs_sequence(const AgentModel& model, const Trajectory& nominal,
                                        const FrsConfig& config, double dt) {
  validate_frs_config(config, model.state_dim);
  if (nominal.states.empty()) throw InputError("compute_frs_sequence: empty nominal");
  if (nominal.controls.size() + 1 != nominal.states.size())
    throw InputError("compute_frs_sequence: state/control length mismatch");
  if (!(dt > 0.0)) throw InputError("compute_frs_sequence: dt must be positive");

  FrsSequence out;
  out.dt = dt;
  out.lin = linearize(model, nominal.states.front(), nominal.controls.front());
  out.gain = lqr_gain(out.lin.a, out.lin.b, config.lqr_q, config.lqr_r);
  out.closed_loop = out.lin.a + out.lin.b * out.gain.k;

  const double wbar = config.disturbance_bound;
  std::vector<Mat> channel_noise;
  for (int mw = 0; mw < model.disturbance_dim; ++mw) {
    const Vec col = out.lin.d.col(mw);
    channel_noise.push_back(wbar * wbar * col * col.transpose());
  }

  const std::size_t horizon = nominal.controls.size();
  const auto pos_block = [&](const Mat& q) {
    const auto& idx = model.position_indices;
    Mat p(idx.size(), idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t c = 0; c < idx.size(); ++c) p(r, c) = q(idx[r], idx[c]);
    return p;
  };

  for (std::size_t t = 0; t <= horizon; ++t) {
    const double elapsed = static_cast<double>(t) * dt;
    Mat combined = Mat::Zero(model.state_dim, model.state_dim);
    if (wbar > 0.0 && t > 0) {
      std::vector<Mat> channels;
      channels.reserve(channel_noise.size());
      for (const Mat& n_mw : channel_noise)
        channels.push_back(channel_shape(out.closed_loop, n_mw, elapsed, config.eta));
      combined = combine_channels(channels);
    }
    Mat shape = propagate(config.initial_shape, combined, out.closed_loop, elapsed);
    if (min_eigenvalue(shape) < 1e-12) shape = eigen_floor(shape, 1e-12);
    out.shapes.push_back(shape);
    out.position_shapes.push_back(pos_block(shape));
  }
  return out;
}

// Monte Carlo validation of the FRS against sampled closed-loop error
// rollouts of de/dt = Phi e + D w with w held constant over each dt interval.
// The hold interval is discretized exactly (e+ = exp(dt Phi) e + G w), since
// the sequence over-approximates trajectories of the continuous-time loop:
// a forward-Euler recurrence at dt = 0.2 is not contractive for these loops
// and would evict boundary starts even with zero disturbance. Initial errors
// alternate between the boundary and the interior of E(Q0); disturbances
// alternate between uniform draws on [-wbar, wbar] and per-step sign-extremal
// (bang-bang) draws. Returns the fraction of (trajectory, t) pairs inside.
inline double containment_check(const AgentModel& model, const FrsConfig& config,
                                const FrsSequence& frs, int samples, std::uint64_t seed) {
  validate_frs_config(config, model.state_dim);
  if (samples < 100) throw InputError("containment_check: samples must be >= 100");
  if (frs.shapes.empty()) throw InputError("containment_check: empty sequence");

  const int n = model.state_dim;
  const int nw = model.disturbance_dim;
  const double wbar = config.disturbance_bound;
  const Mat root0 = Mat(config.initial_shape.llt().matrixL());
  std::vector<Eigen::LLT<Mat>> factors;
  factors.reserve(frs.shapes.size());
  for (const Mat& q : frs.shapes) factors.emplace_back(q);

  // zero-order-hold pair: [e+; w] = exp([[Phi, D]; [0, 0]] dt) [e; w]
  Mat aug = Mat::Zero(n + nw, n + nw);
  aug.topLeftCorner(n, n) = frs.closed_loop;
  aug.topRightCorner(n, nw) = frs.lin.d;
  const Mat hold = (frs.dt * aug).exp();
  const Mat stepper = hold.topLeftCorner(n, n);
  const Mat inject = hold.topRightCorner(n, nw);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  long inside = 0, total = 0;
  for (int s = 0; s < samples; ++s) {
    Vec dir(n);
    for (int i = 0; i < n; ++i) dir[i] = gauss(rng);
    if (dir.norm() < 1e-12) dir.setOnes();
    dir /= dir.norm();
    const bool boundary_start = (s % 2 == 0);
    const double radius = boundary_start ? 1.0 : std::pow(unif(rng), 1.0 / n);
    Vec e = root0 * (radius * dir);
    const bool bang = ((s / 2) % 2 == 1);

    for (std::size_t t = 0; t < frs.shapes.size(); ++t) {
      if (t > 0) {
        Vec w(nw);
        for (int c = 0; c < nw; ++c)
          w[c] = bang ? (unif(rng) < 0.5 ? -wbar : wbar)
                      : (2.0 * unif(rng) - 1.0) * wbar;
        e = stepper * e + inject * w;
      }
      const double quad = e.dot(factors[t].solve(e));
      if (quad <= 1.0 + 1e-9) ++inside;
      ++total;
    }
  }
  return static_cast<double>(inside) / static_cast<double>(total);
}

// Containment-calibrated FRS: start from config.eta and double it until the
// sampled containment ratio reaches min_ratio (at most max_doublings times).
// Stops early when doubling no longer helps; callers read the achieved ratio
// and eta from the result. Used by the harness before each trial batch.
struct CalibratedFrs {
  FrsSequence frs;
  double eta_used = 0.0;
  double ratio = 0.0;
};

inline CalibratedFrs calibrate_frs_sequence(const AgentModel& model, const Trajectory& nominal,
                                            FrsConfig config, double dt, int samples,
                                            std::uint64_t seed, double min_ratio = 0.99,
                                            int max_doublings = 5) {
  CalibratedFrs best;
  best.eta_used = config.eta;
  best.frs = compute_frs_sequence(model, nominal, config, dt);
  best.ratio = containment_check(model, config, best.frs, samples, seed);
  for (int k = 0; k < max_doublings && best.ratio < min_ratio; ++k) {
    config.eta *= 2.0;
    FrsSequence frs = compute_frs_sequence(model, nominal, config, dt);
    const double ratio = containment_check(model, config, frs, samples, seed);
    if (ratio <= best.ratio) break;  // regularizer stopped helping
    best.frs = std::move(frs);
    best.eta_used = config.eta;
    best.ratio = ratio;
  }
  return best;
}

}  // namespace redpg
