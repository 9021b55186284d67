#include "bitrap/gmm_dyn.hpp"

#include <cmath>
#include <limits>

#include "bitrap/errors.hpp"

namespace bitrap {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

void check_step(const GMMStep& step) {
  const int k = step.components();
  if (k < 1 || step.mu.rows() != k || step.mu.cols() != 2 || static_cast<int>(step.cov.size()) != k) {
    throw ShapeError("mixture step has inconsistent component counts");
  }
  if ((step.pi.array() < 0.0).any() || std::abs(step.pi.sum() - 1.0) > 1e-6) {
    throw NumericalError("mixture weights are not on the simplex");
  }
}

void check_sequence(const GMMSequence& seq, GmmSpace space, const char* what) {
  if (seq.steps.empty()) throw ShapeError(std::string(what) + ": empty mixture sequence");
  if (!(seq.dt > 0.0)) throw ConfigError(std::string(what) + ": dt must be positive");
  const int k = seq.components();
  for (const GMMStep& s : seq.steps) {
    if (s.space != space) throw ShapeError(std::string(what) + ": mixture sequence in the wrong space");
    if (s.components() != k) throw ShapeError(std::string(what) + ": component count changes over the horizon");
    check_step(s);
  }
}

double component_log_density(const Eigen::Vector2d& diff, const Eigen::Matrix2d& cov, double floor) {
  const Eigen::Matrix2d c = cov + floor * Eigen::Matrix2d::Identity();
  Eigen::LLT<Eigen::Matrix2d> llt(c);
  if (llt.info() != Eigen::Success || !c.allFinite()) throw NumericalError("mixture covariance is not positive definite");
  const Eigen::Matrix2d L = llt.matrixL();
  const Eigen::Vector2d w = L.triangularView<Eigen::Lower>().solve(diff);
  return -kLog2Pi - std::log(L(0, 0)) - std::log(L(1, 1)) - 0.5 * w.squaredNorm();
}

double nll_steps(const GMMSequence& position, const Mat& Y, std::size_t count, double floor) {
  double total = 0.0;
  for (std::size_t n = 0; n < count; ++n) {
    total -= gmm_log_prob(position.steps[n], Y.row(static_cast<Eigen::Index>(n)).transpose(), floor);
  }
  return total;
}

void check_targets(const GMMSequence& position, const Mat& Y, const char* what) {
  check_sequence(position, GmmSpace::kPosition, what);
  if (Y.rows() != static_cast<Eigen::Index>(position.steps.size()) || Y.cols() < 2) {
    throw ShapeError(std::string(what) + ": ground truth length differs from the mixture horizon");
  }
}

}  // namespace

double gmm_log_prob(const GMMStep& step, const Eigen::Vector2d& y, double cov_floor) {
  check_step(step);
  double max_term = -std::numeric_limits<double>::infinity();
  std::vector<double> terms(static_cast<std::size_t>(step.components()));
  for (int k = 0; k < step.components(); ++k) {
    const double lp = component_log_density(y - step.mu.row(k).transpose(), step.cov[k], cov_floor);
    terms[k] = step.pi[k] > 0.0 ? std::log(step.pi[k]) + lp : -std::numeric_limits<double>::infinity();
    max_term = std::max(max_term, terms[k]);
  }
  if (!std::isfinite(max_term)) return max_term;
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - max_term);
  return max_term + std::log(acc);
}

GMMSequence integrate_forward(const Eigen::Vector2d& x_t, const GMMSequence& velocity) {
  check_sequence(velocity, GmmSpace::kVelocity, "integrate_forward");
  const double dt = velocity.dt;
  const int k = velocity.components();
  GMMSequence out;
  out.dt = dt;
  Mat mu = x_t.transpose().replicate(k, 1);
  std::vector<Eigen::Matrix2d> cov(static_cast<std::size_t>(k), Eigen::Matrix2d::Zero());
  for (const GMMStep& v : velocity.steps) {
    mu += dt * v.mu;
    for (int c = 0; c < k; ++c) cov[c] += dt * dt * v.cov[c];
    out.steps.push_back(GMMStep{v.pi, mu, cov, GmmSpace::kPosition});
  }
  return out;
}

GMMSequence integrate_backward(const GoalGMM& goal, const GMMSequence& velocity, bool include_origin) {
  check_sequence(velocity, GmmSpace::kVelocity, "integrate_backward");
  const int k = velocity.components();
  if (goal.components() != k || goal.mu.rows() != k || static_cast<int>(goal.cov.size()) != k) {
    throw ShapeError("integrate_backward: goal and velocity component counts differ");
  }
  const double dt = velocity.dt;
  const std::size_t horizon = velocity.steps.size();
  std::vector<GMMStep> rev;
  Mat mu = goal.mu;
  std::vector<Eigen::Matrix2d> cov = goal.cov;
  rev.push_back(GMMStep{goal.pi, mu, cov, GmmSpace::kPosition});
  const std::size_t last = include_origin ? 0 : 1;
  for (std::size_t n = horizon; n-- > last;) {
    const GMMStep& v = velocity.steps[n];
    mu -= dt * v.mu;
    for (int c = 0; c < k; ++c) cov[c] += dt * dt * v.cov[c];
    rev.push_back(GMMStep{v.pi, mu, cov, GmmSpace::kPosition});
  }
  GMMSequence out;
  out.dt = dt;
  out.steps.assign(rev.rbegin(), rev.rend());
  return out;
}

double nll_fwd(const GMMSequence& position, const Mat& Y, double cov_floor) {
  check_targets(position, Y, "nll_fwd");
  return nll_steps(position, Y, position.steps.size(), cov_floor);
}

double nll_bwd(const GMMSequence& position, const Mat& Y, double cov_floor) {
  check_targets(position, Y, "nll_bwd");
  return nll_steps(position, Y, position.steps.size() - 1, cov_floor);
}

GmmLossTerms loss_gmm_terms(const GoalGMM& goal, const GMMSequence& velocity, const TrajectoryWindow& window,
                            double kld, const GmmLossOptions& options) {
  if (window.dim() < 2) throw ShapeError("loss_gmm_total needs at least 2-D states");
  if (static_cast<Eigen::Index>(velocity.steps.size()) != window.delta()) {
    throw ShapeError("loss_gmm_total: velocity horizon differs from the window horizon");
  }
  const Eigen::Vector2d origin = window.origin.head<2>();
  const Mat Y = window.future.leftCols(2).rowwise() - origin.transpose();
  const Eigen::Vector2d g = window.goal.head<2>() - origin;

  GMMStep goal_step{goal.pi, goal.mu, goal.cov, GmmSpace::kPosition};
  GmmLossTerms terms;
  terms.goal = -gmm_log_prob(goal_step, g, options.cov_floor);
  terms.forward = nll_fwd(integrate_forward(Eigen::Vector2d::Zero(), velocity), Y, options.cov_floor);
  if (options.anchor_predicted_goal) {
    terms.backward = nll_bwd(integrate_backward(goal, velocity), Y, options.cov_floor);
  } else {
    GoalGMM anchor = goal;
    anchor.mu = g.transpose().replicate(goal.components(), 1);
    anchor.cov.assign(goal.cov.size(), Eigen::Matrix2d::Zero());
    terms.backward = nll_bwd(integrate_backward(anchor, velocity), Y, options.cov_floor);
  }
  terms.kld = kld;
  const char* bad = !std::isfinite(terms.goal)       ? "goal"
                    : !std::isfinite(terms.forward)  ? "forward"
                    : !std::isfinite(terms.backward) ? "backward"
                    : !std::isfinite(terms.kld)      ? "kld"
                                                     : nullptr;
  if (bad != nullptr) throw NumericalError(std::string("loss_gmm_total: non-finite ") + bad + " term");
  return terms;
}

double loss_gmm_total(const GoalGMM& goal, const GMMSequence& velocity, const TrajectoryWindow& window, double kld,
                      const GmmLossOptions& options) {
  return loss_gmm_terms(goal, velocity, window, kld, options).total();
}

GMMStep velocity_step_from_raw(const Vec& pi, const Mat& raw) {
  if (raw.rows() != pi.size() || raw.cols() != 5) throw ShapeError("velocity head output must be K x 5");
  GMMStep step;
  step.pi = pi;
  step.space = GmmSpace::kVelocity;
  step.mu = raw.leftCols(2);
  for (Eigen::Index k = 0; k < raw.rows(); ++k) {
    const double lx = std::clamp(raw(k, 2), -10.0, 10.0);
    const double ly = std::clamp(raw(k, 3), -10.0, 10.0);
    step.cov.push_back(covariance_from(lx, ly, raw(k, 4)));
  }
  return step;
}

GMMStep rescale_step(const GMMStep& step, const Eigen::Vector2d& origin, const Eigen::Vector2d& scale) {
  GMMStep out = step;
  const Eigen::DiagonalMatrix<double, 2> s(scale);
  for (int k = 0; k < step.components(); ++k) {
    out.mu.row(k) = (origin + s * step.mu.row(k).transpose()).transpose();
    out.cov[k] = s * step.cov[k] * s;
  }
  return out;
}

Eigen::Vector2d sample_component(const Eigen::Vector2d& mu, const Eigen::Matrix2d& cov, Rng& rng) {
  Eigen::LLT<Eigen::Matrix2d> llt(cov + kCovFloor * Eigen::Matrix2d::Identity());
  if (llt.info() != Eigen::Success) throw NumericalError("cannot sample from a non-SPD component");
  const double e0 = rng.normal();
  const double e1 = rng.normal();
  return mu + llt.matrixL() * Eigen::Vector2d(e0, e1);
}

Var cov_entries(const Var& log_sigma, const Var& corr_raw) {
  const Var lx = slice_cols(log_sigma, 0, 1);
  const Var ly = slice_cols(log_sigma, 1, 1);
  const Var rho = scale(tanh(corr_raw), kCorrBound);
  return concat_cols({exp(scale(lx, 2.0)), rho * exp(lx + ly), exp(scale(ly, 2.0))});
}

Var gaussian2_log_prob_rows(const Var& diff, const Var& cov, double cov_floor) {
  const Var dx = slice_cols(diff, 0, 1);
  const Var dy = slice_cols(diff, 1, 1);
  const Var sxx = add_scalar(slice_cols(cov, 0, 1), cov_floor);
  const Var sxy = slice_cols(cov, 1, 1);
  const Var syy = add_scalar(slice_cols(cov, 2, 1), cov_floor);
  const Var det = sxx * syy - square(sxy);
  const Var quad = (square(dx) * syy - scale(dx * dy * sxy, 2.0) + square(dy) * sxx) / det;
  return add_scalar(scale(log(det), -0.5) - scale(quad, 0.5), -kLog2Pi);
}

Var mixture_log_prob_rows(const Var& component_log_prob, const Var& log_pi, int components) {
  const Eigen::Index windows = component_log_prob.rows() / components;
  return logsumexp_rows(reshape(component_log_prob, windows, components) + log_pi);
}

GmmTapeTerms gmm_loss_rows(Tape& tape, const GmmTapeInputs& in, const std::vector<Mat>& future_residuals,
                           const Mat& goal_residual, double dt, int components, const GmmLossOptions& options) {
  const std::size_t horizon = in.vel_mu.size();
  if (horizon == 0 || in.vel_cov.size() != horizon || future_residuals.size() != horizon) {
    throw ShapeError("gmm_loss_rows: horizon mismatch");
  }
  const Eigen::Index windows = goal_residual.rows();
  if (in.goal_mu.rows() != windows * components) throw ShapeError("gmm_loss_rows: row layout mismatch");

  auto per_component = [&](const Mat& rows) {
    Mat out(rows.rows() * components, rows.cols());
    for (Eigen::Index b = 0; b < rows.rows(); ++b) out.middleRows(b * components, components) = rows.row(b).replicate(components, 1);
    return tape.constant(std::move(out));
  };
  auto nll_at = [&](const Var& target, const Var& mu, const Var& cov) {
    return neg(mixture_log_prob_rows(gaussian2_log_prob_rows(target - mu, cov, options.cov_floor), in.log_pi, components));
  };

  std::vector<Var> targets;
  targets.reserve(horizon);
  for (const Mat& y : future_residuals) targets.push_back(per_component(y));
  const Var goal_target = per_component(goal_residual);

  GmmTapeTerms terms;
  terms.goal = nll_at(goal_target, in.goal_mu, in.goal_cov);

  Var mu = scale(in.vel_mu[0], dt);
  Var cov = scale(in.vel_cov[0], dt * dt);
  terms.forward = nll_at(targets[0], mu, cov);
  for (std::size_t n = 1; n < horizon; ++n) {
    mu = mu + scale(in.vel_mu[n], dt);
    cov = cov + scale(in.vel_cov[n], dt * dt);
    terms.forward = terms.forward + nll_at(targets[n], mu, cov);
  }

  if (horizon == 1) {
    terms.backward = tape.constant(Mat::Zero(windows, 1));
    return terms;
  }
  Var mu_b = options.anchor_predicted_goal ? in.goal_mu : goal_target;
  Var cov_b = options.anchor_predicted_goal ? in.goal_cov : tape.constant(Mat::Zero(windows * components, 3));
  for (std::size_t n = horizon - 1; n-- > 0;) {
    mu_b = mu_b - scale(in.vel_mu[n + 1], dt);
    cov_b = cov_b + scale(in.vel_cov[n + 1], dt * dt);
    const Var term = nll_at(targets[n], mu_b, cov_b);
    terms.backward = terms.backward.valid() ? terms.backward + term : term;
  }
  return terms;
}

}  // namespace bitrap
