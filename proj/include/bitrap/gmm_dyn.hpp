#pragma once

// Mixture-density dynamics: per-step bivariate velocity mixtures are
// integrated component-wise into position mixtures, forward from the current
// state and backward from the goal mixture, and scored by negative
// log-likelihood. All positions here are residuals relative to X_t unless a
// function says otherwise.

#include <vector>

#include "bitrap/autodiff.hpp"
#include "bitrap/data.hpp"
#include "bitrap/goal.hpp"

namespace bitrap {

enum class GmmSpace { kVelocity, kPosition };

struct GMMStep {
  Vec pi;                            // K
  Mat mu;                            // K x 2
  std::vector<Eigen::Matrix2d> cov;  // K
  GmmSpace space = GmmSpace::kPosition;

  int components() const { return static_cast<int>(pi.size()); }
};

struct GMMSequence {
  std::vector<GMMStep> steps;
  double dt = 0.4;

  GmmSpace space() const { return steps.empty() ? GmmSpace::kPosition : steps.front().space; }
  int components() const { return steps.empty() ? 0 : steps.front().components(); }
};

// Added to every covariance diagonal before factorization.
inline constexpr double kCovFloor = 1e-6;

double gmm_log_prob(const GMMStep& step, const Eigen::Vector2d& y, double cov_floor = kCovFloor);

// Position mixture at t+1..t+delta: mu_n = x_t + dt * sum_{j<=n} mu_v(j),
// cov_n = dt^2 * sum_{j<=n} cov_v(j). Weights are carried unchanged.
GMMSequence integrate_forward(const Eigen::Vector2d& x_t, const GMMSequence& velocity);

// Position mixture at t+1..t+delta anchored on the goal mixture:
// mu_n = mu_G - dt * sum_{j>n} mu_v(j), cov_n = cov_G + dt^2 * sum_{j>n} cov_v(j).
// With include_origin the sequence starts one step earlier, at time t.
GMMSequence integrate_backward(const GoalGMM& goal, const GMMSequence& velocity, bool include_origin = false);

// Sum over every step of -log p(Y_n).
double nll_fwd(const GMMSequence& position, const Mat& Y, double cov_floor = kCovFloor);
// Sum over all but the final (goal-anchored) step; that term is the goal NLL.
double nll_bwd(const GMMSequence& position, const Mat& Y, double cov_floor = kCovFloor);

struct GmmLossOptions {
  double cov_floor = kCovFloor;
  bool anchor_predicted_goal = true;  // false anchors the backward pass on the true endpoint
};

struct GmmLossTerms {
  double goal = 0.0;
  double forward = 0.0;
  double backward = 0.0;
  double kld = 0.0;
  double total() const { return goal + forward + backward + kld; }
};

// goal and velocity are residual-frame mixtures sharing component indices;
// window supplies X_t, Y and G_t in absolute coordinates (first two dims).
GmmLossTerms loss_gmm_terms(const GoalGMM& goal, const GMMSequence& velocity, const TrajectoryWindow& window,
                            double kld, const GmmLossOptions& options = {});
double loss_gmm_total(const GoalGMM& goal, const GMMSequence& velocity, const TrajectoryWindow& window, double kld,
                      const GmmLossOptions& options = {});

// Velocity step from per-component raw head outputs, rows (mu_x, mu_y,
// log_sigma_x, log_sigma_y, corr_raw).
GMMStep velocity_step_from_raw(const Vec& pi, const Mat& raw);

// Residual mixture in standardized units to absolute coordinates:
// mu -> origin + mu * scale, cov -> S cov S with S = diag(scale).
GMMStep rescale_step(const GMMStep& step, const Eigen::Vector2d& origin, const Eigen::Vector2d& scale);

Eigen::Vector2d sample_component(const Eigen::Vector2d& mu, const Eigen::Matrix2d& cov, Rng& rng);

// ---- differentiable counterparts (rows ordered window-major: b * K + k) ----

// n x 3 covariance entries (sxx, sxy, syy) from log standard deviations and raw correlation.
Var cov_entries(const Var& log_sigma, const Var& corr_raw);

// Per-row bivariate normal log-density of diff under cov entries (+ floor on the diagonal).
Var gaussian2_log_prob_rows(const Var& diff, const Var& cov, double cov_floor);

// Mixture log-density per window: logsumexp_k(log_pi + component log-density).
Var mixture_log_prob_rows(const Var& component_log_prob, const Var& log_pi, int components);

struct GmmTapeInputs {
  Var log_pi;                  // B x K
  Var goal_mu;                 // BK x 2
  Var goal_cov;                // BK x 3
  std::vector<Var> vel_mu;     // delta x (BK x 2)
  std::vector<Var> vel_cov;    // delta x (BK x 3)
};

struct GmmTapeTerms {
  Var goal, forward, backward;  // each B x 1
};

// future_residuals[n] is B x 2 (Y_n - X_t); goal_residual is B x 2.
GmmTapeTerms gmm_loss_rows(Tape& tape, const GmmTapeInputs& in, const std::vector<Mat>& future_residuals,
                           const Mat& goal_residual, double dt, int components, const GmmLossOptions& options);

}  // namespace bitrap
