#include "bitrap/goal.hpp"

#include <cmath>

#include "bitrap/errors.hpp"
#include "bitrap/latent.hpp"

namespace bitrap {

NpGoalNet::NpGoalNet(ParameterStore& store, const std::string& name, int feature, int latent, int hidden,
                     int goal_dim)
    : mlp(store, name, feature + latent, hidden, goal_dim) {}

Var NpGoalNet::forward(Tape& tape, const Var& h, const Var& z) const {
  return mlp(tape, concat_cols({h, z}));
}

GmmGoalNet::GmmGoalNet(ParameterStore& store, const std::string& name, int feature, int hidden, int components)
    : mean_head(store, name + ".mu", feature, hidden, 2 * components),
      log_sigma_head(store, name + ".log_sigma", feature, hidden, 2 * components),
      corr_head(store, name + ".corr", feature, hidden, components),
      components_(components) {}

GmmGoalNet::Output GmmGoalNet::forward(Tape& tape, const Var& h) const {
  return {mean_head(tape, h), clamp(log_sigma_head(tape, h), -kLogVarClamp, kLogVarClamp), corr_head(tape, h)};
}

GoalSampleNP generate_goal_np(const NpGoalNet& net, const Vec& h_t, const Vec& z) {
  if (!h_t.allFinite() || !z.allFinite()) throw NumericalError("non-finite goal network input");
  Tape tape(false);
  GoalSampleNP goal{row_vec(net.forward(tape, tape.constant(as_row(h_t)), tape.constant(as_row(z))).value())};
  if (!goal.residual.allFinite()) throw NumericalError("non-finite goal");
  return goal;
}

Eigen::Matrix2d covariance_from(double log_sigma_x, double log_sigma_y, double corr_raw) {
  const double sx = std::exp(log_sigma_x);
  const double sy = std::exp(log_sigma_y);
  const double rho = kCorrBound * std::tanh(corr_raw);
  Eigen::Matrix2d cov;
  cov << sx * sx, rho * sx * sy, rho * sx * sy, sy * sy;
  return cov;
}

void require_spd(const Eigen::Matrix2d& cov, const char* what) {
  if (!cov.allFinite() || cov(0, 1) != cov(1, 0)) throw NumericalError(std::string(what) + ": covariance not symmetric");
  Eigen::LLT<Eigen::Matrix2d> llt(cov);
  if (llt.info() != Eigen::Success) throw NumericalError(std::string(what) + ": covariance not positive definite");
}

GoalGMM generate_goal_gmm(const GmmGoalNet& net, const Vec& h_t, const Vec& pi) {
  if (pi.size() != net.components()) throw ShapeError("mixture weight count differs from goal components");
  if (!h_t.allFinite()) throw NumericalError("non-finite goal network input");
  Tape tape(false);
  const auto out = net.forward(tape, tape.constant(as_row(h_t)));
  const int k = net.components();
  GoalGMM goal;
  goal.pi = pi;
  goal.mu.resize(k, 2);
  for (int c = 0; c < k; ++c) {
    goal.mu(c, 0) = out.mu.value()(0, 2 * c);
    goal.mu(c, 1) = out.mu.value()(0, 2 * c + 1);
    goal.cov.push_back(covariance_from(out.log_sigma.value()(0, 2 * c), out.log_sigma.value()(0, 2 * c + 1),
                                       out.corr_raw.value()(0, c)));
    require_spd(goal.cov.back(), "goal mixture");
  }
  if (!goal.mu.allFinite()) throw NumericalError("non-finite goal mixture means");
  return goal;
}

}  // namespace bitrap
