#pragma once

#include <string>
#include <vector>

#include "bitrap/nn.hpp"

namespace bitrap {

// Endpoint residual relative to the current state X_t.
struct GoalSampleNP {
  Vec residual;
  Vec absolute(const Vec& origin) const { return origin + residual; }
};

// K-component bivariate endpoint mixture in residual coordinates. Component
// k here is the same component k of the categorical latent and decoder.
struct GoalGMM {
  Vec pi;                             // K
  Mat mu;                             // K x 2
  std::vector<Eigen::Matrix2d> cov;   // K, symmetric positive definite

  int components() const { return static_cast<int>(pi.size()); }
};

// Correlations are squashed into (-kCorrBound, kCorrBound).
inline constexpr double kCorrBound = 1.0 - 1e-6;

class NpGoalNet {
 public:
  NpGoalNet() = default;
  NpGoalNet(ParameterStore& store, const std::string& name, int feature, int latent, int hidden, int goal_dim);

  // h: B x H, z: B x L  ->  B x D residual goals.
  Var forward(Tape& tape, const Var& h, const Var& z) const;

  Mlp3 mlp;
};

// Three heads on h_t: means (K x 2), log standard deviations (K x 2) and raw
// correlations (K); each row of a head output is component-major.
class GmmGoalNet {
 public:
  GmmGoalNet() = default;
  GmmGoalNet(ParameterStore& store, const std::string& name, int feature, int hidden, int components);

  struct Output {
    Var mu;         // B x 2K
    Var log_sigma;  // B x 2K, clamped to [-10, 10]
    Var corr_raw;   // B x K
  };
  Output forward(Tape& tape, const Var& h) const;
  int components() const { return components_; }

  Mlp3 mean_head, log_sigma_head, corr_head;

 private:
  int components_ = 0;
};

GoalSampleNP generate_goal_np(const NpGoalNet& net, const Vec& h_t, const Vec& z);

// pi comes from the categorical latent (prior at test time, posterior in training).
GoalGMM generate_goal_gmm(const GmmGoalNet& net, const Vec& h_t, const Vec& pi);

Eigen::Matrix2d covariance_from(double log_sigma_x, double log_sigma_y, double corr_raw);

// Throws NumericalError unless cov is symmetric and admits a Cholesky factor.
void require_spd(const Eigen::Matrix2d& cov, const char* what);

}  // namespace bitrap
