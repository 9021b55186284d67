#pragma once

// The full predictor: observation/target encoders, latent networks, goal
// network and bi-directional decoder wired for one of four variants.
//
// The model works on standardized windows and predicts residuals relative
// to the current state, so the standardizer shift cancels and only its scale
// reaches the network.

#include <memory>
#include <string>
#include <vector>

#include "bitrap/bidecoder.hpp"
#include "bitrap/data.hpp"
#include "bitrap/encoders.hpp"
#include "bitrap/gmm_dyn.hpp"
#include "bitrap/goal.hpp"
#include "bitrap/latent.hpp"

namespace bitrap {

enum class Variant {
  kNP,           // Gaussian latent, best-of-many L2 loss
  kGMM,          // categorical latent, bi-directional mixture NLL
  kDeterministic,  // NP with one sample fixed at the prior mean, no KL term
  kForwardOnly,  // NP without the backward chain
};

std::string to_string(Variant v);
Variant parse_variant(const std::string& s);
std::string to_string(BackwardFeed f);
BackwardFeed parse_feed(const std::string& s);

struct ModelConfig {
  Variant variant = Variant::kNP;
  int input_dim = 2;
  int hidden = 256;
  int latent = 32;
  int components = 20;
  int train_samples = 20;  // best-of-many N during training (NP, forward-only)
  int horizon = 12;
  double dt = 0.4;
  BackwardFeed feed = BackwardFeed::kReadout;
  bool backward_latent = false;
  GmmLossOptions gmm;

  int goal_dim() const { return variant == Variant::kGMM ? 2 : input_dim; }
  bool stochastic() const { return variant != Variant::kDeterministic; }
};

struct LossBreakdown {
  double goal = 0.0;
  double trajectory = 0.0;  // NP: best-of-many waypoint term; GMM: forward + backward NLL
  double kld = 0.0;
  double total = 0.0;
};

// Residual-frame view of a standardized window.
struct ResidualWindow {
  std::vector<Vec> past;    // tau rows, past - origin
  Mat future;               // delta x D, future - origin
  Vec goal;                 // goal - origin
};
ResidualWindow to_residual(const TrajectoryWindow& standardized);

class BitrapModel {
  // Declared first: the modules below register their parameters here.
  ModelConfig config_;
  ParameterStore store_;

 public:
  explicit BitrapModel(const ModelConfig& config);
  BitrapModel(const BitrapModel&) = delete;
  BitrapModel& operator=(const BitrapModel&) = delete;

  const ModelConfig& config() const { return config_; }
  ParameterStore& params() { return store_; }
  const ParameterStore& params() const { return store_; }

  // Mean loss over a batch of standardized windows. Latent noise is drawn
  // from rng, so a fixed rng state gives a fixed loss surface.
  Var loss(Tape& tape, const std::vector<const TrajectoryWindow*>& batch, Rng& rng,
           LossBreakdown* breakdown = nullptr) const;

  // n trajectories (each delta x D residuals, standardized units) drawn with
  // latents from the prior. Deterministic models return one trajectory.
  std::vector<Mat> sample_residuals(const TrajectoryWindow& standardized, int n, Rng& rng) const;

  struct GmmOutput {
    GoalGMM goal;          // residual frame
    GMMSequence velocity;  // per-step velocity mixtures
    GMMSequence position;  // forward-integrated residual position mixtures
  };
  // All K components decoded under prior weights.
  GmmOutput gmm_output(const TrajectoryWindow& standardized) const;

  SequenceEncoder obs_encoder, target_encoder;
  GaussianLatentNet prior, posterior;
  CategoricalLatentNet prior_cat, posterior_cat;
  NpGoalNet goal_np;
  GmmGoalNet goal_gmm;
  BiDecoder decoder;

 private:
  Var encode(Tape& tape, const std::vector<ResidualWindow>& rows, bool target) const;
  Var np_loss(Tape& tape, const std::vector<ResidualWindow>& rows, Rng& rng, LossBreakdown* breakdown) const;
  Var gmm_loss(Tape& tape, const std::vector<ResidualWindow>& rows, LossBreakdown* breakdown) const;
};

// Tiles the K x K identity once per window: (B*K) x K one-hot rows.
Mat tiled_one_hot(Eigen::Index windows, int components);

}  // namespace bitrap
