#pragma once

// Optimization loop, learning-rate schedule, checkpoints and sampling from a
// trained model.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bitrap/model.hpp"

namespace bitrap {

struct TrainConfig {
  ModelConfig model;
  int tau = 8;
  int delta = 12;
  int stride = 1;
  int batch_size = 128;
  double lr = 1e-3;
  double lr_decay = 0.999;
  int epochs = 100;
  double clip_norm = 1.0;  // global gradient norm; <= 0 disables clipping
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  bool center_anchor_top_left = true;  // box-to-center convention when GMM runs on boxes
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

double lr_at(int epoch, const TrainConfig& config);

struct LossRecord {
  int epoch = 0;
  std::string split;  // "train" or "val"
  double loss = 0.0;
  double lr = 0.0;

  friend bool operator==(const LossRecord&, const LossRecord&) = default;
};

struct AdamState {
  long step = 0;
  std::vector<Mat> m, v;  // parameter order of the store
};

struct Checkpoint {
  TrainConfig config;
  Standardizer standardizer;
  int epoch = 0;  // completed epochs
  std::string rng_state;
  AdamState adam;
  std::vector<LossRecord> curve;
  std::shared_ptr<BitrapModel> model;

  bool fitted() const { return model != nullptr && standardizer.fitted(); }
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Windows in the representation the variant trains on: boxes are reduced to
// centers for the GMM variant, everything else is passed through.
std::vector<TrajectoryWindow> model_windows(const std::vector<TrajectoryWindow>& windows, const TrainConfig& config);

// Trains from scratch on `windows` (raw coordinates). With `resume`, training
// continues from its epoch counter, optimizer and RNG state up to
// config.epochs. `val` windows, when given, add a "val" record per epoch.
Checkpoint train(const TrainConfig& config, const std::vector<TrajectoryWindow>& windows, double dt,
                 const std::vector<TrajectoryWindow>* val = nullptr, const Checkpoint* resume = nullptr);
Checkpoint train(const TrainConfig& config, const Scene& scene);

// Mean model loss over standardized windows, without parameter updates.
double evaluate_loss(const BitrapModel& model, const std::vector<TrajectoryWindow>& standardized, int batch_size,
                     Rng& rng);

// Best-of-many objective for one window from explicit samples, in residual
// space: min_i |G - X - g_i| + min_i sum_s |Y_s - X - y_i(s)| + kld.
double loss_np_total(const std::vector<Vec>& goal_residuals, const std::vector<Mat>& trajectory_residuals,
                     const TrajectoryWindow& window, double kld);

struct PredictionSet {
  std::vector<Mat> samples;               // n x (delta x D), absolute coordinates
  std::vector<int> components;            // GMM: component of each sample
  std::optional<GoalGMM> goal;            // GMM: absolute endpoint mixture
  std::optional<GMMSequence> position;    // GMM: absolute position mixtures per step
};

// `window` is in raw coordinates (boxes allowed for GMM; they are reduced to
// centers and the samples are centers).
PredictionSet predict(const Checkpoint& ckpt, const TrajectoryWindow& window, int n_samples, std::uint64_t seed);

}  // namespace bitrap
