#pragma once

// Displacement metrics, best-of-N reduction and kernel-density NLL, plus
// dataset-level evaluation of a checkpoint.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bitrap/training.hpp"

namespace bitrap {

enum class DisplacementMode {
  kEuclidean,  // meters: distance per step
  kSquaredPx,  // pixels: per-coordinate squared error averaged over coordinates
};

double ade(const Mat& pred, const Mat& gt, DisplacementMode mode);
double fde(const Mat& pred, const Mat& gt, DisplacementMode mode);
// Per-step displacement, delta entries.
Vec step_errors(const Mat& pred, const Mat& gt, DisplacementMode mode);

// Box-center ADE/FDE in squared pixels.
double c_ade(const Mat& pred_boxes, const Mat& gt_boxes, bool top_left_anchor = true);
double c_fde(const Mat& pred_boxes, const Mat& gt_boxes, bool top_left_anchor = true);

using TrajectoryMetric = std::function<double(const Mat& pred, const Mat& gt)>;
double best_of_n(const std::vector<Mat>& preds, const Mat& gt, const TrajectoryMetric& metric);

struct KdeOptions {
  double bandwidth_floor = 0.01;      // per dimension, in data units
  double log_density_floor = -20.0;   // nats per step
};

struct KdeResult {
  Vec per_step;  // delta entries of -log p(gt_s)
  int floored_bandwidths = 0;  // dimensions whose Scott bandwidth hit the floor
  double average() const { return per_step.mean(); }
  double final() const { return per_step(per_step.size() - 1); }
};

// Gaussian product-kernel density per step with Scott bandwidths
// sigma_d * n^(-1/(d+4)).
KdeResult kde_nll(const std::vector<Mat>& samples, const Mat& gt, const KdeOptions& options = {});

enum class KdeMode { kAverage, kFinal };
double kde_nll(const std::vector<Mat>& samples, const Mat& gt, KdeMode mode, const KdeOptions& options = {});

struct EvalConfig {
  int best_of = 20;
  int kde_samples = 2000;
  double kde_floor = 0.0;  // <= 0 picks 0.01 for meters and 1.0 for pixels
  double log_density_floor = -20.0;
  bool center_top_left = true;
  std::vector<double> horizons_s;  // extra ADE horizons in seconds (FPV: 0.5, 1.0, 1.5)
  int dump_samples = 20;
  std::uint64_t seed = 0;
};

struct MetricReport {
  std::string variant;
  std::string units;  // "m" or "px^2"
  std::size_t windows = 0;
  int best_of = 0;
  double dt = 0.0;
  std::optional<double> ade, fde;       // best-of-N
  std::optional<double> c_ade, c_fde;   // box centers, FPV only
  std::map<double, double> ade_at;      // horizon seconds -> best-of-N ADE
  Vec best_per_step;                    // mean over windows of the per-step best sample error
  std::optional<double> anll, fnll;     // absent for deterministic models
  Vec nll_per_step;
  int floored_kde_bandwidths = 0;
  double log_density_floor = -20.0;
};

struct WindowPrediction {
  std::size_t index = 0;
  TrajectoryWindow window;  // raw coordinates
  PredictionSet prediction; // samples trimmed to EvalConfig::dump_samples
  Vec nll_per_step;         // empty for deterministic models
};

// windows are raw coordinates; one derived seed per window index.
MetricReport evaluate(const Checkpoint& ckpt, const std::vector<TrajectoryWindow>& windows, const EvalConfig& config,
                      std::vector<WindowPrediction>* dump = nullptr);

}  // namespace bitrap
