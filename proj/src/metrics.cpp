#include "bitrap/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "bitrap/errors.hpp"

namespace bitrap {

namespace {

void require_same_shape(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols() || a.rows() == 0) {
    throw ShapeError("prediction and ground truth shapes differ");
  }
}

}  // namespace

Vec step_errors(const Mat& pred, const Mat& gt, DisplacementMode mode) {
  require_same_shape(pred, gt);
  const Mat d = pred - gt;
  if (mode == DisplacementMode::kEuclidean) return d.rowwise().norm();
  return d.cwiseAbs2().rowwise().mean();
}

double ade(const Mat& pred, const Mat& gt, DisplacementMode mode) { return step_errors(pred, gt, mode).mean(); }

double fde(const Mat& pred, const Mat& gt, DisplacementMode mode) {
  const Vec e = step_errors(pred, gt, mode);
  return e(e.size() - 1);
}

double c_ade(const Mat& pred_boxes, const Mat& gt_boxes, bool top_left_anchor) {
  require_same_shape(pred_boxes, gt_boxes);
  return ade(box_centers(pred_boxes, top_left_anchor), box_centers(gt_boxes, top_left_anchor),
             DisplacementMode::kSquaredPx);
}

double c_fde(const Mat& pred_boxes, const Mat& gt_boxes, bool top_left_anchor) {
  require_same_shape(pred_boxes, gt_boxes);
  return fde(box_centers(pred_boxes, top_left_anchor), box_centers(gt_boxes, top_left_anchor),
             DisplacementMode::kSquaredPx);
}

double best_of_n(const std::vector<Mat>& preds, const Mat& gt, const TrajectoryMetric& metric) {
  if (preds.empty()) throw ConfigError("best_of_n needs at least one sample");
  double best = std::numeric_limits<double>::infinity();
  for (const Mat& p : preds) best = std::min(best, metric(p, gt));
  return best;
}

KdeResult kde_nll(const std::vector<Mat>& samples, const Mat& gt, const KdeOptions& options) {
  const auto n = static_cast<Eigen::Index>(samples.size());
  if (n < 2) throw ConfigError("kde_nll needs at least two samples");
  for (const Mat& s : samples) require_same_shape(s, gt);
  const Eigen::Index steps = gt.rows();
  const Eigen::Index d = gt.cols();
  const double scott = std::pow(static_cast<double>(n), -1.0 / (static_cast<double>(d) + 4.0));
  const double log_n = std::log(static_cast<double>(n));
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);

  KdeResult out;
  out.per_step.resize(steps);
  Mat points(n, d);
  for (Eigen::Index s = 0; s < steps; ++s) {
    for (Eigen::Index i = 0; i < n; ++i) points.row(i) = samples[static_cast<std::size_t>(i)].row(s);
    const Eigen::RowVectorXd mean = points.colwise().mean();
    const Eigen::RowVectorXd sd =
        ((points.rowwise() - mean).cwiseAbs2().colwise().sum() / static_cast<double>(n - 1)).cwiseSqrt();
    Eigen::RowVectorXd bw = sd * scott;
    for (Eigen::Index k = 0; k < d; ++k) {
      if (!(bw(k) >= options.bandwidth_floor)) {
        bw(k) = options.bandwidth_floor;
        ++out.floored_bandwidths;
      }
    }
    const double log_norm = -static_cast<double>(d) * half_log_2pi - bw.array().log().sum();
    Vec terms(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::RowVectorXd z = (gt.row(s) - points.row(i)).cwiseQuotient(bw);
      terms(i) = log_norm - 0.5 * z.squaredNorm();
    }
    const double m = terms.maxCoeff();
    const double log_p = m + std::log((terms.array() - m).exp().sum()) - log_n;
    out.per_step(s) = -std::max(log_p, options.log_density_floor);
  }
  return out;
}

double kde_nll(const std::vector<Mat>& samples, const Mat& gt, KdeMode mode, const KdeOptions& options) {
  const KdeResult r = kde_nll(samples, gt, options);
  return mode == KdeMode::kAverage ? r.average() : r.final();
}

MetricReport evaluate(const Checkpoint& ckpt, const std::vector<TrajectoryWindow>& windows, const EvalConfig& config,
                      std::vector<WindowPrediction>* dump) {
  if (!ckpt.fitted()) throw ConfigError("checkpoint has no fitted model");
  if (windows.empty()) throw DataError("no windows to evaluate");
  if (config.best_of < 1) throw ConfigError("best_of must be >= 1");
  const Variant variant = ckpt.config.model.variant;
  const bool stochastic = variant != Variant::kDeterministic;
  if (stochastic && config.kde_samples < 2) throw ConfigError("kde_samples must be >= 2");

  const bool boxes = windows.front().dim() == 4;
  const bool centers_only = boxes && variant == Variant::kGMM;
  const DisplacementMode mode = boxes ? DisplacementMode::kSquaredPx : DisplacementMode::kEuclidean;
  const int draws = stochastic ? std::max(config.best_of, config.kde_samples) : 1;
  KdeOptions kde;
  kde.bandwidth_floor = config.kde_floor > 0.0 ? config.kde_floor : (boxes ? 1.0 : 0.01);
  kde.log_density_floor = config.log_density_floor;

  MetricReport rep;
  rep.variant = to_string(variant);
  rep.units = boxes ? "px^2" : "m";
  rep.windows = windows.size();
  rep.best_of = stochastic ? config.best_of : 1;
  rep.dt = ckpt.config.model.dt;
  rep.log_density_floor = config.log_density_floor;
  const Eigen::Index delta = windows.front().delta();

  double sum_ade = 0.0, sum_fde = 0.0, sum_cade = 0.0, sum_cfde = 0.0;
  std::map<double, double> sum_at;
  Vec sum_step = Vec::Zero(delta);
  Vec sum_nll = Vec::Zero(delta);
  for (std::size_t wi = 0; wi < windows.size(); ++wi) {
    const TrajectoryWindow& w = windows[wi];
    if (w.delta() != delta || w.dim() != windows.front().dim()) throw ShapeError("windows differ in shape");
    PredictionSet pred = predict(ckpt, w, draws, derive_seed(config.seed, wi));
    const std::vector<Mat> best(pred.samples.begin(),
                                pred.samples.begin() + std::min<std::size_t>(pred.samples.size(), rep.best_of));

    // Displacement on boxes (NP family on FPV) or on the sampled space.
    const Mat gt_space = centers_only ? box_centers(w.future, config.center_top_left) : w.future;
    if (!centers_only) {
      sum_ade += best_of_n(best, gt_space, [&](const Mat& p, const Mat& g) { return ade(p, g, mode); });
      sum_fde += best_of_n(best, gt_space, [&](const Mat& p, const Mat& g) { return fde(p, g, mode); });
    }
    Vec step_best = Vec::Constant(delta, std::numeric_limits<double>::infinity());
    for (const Mat& p : best) step_best = step_best.cwiseMin(step_errors(p, gt_space, mode));
    sum_step += step_best;
    for (double h : config.horizons_s) {
      const auto steps = std::clamp<Eigen::Index>(std::lround(h / rep.dt), 1, delta);
      sum_at[h] += best_of_n(best, gt_space, [&](const Mat& p, const Mat& g) {
        return ade(p.topRows(steps), g.topRows(steps), mode);
      });
    }

    std::vector<Mat> centers;
    Mat gt_centers;
    if (boxes) {
      gt_centers = box_centers(w.future, config.center_top_left);
      if (centers_only) {
        centers = pred.samples;
      } else {
        for (const Mat& p : pred.samples) centers.push_back(box_centers(p, config.center_top_left));
      }
      const std::vector<Mat> best_centers(centers.begin(), centers.begin() + static_cast<long>(best.size()));
      sum_cade += best_of_n(best_centers, gt_centers, [](const Mat& p, const Mat& g) {
        return ade(p, g, DisplacementMode::kSquaredPx);
      });
      sum_cfde += best_of_n(best_centers, gt_centers, [](const Mat& p, const Mat& g) {
        return fde(p, g, DisplacementMode::kSquaredPx);
      });
    }

    Vec nll;
    if (stochastic) {
      const KdeResult r = boxes ? kde_nll(centers, gt_centers, kde) : kde_nll(pred.samples, w.future, kde);
      nll = r.per_step;
      sum_nll += nll;
      rep.floored_kde_bandwidths += r.floored_bandwidths;
    }
    if (dump != nullptr) {
      if (pred.samples.size() > static_cast<std::size_t>(config.dump_samples)) {
        pred.samples.resize(static_cast<std::size_t>(config.dump_samples));
        if (!pred.components.empty()) pred.components.resize(pred.samples.size());
      }
      dump->push_back({wi, w, std::move(pred), nll});
    }
  }

  const double n = static_cast<double>(windows.size());
  if (!centers_only) {
    rep.ade = sum_ade / n;
    rep.fde = sum_fde / n;
  }
  if (boxes) {
    rep.c_ade = sum_cade / n;
    rep.c_fde = sum_cfde / n;
  }
  for (const auto& [h, v] : sum_at) rep.ade_at[h] = v / n;
  rep.best_per_step = sum_step / n;
  if (stochastic) {
    rep.nll_per_step = sum_nll / n;
    rep.anll = rep.nll_per_step.mean();
    rep.fnll = rep.nll_per_step(delta - 1);
  }
  return rep;
}

}  // namespace bitrap
