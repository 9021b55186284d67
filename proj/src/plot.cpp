#include "bitrap/plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "bitrap/errors.hpp"

namespace bitrap {

namespace {

constexpr double kSize = 480.0;
constexpr double kMargin = 30.0;
constexpr const char* kPast = "#1f2f8f";
constexpr const char* kTruth = "#d62728";
constexpr const char* kPred = "#2ca02c";

// Equal-aspect map from data coordinates to the canvas, y pointing up.
struct Frame {
  double x0 = 0, y0 = 0, scale = 1;

  static Frame fit(const std::vector<const Mat*>& sets) {
    double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
    for (const Mat* m : sets) {
      if (m->rows() == 0) continue;
      xmin = std::min(xmin, m->col(0).minCoeff());
      xmax = std::max(xmax, m->col(0).maxCoeff());
      ymin = std::min(ymin, m->col(1).minCoeff());
      ymax = std::max(ymax, m->col(1).maxCoeff());
    }
    const double span = std::max({xmax - xmin, ymax - ymin, 1e-6});
    Frame f;
    f.scale = (kSize - 2 * kMargin) / span;
    f.x0 = (xmin + xmax) / 2 - span / 2;
    f.y0 = (ymin + ymax) / 2 - span / 2;
    return f;
  }
  double px(double x) const { return kMargin + (x - x0) * scale; }
  double py(double y) const { return kSize - kMargin - (y - y0) * scale; }
};

std::string header(double width, double height, const std::string& extra = "") {
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\" viewBox=\"0 0 "
    << width << ' ' << height << '"' << extra << ">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  return s.str();
}

std::string polyline(const Frame& f, const Mat& pts, const char* color, double width, double opacity = 1.0) {
  std::ostringstream s;
  s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"" << width << "\" stroke-opacity=\""
    << opacity << "\" points=\"";
  for (Eigen::Index i = 0; i < pts.rows(); ++i) s << f.px(pts(i, 0)) << ',' << f.py(pts(i, 1)) << ' ';
  s << "\"/>\n";
  return s.str();
}

void write(const std::string& path, const std::string& body) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << body << "</svg>\n";
}

struct Planar {
  Mat past, future;
  std::vector<Mat> samples;
};

Planar planar(const DumpRecord& r, bool top_left_anchor) {
  if (r.samples.empty()) throw DataError("dump record has no samples");
  Planar p;
  p.past = r.past.cols() == 4 ? box_centers(r.past, top_left_anchor) : r.past;
  p.future = r.future.cols() == 4 ? box_centers(r.future, top_left_anchor) : r.future;
  for (const Mat& s : r.samples) p.samples.push_back(s.cols() == 4 ? box_centers(s, top_left_anchor) : s);
  return p;
}

// Past and samples start from the current state.
Mat joined(const Mat& past, const Mat& future) {
  Mat m(future.rows() + 1, future.cols());
  m.row(0) = past.row(past.rows() - 1);
  m.bottomRows(future.rows()) = future;
  return m;
}

}  // namespace

void plot_overlay(const DumpRecord& record, const std::string& path, bool top_left_anchor) {
  const Planar p = planar(record, top_left_anchor);
  std::vector<const Mat*> sets{&p.past, &p.future};
  for (const Mat& s : p.samples) sets.push_back(&s);
  Mat ellipse_extent;
  if (record.goal) {
    ellipse_extent.resize(2 * record.goal->components(), 2);
    for (int k = 0; k < record.goal->components(); ++k) {
      const double r = 2.0 * std::sqrt(record.goal->cov[k].diagonal().maxCoeff());
      ellipse_extent.row(2 * k) = record.goal->mu.row(k).array() - r;
      ellipse_extent.row(2 * k + 1) = record.goal->mu.row(k).array() + r;
    }
    sets.push_back(&ellipse_extent);
  }
  const Frame f = Frame::fit(sets);
  std::string body = header(kSize, kSize);
  if (record.goal) {
    const double pi_max = record.goal->pi.maxCoeff();
    for (int k = 0; k < record.goal->components(); ++k) {
      Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(record.goal->cov[k]);
      const Eigen::Vector2d radii = 2.0 * es.eigenvalues().cwiseMax(0.0).cwiseSqrt() * f.scale;
      const Eigen::Vector2d axis = es.eigenvectors().col(1);
      const double angle = -std::atan2(axis(1), axis(0)) * 180.0 / std::numbers::pi;
      const double cx = f.px(record.goal->mu(k, 0));
      const double cy = f.py(record.goal->mu(k, 1));
      const double opacity = 0.05 + 0.6 * (pi_max > 0 ? record.goal->pi(k) / pi_max : 0.0);
      std::ostringstream s;
      s << "<ellipse cx=\"" << cx << "\" cy=\"" << cy << "\" rx=\"" << radii(1) << "\" ry=\"" << radii(0)
        << "\" transform=\"rotate(" << angle << ' ' << cx << ' ' << cy << ")\" fill=\"" << kPred
        << "\" fill-opacity=\"" << opacity << "\" stroke=\"" << kPred << "\" stroke-opacity=\"" << opacity
        << "\"/>\n";
      body += s.str();
    }
  }
  for (const Mat& s : p.samples) body += polyline(f, joined(p.past, s), kPred, 1.0, 0.5);
  body += polyline(f, p.past, kPast, 2.5);
  body += polyline(f, joined(p.past, p.future), kTruth, 2.5);
  write(path, body);
}

void plot_kde_heatmap(const DumpRecord& record, const std::string& path, int grid, bool top_left_anchor) {
  if (grid < 2) throw ConfigError("heatmap grid must be >= 2");
  const Planar p = planar(record, top_left_anchor);
  Mat points(static_cast<Eigen::Index>(p.samples.size()) * p.future.rows(), 2);
  Eigen::Index n = 0;
  for (const Mat& s : p.samples) {
    for (Eigen::Index i = 0; i < s.rows(); ++i) points.row(n++) = s.row(i).head(2);
  }
  const Frame f = Frame::fit({&p.past, &p.future, &points});

  const Eigen::RowVector2d mean = points.colwise().mean();
  const Eigen::RowVector2d sd =
      ((points.rowwise() - mean).cwiseAbs2().colwise().sum() / std::max<double>(1.0, double(n - 1))).cwiseSqrt();
  const Eigen::RowVector2d bw = (sd * std::pow(static_cast<double>(n), -1.0 / 6.0)).cwiseMax(1e-3);

  const double cell = (kSize - 2 * kMargin) / grid;
  Mat density(grid, grid);
  for (int gy = 0; gy < grid; ++gy) {
    for (int gx = 0; gx < grid; ++gx) {
      const double x = f.x0 + (gx + 0.5) * cell / f.scale;
      const double y = f.y0 + (grid - gy - 0.5) * cell / f.scale;
      double d = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double zx = (x - points(i, 0)) / bw(0);
        const double zy = (y - points(i, 1)) / bw(1);
        d += std::exp(-0.5 * (zx * zx + zy * zy));
      }
      density(gy, gx) = d;
    }
  }
  const double peak = std::max(density.maxCoeff(), 1e-300);
  std::ostringstream s;
  for (int gy = 0; gy < grid; ++gy) {
    for (int gx = 0; gx < grid; ++gx) {
      const double v = density(gy, gx) / peak;
      if (v < 0.01) continue;
      s << "<rect x=\"" << kMargin + gx * cell << "\" y=\"" << kMargin + gy * cell << "\" width=\"" << cell
        << "\" height=\"" << cell << "\" fill=\"" << kPred << "\" fill-opacity=\"" << v << "\"/>\n";
    }
  }
  std::string body = header(kSize, kSize) + s.str();
  body += polyline(f, p.past, kPast, 2.5);
  body += polyline(f, joined(p.past, p.future), kTruth, 2.5);
  write(path, body);
}

void plot_nll_curves(const std::vector<NllCurve>& curves, double dt, const std::string& path) {
  if (curves.empty()) throw DataError("no NLL curves to plot");
  const Eigen::Index steps = curves.front().nll.size();
  if (steps < 1) throw DataError("empty NLL curve");
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& c : curves) {
    if (c.nll.size() != steps) throw ShapeError("NLL curves differ in length");
    lo = std::min(lo, c.nll.minCoeff());
    hi = std::max(hi, c.nll.maxCoeff());
  }
  if (hi - lo < 1e-9) hi = lo + 1.0;
  const double x_min = dt;
  const double x_max = dt * static_cast<double>(steps);
  const double w = 560, h = 360, left = 60, right = 130, top = 20, bottom = 50;
  auto px = [&](double t) {
    return steps == 1 ? left : left + (t - x_min) / (x_max - x_min) * (w - left - right);
  };
  auto py = [&](double v) { return h - bottom - (v - lo) / (hi - lo) * (h - top - bottom); };

  std::ostringstream attrs;
  attrs << " data-x-min=\"" << x_min << "\" data-x-max=\"" << x_max << '"';
  std::ostringstream s;
  s << header(w, h, attrs.str());
  s << "<line x1=\"" << left << "\" y1=\"" << h - bottom << "\" x2=\"" << w - right << "\" y2=\"" << h - bottom
    << "\" stroke=\"black\"/>\n<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\""
    << h - bottom << "\" stroke=\"black\"/>\n";
  s << "<text x=\"" << left << "\" y=\"" << h - bottom + 18 << "\" font-size=\"12\">" << x_min << "</text>\n";
  s << "<text x=\"" << w - right << "\" y=\"" << h - bottom + 18 << "\" font-size=\"12\" text-anchor=\"end\">"
    << x_max << "</text>\n";
  s << "<text x=\"" << (left + w - right) / 2 << "\" y=\"" << h - 12
    << "\" font-size=\"12\" text-anchor=\"middle\">prediction time (s)</text>\n";
  s << "<text x=\"" << left - 6 << "\" y=\"" << py(hi) + 4 << "\" font-size=\"12\" text-anchor=\"end\">" << hi
    << "</text>\n<text x=\"" << left - 6 << "\" y=\"" << py(lo) + 4 << "\" font-size=\"12\" text-anchor=\"end\">"
    << lo << "</text>\n";
  const char* palette[] = {"#2ca02c", "#1f77b4", "#ff7f0e", "#9467bd", "#8c564b", "#d62728"};
  for (std::size_t c = 0; c < curves.size(); ++c) {
    const char* color = palette[c % 6];
    s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (Eigen::Index i = 0; i < steps; ++i) s << px(dt * double(i + 1)) << ',' << py(curves[c].nll(i)) << ' ';
    s << "\"/>\n<text x=\"" << w - right + 8 << "\" y=\"" << top + 16 * (c + 1) << "\" font-size=\"12\" fill=\""
      << color << "\">" << curves[c].label << "</text>\n";
  }
  write(path, s.str());
}

}  // namespace bitrap
