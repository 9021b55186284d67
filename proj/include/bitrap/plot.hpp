#pragma once

// Hand-written SVG figures from prediction dumps. Box data is drawn by its
// centers. Colors: past dark blue, ground truth red, predictions green.

#include <string>
#include <vector>

#include "bitrap/report.hpp"

namespace bitrap {

// Past, ground truth and sampled futures; a mixture dump adds one 2-sigma
// ellipse per endpoint component with opacity scaled by its weight.
void plot_overlay(const DumpRecord& record, const std::string& path, bool top_left_anchor = true);

// Kernel density of all sampled waypoints on a grid, with past and ground
// truth on top.
void plot_kde_heatmap(const DumpRecord& record, const std::string& path, int grid = 60,
                      bool top_left_anchor = true);

struct NllCurve {
  std::string label;
  Vec nll;  // one value per predicted step
};

// Per-step NLL against time; the x axis runs from dt to delta * dt seconds.
void plot_nll_curves(const std::vector<NllCurve>& curves, double dt, const std::string& path);

}  // namespace bitrap
