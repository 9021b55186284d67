#pragma once

// Trajectory data: scenes of agent tracks, observation/prediction windows,
// per-dimension standardization, and the synthetic branching scenario.
//
// States are stored one row per frame. D = 2 rows are (x, y) in meters
// (bird's-eye view); D = 4 rows are (x, y, w, h) boxes in pixels
// (first-person view).

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "bitrap/autodiff.hpp"

namespace bitrap {

struct AgentTrack {
  std::string agent_id;
  std::vector<long> frames;  // strictly increasing
  Mat states;                // frames.size() x D

  Eigen::Index dim() const { return states.cols(); }
  std::size_t size() const { return frames.size(); }
};

struct Scene {
  std::string id;
  double dt = 0.4;       // seconds per frame step
  long frame_step = 1;   // frame-index increment between consecutive samples
  std::vector<AgentTrack> tracks;
  std::map<std::string, int> labels;  // synthetic ground-truth branch per agent

  friend bool operator==(const Scene& a, const Scene& b);
};

struct TrajectoryWindow {
  Mat past;    // tau x D, ends at the current state
  Mat future;  // delta x D
  Vec goal;    // == future.row(delta - 1)
  Vec origin;  // == past.row(tau - 1)
  std::string scene_id;
  std::string agent_id;
  long t = 0;     // frame index of the current state
  int label = -1; // branch label when known

  Eigen::Index tau() const { return past.rows(); }
  Eigen::Index delta() const { return future.rows(); }
  Eigen::Index dim() const { return past.cols(); }
};

struct WindowExtraction {
  std::vector<TrajectoryWindow> windows;
  std::size_t skipped_tracks = 0;  // tracks contributing no window
};

// frame_step <= 0 infers the step as the smallest positive frame difference
// seen within any track.
Scene load_bev_scene(const std::string& path, double dt, long frame_step = 0);
void save_bev_scene(const Scene& scene, const std::string& path);

// One JSON object per line: {"frame": 0, "id": "p1", "box": [x, y, w, h]}.
Scene load_fpv_tracks(const std::string& path, double dt, long frame_step = 0);
void save_fpv_tracks(const Scene& scene, const std::string& path);

// Sidecar JSON with dt, frame_step and branch labels.
void save_scene_metadata(const Scene& scene, const std::string& path);
void load_scene_metadata(Scene& scene, const std::string& path);

WindowExtraction make_windows(const Scene& scene, int tau, int delta, int stride);

struct SynthConfig {
  int n_agents = 300;
  std::vector<double> branch_probs{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
  double noise_std = 0.05;   // meters
  double speed = 1.2;        // meters per second
  int tau = 8;
  int delta = 12;
  double dt = 0.4;
  double area = 20.0;        // start positions uniform in [0, area]^2
  double heading_spread = 3.141592653589793;  // headings uniform in [-spread, spread]
  std::uint64_t seed = 0;
};

// Branch turn angles relative to the initial heading. Three branches give
// straight, left 90 degrees and right 90 degrees; otherwise the angles are
// spread evenly over [-90, 90] degrees.
std::vector<double> branch_angles(std::size_t n_branches);

// Each agent walks straight for tau steps and then turns onto one of the
// branches, chosen with branch_probs. Labels record the chosen branch.
Scene synth_multimodal_dataset(const SynthConfig& config);

class Standardizer {
 public:
  Standardizer() = default;
  Standardizer(Vec shift, Vec scale);

  static Standardizer fit(const std::vector<TrajectoryWindow>& windows);

  TrajectoryWindow apply(const TrajectoryWindow& w) const;
  TrajectoryWindow invert(const TrajectoryWindow& w) const;
  Mat apply_rows(const Mat& rows) const;
  Mat invert_rows(const Mat& rows) const;

  const Vec& shift() const { return shift_; }
  const Vec& scale() const { return scale_; }
  bool fitted() const { return shift_.size() > 0; }

 private:
  Vec shift_;
  Vec scale_;
};

inline constexpr double kStandardizerFloor = 1e-6;

// Box rows (x, y, w, h) to center rows (x + w/2, y + h/2) under a top-left
// anchor; (x, y) under a center anchor. D = 2 input is returned unchanged.
Mat box_centers(const Mat& rows, bool top_left_anchor = true);
TrajectoryWindow to_center_window(const TrajectoryWindow& w, bool top_left_anchor = true);

}  // namespace bitrap
