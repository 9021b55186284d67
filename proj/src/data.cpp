#include "bitrap/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "bitrap/errors.hpp"
#include "bitrap/nn.hpp"

namespace bitrap {

namespace {

using json = nlohmann::json;

bool parse_double(const std::string& token, double& out) {
  const char* first = token.data();
  const char* last = token.data() + token.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && std::isfinite(out);
}

bool parse_frame(const std::string& token, long& out) {
  double v = 0.0;
  if (!parse_double(token, v) || v != std::floor(v) || std::abs(v) > 9.0e15) return false;
  out = static_cast<long>(v);
  return true;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

// Groups (frame, id, state) observations into tracks in order of first
// appearance, checking per-agent frame monotonicity.
class TrackBuilder {
 public:
  explicit TrackBuilder(Eigen::Index dim) : dim_(dim) {}

  void add(long frame, const std::string& id, const Vec& state, std::size_t line) {
    auto it = index_.find(id);
    if (it == index_.end()) {
      it = index_.emplace(id, rows_.size()).first;
      ids_.push_back(id);
      frames_.emplace_back();
      rows_.emplace_back();
    }
    auto& frames = frames_[it->second];
    if (!frames.empty() && frame <= frames.back()) {
      throw DataError("line " + std::to_string(line) + ": frame " + std::to_string(frame) +
                      " for agent " + id + " does not increase (previous " +
                      std::to_string(frames.back()) + ")");
    }
    frames.push_back(frame);
    rows_[it->second].push_back(state);
  }

  Scene finish(const std::string& scene_id, double dt, long frame_step) {
    if (!(dt > 0.0)) throw ConfigError("dt must be positive");
    Scene scene;
    scene.id = scene_id;
    scene.dt = dt;
    for (std::size_t i = 0; i < ids_.size(); ++i) {
      AgentTrack track;
      track.agent_id = ids_[i];
      track.frames = frames_[i];
      track.states.resize(static_cast<Eigen::Index>(rows_[i].size()), dim_);
      for (std::size_t r = 0; r < rows_[i].size(); ++r) {
        track.states.row(static_cast<Eigen::Index>(r)) = rows_[i][r].transpose();
      }
      scene.tracks.push_back(std::move(track));
    }
    scene.frame_step = frame_step > 0 ? frame_step : infer_frame_step(scene);
    return scene;
  }

 private:
  static long infer_frame_step(const Scene& scene) {
    long step = 0;
    for (const AgentTrack& t : scene.tracks) {
      for (std::size_t i = 1; i < t.frames.size(); ++i) {
        const long d = t.frames[i] - t.frames[i - 1];
        if (step == 0 || d < step) step = d;
      }
    }
    return step > 0 ? step : 1;
  }

  Eigen::Index dim_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::string> ids_;
  std::vector<std::vector<long>> frames_;
  std::vector<std::vector<Vec>> rows_;
};

std::string stem_of(const std::string& path) {
  const auto slash = path.find_last_of('/');
  std::string name = slash == std::string::npos ? path : path.substr(slash + 1);
  const auto dot = name.find_last_of('.');
  return dot == std::string::npos || dot == 0 ? name : name.substr(0, dot);
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return in;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  return out;
}

}  // namespace

bool operator==(const Scene& a, const Scene& b) {
  if (a.id != b.id || a.dt != b.dt || a.frame_step != b.frame_step || a.labels != b.labels ||
      a.tracks.size() != b.tracks.size()) {
    return false;
  }
  for (std::size_t i = 0; i < a.tracks.size(); ++i) {
    const AgentTrack& ta = a.tracks[i];
    const AgentTrack& tb = b.tracks[i];
    if (ta.agent_id != tb.agent_id || ta.frames != tb.frames || ta.states.rows() != tb.states.rows() ||
        ta.states.cols() != tb.states.cols() || ta.states != tb.states) {
      return false;
    }
  }
  return true;
}

Scene load_bev_scene(const std::string& path, double dt, long frame_step) {
  std::ifstream in = open_input(path);
  TrackBuilder builder(2);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream fields(line);
    std::vector<std::string> tokens;
    for (std::string tok; fields >> tok;) tokens.push_back(tok);
    if (tokens.empty()) continue;
    if (tokens.size() != 4) {
      throw ParseError("expected 4 fields (frame agent_id x y), got " + std::to_string(tokens.size()), lineno);
    }
    long frame = 0;
    Vec xy(2);
    if (!parse_frame(tokens[0], frame)) throw ParseError("invalid frame '" + tokens[0] + "'", lineno);
    if (!parse_double(tokens[2], xy[0])) throw ParseError("invalid x '" + tokens[2] + "'", lineno);
    if (!parse_double(tokens[3], xy[1])) throw ParseError("invalid y '" + tokens[3] + "'", lineno);
    builder.add(frame, tokens[1], xy, lineno);
  }
  return builder.finish(stem_of(path), dt, frame_step);
}

void save_bev_scene(const Scene& scene, const std::string& path) {
  std::ofstream out = open_output(path);
  for (const AgentTrack& t : scene.tracks) {
    if (t.dim() != 2) throw ShapeError("BEV scenes hold 2-D states");
    for (std::size_t i = 0; i < t.frames.size(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      out << t.frames[i] << ' ' << t.agent_id << ' ' << format_double(t.states(r, 0)) << ' '
          << format_double(t.states(r, 1)) << '\n';
    }
  }
  if (!out) throw DataError("failed writing " + path);
}

Scene load_fpv_tracks(const std::string& path, double dt, long frame_step) {
  std::ifstream in = open_input(path);
  TrackBuilder builder(4);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("invalid JSON record: ") + e.what(), lineno);
    }
    if (!rec.is_object()) throw ParseError("record is not an object", lineno);
    for (const char* key : {"frame", "id", "box"}) {
      if (!rec.contains(key)) throw ParseError(std::string("missing field '") + key + "'", lineno);
    }
    const json& jframe = rec["frame"];
    if (!jframe.is_number_integer()) throw ParseError("field 'frame' must be an integer", lineno);
    std::string id;
    if (rec["id"].is_string()) {
      id = rec["id"].get<std::string>();
    } else if (rec["id"].is_number_integer()) {
      id = std::to_string(rec["id"].get<long>());
    } else {
      throw ParseError("field 'id' must be a string", lineno);
    }
    const json& jbox = rec["box"];
    if (!jbox.is_array() || jbox.size() != 4) throw ParseError("field 'box' must hold 4 numbers", lineno);
    Vec box(4);
    for (int k = 0; k < 4; ++k) {
      if (!jbox[k].is_number()) throw ParseError("field 'box' must hold 4 numbers", lineno);
      box[k] = jbox[k].get<double>();
      if (!std::isfinite(box[k])) throw ParseError("non-finite box value", lineno);
    }
    if (box[2] < 0.0 || box[3] < 0.0) {
      throw DataError("line " + std::to_string(lineno) + ": negative box width or height");
    }
    builder.add(jframe.get<long>(), id, box, lineno);
  }
  return builder.finish(stem_of(path), dt, frame_step);
}

void save_fpv_tracks(const Scene& scene, const std::string& path) {
  std::ofstream out = open_output(path);
  for (const AgentTrack& t : scene.tracks) {
    if (t.dim() != 4) throw ShapeError("FPV scenes hold 4-D boxes");
    for (std::size_t i = 0; i < t.frames.size(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      json rec{{"frame", t.frames[i]},
               {"id", t.agent_id},
               {"box", {t.states(r, 0), t.states(r, 1), t.states(r, 2), t.states(r, 3)}}};
      out << rec.dump() << '\n';
    }
  }
}

void save_scene_metadata(const Scene& scene, const std::string& path) {
  std::ofstream out = open_output(path);
  json meta{{"id", scene.id}, {"dt", scene.dt}, {"frame_step", scene.frame_step}, {"labels", scene.labels}};
  out << meta.dump(2) << '\n';
}

void load_scene_metadata(Scene& scene, const std::string& path) {
  std::ifstream in = open_input(path);
  json meta;
  try {
    meta = json::parse(in);
    scene.id = meta.value("id", scene.id);
    scene.dt = meta.value("dt", scene.dt);
    scene.frame_step = meta.value("frame_step", scene.frame_step);
    scene.labels = meta.value("labels", std::map<std::string, int>{});
  } catch (const json::exception& e) {
    throw DataError("invalid scene metadata " + path + ": " + e.what());
  }
}

WindowExtraction make_windows(const Scene& scene, int tau, int delta, int stride) {
  if (tau < 1 || delta < 1 || stride < 1) throw ConfigError("tau, delta and stride must be >= 1");
  WindowExtraction result;
  const std::size_t span = static_cast<std::size_t>(tau + delta);
  for (const AgentTrack& track : scene.tracks) {
    const std::size_t before = result.windows.size();
    const auto label_it = scene.labels.find(track.agent_id);
    const int label = label_it == scene.labels.end() ? -1 : label_it->second;
    std::size_t run_start = 0;
    for (std::size_t i = 1; i <= track.frames.size(); ++i) {
      const bool breaks = i == track.frames.size() || track.frames[i] - track.frames[i - 1] != scene.frame_step;
      if (!breaks) continue;
      const std::size_t run_len = i - run_start;
      for (std::size_t s = run_start; run_len >= span && s + span <= i; s += static_cast<std::size_t>(stride)) {
        TrajectoryWindow w;
        w.past = track.states.middleRows(static_cast<Eigen::Index>(s), tau);
        w.future = track.states.middleRows(static_cast<Eigen::Index>(s) + tau, delta);
        w.origin = w.past.row(tau - 1).transpose();
        w.goal = w.future.row(delta - 1).transpose();
        w.scene_id = scene.id;
        w.agent_id = track.agent_id;
        w.t = track.frames[s + static_cast<std::size_t>(tau) - 1];
        w.label = label;
        result.windows.push_back(std::move(w));
      }
      run_start = i;
    }
    if (result.windows.size() == before) ++result.skipped_tracks;
  }
  return result;
}

std::vector<double> branch_angles(std::size_t n_branches) {
  constexpr double kQuarter = 1.5707963267948966;
  if (n_branches == 1) return {0.0};
  if (n_branches == 3) return {0.0, kQuarter, -kQuarter};
  std::vector<double> angles(n_branches);
  for (std::size_t i = 0; i < n_branches; ++i) {
    angles[i] = -kQuarter + 2.0 * kQuarter * static_cast<double>(i) / static_cast<double>(n_branches - 1);
  }
  return angles;
}

Scene synth_multimodal_dataset(const SynthConfig& config) {
  if (config.branch_probs.empty()) throw ConfigError("branch_probs must not be empty");
  double total = 0.0;
  for (double p : config.branch_probs) {
    if (!(p >= 0.0)) throw ConfigError("branch_probs must be nonnegative");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("branch_probs must sum to 1 (got " + format_double(total) + ")");
  if (!(config.noise_std >= 0.0)) throw ConfigError("noise_std must be >= 0");
  if (config.n_agents < 0) throw ConfigError("n_agents must be >= 0");
  if (config.tau < 1 || config.delta < 1) throw ConfigError("tau and delta must be >= 1");
  if (!(config.dt > 0.0) || !(config.speed > 0.0)) throw ConfigError("dt and speed must be positive");

  const std::vector<double> angles = branch_angles(config.branch_probs.size());
  Rng rng(config.seed);
  Scene scene;
  scene.id = "synth";
  scene.dt = config.dt;
  scene.frame_step = 1;
  const int length = config.tau + config.delta;
  const double step = config.speed * config.dt;
  for (int a = 0; a < config.n_agents; ++a) {
    const double x0 = rng.uniform(0.0, config.area);
    const double y0 = rng.uniform(0.0, config.area);
    const double heading = config.heading_spread > 0.0 ? rng.uniform(-config.heading_spread, config.heading_spread) : 0.0;
    const double u = rng.uniform();
    std::size_t branch = 0;
    for (double acc = config.branch_probs[0]; branch + 1 < config.branch_probs.size() && u >= acc;) {
      ++branch;
      acc += config.branch_probs[branch];
    }
    const double turn = heading + angles[branch];

    AgentTrack track;
    track.agent_id = std::to_string(a);
    track.states.resize(length, 2);
    for (int j = 0; j < config.tau; ++j) {
      track.states(j, 0) = x0 + j * step * std::cos(heading);
      track.states(j, 1) = y0 + j * step * std::sin(heading);
    }
    const double cx = track.states(config.tau - 1, 0);
    const double cy = track.states(config.tau - 1, 1);
    for (int m = 1; m <= config.delta; ++m) {
      track.states(config.tau - 1 + m, 0) = cx + m * step * std::cos(turn);
      track.states(config.tau - 1 + m, 1) = cy + m * step * std::sin(turn);
    }
    if (config.noise_std > 0.0) {
      for (Eigen::Index k = 0; k < track.states.size(); ++k) track.states.data()[k] += config.noise_std * rng.normal();
    }
    track.frames.resize(static_cast<std::size_t>(length));
    std::iota(track.frames.begin(), track.frames.end(), 0L);
    scene.labels[track.agent_id] = static_cast<int>(branch);
    scene.tracks.push_back(std::move(track));
  }
  return scene;
}

Standardizer::Standardizer(Vec shift, Vec scale) : shift_(std::move(shift)), scale_(std::move(scale)) {
  if (shift_.size() != scale_.size()) throw ShapeError("standardizer shift/scale size mismatch");
  if ((scale_.array() <= 0.0).any()) throw ConfigError("standardizer scale must be positive");
}

Standardizer Standardizer::fit(const std::vector<TrajectoryWindow>& windows) {
  if (windows.empty()) throw DataError("cannot fit a standardizer on an empty window list");
  const Eigen::Index dim = windows.front().dim();
  Vec sum = Vec::Zero(dim);
  double count = 0.0;
  for (const TrajectoryWindow& w : windows) {
    if (w.dim() != dim) throw ShapeError("windows differ in state dimension");
    sum += w.past.colwise().sum().transpose() + w.future.colwise().sum().transpose();
    count += static_cast<double>(w.past.rows() + w.future.rows());
  }
  const Vec mean = sum / count;
  Vec sq = Vec::Zero(dim);
  for (const TrajectoryWindow& w : windows) {
    sq += (w.past.rowwise() - mean.transpose()).array().square().colwise().sum().matrix().transpose();
    sq += (w.future.rowwise() - mean.transpose()).array().square().colwise().sum().matrix().transpose();
  }
  Vec std = (sq / count).array().sqrt().max(kStandardizerFloor);
  return Standardizer(mean, std);
}

Mat Standardizer::apply_rows(const Mat& rows) const {
  if (rows.cols() != shift_.size()) throw ShapeError("standardizer dimension mismatch");
  return ((rows.rowwise() - shift_.transpose()).array().rowwise() / scale_.transpose().array()).matrix();
}

Mat Standardizer::invert_rows(const Mat& rows) const {
  if (rows.cols() != shift_.size()) throw ShapeError("standardizer dimension mismatch");
  return ((rows.array().rowwise() * scale_.transpose().array()).rowwise() + shift_.transpose().array()).matrix();
}

TrajectoryWindow Standardizer::apply(const TrajectoryWindow& w) const {
  TrajectoryWindow out = w;
  out.past = apply_rows(w.past);
  out.future = apply_rows(w.future);
  out.goal = row_vec(apply_rows(as_row(w.goal)));
  out.origin = row_vec(apply_rows(as_row(w.origin)));
  return out;
}

TrajectoryWindow Standardizer::invert(const TrajectoryWindow& w) const {
  TrajectoryWindow out = w;
  out.past = invert_rows(w.past);
  out.future = invert_rows(w.future);
  out.goal = row_vec(invert_rows(as_row(w.goal)));
  out.origin = row_vec(invert_rows(as_row(w.origin)));
  return out;
}

Mat box_centers(const Mat& rows, bool top_left_anchor) {
  if (rows.cols() == 2) return rows;
  if (rows.cols() != 4) throw ShapeError("box_centers expects 2-D or 4-D rows");
  Mat c = rows.leftCols(2);
  if (top_left_anchor) c += 0.5 * rows.rightCols(2);
  return c;
}

TrajectoryWindow to_center_window(const TrajectoryWindow& w, bool top_left_anchor) {
  TrajectoryWindow out = w;
  out.past = box_centers(w.past, top_left_anchor);
  out.future = box_centers(w.future, top_left_anchor);
  out.goal = row_vec(box_centers(as_row(w.goal), top_left_anchor));
  out.origin = row_vec(box_centers(as_row(w.origin), top_left_anchor));
  return out;
}

}  // namespace bitrap
