#include "bitrap/training.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "bitrap/errors.hpp"

namespace bitrap {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void TrainConfig::validate() const {
  if (tau < 1 || delta < 1 || stride < 1) throw ConfigError("tau, delta and stride must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be a finite value >= 0");
  if (!(lr_decay > 0.0)) throw ConfigError("lr_decay must be positive");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ConfigError("adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
  if (model.hidden < 1 || model.latent < 1 || model.components < 1 || model.train_samples < 1) {
    throw ConfigError("hidden, latent, components and train_samples must be >= 1");
  }
}

nlohmann::json to_json(const TrainConfig& c) {
  return {
      {"variant", to_string(c.model.variant)},
      {"input_dim", c.model.input_dim},
      {"hidden", c.model.hidden},
      {"latent", c.model.latent},
      {"components", c.model.components},
      {"train_samples", c.model.train_samples},
      {"horizon", c.model.horizon},
      {"dt", c.model.dt},
      {"backward_feed", to_string(c.model.feed)},
      {"backward_latent", c.model.backward_latent},
      {"cov_floor", c.model.gmm.cov_floor},
      {"anchor_predicted_goal", c.model.gmm.anchor_predicted_goal},
      {"tau", c.tau},
      {"delta", c.delta},
      {"stride", c.stride},
      {"batch_size", c.batch_size},
      {"lr", c.lr},
      {"lr_decay", c.lr_decay},
      {"epochs", c.epochs},
      {"clip_norm", c.clip_norm},
      {"adam_beta1", c.adam_beta1},
      {"adam_beta2", c.adam_beta2},
      {"adam_eps", c.adam_eps},
      {"center_anchor_top_left", c.center_anchor_top_left},
      {"seed", c.seed},
  };
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  try {
    TrainConfig c;
    c.model.variant = parse_variant(j.at("variant").get<std::string>());
    j.at("input_dim").get_to(c.model.input_dim);
    j.at("hidden").get_to(c.model.hidden);
    j.at("latent").get_to(c.model.latent);
    j.at("components").get_to(c.model.components);
    j.at("train_samples").get_to(c.model.train_samples);
    j.at("horizon").get_to(c.model.horizon);
    j.at("dt").get_to(c.model.dt);
    c.model.feed = parse_feed(j.at("backward_feed").get<std::string>());
    j.at("backward_latent").get_to(c.model.backward_latent);
    j.at("cov_floor").get_to(c.model.gmm.cov_floor);
    j.at("anchor_predicted_goal").get_to(c.model.gmm.anchor_predicted_goal);
    j.at("tau").get_to(c.tau);
    j.at("delta").get_to(c.delta);
    j.at("stride").get_to(c.stride);
    j.at("batch_size").get_to(c.batch_size);
    j.at("lr").get_to(c.lr);
    j.at("lr_decay").get_to(c.lr_decay);
    j.at("epochs").get_to(c.epochs);
    j.at("clip_norm").get_to(c.clip_norm);
    j.at("adam_beta1").get_to(c.adam_beta1);
    j.at("adam_beta2").get_to(c.adam_beta2);
    j.at("adam_eps").get_to(c.adam_eps);
    j.at("center_anchor_top_left").get_to(c.center_anchor_top_left);
    j.at("seed").get_to(c.seed);
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad training config record: ") + e.what());
  }
}

double lr_at(int epoch, const TrainConfig& config) {
  if (epoch < 0) throw ConfigError("epoch must be >= 0");
  return config.lr * std::pow(config.lr_decay, epoch);
}

// ---------------------------------------------------------------------------
// checkpoint container

namespace {

constexpr char kMagic[8] = {'B', 'T', 'R', 'P', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

struct TensorWriter {
  nlohmann::json manifest = nlohmann::json::array();
  std::vector<const Mat*> data;
  std::uint64_t offset = 0;

  void add(const std::string& name, const Mat& m) {
    const std::uint64_t nbytes = static_cast<std::uint64_t>(m.size()) * sizeof(double);
    manifest.push_back({{"name", name},
                        {"shape", {m.rows(), m.cols()}},
                        {"dtype", "f64"},
                        {"byte_order", "little"},
                        {"offset", offset},
                        {"nbytes", nbytes}});
    data.push_back(&m);
    offset += nbytes;
  }
};

std::map<std::string, Mat> read_tensors(const nlohmann::json& manifest, const std::string& blob) {
  std::map<std::string, Mat> out;
  for (const auto& t : manifest) {
    if (t.at("dtype") != "f64" || t.at("byte_order") != "little") throw DataError("unsupported tensor encoding");
    const auto rows = t.at("shape").at(0).get<Eigen::Index>();
    const auto cols = t.at("shape").at(1).get<Eigen::Index>();
    const auto offset = t.at("offset").get<std::uint64_t>();
    const auto nbytes = t.at("nbytes").get<std::uint64_t>();
    if (nbytes != static_cast<std::uint64_t>(rows * cols) * sizeof(double) || offset + nbytes > blob.size()) {
      throw DataError("tensor '" + t.at("name").get<std::string>() + "' lies outside the data section");
    }
    Mat m(rows, cols);
    if (nbytes > 0) std::memcpy(m.data(), blob.data() + offset, nbytes);
    out.emplace(t.at("name").get<std::string>(), std::move(m));
  }
  return out;
}

const Mat& find_tensor(const std::map<std::string, Mat>& tensors, const std::string& name, Eigen::Index rows,
                       Eigen::Index cols) {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw DataError("checkpoint is missing tensor '" + name + "'");
  if (it->second.rows() != rows || it->second.cols() != cols) {
    throw DataError("checkpoint tensor '" + name + "' has the wrong shape");
  }
  return it->second;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  if (!ckpt.fitted()) throw ConfigError("cannot save an unfitted checkpoint");
  TensorWriter w;
  const Mat shift = as_row(ckpt.standardizer.shift());
  const Mat scale = as_row(ckpt.standardizer.scale());
  w.add("standardizer.shift", shift);
  w.add("standardizer.scale", scale);
  const auto& params = ckpt.model->params().params();
  for (const Parameter& p : params) w.add("param/" + p.name, p.value);
  if (ckpt.adam.step > 0) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      w.add("adam.m/" + params[i].name, ckpt.adam.m[i]);
      w.add("adam.v/" + params[i].name, ckpt.adam.v[i]);
    }
  }
  nlohmann::json curve = nlohmann::json::array();
  for (const LossRecord& r : ckpt.curve) {
    curve.push_back({{"epoch", r.epoch}, {"split", r.split}, {"loss", r.loss}, {"lr", r.lr}});
  }
  const nlohmann::json header = {{"format", "bitrap-checkpoint"},
                                 {"config", to_json(ckpt.config)},
                                 {"epoch", ckpt.epoch},
                                 {"rng_state", ckpt.rng_state},
                                 {"adam_step", ckpt.adam.step},
                                 {"curve", curve},
                                 {"tensors", w.manifest}};
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path);
  const std::uint64_t header_len = text.size();
  out.write(kMagic, sizeof kMagic);
  out.write(reinterpret_cast<const char*>(&kVersion), sizeof kVersion);
  out.write(reinterpret_cast<const char*>(&header_len), sizeof header_len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const Mat* m : w.data) {
    out.write(reinterpret_cast<const char*>(m->data()), static_cast<std::streamsize>(m->size() * sizeof(double)));
  }
  if (!out) throw DataError("failed writing checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path);
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t header_len = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  in.read(reinterpret_cast<char*>(&header_len), sizeof header_len);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw DataError(path + " is not a checkpoint");
  if (version != kVersion) throw DataError("unsupported checkpoint version " + std::to_string(version));
  std::string text(header_len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(header_len));
  const std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (!in.eof() && !in) throw DataError("truncated checkpoint " + path);

  Checkpoint ck;
  try {
    const auto header = nlohmann::json::parse(text);
    ck.config = train_config_from_json(header.at("config"));
    ck.epoch = header.at("epoch").get<int>();
    ck.rng_state = header.at("rng_state").get<std::string>();
    ck.adam.step = header.at("adam_step").get<long>();
    for (const auto& r : header.at("curve")) {
      ck.curve.push_back({r.at("epoch").get<int>(), r.at("split").get<std::string>(), r.at("loss").get<double>(),
                          r.at("lr").get<double>()});
    }
    const auto tensors = read_tensors(header.at("tensors"), blob);
    const Eigen::Index d = ck.config.model.input_dim;
    ck.standardizer = Standardizer(row_vec(find_tensor(tensors, "standardizer.shift", 1, d)),
                                   row_vec(find_tensor(tensors, "standardizer.scale", 1, d)));
    ck.model = std::make_shared<BitrapModel>(ck.config.model);
    for (Parameter& p : ck.model->params().params()) {
      p.value = find_tensor(tensors, "param/" + p.name, p.value.rows(), p.value.cols());
      if (ck.adam.step > 0) {
        ck.adam.m.push_back(find_tensor(tensors, "adam.m/" + p.name, p.value.rows(), p.value.cols()));
        ck.adam.v.push_back(find_tensor(tensors, "adam.v/" + p.name, p.value.rows(), p.value.cols()));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("corrupt checkpoint header in " + path + ": " + e.what());
  }
  return ck;
}

// ---------------------------------------------------------------------------
// optimization

std::vector<TrajectoryWindow> model_windows(const std::vector<TrajectoryWindow>& windows, const TrainConfig& config) {
  if (config.model.variant != Variant::kGMM) return windows;
  std::vector<TrajectoryWindow> out;
  out.reserve(windows.size());
  for (const auto& w : windows) out.push_back(to_center_window(w, config.center_anchor_top_left));
  return out;
}

namespace {

void adam_update(ParameterStore& store, AdamState& state, const TrainConfig& c, double lr) {
  auto& params = store.params();
  if (state.m.empty()) {
    for (const Parameter& p : params) {
      state.m.push_back(Mat::Zero(p.value.rows(), p.value.cols()));
      state.v.push_back(Mat::Zero(p.value.rows(), p.value.cols()));
    }
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(c.adam_beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.adam_beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Mat& g = params[i].grad;
    state.m[i] = c.adam_beta1 * state.m[i] + (1.0 - c.adam_beta1) * g;
    state.v[i] = c.adam_beta2 * state.v[i] + (1.0 - c.adam_beta2) * g.cwiseProduct(g);
    params[i].value.array() -=
        lr * (state.m[i].array() / bc1) / ((state.v[i].array() / bc2).sqrt() + c.adam_eps);
  }
}

void clip_gradients(ParameterStore& store, double max_norm, int epoch, std::size_t batch) {
  double sq = 0.0;
  for (const Parameter& p : store.params()) sq += p.grad.squaredNorm();
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) {
    throw NumericalError("non-finite gradient at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch));
  }
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (Parameter& p : store.params()) p.grad *= s;
  }
}

std::vector<std::size_t> shuffled(std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.index(i)]);
  return idx;
}

void check_windows(const std::vector<TrajectoryWindow>& windows, const ModelConfig& m, int tau) {
  for (const auto& w : windows) {
    if (w.dim() != m.input_dim || w.delta() != m.horizon || w.tau() != tau) {
      throw ShapeError("window shape does not match the model (tau, delta or dimension)");
    }
  }
}

constexpr std::uint64_t kInitStream = 0;
constexpr std::uint64_t kTrainStream = 1;
constexpr std::uint64_t kValStream = 1u << 20;

}  // namespace

double evaluate_loss(const BitrapModel& model, const std::vector<TrajectoryWindow>& standardized, int batch_size,
                     Rng& rng) {
  if (standardized.empty()) throw DataError("no windows to evaluate");
  double total = 0.0;
  for (std::size_t start = 0; start < standardized.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(standardized.size(), start + static_cast<std::size_t>(batch_size));
    std::vector<const TrajectoryWindow*> batch;
    for (std::size_t i = start; i < end; ++i) batch.push_back(&standardized[i]);
    Tape tape(false);
    total += model.loss(tape, batch, rng).scalar() * static_cast<double>(batch.size());
  }
  return total / static_cast<double>(standardized.size());
}

Checkpoint train(const TrainConfig& config, const std::vector<TrajectoryWindow>& windows, double dt,
                 const std::vector<TrajectoryWindow>* val, const Checkpoint* resume) {
  config.validate();
  if (windows.empty()) throw DataError("training data yields no windows");
  const auto data = model_windows(windows, config);

  Checkpoint ck;
  ck.config = config;
  Rng rng(derive_seed(config.seed, kTrainStream));
  if (resume != nullptr) {
    if (!resume->fitted()) throw ConfigError("cannot resume from an unfitted checkpoint");
    ck.config.model = resume->config.model;
    ck.standardizer = resume->standardizer;
    ck.model = std::make_shared<BitrapModel>(ck.config.model);
    ck.model->params().copy_values_from(resume->model->params());
    ck.adam = resume->adam;
    ck.epoch = resume->epoch;
    ck.curve = resume->curve;
    rng.set_state(resume->rng_state);
  } else {
    ck.config.model.input_dim = static_cast<int>(data.front().dim());
    ck.config.model.horizon = static_cast<int>(data.front().delta());
    ck.config.model.dt = dt;
    ck.standardizer = Standardizer::fit(data);
    ck.model = std::make_shared<BitrapModel>(ck.config.model);
    Rng init(derive_seed(config.seed, kInitStream));
    ck.model->params().initialize(init);
  }
  check_windows(data, ck.config.model, ck.config.tau);

  std::vector<TrajectoryWindow> train_std;
  train_std.reserve(data.size());
  for (const auto& w : data) train_std.push_back(ck.standardizer.apply(w));
  std::vector<TrajectoryWindow> val_std;
  if (val != nullptr) {
    for (const auto& w : model_windows(*val, config)) val_std.push_back(ck.standardizer.apply(w));
    check_windows(val_std, ck.config.model, ck.config.tau);
  }

  BitrapModel& model = *ck.model;
  ParameterStore& store = model.params();
  const auto bs = static_cast<std::size_t>(ck.config.batch_size);
  for (int epoch = ck.epoch; epoch < ck.config.epochs; ++epoch) {
    const double lr = lr_at(epoch, ck.config);
    const auto order = shuffled(train_std.size(), rng);
    double total = 0.0;
    for (std::size_t start = 0, b = 0; start < order.size(); start += bs, ++b) {
      const std::size_t end = std::min(order.size(), start + bs);
      std::vector<const TrajectoryWindow*> batch;
      for (std::size_t i = start; i < end; ++i) batch.push_back(&train_std[order[i]]);
      Tape tape;
      const Var loss = model.loss(tape, batch, rng);
      if (!std::isfinite(loss.scalar())) {
        throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(b));
      }
      store.zero_grad();
      tape.backward(loss);
      clip_gradients(store, ck.config.clip_norm, epoch, b);
      adam_update(store, ck.adam, ck.config, lr);
      total += loss.scalar() * static_cast<double>(batch.size());
    }
    ck.curve.push_back({epoch, "train", total / static_cast<double>(train_std.size()), lr});
    if (!val_std.empty()) {
      Rng vr(derive_seed(config.seed, kValStream + static_cast<std::uint64_t>(epoch)));
      ck.curve.push_back({epoch, "val", evaluate_loss(model, val_std, ck.config.batch_size, vr), lr});
    }
    ck.epoch = epoch + 1;
  }
  ck.rng_state = rng.state();
  return ck;
}

Checkpoint train(const TrainConfig& config, const Scene& scene) {
  const auto ex = make_windows(scene, config.tau, config.delta, config.stride);
  return train(config, ex.windows, scene.dt);
}

double loss_np_total(const std::vector<Vec>& goal_residuals, const std::vector<Mat>& trajectory_residuals,
                     const TrajectoryWindow& window, double kld) {
  if (goal_residuals.empty() || trajectory_residuals.empty()) throw ConfigError("best-of-many loss needs N >= 1");
  const Vec g = window.goal - window.origin;
  const Mat y = window.future.rowwise() - window.origin.transpose();
  double best_goal = std::numeric_limits<double>::infinity();
  for (const Vec& gi : goal_residuals) {
    if (gi.size() != g.size()) throw ShapeError("goal sample dimension mismatch");
    best_goal = std::min(best_goal, (g - gi).norm());
  }
  double best_traj = std::numeric_limits<double>::infinity();
  for (const Mat& yi : trajectory_residuals) {
    if (yi.rows() != y.rows() || yi.cols() != y.cols()) throw ShapeError("trajectory sample shape mismatch");
    best_traj = std::min(best_traj, (y - yi).rowwise().norm().sum());
  }
  return best_goal + best_traj + kld;
}

// ---------------------------------------------------------------------------
// sampling

PredictionSet predict(const Checkpoint& ckpt, const TrajectoryWindow& window, int n_samples, std::uint64_t seed) {
  if (!ckpt.fitted()) throw ConfigError("checkpoint has no fitted model");
  if (n_samples < 1) throw ConfigError("n_samples must be >= 1");
  const BitrapModel& model = *ckpt.model;
  const TrajectoryWindow w = model_windows({window}, ckpt.config).front();
  if (w.dim() != model.config().input_dim || w.delta() != model.config().horizon) {
    throw ShapeError("window shape does not match the checkpoint");
  }
  const TrajectoryWindow sw = ckpt.standardizer.apply(w);
  const Vec& scale = ckpt.standardizer.scale();
  Rng rng(seed);
  PredictionSet out;

  if (model.config().variant != Variant::kGMM) {
    for (const Mat& r : model.sample_residuals(sw, n_samples, rng)) {
      Mat abs = r.array().rowwise() * scale.transpose().array();
      abs.rowwise() += w.origin.transpose();
      out.samples.push_back(std::move(abs));
    }
    return out;
  }

  const auto g = model.gmm_output(sw);
  const Eigen::Vector2d origin = w.origin.head<2>();
  const Eigen::Vector2d s = scale.head<2>();
  GoalGMM goal = g.goal;
  const Eigen::Matrix2d S = s.asDiagonal();
  for (int k = 0; k < goal.components(); ++k) {
    goal.mu.row(k) = (origin + goal.mu.row(k).transpose().cwiseProduct(s)).transpose();
    goal.cov[static_cast<std::size_t>(k)] = S * goal.cov[static_cast<std::size_t>(k)] * S;
  }
  GMMSequence pos;
  pos.dt = g.position.dt;
  for (const GMMStep& step : g.position.steps) pos.steps.push_back(rescale_step(step, origin, s));

  out.components = sample_categorical(CategoricalLatentParams{goal.pi}, SampleMode::kTest, n_samples, rng);
  for (int k : out.components) {
    Mat path(model.config().horizon, 2);
    for (std::size_t t = 0; t < pos.steps.size(); ++t) {
      const GMMStep& step = pos.steps[t];
      path.row(static_cast<Eigen::Index>(t)) =
          sample_component(step.mu.row(k).transpose(), step.cov[static_cast<std::size_t>(k)], rng).transpose();
    }
    out.samples.push_back(std::move(path));
  }
  out.goal = std::move(goal);
  out.position = std::move(pos);
  return out;
}

}  // namespace bitrap
