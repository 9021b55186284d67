#include "bitrap/model.hpp"

#include "bitrap/errors.hpp"

namespace bitrap {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kNP: return "NP";
    case Variant::kGMM: return "GMM";
    case Variant::kDeterministic: return "D";
    case Variant::kForwardOnly: return "NP-forward-only";
  }
  return "?";
}

Variant parse_variant(const std::string& s) {
  if (s == "NP" || s == "np") return Variant::kNP;
  if (s == "GMM" || s == "gmm") return Variant::kGMM;
  if (s == "D" || s == "d" || s == "deterministic") return Variant::kDeterministic;
  if (s == "NP-forward-only" || s == "forward-only" || s == "fwd") return Variant::kForwardOnly;
  throw ConfigError("unknown variant '" + s + "' (expected NP, GMM, D or NP-forward-only)");
}

std::string to_string(BackwardFeed f) {
  switch (f) {
    case BackwardFeed::kReadout: return "readout";
    case BackwardFeed::kFullOutput: return "output";
    case BackwardFeed::kGoalRepeat: return "goal";
  }
  return "?";
}

BackwardFeed parse_feed(const std::string& s) {
  if (s == "readout") return BackwardFeed::kReadout;
  if (s == "output") return BackwardFeed::kFullOutput;
  if (s == "goal") return BackwardFeed::kGoalRepeat;
  throw ConfigError("unknown backward feed '" + s + "' (expected readout, output or goal)");
}

ResidualWindow to_residual(const TrajectoryWindow& w) {
  ResidualWindow r;
  r.past.reserve(static_cast<std::size_t>(w.tau()));
  for (Eigen::Index i = 0; i < w.tau(); ++i) r.past.push_back(w.past.row(i).transpose() - w.origin);
  r.future = w.future.rowwise() - w.origin.transpose();
  r.goal = w.goal - w.origin;
  return r;
}

Mat tiled_one_hot(Eigen::Index windows, int components) {
  Mat m(windows * components, components);
  for (Eigen::Index b = 0; b < windows; ++b) m.middleRows(b * components, components).setIdentity();
  return m;
}

namespace {

void validate(const ModelConfig& c) {
  if (c.input_dim < 1 || c.hidden < 1 || c.horizon < 1) throw ConfigError("model dimensions must be positive");
  if (c.variant == Variant::kGMM) {
    if (c.components < 1) throw ConfigError("components must be >= 1");
    if (c.input_dim != 2) throw ConfigError("the GMM variant models 2-D positions (convert boxes to centers)");
  } else {
    if (c.latent < 1) throw ConfigError("latent dimension must be >= 1");
    if (c.train_samples < 1) throw ConfigError("train_samples must be >= 1");
  }
  if (!(c.dt > 0.0)) throw ConfigError("dt must be positive");
}

DecoderShape decoder_shape(const ModelConfig& c) {
  DecoderShape s;
  s.feature = c.hidden;
  s.hidden = c.hidden;
  s.horizon = c.horizon;
  s.goal_dim = c.goal_dim();
  s.feed = c.feed;
  s.backward_latent = c.backward_latent;
  s.bidirectional = c.variant != Variant::kForwardOnly;
  if (c.variant == Variant::kGMM) {
    s.latent = c.components;
    s.out_dim = 5;
  } else {
    s.latent = c.latent;
    s.out_dim = c.input_dim;
  }
  return s;
}

// Repeats each row of `rows` `times` times and wraps it as a constant.
Var repeated_constant(Tape& tape, const Mat& rows, Eigen::Index times) {
  Mat out(rows.rows() * times, rows.cols());
  for (Eigen::Index b = 0; b < rows.rows(); ++b) out.middleRows(b * times, times) = rows.row(b).replicate(times, 1);
  return tape.constant(std::move(out));
}

Mat stack_goals(const std::vector<ResidualWindow>& rows) {
  Mat m(static_cast<Eigen::Index>(rows.size()), rows.front().goal.size());
  for (std::size_t b = 0; b < rows.size(); ++b) m.row(static_cast<Eigen::Index>(b)) = rows[b].goal.transpose();
  return m;
}

Mat stack_future_step(const std::vector<ResidualWindow>& rows, Eigen::Index step) {
  Mat m(static_cast<Eigen::Index>(rows.size()), rows.front().future.cols());
  for (std::size_t b = 0; b < rows.size(); ++b) m.row(static_cast<Eigen::Index>(b)) = rows[b].future.row(step);
  return m;
}

struct VelocityHeads {
  std::vector<Var> mu, cov;
};

VelocityHeads velocity_heads(const std::vector<Var>& outputs) {
  VelocityHeads v;
  for (const Var& o : outputs) {
    v.mu.push_back(slice_cols(o, 0, 2));
    v.cov.push_back(cov_entries(clamp(slice_cols(o, 2, 2), -kLogVarClamp, kLogVarClamp), slice_cols(o, 4, 1)));
  }
  return v;
}

}  // namespace

BitrapModel::BitrapModel(const ModelConfig& config) : config_(config) {
  validate(config_);
  const int h = config_.hidden;
  const Variant v = config_.variant;
  obs_encoder = SequenceEncoder(store_, "obs_encoder", config_.input_dim, h);
  if (v != Variant::kDeterministic) target_encoder = SequenceEncoder(store_, "target_encoder", config_.input_dim, h);
  if (v == Variant::kGMM) {
    prior_cat = CategoricalLatentNet(store_, "prior", h, h, config_.components);
    posterior_cat = CategoricalLatentNet(store_, "posterior", 2 * h, h, config_.components);
    goal_gmm = GmmGoalNet(store_, "goal", h, h, config_.components);
  } else {
    prior = GaussianLatentNet(store_, "prior", h, h, config_.latent);
    if (v != Variant::kDeterministic) posterior = GaussianLatentNet(store_, "posterior", 2 * h, h, config_.latent);
    goal_np = NpGoalNet(store_, "goal", h, config_.latent, h, config_.input_dim);
  }
  decoder = BiDecoder(store_, "decoder", decoder_shape(config_));
}

Var BitrapModel::encode(Tape& tape, const std::vector<ResidualWindow>& rows, bool target) const {
  const auto batch = static_cast<Eigen::Index>(rows.size());
  std::vector<Var> steps;
  if (target) {
    for (Eigen::Index s = 0; s < rows.front().future.rows(); ++s) steps.push_back(tape.constant(stack_future_step(rows, s)));
    return target_encoder.forward(tape, steps);
  }
  const std::size_t tau = rows.front().past.size();
  for (std::size_t i = 0; i < tau; ++i) {
    Mat m(batch, config_.input_dim);
    for (Eigen::Index b = 0; b < batch; ++b) m.row(b) = rows[static_cast<std::size_t>(b)].past[i].transpose();
    steps.push_back(tape.constant(std::move(m)));
  }
  return obs_encoder.forward(tape, steps);
}

Var BitrapModel::loss(Tape& tape, const std::vector<const TrajectoryWindow*>& batch, Rng& rng,
                      LossBreakdown* breakdown) const {
  if (batch.empty()) throw DataError("empty batch");
  std::vector<ResidualWindow> rows;
  rows.reserve(batch.size());
  for (const TrajectoryWindow* w : batch) {
    if (w->dim() != config_.input_dim) throw ShapeError("window dimension differs from the model input");
    if (w->delta() != config_.horizon) throw ShapeError("window horizon differs from the model horizon");
    if (w->tau() != batch.front()->tau()) throw ShapeError("windows in a batch must share tau");
    rows.push_back(to_residual(*w));
  }
  return config_.variant == Variant::kGMM ? gmm_loss(tape, rows, breakdown) : np_loss(tape, rows, rng, breakdown);
}

Var BitrapModel::np_loss(Tape& tape, const std::vector<ResidualWindow>& rows, Rng& rng, LossBreakdown* breakdown) const {
  const auto batch = static_cast<Eigen::Index>(rows.size());
  const bool deterministic = config_.variant == Variant::kDeterministic;
  const Eigen::Index n = deterministic ? 1 : config_.train_samples;

  const Var h = encode(tape, rows, false);
  const auto p = prior.forward(tape, h);
  Var z;
  Var kld;
  if (deterministic) {
    z = p.mu;
  } else {
    const Var hy = encode(tape, rows, true);
    const auto q = posterior.forward(tape, concat_cols({h, hy}));
    const Var eps = tape.constant(rng.normal_matrix(batch * n, config_.latent));
    z = repeat_rows(q.mu, n) + repeat_rows(exp(q.log_sigma), n) * eps;
    kld = kl_gaussian_rows(q.mu, q.log_sigma, p.mu, p.log_sigma);
  }
  const Var hn = repeat_rows(h, n);
  const Var goal = goal_np.forward(tape, hn, z);
  const std::vector<Var> traj = decoder.forward(tape, hn, z, goal);

  const Var goal_err = row_min(reshape(row_norm(goal - repeated_constant(tape, stack_goals(rows), n)), batch, n));
  Var traj_sum;
  for (std::size_t s = 0; s < traj.size(); ++s) {
    const Var d = row_norm(traj[s] - repeated_constant(tape, stack_future_step(rows, static_cast<Eigen::Index>(s)), n));
    traj_sum = traj_sum.valid() ? traj_sum + d : d;
  }
  const Var traj_err = row_min(reshape(traj_sum, batch, n));
  Var per_window = goal_err + traj_err;
  if (kld.valid()) per_window = per_window + kld;
  const Var total = mean(per_window);
  if (breakdown != nullptr) {
    breakdown->goal = goal_err.value().mean();
    breakdown->trajectory = traj_err.value().mean();
    breakdown->kld = kld.valid() ? kld.value().mean() : 0.0;
    breakdown->total = total.scalar();
  }
  return total;
}

Var BitrapModel::gmm_loss(Tape& tape, const std::vector<ResidualWindow>& rows, LossBreakdown* breakdown) const {
  const auto batch = static_cast<Eigen::Index>(rows.size());
  const int k = config_.components;

  const Var h = encode(tape, rows, false);
  const Var hy = encode(tape, rows, true);
  const Var log_pi_q = posterior_cat.log_pi(tape, concat_cols({h, hy}));
  const Var log_pi_p = prior_cat.log_pi(tape, h);
  const Var kld = kl_categorical_rows(log_pi_q, log_pi_p);

  const auto g = goal_gmm.forward(tape, h);
  GmmTapeInputs in;
  in.log_pi = log_pi_q;
  in.goal_mu = reshape(g.mu, batch * k, 2);
  in.goal_cov = cov_entries(reshape(g.log_sigma, batch * k, 2), reshape(g.corr_raw, batch * k, 1));

  const Var z = tape.constant(tiled_one_hot(batch, k));
  const std::vector<Var> outputs = decoder.forward(tape, repeat_rows(h, k), z, in.goal_mu);
  VelocityHeads heads = velocity_heads(outputs);
  in.vel_mu = std::move(heads.mu);
  in.vel_cov = std::move(heads.cov);

  std::vector<Mat> future;
  for (Eigen::Index s = 0; s < config_.horizon; ++s) future.push_back(stack_future_step(rows, s));
  const GmmTapeTerms terms = gmm_loss_rows(tape, in, future, stack_goals(rows), config_.dt, k, config_.gmm);
  const Var total = mean(terms.goal + terms.forward + terms.backward + kld);
  if (breakdown != nullptr) {
    breakdown->goal = terms.goal.value().mean();
    breakdown->trajectory = terms.forward.value().mean() + terms.backward.value().mean();
    breakdown->kld = kld.value().mean();
    breakdown->total = total.scalar();
  }
  return total;
}

std::vector<Mat> BitrapModel::sample_residuals(const TrajectoryWindow& standardized, int n, Rng& rng) const {
  if (config_.variant == Variant::kGMM) throw ConfigError("sample_residuals is for the NP-family variants");
  if (n < 1) throw ConfigError("sample count must be >= 1");
  const std::vector<ResidualWindow> rows{to_residual(standardized)};
  Tape tape(false);
  const Var h = encode(tape, rows, false);
  const auto p = prior.forward(tape, h);
  const bool deterministic = config_.variant == Variant::kDeterministic;
  const Eigen::Index count = deterministic ? 1 : n;
  Var z;
  if (deterministic) {
    z = p.mu;
  } else {
    const Var eps = tape.constant(rng.normal_matrix(count, config_.latent));
    z = repeat_rows(p.mu, count) + repeat_rows(exp(p.log_sigma), count) * eps;
  }
  const Var hn = repeat_rows(h, count);
  const Var goal = goal_np.forward(tape, hn, z);
  const std::vector<Var> traj = decoder.forward(tape, hn, z, goal);
  std::vector<Mat> out(static_cast<std::size_t>(count), Mat(config_.horizon, config_.input_dim));
  for (int s = 0; s < config_.horizon; ++s) {
    const Mat& v = traj[s].value();
    for (Eigen::Index i = 0; i < count; ++i) out[static_cast<std::size_t>(i)].row(s) = v.row(i);
  }
  for (const Mat& m : out) {
    if (!m.allFinite()) throw NumericalError("non-finite predicted trajectory");
  }
  return out;
}

BitrapModel::GmmOutput BitrapModel::gmm_output(const TrajectoryWindow& standardized) const {
  if (config_.variant != Variant::kGMM) throw ConfigError("gmm_output requires the GMM variant");
  const int k = config_.components;
  const std::vector<ResidualWindow> rows{to_residual(standardized)};
  Tape tape(false);
  const Var h = encode(tape, rows, false);
  const Vec pi = row_vec(prior_cat.log_pi(tape, h).value()).array().exp();
  const auto g = goal_gmm.forward(tape, h);
  const Var goal_mu = reshape(g.mu, k, 2);
  const std::vector<Var> outputs = decoder.forward(tape, repeat_rows(h, k), tape.constant(tiled_one_hot(1, k)), goal_mu);

  GmmOutput out;
  out.goal.pi = pi;
  out.goal.mu = goal_mu.value();
  for (int c = 0; c < k; ++c) {
    out.goal.cov.push_back(covariance_from(g.log_sigma.value()(0, 2 * c), g.log_sigma.value()(0, 2 * c + 1),
                                           g.corr_raw.value()(0, c)));
  }
  out.velocity.dt = config_.dt;
  for (const Var& o : outputs) out.velocity.steps.push_back(velocity_step_from_raw(pi, o.value()));
  out.position = integrate_forward(Eigen::Vector2d::Zero(), out.velocity);
  return out;
}

}  // namespace bitrap
