#include "bitrap/latent.hpp"

#include <cmath>
#include <numeric>

#include "bitrap/errors.hpp"

namespace bitrap {

GaussianLatentNet::GaussianLatentNet(ParameterStore& store, const std::string& name, int in, int hidden, int latent)
    : mlp(store, name, in, hidden, 2 * latent), latent_(latent) {}

GaussianLatentNet::Output GaussianLatentNet::forward(Tape& tape, const Var& input) const {
  const Var raw = mlp(tape, input);
  return {slice_cols(raw, 0, latent_), scale(clamp(slice_cols(raw, latent_, latent_), -kLogVarClamp, kLogVarClamp), 0.5)};
}

CategoricalLatentNet::CategoricalLatentNet(ParameterStore& store, const std::string& name, int in, int hidden,
                                           int components)
    : mlp(store, name, in, hidden, components), components_(components) {}

Var CategoricalLatentNet::log_pi(Tape& tape, const Var& input) const {
  return log_softmax_rows(mlp(tape, input));
}

namespace {

Mat concat_features(const Vec& a, const Vec& b) {
  Mat row(1, a.size() + b.size());
  row.leftCols(a.size()) = a.transpose();
  row.rightCols(b.size()) = b.transpose();
  return row;
}

GaussianLatentParams eval_gaussian(const GaussianLatentNet& net, const Mat& input) {
  if (!input.allFinite()) throw NumericalError("non-finite latent network input");
  Tape tape(false);
  const auto out = net.forward(tape, tape.constant(input));
  GaussianLatentParams params{row_vec(out.mu.value()), row_vec(out.log_sigma.value()).array().exp()};
  if (!params.mu.allFinite() || !params.sigma.allFinite()) throw NumericalError("non-finite latent parameters");
  return params;
}

CategoricalLatentParams eval_categorical(const CategoricalLatentNet& net, const Mat& input) {
  if (!input.allFinite()) throw NumericalError("non-finite latent network input");
  Tape tape(false);
  CategoricalLatentParams params{row_vec(net.log_pi(tape, tape.constant(input)).value()).array().exp()};
  if (!params.pi.allFinite()) throw NumericalError("non-finite mixture weights");
  return params;
}

void check_gaussian(const GaussianLatentParams& g) {
  if (g.mu.size() != g.sigma.size()) throw ShapeError("latent mu/sigma size mismatch");
  if (!g.mu.allFinite() || !g.sigma.allFinite() || (g.sigma.array() <= 0.0).any()) {
    throw NumericalError("invalid Gaussian latent parameters");
  }
}

void check_categorical(const CategoricalLatentParams& c) {
  if (c.pi.size() == 0 || (c.pi.array() < 0.0).any() || std::abs(c.pi.sum() - 1.0) > 1e-6) {
    throw NumericalError("categorical weights are not on the simplex");
  }
}

}  // namespace

GaussianLatentParams prior_gaussian(const GaussianLatentNet& net, const Vec& h_t) {
  return eval_gaussian(net, as_row(h_t));
}

GaussianLatentParams posterior_gaussian(const GaussianLatentNet& net, const Vec& h_t, const Vec& h_y) {
  return eval_gaussian(net, concat_features(h_t, h_y));
}

CategoricalLatentParams prior_categorical(const CategoricalLatentNet& net, const Vec& h_t) {
  return eval_categorical(net, as_row(h_t));
}

CategoricalLatentParams posterior_categorical(const CategoricalLatentNet& net, const Vec& h_t, const Vec& h_y) {
  return eval_categorical(net, concat_features(h_t, h_y));
}

double kl_gaussian(const GaussianLatentParams& q, const GaussianLatentParams& p) {
  check_gaussian(q);
  check_gaussian(p);
  if (q.mu.size() != p.mu.size()) throw ShapeError("kl_gaussian: dimension mismatch");
  double kl = 0.0;
  for (Eigen::Index i = 0; i < q.mu.size(); ++i) {
    const double vq = q.sigma[i] * q.sigma[i];
    const double vp = p.sigma[i] * p.sigma[i];
    const double dm = q.mu[i] - p.mu[i];
    kl += std::log(p.sigma[i] / q.sigma[i]) + (vq + dm * dm) / (2.0 * vp) - 0.5;
  }
  return kl;
}

double kl_categorical(const CategoricalLatentParams& q, const CategoricalLatentParams& p) {
  check_categorical(q);
  check_categorical(p);
  if (q.pi.size() != p.pi.size()) throw ShapeError("kl_categorical: dimension mismatch");
  double kl = 0.0;
  for (Eigen::Index i = 0; i < q.pi.size(); ++i) {
    if (q.pi[i] == 0.0) continue;
    if (p.pi[i] == 0.0) throw NumericalError("kl_categorical: p has zero mass where q does not");
    kl += q.pi[i] * std::log(q.pi[i] / p.pi[i]);
  }
  return kl;
}

Mat sample_gaussian(const GaussianLatentParams& params, int n, Rng& rng) {
  check_gaussian(params);
  if (n < 1) throw ConfigError("sample count must be >= 1");
  Mat eps = rng.normal_matrix(n, params.mu.size());
  return (eps.array().rowwise() * params.sigma.transpose().array()).rowwise() + params.mu.transpose().array();
}

std::vector<int> sample_categorical(const CategoricalLatentParams& params, SampleMode mode, int n, Rng& rng) {
  check_categorical(params);
  const int k = static_cast<int>(params.pi.size());
  std::vector<int> out;
  if (mode == SampleMode::kTrain) {
    out.resize(static_cast<std::size_t>(k));
    std::iota(out.begin(), out.end(), 0);
    return out;
  }
  if (n < 1) throw ConfigError("sample count must be >= 1");
  out.reserve(static_cast<std::size_t>(n));
  for (int s = 0; s < n; ++s) {
    const double u = rng.uniform() * params.pi.sum();
    double acc = 0.0;
    int pick = k - 1;
    for (int i = 0; i < k; ++i) {
      acc += params.pi[i];
      if (u < acc && params.pi[i] > 0.0) {
        pick = i;
        break;
      }
    }
    while (params.pi[pick] == 0.0 && pick > 0) --pick;
    out.push_back(pick);
  }
  return out;
}

Mat one_hot(const std::vector<int>& indices, int components) {
  Mat m = Mat::Zero(static_cast<Eigen::Index>(indices.size()), components);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= components) throw ShapeError("one_hot: index out of range");
    m(static_cast<Eigen::Index>(i), indices[i]) = 1.0;
  }
  return m;
}

Var kl_gaussian_rows(const Var& mu_q, const Var& log_sigma_q, const Var& mu_p, const Var& log_sigma_p) {
  const Var var_q = exp(scale(log_sigma_q, 2.0));
  const Var var_p = exp(scale(log_sigma_p, 2.0));
  const Var ratio = (var_q + square(mu_q - mu_p)) / scale(var_p, 2.0);
  return row_sum(add_scalar(log_sigma_p - log_sigma_q + ratio, -0.5));
}

Var kl_categorical_rows(const Var& log_pi_q, const Var& log_pi_p) {
  return row_sum(exp(log_pi_q) * (log_pi_q - log_pi_p));
}

}  // namespace bitrap
