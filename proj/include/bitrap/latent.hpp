#pragma once

// CVAE latent variables: diagonal Gaussian (NP variant) and categorical
// (GMM variant) priors/posteriors, their KL divergences and sampling.

#include <string>
#include <vector>

#include "bitrap/nn.hpp"

namespace bitrap {

struct GaussianLatentParams {
  Vec mu;
  Vec sigma;  // standard deviations, > 0
};

struct CategoricalLatentParams {
  Vec pi;
};

// Raw network outputs are clamped to this range and mapped to sigma = exp(raw / 2).
inline constexpr double kLogVarClamp = 10.0;

class GaussianLatentNet {
 public:
  GaussianLatentNet() = default;
  GaussianLatentNet(ParameterStore& store, const std::string& name, int in, int hidden, int latent);

  struct Output {
    Var mu;         // B x L
    Var log_sigma;  // B x L
  };
  Output forward(Tape& tape, const Var& input) const;
  int latent_dim() const { return latent_; }

  Mlp3 mlp;

 private:
  int latent_ = 0;
};

class CategoricalLatentNet {
 public:
  CategoricalLatentNet() = default;
  CategoricalLatentNet(ParameterStore& store, const std::string& name, int in, int hidden, int components);

  Var log_pi(Tape& tape, const Var& input) const;  // B x K, log-softmax of the logits
  int components() const { return components_; }

  Mlp3 mlp;

 private:
  int components_ = 0;
};

GaussianLatentParams prior_gaussian(const GaussianLatentNet& net, const Vec& h_t);
GaussianLatentParams posterior_gaussian(const GaussianLatentNet& net, const Vec& h_t, const Vec& h_y);
CategoricalLatentParams prior_categorical(const CategoricalLatentNet& net, const Vec& h_t);
CategoricalLatentParams posterior_categorical(const CategoricalLatentNet& net, const Vec& h_t, const Vec& h_y);

// KL(q || p), closed form.
double kl_gaussian(const GaussianLatentParams& q, const GaussianLatentParams& p);
double kl_categorical(const CategoricalLatentParams& q, const CategoricalLatentParams& p);

// n x L reparameterized draws mu + sigma * eps.
Mat sample_gaussian(const GaussianLatentParams& params, int n, Rng& rng);

enum class SampleMode { kTrain, kTest };

// Train mode enumerates every component once (n ignored); test mode draws n
// component indices from pi.
std::vector<int> sample_categorical(const CategoricalLatentParams& params, SampleMode mode, int n, Rng& rng);

Mat one_hot(const std::vector<int>& indices, int components);

// Row-wise differentiable counterparts used by the training losses (B x 1).
Var kl_gaussian_rows(const Var& mu_q, const Var& log_sigma_q, const Var& mu_p, const Var& log_sigma_p);
Var kl_categorical_rows(const Var& log_pi_q, const Var& log_pi_p);

}  // namespace bitrap
