#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "bitrap/autodiff.hpp"
#include "bitrap/nn.hpp"

namespace bitrap::testing {

struct GradCheck {
  double max_rel_error = 0.0;     // per entry, denominator max(|a|, |n|, 1e-6)
  double max_tensor_error = 0.0;  // per tensor, ||a - n|| / max(||a||, ||n||)
  std::string worst;
  std::size_t entries = 0;
};

// Central differences of `loss` against its tape gradient, over every entry
// of every parameter in `store`. `loss` must be a pure function of the
// parameter values.
inline GradCheck check_gradients(ParameterStore& store, const std::function<Var(Tape&)>& loss, double eps = 1e-5) {
  double scale = 1.0;
  {
    Tape tape;
    const Var l = loss(tape);
    store.zero_grad();
    tape.backward(l);
    scale = std::max(1.0, std::abs(l.scalar()));
  }
  auto value = [&] {
    Tape tape(false);
    return loss(tape).scalar();
  };
  GradCheck out;
  for (Parameter& p : store.params()) {
    const Mat analytic = p.grad;
    Mat numeric(p.value.rows(), p.value.cols());
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      const double keep = p.value.data()[i];
      p.value.data()[i] = keep + eps;
      const double up = value();
      p.value.data()[i] = keep - eps;
      const double down = value();
      p.value.data()[i] = keep;
      numeric.data()[i] = (up - down) / (2 * eps);
      const double a = analytic.data()[i];
      const double n = numeric.data()[i];
      // differences of a loss of size L carry roundoff near L * 1e-11 at eps = 1e-5
      const double rel = std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-6 * scale});
      if (rel > out.max_rel_error) {
        out.max_rel_error = rel;
        out.worst = p.name + "[" + std::to_string(i) + "]";
      }
      ++out.entries;
    }
    const double denom = std::max({analytic.norm(), numeric.norm(), 1e-12});
    out.max_tensor_error = std::max(out.max_tensor_error, (analytic - numeric).norm() / denom);
  }
  return out;
}

inline void randomize(ParameterStore& store, std::uint64_t seed, double scale = 0.5) {
  Rng rng(seed);
  for (Parameter& p : store.params()) {
    for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = rng.uniform(-scale, scale);
  }
}

// Loop-based affine chain, independent of the tape.
inline std::vector<double> scalar_linear(const Linear& l, const std::vector<double>& x) {
  std::vector<double> y(static_cast<std::size_t>(l.out));
  for (int o = 0; o < l.out; ++o) {
    double acc = l.bias ? l.bias->value(0, o) : 0.0;
    for (int i = 0; i < l.in; ++i) acc += x[static_cast<std::size_t>(i)] * l.weight->value(i, o);
    y[static_cast<std::size_t>(o)] = acc;
  }
  return y;
}

inline std::vector<double> scalar_mlp3(const Mlp3& m, const std::vector<double>& x) {
  auto relu_all = [](std::vector<double> v) {
    for (double& e : v) e = std::max(e, 0.0);
    return v;
  };
  return scalar_linear(m.l3, relu_all(scalar_linear(m.l2, relu_all(scalar_linear(m.l1, x)))));
}

// One GRU cell step, r/z/n blocks packed along the columns.
inline std::vector<double> scalar_gru(const GruCell& g, const std::vector<double>& x, const std::vector<double>& h) {
  const int H = g.hidden;
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  std::vector<double> next(static_cast<std::size_t>(H));
  for (int j = 0; j < H; ++j) {
    double gi[3], gh[3];
    for (int b = 0; b < 3; ++b) {
      gi[b] = g.b_ih->value(0, b * H + j);
      gh[b] = g.b_hh->value(0, b * H + j);
      for (int e = 0; e < g.in; ++e) gi[b] += x[static_cast<std::size_t>(e)] * g.w_ih->value(e, b * H + j);
      for (int k = 0; k < H; ++k) gh[b] += h[static_cast<std::size_t>(k)] * g.w_hh->value(k, b * H + j);
    }
    const double r = sig(gi[0] + gh[0]);
    const double z = sig(gi[1] + gh[1]);
    const double n = std::tanh(gi[2] + r * gh[2]);
    next[static_cast<std::size_t>(j)] = (1.0 - z) * n + z * h[static_cast<std::size_t>(j)];
  }
  return next;
}

inline std::vector<double> to_std(const Vec& v) { return {v.data(), v.data() + v.size()}; }

inline std::string temp_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "bitrap_tests";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

}  // namespace bitrap::testing
