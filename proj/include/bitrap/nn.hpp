#pragma once

#include <cstdint>
#include <deque>
#include <random>
#include <string>
#include <vector>

#include "bitrap/autodiff.hpp"

namespace bitrap {

// Seeded random stream. The engine and the cached normal-distribution state
// are both part of state(), so a restored stream continues bit-identically.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  double normal() { return normal_(engine_); }
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_); }
  Mat normal_matrix(Eigen::Index rows, Eigen::Index cols);
  std::mt19937_64& engine() { return engine_; }

  std::string state() const;
  void set_state(const std::string& state);

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_;
};

// splitmix64 mix of (seed, stream); used to give every window its own stream.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

// Owns all parameters of a model in creation order. References handed out by
// add() stay valid for the store's lifetime.
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;

  // init_bound > 0 means U(-bound, bound) initialisation; 0 means zeros.
  Parameter& add(const std::string& name, Eigen::Index rows, Eigen::Index cols, double init_bound);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::deque<Parameter>& params() { return params_; }
  const std::deque<Parameter>& params() const { return params_; }
  std::size_t total_size() const;

  void initialize(Rng& rng);
  void zero_grad();
  void fill(double value);  // every parameter set to `value` (tests use 0)
  void copy_values_from(const ParameterStore& other);

 private:
  std::deque<Parameter> params_;
  std::vector<double> bounds_;
};

// y = x W + b with W stored in x in-by-out layout.
struct Linear {
  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, int in, int out, bool bias = true);
  Var operator()(Tape& tape, const Var& x) const;

  Parameter* weight = nullptr;
  Parameter* bias = nullptr;
  int in = 0;
  int out = 0;
};

// Three affine layers with widths [hidden, hidden/2, out] and rectifiers between.
struct Mlp3 {
  Mlp3() = default;
  Mlp3(ParameterStore& store, const std::string& name, int in, int hidden, int out);
  Var operator()(Tape& tape, const Var& x) const;

  Linear l1, l2, l3;
};

// Gated recurrent unit, update/reset-gate form:
//   r = s(x Wr + br + h Ur + cr), z = s(x Wz + bz + h Uz + cz)
//   n = tanh(x Wn + bn + r * (h Un + cn)),  h' = (1 - z) * n + z * h
// Gate blocks are packed [r | z | n] along the columns of w_ih/w_hh.
struct GruCell {
  GruCell() = default;
  GruCell(ParameterStore& store, const std::string& name, int in, int hidden);
  Var operator()(Tape& tape, const Var& x, const Var& h) const;

  Parameter* w_ih = nullptr;
  Parameter* w_hh = nullptr;
  Parameter* b_ih = nullptr;
  Parameter* b_hh = nullptr;
  int in = 0;
  int hidden = 0;
};

// Vector <-> 1-row matrix helpers for single-sample evaluation.
Mat as_row(const Vec& v);
Vec row_vec(const Mat& m, Eigen::Index row = 0);

}  // namespace bitrap
