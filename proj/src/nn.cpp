#include "bitrap/nn.hpp"

#include <cmath>
#include <sstream>

#include "bitrap/errors.hpp"

namespace bitrap {

Mat Rng::normal_matrix(Eigen::Index rows, Eigen::Index cols) {
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal();
  return m;
}

std::string Rng::state() const {
  std::ostringstream os;
  os << engine_ << ' ' << normal_;
  return os.str();
}

void Rng::set_state(const std::string& state) {
  std::istringstream is(state);
  is >> engine_ >> normal_;
  if (!is) throw DataError("corrupt RNG state");
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Parameter& ParameterStore::add(const std::string& name, Eigen::Index rows, Eigen::Index cols,
                               double init_bound) {
  if (contains(name)) throw ConfigError("duplicate parameter name: " + name);
  params_.push_back(Parameter{name, Mat::Zero(rows, cols), Mat::Zero(rows, cols)});
  bounds_.push_back(init_bound);
  return params_.back();
}

Parameter& ParameterStore::get(const std::string& name) {
  for (Parameter& p : params_) {
    if (p.name == name) return p;
  }
  throw ConfigError("unknown parameter: " + name);
}

const Parameter& ParameterStore::get(const std::string& name) const {
  return const_cast<ParameterStore*>(this)->get(name);
}

bool ParameterStore::contains(const std::string& name) const {
  for (const Parameter& p : params_) {
    if (p.name == name) return true;
  }
  return false;
}

std::size_t ParameterStore::total_size() const {
  std::size_t n = 0;
  for (const Parameter& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

void ParameterStore::initialize(Rng& rng) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Mat& v = params_[i].value;
    const double b = bounds_[i];
    for (Eigen::Index k = 0; k < v.size(); ++k) v.data()[k] = b > 0.0 ? rng.uniform(-b, b) : 0.0;
  }
}

void ParameterStore::zero_grad() {
  for (Parameter& p : params_) p.grad.setZero(p.value.rows(), p.value.cols());
}

void ParameterStore::fill(double value) {
  for (Parameter& p : params_) p.value.setConstant(value);
}

void ParameterStore::copy_values_from(const ParameterStore& other) {
  if (other.params_.size() != params_.size()) throw ShapeError("parameter stores differ in size");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const Parameter& src = other.params_[i];
    Parameter& dst = params_[i];
    if (src.name != dst.name || src.value.rows() != dst.value.rows() || src.value.cols() != dst.value.cols()) {
      throw ShapeError("parameter layout mismatch at " + dst.name);
    }
    dst.value = src.value;
  }
}

Linear::Linear(ParameterStore& store, const std::string& name, int in_dim, int out_dim, bool with_bias)
    : in(in_dim), out(out_dim) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
  weight = &store.add(name + ".weight", in_dim, out_dim, bound);
  if (with_bias) bias = &store.add(name + ".bias", 1, out_dim, bound);
}

Var Linear::operator()(Tape& tape, const Var& x) const {
  if (x.cols() != in) {
    throw ShapeError(weight->name + ": expected input width " + std::to_string(in) + ", got " +
                     std::to_string(x.cols()));
  }
  Var y = matmul(x, tape.parameter(*weight));
  return bias ? add_row(y, tape.parameter(*bias)) : y;
}

Mlp3::Mlp3(ParameterStore& store, const std::string& name, int in, int hidden, int out)
    : l1(store, name + ".0", in, hidden),
      l2(store, name + ".1", hidden, std::max(1, hidden / 2)),
      l3(store, name + ".2", std::max(1, hidden / 2), out) {}

Var Mlp3::operator()(Tape& tape, const Var& x) const {
  return l3(tape, relu(l2(tape, relu(l1(tape, x)))));
}

GruCell::GruCell(ParameterStore& store, const std::string& name, int in_dim, int hidden_dim)
    : in(in_dim), hidden(hidden_dim) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
  w_ih = &store.add(name + ".w_ih", in_dim, 3 * hidden_dim, bound);
  w_hh = &store.add(name + ".w_hh", hidden_dim, 3 * hidden_dim, bound);
  b_ih = &store.add(name + ".b_ih", 1, 3 * hidden_dim, bound);
  b_hh = &store.add(name + ".b_hh", 1, 3 * hidden_dim, bound);
}

Var GruCell::operator()(Tape& tape, const Var& x, const Var& h) const {
  if (x.cols() != in || h.cols() != hidden || x.rows() != h.rows()) {
    throw ShapeError(w_ih->name + ": GRU input/state shape mismatch");
  }
  const Var gi = add_row(matmul(x, tape.parameter(*w_ih)), tape.parameter(*b_ih));
  const Var gh = add_row(matmul(h, tape.parameter(*w_hh)), tape.parameter(*b_hh));
  const Var r = sigmoid(slice_cols(gi, 0, hidden) + slice_cols(gh, 0, hidden));
  const Var z = sigmoid(slice_cols(gi, hidden, hidden) + slice_cols(gh, hidden, hidden));
  const Var n = tanh(slice_cols(gi, 2 * hidden, hidden) + r * slice_cols(gh, 2 * hidden, hidden));
  return n + z * (h - n);
}

Mat as_row(const Vec& v) { return Mat(v.transpose()); }

Vec row_vec(const Mat& m, Eigen::Index row) { return m.row(row).transpose(); }

}  // namespace bitrap
