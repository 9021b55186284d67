#pragma once

// Reverse-mode automatic differentiation over dense row-major matrices.
//
// A Tape records every operation applied to its Vars; calling backward() on a
// 1x1 result walks the records in reverse creation order and accumulates
// gradients. Leaves created with parameter() push their gradient into the
// owning Parameter::grad, so one tape per minibatch is the intended usage.
// A tape constructed with record=false evaluates values only.

#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace bitrap {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

struct Parameter {
  std::string name;
  Mat value;
  Mat grad;
};

class Tape;

class Var {
 public:
  Var() = default;

  const Mat& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }

  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, int self)>;

  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Mat value);
  // Binds a parameter as a leaf; repeated calls on one tape return the same Var.
  Var parameter(Parameter& param);

  // Appends a node. The closure receives the tape and the node's own id and
  // must add the node's gradient contribution into its inputs' gradients.
  Var push(Mat value, Backward backward);

  // Seeds d(root)/d(root) = 1 and propagates. root must be 1x1.
  void backward(const Var& root);

  const Mat& value(int id) const { return nodes_[id].value; }
  Mat& grad(int id);
  bool has_grad(int id) const { return nodes_[id].grad.size() != 0; }
  bool recording() const { return record_; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    Backward backward;
    Parameter* param = nullptr;
  };

  bool record_;
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, int> bound_;
};

// Linear algebra
Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var add_row(const Var& a, const Var& row);  // row (1 x n) broadcast over a's rows
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);  // elementwise
Var div(const Var& a, const Var& b);  // elementwise
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
inline Var neg(const Var& a) { return scale(a, -1.0); }

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator/(const Var& a, const Var& b) { return div(a, b); }
inline Var operator*(double s, const Var& a) { return scale(a, s); }
inline Var operator*(const Var& a, double s) { return scale(a, s); }

// Elementwise nonlinearities
Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var relu(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var square(const Var& a);
Var clamp(const Var& a, double lo, double hi);

// Shape manipulation
Var concat_cols(const std::vector<Var>& parts);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count);
Var reshape(const Var& a, Eigen::Index rows, Eigen::Index cols);  // row-major order
Var repeat_rows(const Var& a, Eigen::Index times);  // each row repeated `times` times in place

// Reductions
Var sum(const Var& a);
Var mean(const Var& a);
Var row_sum(const Var& a);
Var row_norm(const Var& a);  // Euclidean norm per row; subgradient 0 at the origin
Var row_min(const Var& a);   // gradient routed to the first argmin
Var logsumexp_rows(const Var& a);
Var log_softmax_rows(const Var& a);

}  // namespace bitrap
