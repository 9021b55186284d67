#include "bitrap/autodiff.hpp"

#include <cmath>
#include <limits>

#include "bitrap/errors.hpp"

namespace bitrap {

const Mat& Var::value() const { return tape_->value(id_); }

Var Tape::constant(Mat value) { return push(std::move(value), nullptr); }

Var Tape::parameter(Parameter& param) {
  if (auto it = bound_.find(&param); it != bound_.end()) return Var(this, it->second);
  Var v = push(param.value, nullptr);
  nodes_[v.id()].param = &param;
  bound_.emplace(&param, v.id());
  return v;
}

Var Tape::push(Mat value, Backward backward) {
  Node node;
  node.value = std::move(value);
  if (record_) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Mat& Tape::grad(int id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(const Var& root) {
  if (!record_) throw ShapeError("backward() on a non-recording tape");
  if (root.tape() != this) throw ShapeError("backward() root belongs to another tape");
  if (root.rows() != 1 || root.cols() != 1) throw ShapeError("backward() root must be 1x1");
  grad(root.id())(0, 0) += 1.0;
  for (int id = root.id(); id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) continue;
    if (n.backward) n.backward(*this, id);
    if (n.param != nullptr) {
      if (n.param->grad.size() == 0) n.param->grad = Mat::Zero(n.value.rows(), n.value.cols());
      n.param->grad += n.grad;
    }
  }
}

namespace {

void require_same_tape(const Var& a, const Var& b) {
  if (a.tape() != b.tape() || a.tape() == nullptr) throw ShapeError("operands on different tapes");
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  require_same_tape(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
  }
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  require_same_tape(a, b);
  if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimension mismatch");
  Mat v = a.value() * b.value();
  const int ia = a.id(), ib = b.id();
  return a.tape()->push(std::move(v), [ia, ib](Tape& t, int self) {
    const Mat& g = t.grad(self);
    t.grad(ia).noalias() += g * t.value(ib).transpose();
    t.grad(ib).noalias() += t.value(ia).transpose() * g;
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Mat v = a.value() + b.value();
  const int ia = a.id(), ib = b.id();
  return a.tape()->push(std::move(v), [ia, ib](Tape& t, int self) {
    t.grad(ia) += t.grad(self);
    t.grad(ib) += t.grad(self);
  });
}

Var add_row(const Var& a, const Var& row) {
  require_same_tape(a, row);
  if (row.rows() != 1 || row.cols() != a.cols()) throw ShapeError("add_row: bias shape mismatch");
  Mat v = a.value().rowwise() + row.value().row(0);
  const int ia = a.id(), ib = row.id();
  return a.tape()->push(std::move(v), [ia, ib](Tape& t, int self) {
    const Mat& g = t.grad(self);
    t.grad(ia) += g;
    t.grad(ib) += g.colwise().sum();
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Mat v = a.value() - b.value();
  const int ia = a.id(), ib = b.id();
  return a.tape()->push(std::move(v), [ia, ib](Tape& t, int self) {
    t.grad(ia) += t.grad(self);
    t.grad(ib) -= t.grad(self);
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Mat v = a.value().cwiseProduct(b.value());
  const int ia = a.id(), ib = b.id();
  return a.tape()->push(std::move(v), [ia, ib](Tape& t, int self) {
    const Mat& g = t.grad(self);
    t.grad(ia) += g.cwiseProduct(t.value(ib));
    t.grad(ib) += g.cwiseProduct(t.value(ia));
  });
}

Var div(const Var& a, const Var& b) {
  require_same_shape(a, b, "div");
  Mat v = a.value().cwiseQuotient(b.value());
  const int ia = a.id(), ib = b.id();
  return a.tape()->push(std::move(v), [ia, ib](Tape& t, int self) {
    const Mat& g = t.grad(self);
    const Mat& bv = t.value(ib);
    t.grad(ia) += g.cwiseQuotient(bv);
    t.grad(ib) -= g.cwiseProduct(t.value(self)).cwiseQuotient(bv);
  });
}

Var scale(const Var& a, double s) {
  Mat v = a.value() * s;
  const int ia = a.id();
  return a.tape()->push(std::move(v), [ia, s](Tape& t, int self) { t.grad(ia) += t.grad(self) * s; });
}

Var add_scalar(const Var& a, double s) {
  Mat v = a.value().array() + s;
  const int ia = a.id();
  return a.tape()->push(std::move(v), [ia](Tape& t, int self) { t.grad(ia) += t.grad(self); });
}

Var tanh(const Var& a) {
  Mat v = a.value().array().tanh();
  const int ia = a.id();
  return a.tape()->push(std::move(v), [ia](Tape& t, int self) {
    const Mat& y = t.value(self);
    t.grad(ia).array() += t.grad(self).array() * (1.0 - y.array().square());
  });
}

Var sigmoid(const Var& a) {
  Mat v = (1.0 + (-a.value().array()).exp()).inverse();
  const int ia = a.id();
  return a.tape()->push(std::move(v), [ia](Tape& t, int self) {
    const Mat& y = t.value(self);
    t.grad(ia).array() += t.grad(self).array() * y.array() * (1.0 - y.array());
  });
}

Var relu(const Var& a) {
  Mat v = a.value().cwiseMax(0.0);
  const int ia = a.id();
  return a.tape()->push(std::move(v), [ia](Tape& t, int self) {
    const Mat& x = t.value(ia);
    t.grad(ia).array() += (x.array() > 0.0).select(t.grad(self).array(), 0.0);
  });
}

Var exp(const Var& a) {
  Mat v = a.value().array().exp();
  const int ia = a.id();
  return a.tape()->push(std::move(v), [ia](Tape& t, int self) {
    t.grad(ia) += t.grad(self).cwiseProduct(t.value(self));
  });
}

Var log(const Var& a) {
  Mat v = a.value().array().log();
  const int ia = a.id();
  return a.tape()->push(std::move(v), [ia](Tape& t, int self) {
    t.grad(ia) += t.grad(self).cwiseQuotient(t.value(ia));
  });
}

Var square(const Var& a) {
  Mat v = a.value().array().square();
  const int ia = a.id();
  return a.tape()->push(std::move(v), [ia](Tape& t, int self) {
    t.grad(ia) += 2.0 * t.grad(self).cwiseProduct(t.value(ia));
  });
}

Var clamp(const Var& a, double lo, double hi) {
  Mat v = a.value().cwiseMax(lo).cwiseMin(hi);
  const int ia = a.id();
  return a.tape()->push(std::move(v), [ia, lo, hi](Tape& t, int self) {
    const Mat& x = t.value(ia);
    t.grad(ia).array() += (x.array() >= lo && x.array() <= hi).select(t.grad(self).array(), 0.0);
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    require_same_tape(parts.front(), p);
    if (p.rows() != rows) throw ShapeError("concat_cols: row count mismatch");
    cols += p.cols();
  }
  Mat v(rows, cols);
  std::vector<int> ids;
  std::vector<Eigen::Index> widths;
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    v.middleCols(at, p.cols()) = p.value();
    at += p.cols();
    ids.push_back(p.id());
    widths.push_back(p.cols());
  }
  return parts.front().tape()->push(std::move(v), [ids, widths](Tape& t, int self) {
    Eigen::Index at = 0;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      t.grad(ids[i]) += t.grad(self).middleCols(at, widths[i]);
      at += widths[i];
    }
  });
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw ShapeError("slice_cols: out of range");
  Mat v = a.value().middleCols(start, count);
  const int ia = a.id();
  return a.tape()->push(std::move(v), [ia, start, count](Tape& t, int self) {
    t.grad(ia).middleCols(start, count) += t.grad(self);
  });
}

Var reshape(const Var& a, Eigen::Index rows, Eigen::Index cols) {
  if (rows * cols != a.value().size()) throw ShapeError("reshape: element count mismatch");
  Mat v = Eigen::Map<const Mat>(a.value().data(), rows, cols);
  const int ia = a.id();
  return a.tape()->push(std::move(v), [ia](Tape& t, int self) {
    Mat& ga = t.grad(ia);
    Eigen::Map<Mat>(ga.data(), ga.rows(), ga.cols()) +=
        Eigen::Map<const Mat>(t.grad(self).data(), ga.rows(), ga.cols());
  });
}

Var repeat_rows(const Var& a, Eigen::Index times) {
  if (times < 1) throw ShapeError("repeat_rows: times must be >= 1");
  const Mat& x = a.value();
  Mat v(x.rows() * times, x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (Eigen::Index k = 0; k < times; ++k) v.row(r * times + k) = x.row(r);
  }
  const int ia = a.id();
  return a.tape()->push(std::move(v), [ia, times](Tape& t, int self) {
    Mat& ga = t.grad(ia);
    const Mat& g = t.grad(self);
    for (Eigen::Index r = 0; r < ga.rows(); ++r) ga.row(r) += g.middleRows(r * times, times).colwise().sum();
  });
}

Var sum(const Var& a) {
  Mat v(1, 1);
  v(0, 0) = a.value().sum();
  const int ia = a.id();
  return a.tape()->push(std::move(v), [ia](Tape& t, int self) {
    t.grad(ia).array() += t.grad(self)(0, 0);
  });
}

Var mean(const Var& a) {
  const double n = static_cast<double>(a.value().size());
  Mat v(1, 1);
  v(0, 0) = a.value().sum() / n;
  const int ia = a.id();
  return a.tape()->push(std::move(v), [ia, n](Tape& t, int self) {
    t.grad(ia).array() += t.grad(self)(0, 0) / n;
  });
}

Var row_sum(const Var& a) {
  Mat v = a.value().rowwise().sum();
  const int ia = a.id();
  return a.tape()->push(std::move(v), [ia](Tape& t, int self) {
    t.grad(ia).colwise() += t.grad(self).col(0);
  });
}

Var row_norm(const Var& a) {
  Mat v = a.value().rowwise().norm();
  const int ia = a.id();
  return a.tape()->push(std::move(v), [ia](Tape& t, int self) {
    const Mat& x = t.value(ia);
    const Mat& n = t.value(self);
    const Mat& g = t.grad(self);
    Mat& ga = t.grad(ia);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      if (n(r, 0) > 0.0) ga.row(r) += (g(r, 0) / n(r, 0)) * x.row(r);
    }
  });
}

Var row_min(const Var& a) {
  const Mat& x = a.value();
  if (x.cols() == 0) throw ShapeError("row_min: no columns");
  Mat v(x.rows(), 1);
  std::vector<Eigen::Index> arg(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    Eigen::Index idx = 0;
    v(r, 0) = x.row(r).minCoeff(&idx);
    arg[static_cast<std::size_t>(r)] = idx;
  }
  const int ia = a.id();
  return a.tape()->push(std::move(v), [ia, arg = std::move(arg)](Tape& t, int self) {
    Mat& ga = t.grad(ia);
    const Mat& g = t.grad(self);
    for (Eigen::Index r = 0; r < ga.rows(); ++r) ga(r, arg[static_cast<std::size_t>(r)]) += g(r, 0);
  });
}

Var logsumexp_rows(const Var& a) {
  const Mat& x = a.value();
  Mat v(x.rows(), 1);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    v(r, 0) = m + std::log((x.row(r).array() - m).exp().sum());
  }
  const int ia = a.id();
  return a.tape()->push(std::move(v), [ia](Tape& t, int self) {
    const Mat& xv = t.value(ia);
    const Mat& lse = t.value(self);
    const Mat& g = t.grad(self);
    Mat& ga = t.grad(ia);
    for (Eigen::Index r = 0; r < xv.rows(); ++r) {
      ga.row(r).array() += g(r, 0) * (xv.row(r).array() - lse(r, 0)).exp();
    }
  });
}

Var log_softmax_rows(const Var& a) {
  const Mat& x = a.value();
  Mat v(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    const double lse = m + std::log((x.row(r).array() - m).exp().sum());
    v.row(r).array() = x.row(r).array() - lse;
  }
  const int ia = a.id();
  return a.tape()->push(std::move(v), [ia](Tape& t, int self) {
    const Mat& y = t.value(self);
    const Mat& g = t.grad(self);
    Mat& ga = t.grad(ia);
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      const double gs = g.row(r).sum();
      ga.row(r).array() += g.row(r).array() - y.row(r).array().exp() * gs;
    }
  });
}

}  // namespace bitrap
