#include <doctest.h>

#include "bitrap/autodiff.hpp"
#include "support.hpp"

using namespace bitrap;
using bitrap::testing::check_gradients;

namespace {

// Weighted sum so every output entry gets a distinct upstream gradient.
Var weighted(Tape& t, const Var& v, std::uint64_t seed) {
  Rng rng(seed);
  return sum(v * t.constant(rng.normal_matrix(v.rows(), v.cols())));
}

struct OpCase {
  const char* name;
  std::function<Var(Tape&, const Var&, const Var&)> op;
};

}  // namespace

TEST_CASE("every op matches central differences") {
  const std::vector<OpCase> cases = {
      {"matmul", [](Tape&, const Var& a, const Var& b) { return matmul(a, reshape(b, 4, 3)); }},
      {"add", [](Tape&, const Var& a, const Var& b) { return a + b; }},
      {"add_row", [](Tape&, const Var& a, const Var& b) { return add_row(a, slice_cols(reshape(b, 1, 12), 0, 4)); }},
      {"sub", [](Tape&, const Var& a, const Var& b) { return a - b; }},
      {"mul", [](Tape&, const Var& a, const Var& b) { return a * b; }},
      {"div", [](Tape&, const Var& a, const Var& b) { return a / add_scalar(square(b), 0.5); }},
      {"scale", [](Tape&, const Var& a, const Var&) { return 2.5 * a; }},
      {"tanh", [](Tape&, const Var& a, const Var&) { return tanh(a); }},
      {"sigmoid", [](Tape&, const Var& a, const Var&) { return sigmoid(a); }},
      {"relu", [](Tape&, const Var& a, const Var&) { return relu(a); }},
      {"exp", [](Tape&, const Var& a, const Var&) { return exp(a); }},
      {"log", [](Tape&, const Var& a, const Var&) { return log(add_scalar(square(a), 0.3)); }},
      {"clamp", [](Tape&, const Var& a, const Var&) { return clamp(3.0 * a, -0.5, 0.5); }},
      {"concat", [](Tape&, const Var& a, const Var& b) { return concat_cols({a, b, a}); }},
      {"slice", [](Tape&, const Var& a, const Var&) { return slice_cols(a, 1, 2); }},
      {"reshape", [](Tape&, const Var& a, const Var&) { return reshape(a, 2, 6); }},
      {"repeat_rows", [](Tape&, const Var& a, const Var&) { return repeat_rows(a, 3); }},
      {"mean", [](Tape&, const Var& a, const Var&) { return mean(a); }},
      {"row_sum", [](Tape&, const Var& a, const Var&) { return row_sum(a); }},
      {"row_norm", [](Tape&, const Var& a, const Var&) { return row_norm(a); }},
      {"row_min", [](Tape&, const Var& a, const Var& b) { return row_min(a + b); }},
      {"logsumexp", [](Tape&, const Var& a, const Var&) { return logsumexp_rows(a); }},
      {"log_softmax", [](Tape&, const Var& a, const Var&) { return log_softmax_rows(a); }},
  };
  for (const auto& c : cases) {
    CAPTURE(c.name);
    ParameterStore store;
    Parameter& a = store.add("a", 3, 4, 1.0);
    Parameter& b = store.add("b", 3, 4, 1.0);
    Rng rng(11);
    store.initialize(rng);
    const auto r = check_gradients(store, [&](Tape& t) {
      return weighted(t, c.op(t, t.parameter(a), t.parameter(b)), 5);
    });
    CHECK(r.max_rel_error < 1e-6);
  }
}

TEST_CASE("row_norm has a zero subgradient at the origin") {
  ParameterStore store;
  Parameter& a = store.add("a", 2, 3, 0.0);
  a.value.row(1) << 3.0, 4.0, 0.0;
  Tape t;
  const Var n = row_norm(t.parameter(a));
  CHECK(n.value()(0, 0) == 0.0);
  CHECK(n.value()(1, 0) == doctest::Approx(5.0));
  store.zero_grad();
  t.backward(sum(n));
  CHECK(a.grad.row(0).norm() == 0.0);
  CHECK(a.grad(1, 0) == doctest::Approx(0.6));
}

TEST_CASE("a parameter bound twice on one tape is one leaf") {
  ParameterStore store;
  Parameter& a = store.add("a", 1, 1, 0.0);
  a.value(0, 0) = 3.0;
  Tape t;
  const Var x = t.parameter(a);
  const Var y = t.parameter(a);
  CHECK(x.id() == y.id());
  store.zero_grad();
  t.backward(x * y);
  CHECK(a.grad(0, 0) == doctest::Approx(6.0));
}

TEST_CASE("value-only tapes compute the same values") {
  ParameterStore store;
  Parameter& a = store.add("a", 2, 2, 1.0);
  Rng rng(3);
  store.initialize(rng);
  Tape rec, plain(false);
  CHECK(tanh(rec.parameter(a)).value() == tanh(plain.parameter(a)).value());
}

TEST_CASE("shape mismatches are rejected") {
  Tape t;
  const Var a = t.constant(Mat::Zero(2, 3));
  const Var b = t.constant(Mat::Zero(3, 2));
  CHECK_THROWS(a + b);
  CHECK_THROWS(matmul(a, a));
  CHECK_THROWS(reshape(a, 4, 2));
  CHECK_THROWS(t.backward(a));
}
