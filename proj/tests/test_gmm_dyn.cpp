#include <doctest.h>

#include <cmath>
#include <numbers>

#include <Eigen/Cholesky>

#include "bitrap/errors.hpp"
#include "bitrap/gmm_dyn.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace bitrap;
using namespace bitrap::testing;

namespace {

constexpr double kPeak = 1.8378770664093453;  // -log(1 / (2 pi))

Vec random_simplex(int k, Rng& rng) {
  Vec w(k);
  for (int i = 0; i < k; ++i) w(i) = rng.uniform(0.05, 1.0);
  return w / w.sum();
}

Eigen::Matrix2d random_cov(Rng& rng, double lo = -1.0, double hi = 0.5) {
  return covariance_from(rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(-2, 2));
}

GMMStep random_step(int k, Rng& rng, GmmSpace space, double spread = 2.0) {
  GMMStep s;
  s.pi = random_simplex(k, rng);
  s.mu = spread * rng.normal_matrix(k, 2);
  for (int c = 0; c < k; ++c) s.cov.push_back(random_cov(rng));
  s.space = space;
  return s;
}

GMMSequence random_velocity(int k, int horizon, Rng& rng, double dt = 0.4) {
  GMMSequence seq;
  seq.dt = dt;
  const Vec pi = random_simplex(k, rng);
  for (int n = 0; n < horizon; ++n) {
    GMMStep s = random_step(k, rng, GmmSpace::kVelocity);
    s.pi = pi;
    seq.steps.push_back(s);
  }
  return seq;
}

GoalGMM random_goal(int k, Rng& rng, const Vec& pi) {
  GoalGMM g;
  g.pi = pi;
  g.mu = 3.0 * rng.normal_matrix(k, 2);
  for (int c = 0; c < k; ++c) g.cov.push_back(random_cov(rng));
  return g;
}

TrajectoryWindow window_from(const Eigen::Vector2d& origin, const Mat& residuals) {
  TrajectoryWindow w;
  w.past = origin.transpose().replicate(3, 1);
  w.future = residuals.rowwise() + origin.transpose();
  w.origin = origin;
  w.goal = w.future.row(w.future.rows() - 1).transpose();
  return w;
}

}  // namespace

TEST_CASE("mixture log density") {
  GMMStep one{Vec::Ones(1), Mat::Zero(1, 2), {Eigen::Matrix2d::Identity()}, GmmSpace::kPosition};
  CHECK(gmm_log_prob(one, Eigen::Vector2d::Zero(), 0.0) == doctest::Approx(-kPeak).epsilon(1e-14));

  Rng rng(70);
  for (int trial = 0; trial < 200; ++trial) {
    const GMMStep s = random_step(3, rng, GmmSpace::kPosition);
    const Eigen::Vector2d y = rng.normal_matrix(2, 1);
    CHECK(std::abs(gmm_log_prob(s, y) - naive_log_prob(s, y)) < 1e-9);
    GMMStep p = s;
    const int perm[3] = {2, 0, 1};
    for (int k = 0; k < 3; ++k) {
      p.pi(k) = s.pi(perm[k]);
      p.mu.row(k) = s.mu.row(perm[k]);
      p.cov[k] = s.cov[perm[k]];
    }
    CHECK(std::abs(gmm_log_prob(p, y) - gmm_log_prob(s, y)) < 1e-12);
  }

  GMMStep bad = one;
  bad.cov[0] << 1, 2, 2, 1;
  CHECK_THROWS_AS(gmm_log_prob(bad, Eigen::Vector2d::Zero(), 0.0), NumericalError);
}

TEST_CASE("forward integration") {
  SUBCASE("constant velocity example") {
    GMMSequence v;
    v.dt = 0.4;
    for (int n = 0; n < 3; ++n) {
      Eigen::Matrix2d c = 0.01 * Eigen::Matrix2d::Identity();
      v.steps.push_back(GMMStep{Vec::Ones(1), Mat(Eigen::RowVector2d(1, 0)), {c}, GmmSpace::kVelocity});
    }
    const Eigen::Vector2d x(2, -1);
    const auto pos = integrate_forward(x, v);
    for (int n = 0; n < 3; ++n) {
      CHECK(std::abs(pos.steps[n].mu(0, 0) - (2 + 0.4 * (n + 1))) < 1e-12);
      CHECK(std::abs(pos.steps[n].mu(0, 1) + 1) < 1e-12);
      CHECK(pos.steps[n].cov[0].isApprox(0.0016 * (n + 1) * Eigen::Matrix2d::Identity(), 1e-12));
      CHECK(pos.steps[n].space == GmmSpace::kPosition);
    }
  }
  SUBCASE("zero velocity stays put and accumulates covariance") {
    Rng rng(71);
    GMMSequence v = random_velocity(2, 5, rng);
    for (auto& s : v.steps) s.mu.setZero();
    const Eigen::Vector2d x(1, 1);
    const auto pos = integrate_forward(x, v);
    for (std::size_t n = 0; n < 5; ++n) {
      for (int k = 0; k < 2; ++k) CHECK(pos.steps[n].mu.row(k) == x.transpose());
      if (n > 0) CHECK(pos.steps[n].cov[0].trace() > pos.steps[n - 1].cov[0].trace());
    }
  }
  SUBCASE("space mismatch") {
    Rng rng(72);
    GMMSequence v = random_velocity(2, 3, rng);
    v.steps[1].space = GmmSpace::kPosition;
    CHECK_THROWS_AS(integrate_forward(Eigen::Vector2d::Zero(), v), ShapeError);
  }
}

TEST_CASE("integration matches cumulative-sum oracles") {
  Rng rng(73);
  for (int trial = 0; trial < 100; ++trial) {
    const int K = 1 + static_cast<int>(rng.index(5));
    const GMMSequence v = random_velocity(K, 12, rng);
    const Eigen::Vector2d x = rng.normal_matrix(2, 1);
    const GoalGMM g = random_goal(K, rng, v.steps[0].pi);
    const auto fwd = integrate_forward(x, v);
    const auto bwd = integrate_backward(g, v);
    REQUIRE(fwd.steps.size() == 12);
    REQUIRE(bwd.steps.size() == 12);
    for (int k = 0; k < K; ++k) {
      for (int n = 0; n < 12; ++n) {
        double mx = x(0), my = x(1);
        Eigen::Matrix2d c = Eigen::Matrix2d::Zero();
        for (int j = 0; j <= n; ++j) {
          mx += 0.4 * v.steps[j].mu(k, 0);
          my += 0.4 * v.steps[j].mu(k, 1);
          c += 0.16 * v.steps[j].cov[k];
        }
        CHECK(std::abs(fwd.steps[n].mu(k, 0) - mx) < 1e-12);
        CHECK(std::abs(fwd.steps[n].mu(k, 1) - my) < 1e-12);
        CHECK((fwd.steps[n].cov[k] - c).cwiseAbs().maxCoeff() < 1e-12);

        double bx = g.mu(k, 0), by = g.mu(k, 1);
        Eigen::Matrix2d bc = g.cov[k];
        for (int j = n + 1; j < 12; ++j) {
          bx -= 0.4 * v.steps[j].mu(k, 0);
          by -= 0.4 * v.steps[j].mu(k, 1);
          bc += 0.16 * v.steps[j].cov[k];
        }
        CHECK(std::abs(bwd.steps[n].mu(k, 0) - bx) < 1e-12);
        CHECK(std::abs(bwd.steps[n].mu(k, 1) - by) < 1e-12);
        CHECK((bwd.steps[n].cov[k] - bc).cwiseAbs().maxCoeff() < 1e-12);
      }
      CHECK(bwd.steps[11].mu.row(k) == g.mu.row(k));
    }
    for (const auto* seq : {&fwd, &bwd}) {
      for (const auto& s : seq->steps) {
        CHECK(s.pi == v.steps[0].pi);
        for (const auto& c : s.cov) CHECK(Eigen::LLT<Eigen::Matrix2d>(c).info() == Eigen::Success);
      }
    }
  }
}

TEST_CASE("backward integration") {
  Rng rng(74);
  SUBCASE("zero velocity keeps the goal means") {
    GMMSequence v = random_velocity(3, 6, rng);
    for (auto& s : v.steps) s.mu.setZero();
    const GoalGMM g = random_goal(3, rng, v.steps[0].pi);
    const auto b = integrate_backward(g, v);
    for (const auto& s : b.steps) CHECK(s.mu == g.mu);
    CHECK(b.steps[0].cov[0].trace() > g.cov[0].trace());
  }
  SUBCASE("telescoping back to the current position") {
    GMMSequence v = random_velocity(1, 8, rng);
    const Eigen::Vector2d x(0.5, -2);
    Eigen::RowVector2d total = Eigen::RowVector2d::Zero();
    for (const auto& s : v.steps) total += 0.4 * s.mu.row(0);
    GoalGMM g{Vec::Ones(1), Mat(x.transpose() + total), {Eigen::Matrix2d::Identity()}};
    const auto b = integrate_backward(g, v, true);
    REQUIRE(b.steps.size() == 9);
    CHECK((b.steps[0].mu.row(0) - x.transpose()).norm() < 1e-12);
  }
  SUBCASE("time reversal") {
    GMMSequence v = random_velocity(1, 12, rng);
    const Eigen::Vector2d x = rng.normal_matrix(2, 1);
    const auto f = integrate_forward(x, v);
    GoalGMM g{Vec::Ones(1), f.steps.back().mu, {Eigen::Matrix2d::Zero()}};
    const auto b = integrate_backward(g, v);
    for (int n = 0; n < 12; ++n) CHECK((f.steps[n].mu - b.steps[n].mu).cwiseAbs().maxCoeff() < 1e-9);
  }
  SUBCASE("component count mismatch") {
    GMMSequence v = random_velocity(2, 3, rng);
    CHECK_THROWS_AS(integrate_backward(random_goal(3, rng, Vec::Constant(3, 1.0 / 3)), v), ShapeError);
  }
}

TEST_CASE("sequence NLL") {
  GMMSequence pos;
  pos.steps.push_back(GMMStep{Vec::Ones(1), Mat::Zero(1, 2), {Eigen::Matrix2d::Identity()}, GmmSpace::kPosition});
  CHECK(nll_fwd(pos, Mat::Zero(1, 2), 0.0) == doctest::Approx(kPeak).epsilon(1e-14));

  Mat near(1, 2), far(1, 2);
  near << 0.2, 0.1;
  far << 0.4, 0.2;
  CHECK(nll_fwd(pos, near, 0.0) < nll_fwd(pos, far, 0.0));

  Rng rng(75);
  const GMMSequence v = random_velocity(3, 12, rng);
  const auto f = integrate_forward(Eigen::Vector2d::Zero(), v);
  const Mat Y = rng.normal_matrix(12, 2);
  double naive_f = 0.0, naive_b = 0.0;
  for (int n = 0; n < 12; ++n) {
    const double lp = naive_log_prob(f.steps[n], Y.row(n).transpose());
    naive_f -= lp;
    if (n < 11) naive_b -= lp;
  }
  CHECK(std::abs(nll_fwd(f, Y) - naive_f) < 1e-9);
  CHECK(std::abs(nll_bwd(f, Y) - naive_b) < 1e-9);
  CHECK_THROWS_AS(nll_fwd(f, Mat::Zero(11, 2)), ShapeError);
}

TEST_CASE("total loss") {
  SUBCASE("analytic assembly with every mean on the ground truth") {
    // Velocities reproduce the path exactly, unit covariances throughout.
    const int delta = 4;
    const double dt = 0.5;
    Mat residuals(delta, 2);
    for (int n = 0; n < delta; ++n) residuals.row(n) << 0.3 * (n + 1), -0.1 * (n + 1) * (n + 1);
    GMMSequence v;
    v.dt = dt;
    for (int n = 0; n < delta; ++n) {
      const Eigen::RowVector2d prev = n == 0 ? Eigen::RowVector2d::Zero() : Eigen::RowVector2d(residuals.row(n - 1));
      v.steps.push_back(GMMStep{Vec::Ones(1), Mat((residuals.row(n) - prev) / dt), {Eigen::Matrix2d::Identity()},
                                GmmSpace::kVelocity});
    }
    GoalGMM g{Vec::Ones(1), Mat(residuals.row(delta - 1)), {Eigen::Matrix2d::Identity()}};
    GmmLossOptions opt;
    opt.cov_floor = 0.0;
    const auto terms = loss_gmm_terms(g, v, window_from(Eigen::Vector2d(4, 5), residuals), 0.0, opt);
    CHECK(terms.goal == doctest::Approx(kPeak).epsilon(1e-12));
    double fwd = 0.0, bwd = 0.0;
    for (int n = 1; n <= delta; ++n) fwd += kPeak + std::log(n * dt * dt);
    for (int n = 1; n < delta; ++n) bwd += kPeak + std::log(1.0 + (delta - n) * dt * dt);
    CHECK(terms.forward == doctest::Approx(fwd).epsilon(1e-12));
    CHECK(terms.backward == doctest::Approx(bwd).epsilon(1e-12));
    CHECK(loss_gmm_total(g, v, window_from(Eigen::Vector2d(4, 5), residuals), 0.25, opt) ==
          doctest::Approx(kPeak + fwd + bwd + 0.25).epsilon(1e-12));
  }
  SUBCASE("joint translation leaves the loss unchanged") {
    Rng rng(76);
    const GMMSequence v = random_velocity(2, 6, rng);
    const GoalGMM g = random_goal(2, rng, v.steps[0].pi);
    const Mat residuals = rng.normal_matrix(6, 2);
    for (bool anchor : {true, false}) {
      GmmLossOptions opt;
      opt.anchor_predicted_goal = anchor;
      const double a = loss_gmm_total(g, v, window_from(Eigen::Vector2d(0, 0), residuals), 0.1, opt);
      const double b = loss_gmm_total(g, v, window_from(Eigen::Vector2d(123.5, -77.25), residuals), 0.1, opt);
      CHECK(std::abs(a - b) < 1e-9);
    }
  }
}

TEST_CASE("tape loss agrees with the plain loss and its gradients are exact") {
  const int K = 2, delta = 4, B = 2;
  const double dt = 0.4;
  ParameterStore store;
  Parameter& logits = store.add("logits", B, K, 1.0);
  Parameter& gmu = store.add("goal_mu", B * K, 2, 1.0);
  Parameter& gls = store.add("goal_log_sigma", B * K, 2, 1.0);
  Parameter& gcr = store.add("goal_corr", B * K, 1, 1.0);
  std::vector<Parameter*> vmu, vls, vcr;
  for (int n = 0; n < delta; ++n) {
    vmu.push_back(&store.add("vel_mu" + std::to_string(n), B * K, 2, 1.0));
    vls.push_back(&store.add("vel_log_sigma" + std::to_string(n), B * K, 2, 1.0));
    vcr.push_back(&store.add("vel_corr" + std::to_string(n), B * K, 1, 1.0));
  }
  randomize(store, 77, 0.6);
  Rng rng(78);
  std::vector<Mat> future;
  Mat residuals = 0.5 * rng.normal_matrix(B * delta, 2);
  for (int n = 0; n < delta; ++n) {
    Mat y(B, 2);
    for (int b = 0; b < B; ++b) y.row(b) = residuals.row(b * delta + n);
    future.push_back(y);
  }
  const Mat goal = future.back();

  for (bool anchor : {true, false}) {
    GmmLossOptions opt;
    opt.anchor_predicted_goal = anchor;
    auto build = [&](Tape& t) {
      GmmTapeInputs in;
      in.log_pi = log_softmax_rows(t.parameter(logits));
      in.goal_mu = t.parameter(gmu);
      in.goal_cov = cov_entries(t.parameter(gls), t.parameter(gcr));
      for (int n = 0; n < delta; ++n) {
        in.vel_mu.push_back(t.parameter(*vmu[n]));
        in.vel_cov.push_back(cov_entries(t.parameter(*vls[n]), t.parameter(*vcr[n])));
      }
      return gmm_loss_rows(t, in, future, goal, dt, K, opt);
    };

    Tape plain(false);
    const auto terms = build(plain);
    for (int b = 0; b < B; ++b) {
      Tape p(false);
      const Vec pi = log_softmax_rows(p.constant(logits.value.row(b))).value().row(0).transpose().array().exp();
      GoalGMM g;
      g.pi = pi;
      g.mu = gmu.value.middleRows(b * K, K);
      GMMSequence v;
      v.dt = dt;
      for (int k = 0; k < K; ++k) {
        g.cov.push_back(covariance_from(gls.value(b * K + k, 0), gls.value(b * K + k, 1), gcr.value(b * K + k, 0)));
      }
      for (int n = 0; n < delta; ++n) {
        Mat raw(K, 5);
        for (int k = 0; k < K; ++k) {
          raw.row(k) << vmu[n]->value(b * K + k, 0), vmu[n]->value(b * K + k, 1), vls[n]->value(b * K + k, 0),
              vls[n]->value(b * K + k, 1), vcr[n]->value(b * K + k, 0);
        }
        v.steps.push_back(velocity_step_from_raw(pi, raw));
      }
      Mat res(delta, 2);
      for (int n = 0; n < delta; ++n) res.row(n) = future[n].row(b);
      const auto expected = loss_gmm_terms(g, v, window_from(Eigen::Vector2d(1, 2), res), 0.0, opt);
      CHECK(std::abs(terms.goal.value()(b, 0) - expected.goal) < 1e-9);
      CHECK(std::abs(terms.forward.value()(b, 0) - expected.forward) < 1e-9);
      CHECK(std::abs(terms.backward.value()(b, 0) - expected.backward) < 1e-9);
    }

    const auto r = check_gradients(store, [&](Tape& t) {
      const auto tt = build(t);
      return sum(tt.goal + tt.forward + tt.backward);
    });
    CAPTURE(r.worst);
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_CASE("mixture densities integrate to one") {
  Rng rng(79);
  for (int trial = 0; trial < 5; ++trial) {
    const int K = 1 + static_cast<int>(rng.index(5));
    const GMMStep s = random_step(K, rng, GmmSpace::kPosition, 1.0);
    // Importance sampling; the proposal puts a widened Gaussian on every component mean.
    GMMStep q = s;
    q.pi = Vec::Constant(K, 1.0 / K);
    for (auto& c : q.cov) c = 2.0 * c + 0.1 * Eigen::Matrix2d::Identity();
    const int n = 200000;
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      const int k = static_cast<int>(rng.index(static_cast<std::size_t>(K)));
      const Eigen::Vector2d y = sample_component(q.mu.row(k).transpose(), q.cov[k], rng);
      acc += std::exp(gmm_log_prob(s, y) - gmm_log_prob(q, y));
    }
    CAPTURE(K);
    CHECK(std::abs(acc / n - 1.0) < 0.02);
  }
}

TEST_CASE("component draws have the integrated moments") {
  Rng rng(80);
  const GMMSequence v = random_velocity(2, 5, rng);
  const auto pos = integrate_forward(Eigen::Vector2d(1, -1), v);
  const Eigen::Vector2d mu = pos.steps[4].mu.row(1).transpose();
  const Eigen::Matrix2d cov = pos.steps[4].cov[1];
  const int n = 100000;
  Eigen::Vector2d m = Eigen::Vector2d::Zero();
  Eigen::Matrix2d c = Eigen::Matrix2d::Zero();
  std::vector<Eigen::Vector2d> draws;
  for (int i = 0; i < n; ++i) draws.push_back(sample_component(mu, cov, rng));
  for (const auto& d : draws) m += d;
  m /= n;
  for (const auto& d : draws) c += (d - m) * (d - m).transpose();
  c /= n - 1;
  const double scale = std::sqrt(cov.trace());
  CHECK((m - mu).norm() < 0.02 * scale);
  CHECK(std::abs(c(0, 0) - cov(0, 0)) < 0.02 * cov(0, 0));
  CHECK(std::abs(c(1, 1) - cov(1, 1)) < 0.02 * cov(1, 1));
  CHECK(std::abs(c(0, 1) - cov(0, 1)) < 0.02 * std::sqrt(cov(0, 0) * cov(1, 1)));
}

TEST_CASE("velocity heads and rescaling") {
  Mat raw(2, 5);
  raw << 1, 2, 0, std::log(2.0), 0, -1, 0, 50, -50, 100;
  const auto s = velocity_step_from_raw(Vec::Constant(2, 0.5), raw);
  CHECK(s.space == GmmSpace::kVelocity);
  CHECK(s.mu == raw.leftCols(2));
  CHECK(s.cov[0](1, 1) == doctest::Approx(4.0));
  CHECK(s.cov[1](0, 0) == doctest::Approx(std::exp(20.0)));
  CHECK(s.cov[1](1, 1) == doctest::Approx(std::exp(-20.0)));

  const auto r = rescale_step(s, Eigen::Vector2d(10, 20), Eigen::Vector2d(2, 3));
  CHECK(r.mu.row(0) == Eigen::RowVector2d(12, 26));
  CHECK(r.cov[0](1, 1) == doctest::Approx(36.0));
  CHECK_THROWS_AS(velocity_step_from_raw(Vec::Constant(3, 1.0 / 3), raw), ShapeError);
}
