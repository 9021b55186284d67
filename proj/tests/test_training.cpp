#include <doctest.h>

#include <cmath>
#include <fstream>
#include <set>

#include "bitrap/errors.hpp"
#include "bitrap/training.hpp"
#include "support.hpp"

using namespace bitrap;
using namespace bitrap::testing;

namespace {

std::vector<TrajectoryWindow> synth_windows(int agents, std::uint64_t seed) {
  SynthConfig s;
  s.n_agents = agents;
  s.seed = seed;
  return make_windows(synth_multimodal_dataset(s), 8, 12, 1).windows;
}

TrainConfig small_config(Variant v, int epochs = 2) {
  TrainConfig c;
  c.model.variant = v;
  c.model.hidden = 12;
  c.model.latent = 4;
  c.model.components = 3;
  c.model.train_samples = 5;
  c.batch_size = 8;
  c.epochs = epochs;
  c.seed = 11;
  return c;
}

TrajectoryWindow random_window(std::uint64_t seed, int tau = 8, int delta = 12) {
  Rng rng(seed);
  TrajectoryWindow w;
  w.past = rng.normal_matrix(tau, 2);
  w.future = rng.normal_matrix(delta, 2);
  w.origin = w.past.row(tau - 1).transpose();
  w.goal = w.future.row(delta - 1).transpose();
  return w;
}

bool same_params(const ParameterStore& a, const ParameterStore& b) {
  if (a.params().size() != b.params().size()) return false;
  for (std::size_t i = 0; i < a.params().size(); ++i) {
    if (a.params()[i].name != b.params()[i].name || a.params()[i].value != b.params()[i].value) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("learning-rate schedule") {
  TrainConfig c;
  CHECK(lr_at(0, c) == 0.001);
  CHECK(lr_at(1000, c) == doctest::Approx(3.677e-4).epsilon(1e-3));
  c.lr_decay = 1.0;
  CHECK(lr_at(0, c) == lr_at(777, c));
}

TEST_CASE("best-of-many loss") {
  TrajectoryWindow w;
  w.past = Mat::Zero(2, 2);
  w.future = Mat(3, 2);
  w.future << 1, 0, 2, 0, 3, 0;
  w.origin = Vec::Zero(2);
  w.goal = w.future.row(2).transpose();
  const Mat truth = w.future;

  SUBCASE("one exact sample") {
    CHECK(loss_np_total({w.goal}, {truth}, w, 0.0) == 0.0);
  }
  SUBCASE("three-sample hand fixture") {
    // Goal errors 5, 1, 2 -> 1. Trajectory errors 3, 1.5, 6 -> 1.5.
    const std::vector<Vec> goals{Vec(Eigen::Vector2d(3, 5)), Vec(Eigen::Vector2d(3, 1)), Vec(Eigen::Vector2d(1, 0))};
    Mat a = truth, b = truth, c = truth;
    a.col(1).setConstant(1.0);
    b(0, 0) += 1.5;
    c.col(0).array() += 2.0;
    CHECK(loss_np_total(goals, {a, b, c}, w, 0.25) == doctest::Approx(1.0 + 1.5 + 0.25).epsilon(1e-15));
  }
  SUBCASE("the two minima are independent") {
    Mat near = truth, far = truth;
    far.array() += 1.0;
    const Vec good_goal = w.goal;
    const Vec bad_goal = w.goal.array() + 4.0;
    const double joint = loss_np_total({good_goal, bad_goal}, {far, near}, w, 0.0);
    CHECK(joint == 0.0);
    CHECK(joint < loss_np_total({good_goal}, {far}, w, 0.0));
    CHECK(joint < loss_np_total({bad_goal}, {near}, w, 0.0));
  }
  SUBCASE("minimum never exceeds the mean") {
    Rng rng(3);
    for (int t = 0; t < 100; ++t) {
      std::vector<Vec> goals;
      std::vector<Mat> trajs;
      double mean = 0.0;
      for (int i = 0; i < 6; ++i) {
        goals.push_back(row_vec(rng.normal_matrix(1, 2)));
        trajs.push_back(rng.normal_matrix(3, 2));
        mean += loss_np_total({goals.back()}, {trajs.back()}, w, 0.0) / 6;
      }
      CHECK(loss_np_total(goals, trajs, w, 0.0) <= mean + 1e-12);
    }
  }
  SUBCASE("no samples") {
    CHECK_THROWS_AS(loss_np_total({}, {}, w, 0.0), ConfigError);
  }
}

TEST_CASE("model losses match independent single-window assembly") {
  ModelConfig mc;
  mc.hidden = 8;
  mc.latent = 3;
  mc.train_samples = 4;
  const TrajectoryWindow w = random_window(5);
  const ResidualWindow r = to_residual(w);
  Mat past(w.tau(), 2);
  for (Eigen::Index i = 0; i < w.tau(); ++i) past.row(i) = r.past[static_cast<std::size_t>(i)].transpose();

  SUBCASE("deterministic variant is one sample at the prior mean without KL") {
    mc.variant = Variant::kDeterministic;
    BitrapModel m(mc);
    Rng init(1);
    m.params().initialize(init);
    Tape t;
    Rng rng(2);
    const double got = m.loss(t, {&w}, rng).scalar();
    const Vec h = encode_observation(m.obs_encoder, past);
    const Vec z = prior_gaussian(m.prior, h).mu;
    const Vec g = generate_goal_np(m.goal_np, h, z).residual;
    const Mat y = decode_bidirectional(m.decoder, h, z, g).residuals;
    CHECK(std::abs(got - loss_np_total({g}, {y}, w, 0.0)) < 1e-12);
  }
  SUBCASE("NP variant draws from the posterior and adds the KL") {
    mc.variant = Variant::kNP;
    BitrapModel m(mc);
    Rng init(1);
    m.params().initialize(init);
    Tape t;
    Rng rng(2);
    const double got = m.loss(t, {&w}, rng).scalar();
    const Vec h = encode_observation(m.obs_encoder, past);
    const Vec hy = encode_target(m.target_encoder, r.future);
    const auto p = prior_gaussian(m.prior, h);
    const auto q = posterior_gaussian(m.posterior, h, hy);
    Rng replay(2);
    const Mat eps = replay.normal_matrix(4, 3);
    std::vector<Vec> goals;
    std::vector<Mat> trajs;
    for (int i = 0; i < 4; ++i) {
      const Vec z = q.mu + q.sigma.cwiseProduct(eps.row(i).transpose());
      goals.push_back(generate_goal_np(m.goal_np, h, z).residual);
      trajs.push_back(decode_bidirectional(m.decoder, h, z, goals.back()).residuals);
    }
    CHECK(std::abs(got - loss_np_total(goals, trajs, w, kl_gaussian(q, p))) < 1e-10);
  }
}

TEST_CASE("every parameter receives gradient") {
  const auto windows = synth_windows(6, 2);
  for (Variant v : {Variant::kNP, Variant::kGMM, Variant::kDeterministic, Variant::kForwardOnly}) {
    CAPTURE(to_string(v));
    ModelConfig mc;
    mc.variant = v;
    mc.hidden = 8;
    mc.latent = 3;
    mc.components = 3;
    mc.train_samples = 4;
    BitrapModel m(mc);
    Rng init(3);
    m.params().initialize(init);
    const Standardizer s = Standardizer::fit(windows);
    std::vector<TrajectoryWindow> std_w;
    for (const auto& w : windows) std_w.push_back(s.apply(w));
    std::vector<const TrajectoryWindow*> batch;
    for (const auto& w : std_w) batch.push_back(&w);
    Tape t;
    Rng rng(4);
    const Var loss = m.loss(t, batch, rng);
    m.params().zero_grad();
    t.backward(loss);
    for (const auto& p : m.params().params()) {
      CAPTURE(p.name);
      CHECK(p.grad.cwiseAbs().maxCoeff() > 0.0);
    }
  }
}

TEST_CASE("parameter names follow the module layout") {
  ModelConfig mc;
  mc.hidden = 8;
  mc.latent = 3;
  mc.components = 3;
  auto prefixes = [&](Variant v) {
    mc.variant = v;
    BitrapModel m(mc);
    std::set<std::string> out;
    for (const auto& p : m.params().params()) out.insert(p.name.substr(0, p.name.find('.')));
    return out;
  };
  const std::set<std::string> full{"obs_encoder", "target_encoder", "prior", "posterior", "goal", "decoder"};
  CHECK(prefixes(Variant::kNP) == full);
  CHECK(prefixes(Variant::kGMM) == full);
  CHECK(prefixes(Variant::kForwardOnly) == full);
  CHECK(prefixes(Variant::kDeterministic) == std::set<std::string>{"obs_encoder", "prior", "goal", "decoder"});
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
  const auto windows = synth_windows(5, 3);
  TrainConfig c = small_config(Variant::kNP, 0);
  const Checkpoint before = train(c, windows, 0.4);
  c.epochs = 1;
  c.lr = 0.0;
  const Checkpoint after = train(c, windows, 0.4);
  CHECK(same_params(before.model->params(), after.model->params()));
  CHECK(after.curve.size() == 1);
}

TEST_CASE("training is deterministic and resumable") {
  const auto windows = synth_windows(8, 4);
  const auto val = synth_windows(3, 5);
  for (Variant v : {Variant::kNP, Variant::kGMM}) {
    CAPTURE(to_string(v));
    const TrainConfig c = small_config(v, 4);
    const Checkpoint a = train(c, windows, 0.4, &val);
    const Checkpoint b = train(c, windows, 0.4, &val);
    CHECK(a.curve == b.curve);
    CHECK(a.curve.size() == 8);
    CHECK(same_params(a.model->params(), b.model->params()));

    TrainConfig half = c;
    half.epochs = 2;
    const std::string path = temp_path("resume_" + to_string(v) + ".ckpt");
    save_checkpoint(train(half, windows, 0.4, &val), path);
    const Checkpoint mid = load_checkpoint(path);
    const Checkpoint resumed = train(c, windows, 0.4, &val, &mid);
    CHECK(resumed.epoch == 4);
    CHECK(resumed.curve == a.curve);
    CHECK(same_params(resumed.model->params(), a.model->params()));

    TrainConfig other = c;
    other.seed = 12;
    CHECK_FALSE(train(other, windows, 0.4).curve == train(c, windows, 0.4).curve);
  }
}

TEST_CASE("checkpoints round-trip bitwise") {
  const auto windows = synth_windows(6, 6);
  for (Variant v : {Variant::kNP, Variant::kGMM, Variant::kDeterministic, Variant::kForwardOnly}) {
    CAPTURE(to_string(v));
    const Checkpoint ck = train(small_config(v, 2), windows, 0.4);
    const std::string path = temp_path("roundtrip_" + to_string(v) + ".ckpt");
    save_checkpoint(ck, path);
    const Checkpoint back = load_checkpoint(path);
    CHECK(same_params(ck.model->params(), back.model->params()));
    CHECK(back.standardizer.shift() == ck.standardizer.shift());
    CHECK(back.standardizer.scale() == ck.standardizer.scale());
    CHECK(back.curve == ck.curve);
    CHECK(back.epoch == ck.epoch);
    CHECK(back.rng_state == ck.rng_state);
    CHECK(back.adam.step == ck.adam.step);
    CHECK(to_json(back.config) == to_json(ck.config));
    for (std::size_t i = 0; i < ck.adam.m.size(); ++i) {
      CHECK(back.adam.m[i] == ck.adam.m[i]);
      CHECK(back.adam.v[i] == ck.adam.v[i]);
    }
    const auto pa = predict(ck, windows[3], 7, 99);
    const auto pb = predict(back, windows[3], 7, 99);
    REQUIRE(pa.samples.size() == pb.samples.size());
    for (std::size_t i = 0; i < pa.samples.size(); ++i) CHECK(pa.samples[i] == pb.samples[i]);
    CHECK(pa.components == pb.components);
  }
}

TEST_CASE("corrupt checkpoints are rejected") {
  const std::string path = temp_path("corrupt.ckpt");
  std::ofstream(path) << "not a checkpoint";
  CHECK_THROWS_AS(load_checkpoint(path), DataError);
  CHECK_THROWS_AS(load_checkpoint(temp_path("missing.ckpt")), DataError);
}

TEST_CASE("predictions") {
  const auto windows = synth_windows(6, 7);
  SUBCASE("one sample, anchored at the current state") {
    Checkpoint ck = train(small_config(Variant::kNP, 0), windows, 0.4);
    ck.model->params().fill(0.0);
    const auto p = predict(ck, windows[0], 1, 1);
    REQUIRE(p.samples.size() == 1);
    CHECK(p.samples[0].rows() == 12);
    CHECK(p.samples[0].cols() == 2);
    for (Eigen::Index s = 0; s < 12; ++s) CHECK((p.samples[0].row(s) - windows[0].origin.transpose()).norm() < 1e-12);
    CHECK_THROWS_AS(predict(ck, windows[0], 0, 1), ConfigError);
    CHECK_THROWS_AS(predict(Checkpoint{}, windows[0], 1, 1), ConfigError);
  }
  SUBCASE("deterministic models give one trajectory") {
    const Checkpoint ck = train(small_config(Variant::kDeterministic, 1), windows, 0.4);
    CHECK(predict(ck, windows[0], 20, 1).samples.size() == 1);
  }
  SUBCASE("fixed seed reproduces samples") {
    const Checkpoint ck = train(small_config(Variant::kNP, 1), windows, 0.4);
    const auto a = predict(ck, windows[1], 5, 42);
    const auto b = predict(ck, windows[1], 5, 42);
    const auto c = predict(ck, windows[1], 5, 43);
    for (std::size_t i = 0; i < 5; ++i) CHECK(a.samples[i] == b.samples[i]);
    CHECK_FALSE(a.samples[0] == c.samples[0]);
  }
  SUBCASE("a one-hot prior decodes only the first component") {
    Checkpoint ck = train(small_config(Variant::kGMM, 1), windows, 0.4);
    auto& last = ck.model->prior_cat.mlp.l3;
    last.weight->value.setZero();
    last.bias->value.setZero();
    last.bias->value(0, 0) = 100.0;
    const auto p = predict(ck, windows[2], 500, 3);
    REQUIRE(p.goal.has_value());
    REQUIRE(p.position.has_value());
    CHECK(p.goal->pi(0) > 1.0 - 1e-12);
    CHECK(p.position->steps.size() == 12);
    for (int k : p.components) CHECK(k == 0);
    CHECK(p.samples.size() == 500);
  }
}

TEST_CASE("NP training halves the loss on a small synthetic set") {
  const auto windows = synth_windows(50, 8);
  REQUIRE(windows.size() == 50);
  TrainConfig c;
  c.model.variant = Variant::kNP;
  c.model.hidden = 32;
  c.model.latent = 8;
  c.model.train_samples = 10;
  c.batch_size = 16;
  c.lr = 3e-3;
  c.lr_decay = 0.99;
  c.epochs = 200;
  c.seed = 1;
  const Checkpoint ck = train(c, windows, 0.4);
  const double first = ck.curve.front().loss;
  const double last = ck.curve.back().loss;
  CAPTURE(first);
  CAPTURE(last);
  CHECK(last <= 0.5 * first);
}
