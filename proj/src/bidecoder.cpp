#include "bitrap/bidecoder.hpp"

#include <cmath>

#include "bitrap/encoders.hpp"
#include "bitrap/errors.hpp"

namespace bitrap {

namespace {

void guard_state(const Var& h, const char* chain, int step) {
  const Mat& v = h.value();
  if (!v.allFinite() || v.cwiseAbs().maxCoeff() > kStateLimit) {
    throw NumericalError(std::string("decoder ") + chain + " state diverged at step " + std::to_string(step));
  }
}

}  // namespace

BiDecoder::BiDecoder(ParameterStore& store, const std::string& name, const DecoderShape& shape) : shape_(shape) {
  if (shape.horizon < 1) throw ConfigError("decoder horizon must be >= 1");
  if (shape.bidirectional && shape.feed == BackwardFeed::kFullOutput && shape.out_dim != shape.goal_dim) {
    throw ConfigError("full-output backward feed needs out_dim == goal_dim");
  }
  const int in_width = embedding_width(shape.hidden);
  const int init_in = shape.feature + shape.latent;
  init_fwd = Linear(store, name + ".init_fwd", init_in, shape.hidden);
  fwd_in = Linear(store, name + ".fwd_in", shape.hidden, in_width);
  fwd_gru = GruCell(store, name + ".fwd_gru", in_width, shape.hidden);
  out_fwd = Linear(store, name + ".out_fwd", shape.hidden, shape.out_dim, false);
  out_bias = &store.add(name + ".out_bias", 1, shape.out_dim, 1.0 / std::sqrt(2.0 * shape.hidden));
  if (shape.bidirectional) {
    init_bwd = Linear(store, name + ".init_bwd", shape.backward_latent ? init_in : shape.feature, shape.hidden);
    bwd_in = Linear(store, name + ".bwd_in", shape.goal_dim, in_width);
    bwd_gru = GruCell(store, name + ".bwd_gru", in_width, shape.hidden);
    out_bwd = Linear(store, name + ".out_bwd", shape.hidden, shape.out_dim, false);
    if (shape.feed == BackwardFeed::kReadout && shape.horizon > 1) {
      readout = Linear(store, name + ".readout", shape.hidden, shape.goal_dim);
    }
  }
}

std::vector<Var> BiDecoder::forward(Tape& tape, const Var& h, const Var& z, const Var& goal) const {
  const int horizon = shape_.horizon;
  const Var hz = concat_cols({h, z});

  std::vector<Var> forward_states;
  forward_states.reserve(static_cast<std::size_t>(horizon));
  Var hf = relu(init_fwd(tape, hz));
  for (int s = 0; s < horizon; ++s) {
    hf = fwd_gru(tape, fwd_in(tape, hf), hf);
    guard_state(hf, "forward", s + 1);
    forward_states.push_back(hf);
  }

  const Var bias = tape.parameter(*out_bias);
  std::vector<Var> outputs(static_cast<std::size_t>(horizon));
  if (!shape_.bidirectional) {
    for (int s = 0; s < horizon; ++s) outputs[s] = add_row(out_fwd(tape, forward_states[s]), bias);
    return outputs;
  }

  if (goal.cols() != shape_.goal_dim) throw ShapeError("decoder goal width mismatch");
  Var hb = relu(init_bwd(tape, shape_.backward_latent ? hz : h));
  Var input = goal;
  for (int s = horizon - 1; s >= 0; --s) {
    hb = bwd_gru(tape, bwd_in(tape, input), hb);
    guard_state(hb, "backward", s + 1);
    outputs[s] = add_row(out_fwd(tape, forward_states[s]) + out_bwd(tape, hb), bias);
    if (s == 0) break;
    switch (shape_.feed) {
      case BackwardFeed::kReadout: input = readout(tape, hb); break;
      case BackwardFeed::kFullOutput: input = outputs[s]; break;
      case BackwardFeed::kGoalRepeat: input = goal; break;
    }
  }
  return outputs;
}

DecodedTrajectory decode_bidirectional(const BiDecoder& decoder, const Vec& h_t, const Vec& z, const Vec& goal) {
  const DecoderShape& shape = decoder.shape();
  if (h_t.size() != shape.feature || z.size() != shape.latent) throw ShapeError("decoder input width mismatch");
  if (shape.bidirectional && goal.size() != shape.goal_dim) throw ShapeError("decoder goal width mismatch");
  Tape tape(false);
  const Var goal_var = tape.constant(goal.size() > 0 ? as_row(goal) : Mat::Zero(1, shape.goal_dim));
  const auto steps = decoder.forward(tape, tape.constant(as_row(h_t)), tape.constant(as_row(z)), goal_var);
  DecodedTrajectory out;
  out.residuals.resize(shape.horizon, shape.out_dim);
  for (int s = 0; s < shape.horizon; ++s) out.residuals.row(s) = steps[s].value().row(0);
  return out;
}

}  // namespace bitrap
