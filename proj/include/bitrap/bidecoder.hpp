#pragma once

// Bi-directional trajectory decoder.
//
// Forward chain, started from h_f = relu(FC_f[h_t, z]):
//   h_f <- GRU_f(W_fi h_f + b_fi, h_f)                  (one step per waypoint)
// Backward chain, started from h_b = relu(FC_b h_t) and fed the goal first:
//   h_b <- GRU_b(W_bi u + b_bi, h_b),  u = goal, then the backward feed
// Waypoint s fuses both chains:  y_s = W_fo h_f(s) + W_bo h_b(s) + b_o.
// h_b(s) is the backward state after delta - s + 1 cell applications, so the
// last waypoint has consumed the goal exactly once. With backward_latent the
// backward start also sees z, FC_b[h_t, z].

#include <string>
#include <vector>

#include "bitrap/nn.hpp"

namespace bitrap {

// What the backward chain consumes after the goal.
enum class BackwardFeed {
  kReadout,     // linear readout W_br h_b + b_br of the current backward state
  kFullOutput,  // the fused waypoint y_s (requires out_dim == goal_dim)
  kGoalRepeat,  // the goal at every step
};

struct DecoderShape {
  int feature = 256;  // h_t width
  int latent = 32;    // z width (L, or K for one-hot categorical samples)
  int hidden = 256;
  int goal_dim = 2;   // width of the goal input
  int out_dim = 2;    // width of each emitted step
  int horizon = 12;   // delta
  bool bidirectional = true;  // false drops the backward chain entirely
  BackwardFeed feed = BackwardFeed::kReadout;
  bool backward_latent = false;  // z also enters the backward start state
};

// Decoder hidden states are rejected beyond this magnitude.
inline constexpr double kStateLimit = 1e6;

class BiDecoder {
 public:
  BiDecoder() = default;
  BiDecoder(ParameterStore& store, const std::string& name, const DecoderShape& shape);

  // h: B x feature, z: B x latent, goal: B x goal_dim. Returns horizon outputs (B x out_dim).
  std::vector<Var> forward(Tape& tape, const Var& h, const Var& z, const Var& goal) const;

  const DecoderShape& shape() const { return shape_; }

  Linear init_fwd, init_bwd;
  Linear fwd_in, bwd_in;
  GruCell fwd_gru, bwd_gru;
  Linear out_fwd, out_bwd;  // W_fo, W_bo (no bias)
  Parameter* out_bias = nullptr;  // b_o
  Linear readout;           // backward feed for BackwardFeed::kReadout

 private:
  DecoderShape shape_;
};

struct DecodedTrajectory {
  Mat residuals;  // delta x D, relative to X_t
  Mat absolute(const Vec& origin) const { return residuals.rowwise() + origin.transpose(); }
};

DecodedTrajectory decode_bidirectional(const BiDecoder& decoder, const Vec& h_t, const Vec& z, const Vec& goal);

}  // namespace bitrap
