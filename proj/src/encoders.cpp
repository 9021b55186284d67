#include "bitrap/encoders.hpp"

#include "bitrap/errors.hpp"

namespace bitrap {

SequenceEncoder::SequenceEncoder(ParameterStore& store, const std::string& name, int input_dim, int hidden)
    : embed(store, name + ".embed", input_dim, embedding_width(hidden)),
      gru(store, name + ".gru", embedding_width(hidden), hidden) {}

Var SequenceEncoder::forward(Tape& tape, const std::vector<Var>& steps) const {
  if (steps.empty()) throw ShapeError("encoder needs at least one time step");
  Var h = tape.constant(Mat::Zero(steps.front().rows(), gru.hidden));
  for (const Var& x : steps) h = gru(tape, embed(tape, x), h);
  return h;
}

namespace {

Vec encode_sequence(const SequenceEncoder& encoder, const Mat& seq) {
  if (seq.rows() < 1) throw ShapeError("sequence must contain at least one step");
  if (seq.cols() != encoder.input_dim()) {
    throw ShapeError("sequence width " + std::to_string(seq.cols()) + " does not match encoder input " +
                     std::to_string(encoder.input_dim()));
  }
  if (!seq.allFinite()) throw NumericalError("non-finite encoder input");
  Tape tape(false);
  std::vector<Var> steps;
  steps.reserve(static_cast<std::size_t>(seq.rows()));
  for (Eigen::Index i = 0; i < seq.rows(); ++i) steps.push_back(tape.constant(seq.row(i)));
  return row_vec(encoder.forward(tape, steps).value());
}

}  // namespace

Vec encode_observation(const SequenceEncoder& encoder, const Mat& X) { return encode_sequence(encoder, X); }

Vec encode_target(const SequenceEncoder& encoder, const Mat& Y) { return encode_sequence(encoder, Y); }

}  // namespace bitrap
