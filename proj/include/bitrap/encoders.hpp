#pragma once

#include <string>
#include <vector>

#include "bitrap/nn.hpp"

namespace bitrap {

// Linear embedding (D -> max(1, H/4)) followed by a GRU; the feature is the
// final hidden state, starting from a zero state.
class SequenceEncoder {
 public:
  SequenceEncoder() = default;
  SequenceEncoder(ParameterStore& store, const std::string& name, int input_dim, int hidden);

  // steps[i] is B x D; returns B x H.
  Var forward(Tape& tape, const std::vector<Var>& steps) const;

  int input_dim() const { return embed.in; }
  int hidden() const { return gru.hidden; }

  Linear embed;
  GruCell gru;
};

inline int embedding_width(int hidden) { return hidden >= 4 ? hidden / 4 : 1; }

// Single-sequence evaluation; rows of X (resp. Y) are time steps.
Vec encode_observation(const SequenceEncoder& encoder, const Mat& X);
Vec encode_target(const SequenceEncoder& encoder, const Mat& Y);

}  // namespace bitrap
