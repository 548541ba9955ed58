#pragma once

#include <cstddef>
#include <vector>

#include "reachseg/numerics/layers.hpp"
#include "reachseg/synthdata/dataset.hpp"

namespace reachseg {

struct EncoderConfig {
  std::size_t vocabulary_size = 0;
  std::size_t embed_dim = 50;
  std::size_t hidden_dim = 50;
  /// Positions past these limits share the last position embedding.
  std::size_t max_pages = 40;
  std::size_t max_sessions = 8;
};

/// Two-level hierarchical attention encoder without recurrence.
///
/// Page level: each token becomes tanh((E[token] + P[position])·W + b) and an
/// additive attention pools the pages of a session into a session vector.
/// Session level: tanh((s_i + Q[i])·W' + b') followed by additive attention
/// over sessions 1..t yields the user embedding z_t for every prefix t.
///
/// Position embeddings make both levels order-sensitive.
class HanEncoder {
 public:
  struct Tape {
    std::vector<int> tokens;
    std::vector<std::size_t> page_positions;
    std::vector<std::size_t> session_positions;
    std::vector<Span> page_spans;    // one per session
    std::vector<Span> prefix_spans;  // one per (user, t)
    Matrix page_inputs;
    Matrix page_hidden;
    AttentionTape page_attention;
    Matrix session_inputs;
    Matrix session_hidden;
    AttentionTape session_attention;
  };

  HanEncoder() = default;
  HanEncoder(const EncoderConfig& config, Rng& rng);

  /// One row per (user, t), stacked in user order (see prefix_offsets()).
  Matrix encode(const UserBatch& users, Tape* tape = nullptr) const;
  void backward(const Tape& tape, const Matrix& d_embeddings);

  const EncoderConfig& config() const { return config_; }
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;

 private:
  EncoderConfig config_;
  Parameter token_embedding_;
  Parameter page_position_;
  Parameter page_weight_;
  Parameter page_bias_;
  AdditiveAttention page_attention_;
  Parameter session_position_;
  Parameter session_weight_;
  Parameter session_bias_;
  AdditiveAttention session_attention_;
};

}  // namespace reachseg
