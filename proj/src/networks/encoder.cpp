#include "reachseg/networks/encoder.hpp"

#include <algorithm>
#include <stdexcept>

namespace reachseg {

HanEncoder::HanEncoder(const EncoderConfig& config, Rng& rng) : config_(config) {
  if (config.vocabulary_size == 0 || config.embed_dim == 0 || config.hidden_dim == 0 ||
      config.max_pages == 0 || config.max_sessions == 0) {
    throw std::invalid_argument("HanEncoder: all dimensions must be >= 1");
  }
  const std::size_t d = config.embed_dim;
  const std::size_t h = config.hidden_dim;
  token_embedding_ = {"encoder.token_embedding", glorot_uniform_init(config.vocabulary_size, d, rng)};
  page_position_ = {"encoder.page_position", glorot_uniform_init(config.max_pages, d, rng)};
  page_weight_ = {"encoder.page.weight", glorot_uniform_init(d, h, rng)};
  page_bias_ = {"encoder.page.bias", Matrix(1, h)};
  page_attention_ = AdditiveAttention("encoder.page_attention", h, h, rng);
  session_position_ = {"encoder.session_position", glorot_uniform_init(config.max_sessions, h, rng)};
  session_weight_ = {"encoder.session.weight", glorot_uniform_init(h, h, rng)};
  session_bias_ = {"encoder.session.bias", Matrix(1, h)};
  session_attention_ = AdditiveAttention("encoder.session_attention", h, h, rng);
}

Matrix HanEncoder::encode(const UserBatch& users, Tape* tape) const {
  Tape local;
  Tape& t = tape ? *tape : local;
  t = Tape{};

  for (const UserRecord* user : users) {
    if (user->sessions.empty()) {
      throw std::invalid_argument("encode: user '" + user->user_id + "' has no sessions");
    }
    const std::size_t first_session = t.page_spans.size();
    for (std::size_t s = 0; s < user->sessions.size(); ++s) {
      const auto& session = user->sessions[s];
      if (session.empty()) {
        throw std::invalid_argument("encode: user '" + user->user_id + "' has an empty session");
      }
      t.page_spans.push_back({t.tokens.size(), session.size()});
      for (std::size_t p = 0; p < session.size(); ++p) {
        const int token = session[p];
        if (token < 0 || static_cast<std::size_t>(token) >= config_.vocabulary_size) {
          throw std::invalid_argument("encode: page token " + std::to_string(token) +
                                      " outside vocabulary");
        }
        t.tokens.push_back(token);
        t.page_positions.push_back(std::min(p, config_.max_pages - 1));
      }
      t.session_positions.push_back(std::min(s, config_.max_sessions - 1));
      t.prefix_spans.push_back({first_session, s + 1});
    }
  }

  const std::size_t d = config_.embed_dim;
  t.page_inputs = Matrix(t.tokens.size(), d);
  for (std::size_t i = 0; i < t.tokens.size(); ++i) {
    const auto emb = token_embedding_.value.row(static_cast<std::size_t>(t.tokens[i]));
    const auto pos = page_position_.value.row(t.page_positions[i]);
    auto out = t.page_inputs.row(i);
    for (std::size_t c = 0; c < d; ++c) out[c] = emb[c] + pos[c];
  }
  t.page_hidden = tanh_forward(affine_forward(t.page_inputs, page_weight_, page_bias_));
  AttentionOutput sessions = additive_attention_forward(t.page_hidden, t.page_spans, page_attention_);
  t.page_attention = std::move(sessions.tape);

  t.session_inputs = std::move(sessions.pooled);
  for (std::size_t s = 0; s < t.session_positions.size(); ++s) {
    const auto pos = session_position_.value.row(t.session_positions[s]);
    auto row = t.session_inputs.row(s);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += pos[c];
  }
  t.session_hidden = tanh_forward(affine_forward(t.session_inputs, session_weight_, session_bias_));
  AttentionOutput users_out =
      additive_attention_forward(t.session_hidden, t.prefix_spans, session_attention_);
  t.session_attention = std::move(users_out.tape);
  return std::move(users_out.pooled);
}

void HanEncoder::backward(const Tape& t, const Matrix& d_embeddings) {
  const Matrix d_session_hidden = additive_attention_backward(
      t.session_hidden, t.prefix_spans, t.session_attention, d_embeddings, session_attention_);
  const Matrix d_session_inputs =
      affine_backward(t.session_inputs, tanh_backward(t.session_hidden, d_session_hidden),
                      session_weight_, session_bias_);
  for (std::size_t s = 0; s < t.session_positions.size(); ++s) {
    auto g = session_position_.grad.row(t.session_positions[s]);
    const auto d = d_session_inputs.row(s);
    for (std::size_t c = 0; c < g.size(); ++c) g[c] += d[c];
  }
  const Matrix d_page_hidden = additive_attention_backward(
      t.page_hidden, t.page_spans, t.page_attention, d_session_inputs, page_attention_);
  const Matrix d_page_inputs = affine_backward(
      t.page_inputs, tanh_backward(t.page_hidden, d_page_hidden), page_weight_, page_bias_);
  for (std::size_t i = 0; i < t.tokens.size(); ++i) {
    auto ge = token_embedding_.grad.row(static_cast<std::size_t>(t.tokens[i]));
    auto gp = page_position_.grad.row(t.page_positions[i]);
    const auto d = d_page_inputs.row(i);
    for (std::size_t c = 0; c < d.size(); ++c) {
      ge[c] += d[c];
      gp[c] += d[c];
    }
  }
}

std::vector<Parameter*> HanEncoder::parameters() {
  return {&token_embedding_,           &page_position_,          &page_weight_,
          &page_bias_,                 &page_attention_.projection, &page_attention_.bias,
          &page_attention_.context,    &session_position_,       &session_weight_,
          &session_bias_,              &session_attention_.projection,
          &session_attention_.bias,    &session_attention_.context};
}

std::vector<const Parameter*> HanEncoder::parameters() const {
  auto mutable_params = const_cast<HanEncoder*>(this)->parameters();
  return {mutable_params.begin(), mutable_params.end()};
}

}  // namespace reachseg
