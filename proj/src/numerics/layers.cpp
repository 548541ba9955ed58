#include "reachseg/numerics/layers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace reachseg {

Matrix affine_forward(const Matrix& x, const Parameter& weight, const Parameter& bias) {
  if (bias.value.rows() != 1 || bias.value.cols() != weight.value.cols()) {
    throw std::invalid_argument("affine_forward: bias shape " + bias.value.shape_string() +
                                " does not match weight " + weight.value.shape_string());
  }
  Matrix y = matmul(x, weight.value);
  for (std::size_t r = 0; r < y.rows(); ++r) {
    auto row = y.row(r);
    for (std::size_t c = 0; c < y.cols(); ++c) row[c] += bias.value[c];
  }
  return y;
}

Matrix affine_backward(const Matrix& x, const Matrix& d_out, Parameter& weight, Parameter& bias) {
  if (d_out.rows() != x.rows() || d_out.cols() != weight.value.cols()) {
    throw std::invalid_argument("affine_backward: upstream gradient " + d_out.shape_string() +
                                " incompatible with input " + x.shape_string());
  }
  weight.grad += matmul_tn(x, d_out);
  bias.grad += column_sums(d_out);
  return matmul_nt(d_out, weight.value);
}

Matrix relu_forward(const Matrix& x) {
  Matrix y = x;
  for (double& v : y.values()) v = v > 0.0 ? v : 0.0;
  return y;
}

Matrix relu_backward(const Matrix& x, const Matrix& d_out) {
  require_same_shape(x, d_out, "relu_backward");
  Matrix dx(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > 0.0 ? d_out[i] : 0.0;
  return dx;
}

Matrix tanh_forward(const Matrix& x) {
  Matrix y = x;
  for (double& v : y.values()) v = std::tanh(v);
  return y;
}

Matrix tanh_backward(const Matrix& y, const Matrix& d_out) {
  require_same_shape(y, d_out, "tanh_backward");
  Matrix dx(y.rows(), y.cols());
  for (std::size_t i = 0; i < y.size(); ++i) dx[i] = d_out[i] * (1.0 - y[i] * y[i]);
  return dx;
}

Matrix sigmoid_forward(const Matrix& x) {
  Matrix y = x;
  for (double& v : y.values()) {
    v = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  return y;
}

Matrix sigmoid_backward(const Matrix& y, const Matrix& d_out) {
  require_same_shape(y, d_out, "sigmoid_backward");
  Matrix dx(y.rows(), y.cols());
  for (std::size_t i = 0; i < y.size(); ++i) dx[i] = d_out[i] * y[i] * (1.0 - y[i]);
  return dx;
}

namespace {

void softmax_inplace(std::span<double> v) {
  if (v.empty()) return;
  const double peak = *std::max_element(v.begin(), v.end());
  double total = 0.0;
  for (double& x : v) {
    x = std::exp(x - peak);
    total += x;
  }
  for (double& x : v) x /= total;
}

void softmax_backward_inplace(std::span<const double> y, std::span<const double> dy,
                              std::span<double> dx) {
  double dot = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) dot += y[i] * dy[i];
  for (std::size_t i = 0; i < y.size(); ++i) dx[i] = y[i] * (dy[i] - dot);
}

void check_blocks(const Matrix& m, std::span<const std::size_t> block_sizes) {
  const std::size_t total = std::accumulate(block_sizes.begin(), block_sizes.end(), std::size_t{0});
  if (total != m.cols()) {
    throw std::invalid_argument("softmax_blocks: block sizes sum to " + std::to_string(total) +
                                " but matrix has " + std::to_string(m.cols()) + " columns");
  }
}

}  // namespace

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.begin(), logits.end());
  softmax_inplace(out);
  return out;
}

Matrix softmax_rows(const Matrix& x) {
  Matrix y = x;
  for (std::size_t r = 0; r < y.rows(); ++r) softmax_inplace(y.row(r));
  return y;
}

Matrix softmax_rows_backward(const Matrix& y, const Matrix& d_out) {
  require_same_shape(y, d_out, "softmax_rows_backward");
  Matrix dx(y.rows(), y.cols());
  for (std::size_t r = 0; r < y.rows(); ++r) softmax_backward_inplace(y.row(r), d_out.row(r), dx.row(r));
  return dx;
}

Matrix softmax_blocks(const Matrix& x, std::span<const std::size_t> block_sizes) {
  check_blocks(x, block_sizes);
  Matrix y = x;
  for (std::size_t r = 0; r < y.rows(); ++r) {
    auto row = y.row(r);
    std::size_t offset = 0;
    for (std::size_t size : block_sizes) {
      softmax_inplace(row.subspan(offset, size));
      offset += size;
    }
  }
  return y;
}

Matrix softmax_blocks_backward(const Matrix& y, std::span<const std::size_t> block_sizes,
                               const Matrix& d_out) {
  require_same_shape(y, d_out, "softmax_blocks_backward");
  check_blocks(y, block_sizes);
  Matrix dx(y.rows(), y.cols());
  for (std::size_t r = 0; r < y.rows(); ++r) {
    std::size_t offset = 0;
    for (std::size_t size : block_sizes) {
      softmax_backward_inplace(y.row(r).subspan(offset, size), d_out.row(r).subspan(offset, size),
                               dx.row(r).subspan(offset, size));
      offset += size;
    }
  }
  return dx;
}

DropoutResult dropout_forward(const Matrix& x, double rate, bool training, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate must be in [0, 1)");
  if (!training || rate == 0.0) return {x, Matrix()};
  const double keep = 1.0 - rate;
  std::bernoulli_distribution keep_draw(keep);
  Matrix mask(x.rows(), x.cols());
  Matrix y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    mask[i] = keep_draw(rng) ? 1.0 / keep : 0.0;
    y[i] = x[i] * mask[i];
  }
  return {std::move(y), std::move(mask)};
}

Matrix dropout_backward(const Matrix& mask, const Matrix& d_out) {
  if (mask.empty()) return d_out;
  return hadamard(mask, d_out);
}

AdditiveAttention::AdditiveAttention(const std::string& prefix, std::size_t input_dim,
                                     std::size_t attention_dim, Rng& rng)
    : projection(prefix + ".projection", glorot_uniform_init(input_dim, attention_dim, rng)),
      bias(prefix + ".bias", Matrix(1, attention_dim)),
      context(prefix + ".context", glorot_uniform_init(attention_dim, 1, rng)) {}

namespace {

void check_spans(const Matrix& h, std::span<const Span> spans) {
  for (const Span& s : spans) {
    if (s.length == 0) throw std::invalid_argument("attention: empty span");
    if (s.begin + s.length > h.rows()) throw std::invalid_argument("attention: span out of range");
  }
}

}  // namespace

AttentionOutput additive_attention_forward(const Matrix& h, std::span<const Span> spans,
                                           const AdditiveAttention& attention) {
  if (h.cols() != attention.projection.value.rows()) {
    throw std::invalid_argument("attention: input width " + std::to_string(h.cols()) +
                                " does not match projection " +
                                attention.projection.value.shape_string());
  }
  check_spans(h, spans);
  AttentionOutput out;
  out.tape.projected = tanh_forward(affine_forward(h, attention.projection, attention.bias));
  const Matrix scores = matmul(out.tape.projected, attention.context.value);
  out.pooled = Matrix(spans.size(), h.cols());
  out.tape.weights.resize(spans.size());
  for (std::size_t s = 0; s < spans.size(); ++s) {
    const Span span = spans[s];
    std::vector<double> alpha(scores.values().begin() + static_cast<std::ptrdiff_t>(span.begin),
                              scores.values().begin() +
                                  static_cast<std::ptrdiff_t>(span.begin + span.length));
    softmax_inplace(alpha);
    auto pooled = out.pooled.row(s);
    for (std::size_t i = 0; i < span.length; ++i) {
      const auto row = h.row(span.begin + i);
      for (std::size_t c = 0; c < h.cols(); ++c) pooled[c] += alpha[i] * row[c];
    }
    out.tape.weights[s] = std::move(alpha);
  }
  return out;
}

Matrix additive_attention_backward(const Matrix& h, std::span<const Span> spans,
                                   const AttentionTape& tape, const Matrix& d_pooled,
                                   AdditiveAttention& attention) {
  if (d_pooled.rows() != spans.size() || d_pooled.cols() != h.cols()) {
    throw std::invalid_argument("attention backward: upstream gradient has wrong shape");
  }
  Matrix dh(h.rows(), h.cols());
  Matrix d_scores(h.rows(), 1);
  for (std::size_t s = 0; s < spans.size(); ++s) {
    const Span span = spans[s];
    const auto& alpha = tape.weights[s];
    const auto g = d_pooled.row(s);
    std::vector<double> d_alpha(span.length, 0.0);
    double weighted = 0.0;
    for (std::size_t i = 0; i < span.length; ++i) {
      const auto row = h.row(span.begin + i);
      auto d_row = dh.row(span.begin + i);
      double dot = 0.0;
      for (std::size_t c = 0; c < h.cols(); ++c) {
        d_row[c] += alpha[i] * g[c];
        dot += g[c] * row[c];
      }
      d_alpha[i] = dot;
      weighted += alpha[i] * dot;
    }
    for (std::size_t i = 0; i < span.length; ++i) {
      d_scores[span.begin + i] += alpha[i] * (d_alpha[i] - weighted);
    }
  }
  attention.context.grad += matmul_tn(tape.projected, d_scores);
  const Matrix d_projected = matmul_nt(d_scores, attention.context.value);
  const Matrix d_pre = tanh_backward(tape.projected, d_projected);
  dh += affine_backward(h, d_pre, attention.projection, attention.bias);
  return dh;
}

BceTerms binary_cross_entropy(double label, double prediction) {
  const double p = std::clamp(prediction, kProbabilityFloor, 1.0 - kProbabilityFloor);
  const bool clamped = p != prediction;
  BceTerms out;
  out.value = -(label * std::log(p) + (1.0 - label) * std::log(1.0 - p));
  out.d_prediction = clamped ? 0.0 : -label / p + (1.0 - label) / (1.0 - p);
  out.d_label = std::log(1.0 - p) - std::log(p);
  return out;
}

}  // namespace reachseg
