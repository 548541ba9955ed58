#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "reachseg/numerics/matrix.hpp"
#include "reachseg/numerics/parameter.hpp"

// Batched layer primitives. Inputs are row-per-sample matrices; every
// forward has a matching backward that returns the gradient w.r.t. the input
// and accumulates parameter gradients into Parameter::grad.

namespace reachseg {

/// y = x·W + b with W of shape (in × out) and b of shape (1 × out).
Matrix affine_forward(const Matrix& x, const Parameter& weight, const Parameter& bias);
Matrix affine_backward(const Matrix& x, const Matrix& d_out, Parameter& weight, Parameter& bias);

Matrix relu_forward(const Matrix& x);
/// Uses the forward *input*.
Matrix relu_backward(const Matrix& x, const Matrix& d_out);

Matrix tanh_forward(const Matrix& x);
/// Uses the forward *output*.
Matrix tanh_backward(const Matrix& y, const Matrix& d_out);

Matrix sigmoid_forward(const Matrix& x);
/// Uses the forward *output*.
Matrix sigmoid_backward(const Matrix& y, const Matrix& d_out);

std::vector<double> softmax(std::span<const double> logits);
Matrix softmax_rows(const Matrix& x);
/// Uses the forward *output*.
Matrix softmax_rows_backward(const Matrix& y, const Matrix& d_out);

/// Independent softmax over consecutive column blocks; block sizes must sum to cols.
Matrix softmax_blocks(const Matrix& x, std::span<const std::size_t> block_sizes);
Matrix softmax_blocks_backward(const Matrix& y, std::span<const std::size_t> block_sizes,
                               const Matrix& d_out);

/// Inverted dropout. In evaluation mode the output is the input and the mask is empty.
struct DropoutResult {
  Matrix output;
  Matrix mask;
};
DropoutResult dropout_forward(const Matrix& x, double rate, bool training, Rng& rng);
Matrix dropout_backward(const Matrix& mask, const Matrix& d_out);

/// A contiguous run of rows. Spans passed to attention may overlap.
struct Span {
  std::size_t begin = 0;
  std::size_t length = 0;
};

/// Additive (Bahdanau/HAN-style) attention parameters:
///   u_i = tanh(h_i·W + b),  score_i = u_i·c,  α = softmax(scores over span),
///   pooled = Σ α_i h_i.
struct AdditiveAttention {
  AdditiveAttention() = default;
  AdditiveAttention(const std::string& prefix, std::size_t input_dim, std::size_t attention_dim,
                    Rng& rng);

  Parameter projection;  // input_dim × attention_dim
  Parameter bias;        // 1 × attention_dim
  Parameter context;     // attention_dim × 1
};

struct AttentionTape {
  Matrix projected;                          // u, one row per input row
  std::vector<std::vector<double>> weights;  // α per span
};

struct AttentionOutput {
  Matrix pooled;  // one row per span
  AttentionTape tape;
};

AttentionOutput additive_attention_forward(const Matrix& h, std::span<const Span> spans,
                                           const AdditiveAttention& attention);
Matrix additive_attention_backward(const Matrix& h, std::span<const Span> spans,
                                   const AttentionTape& tape, const Matrix& d_pooled,
                                   AdditiveAttention& attention);

inline constexpr double kProbabilityFloor = 1e-7;

struct BceTerms {
  double value = 0.0;
  double d_prediction = 0.0;  // zero when the clamp is active
  double d_label = 0.0;
};

/// −[y·log ŷ + (1−y)·log(1−ŷ)] with ŷ clamped to [1e−7, 1−1e−7]. The label may
/// be soft (any value in [0, 1]).
BceTerms binary_cross_entropy(double label, double prediction);

}  // namespace reachseg
