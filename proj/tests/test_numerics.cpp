#include <cmath>
#include <limits>
#include <numeric>

#include <gtest/gtest.h>

#include "reachseg/errors.hpp"
#include "reachseg/numerics/gradcheck.hpp"
#include "reachseg/numerics/layers.hpp"
#include "reachseg/numerics/matrix.hpp"
#include "reachseg/numerics/parameter.hpp"
#include "test_util.hpp"

namespace reachseg {
namespace {

using testing::random_matrix;
using testing::weighted_sum;

constexpr int kTrials = 20;
constexpr double kTol = 1e-4;

TEST(Glorot, BoundsFollowFanSum) {
  Rng rng(0);
  const Matrix a = glorot_uniform_init(1, 5, rng);
  for (double v : a.values()) EXPECT_LE(std::abs(v), 1.0);

  Rng rng7(7);
  const Matrix b = glorot_uniform_init(50, 50, rng7);
  EXPECT_LE(max_abs(b), std::sqrt(6.0 / 100.0));
  // 2500 draws should come close to the bound on both sides
  EXPECT_GT(max_abs(b), 0.95 * std::sqrt(6.0 / 100.0));
}

TEST(Glorot, DeterministicAndRejectsZeroDims) {
  Rng r1(3), r2(3);
  EXPECT_EQ(glorot_uniform_init(2, 2, r1), glorot_uniform_init(2, 2, r2));
  EXPECT_THROW(glorot_uniform_init(0, 3, r1), std::invalid_argument);
  EXPECT_THROW(glorot_uniform_init(3, 0, r1), std::invalid_argument);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Parameter p("v", Matrix{{1.0}});
  AdamState s(p, AdamConfig{});
  p.grad[0] = 1.0;
  adam_step(p, s);
  // m̂ = 1, v̂ = 1 → Δ = lr · 1 / (1 + ε)
  EXPECT_NEAR(p.value[0], 1.0 - 0.001 / (1.0 + 1e-8), 1e-15);
  EXPECT_EQ(p.grad[0], 0.0);
  EXPECT_EQ(s.step_count, 1);
}

TEST(Adam, HandComputedSecondStep) {
  AdamConfig c;
  c.learning_rate = 0.01;
  Parameter p("v", Matrix{{0.5, -2.0}});
  AdamState s(p, c);
  const double g1[2] = {0.3, -1.5};
  const double g2[2] = {-0.2, 0.7};
  double v[2] = {0.5, -2.0}, m[2] = {0, 0}, sq[2] = {0, 0};
  for (int t = 1; t <= 2; ++t) {
    for (int i = 0; i < 2; ++i) {
      const double g = t == 1 ? g1[i] : g2[i];
      p.grad[i] = g;
      m[i] = 0.9 * m[i] + 0.1 * g;
      sq[i] = 0.999 * sq[i] + 0.001 * g * g;
      const double mh = m[i] / (1 - std::pow(0.9, t));
      const double vh = sq[i] / (1 - std::pow(0.999, t));
      v[i] -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
    }
    adam_step(p, s);
  }
  EXPECT_NEAR(p.value[0], v[0], 1e-14);
  EXPECT_NEAR(p.value[1], v[1], 1e-14);
}

TEST(Adam, ZeroGradientNeverMoves) {
  Rng rng(1);
  Parameter p("w", random_matrix(4, 3, rng));
  const Matrix before = p.value;
  AdamState s(p, AdamConfig{});
  for (int i = 0; i < 50; ++i) adam_step(p, s);
  EXPECT_EQ(p.value, before);
}

TEST(Adam, NonFiniteGradientThrows) {
  Parameter p("w", Matrix{{1.0, 2.0}});
  AdamState s(p, AdamConfig{});
  p.grad[1] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(adam_step(p, s), NumericError);
  p.grad[1] = std::numeric_limits<double>::infinity();
  EXPECT_THROW(adam_step(p, s), NumericError);
}

TEST(Adam, Deterministic) {
  const auto run = [] {
    Rng rng(11);
    Parameter p("w", random_matrix(3, 3, rng));
    AdamState s(p, AdamConfig{});
    for (int i = 0; i < 20; ++i) {
      p.grad = random_matrix(3, 3, rng);
      adam_step(p, s);
    }
    return p.value;
  };
  EXPECT_EQ(run(), run());
}

TEST(Softmax, UniformAndSimplex) {
  const std::vector<double> zeros{0.0, 0.0, 0.0};
  for (double p : softmax(zeros)) EXPECT_DOUBLE_EQ(p, 1.0 / 3.0);

  Rng rng(5);
  for (int t = 0; t < 100; ++t) {
    const Matrix y = softmax_rows(random_matrix(4, 7, rng, 20.0));
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double s = 0.0;
      for (double v : y.row(r)) {
        EXPECT_GE(v, 0.0);
        s += v;
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(Softmax, BlocksNormaliseIndependently) {
  Rng rng(6);
  const std::vector<std::size_t> blocks{2, 3, 1};
  const Matrix y = softmax_blocks(random_matrix(3, 6, rng), blocks);
  for (std::size_t r = 0; r < 3; ++r) {
    EXPECT_NEAR(y(r, 0) + y(r, 1), 1.0, 1e-12);
    EXPECT_NEAR(y(r, 2) + y(r, 3) + y(r, 4), 1.0, 1e-12);
    EXPECT_DOUBLE_EQ(y(r, 5), 1.0);
  }
  const std::vector<std::size_t> bad{2, 3};
  EXPECT_THROW(softmax_blocks(random_matrix(1, 6, rng), bad), std::invalid_argument);
}

TEST(Relu, BackwardAtNegativeIsZero) {
  const Matrix x{{-2.0, 3.0}};
  const Matrix dx = relu_backward(x, Matrix{{1.0, 1.0}});
  EXPECT_EQ(dx[0], 0.0);
  EXPECT_EQ(dx[1], 1.0);
  EXPECT_THROW(relu_backward(x, Matrix{{1.0}}), std::invalid_argument);
}

TEST(Dropout, EvaluationIsIdentity) {
  Rng rng(2);
  const Matrix x = random_matrix(5, 8, rng);
  const DropoutResult r = dropout_forward(x, 0.3, false, rng);
  EXPECT_EQ(r.output, x);
  EXPECT_TRUE(r.mask.empty());
  EXPECT_THROW(dropout_forward(x, 1.0, true, rng), std::invalid_argument);
  EXPECT_THROW(dropout_forward(x, -0.1, true, rng), std::invalid_argument);
}

TEST(Dropout, InvertedScalingKeepsMean) {
  Rng rng(4);
  const Matrix x(200, 200, 1.0);
  const DropoutResult r = dropout_forward(x, 0.3, true, rng);
  double s = 0.0;
  std::size_t zeros = 0;
  for (double v : r.output.values()) {
    s += v;
    if (v == 0.0) ++zeros;
    else EXPECT_NEAR(v, 1.0 / 0.7, 1e-12);
  }
  EXPECT_NEAR(s / static_cast<double>(x.size()), 1.0, 0.02);
  EXPECT_NEAR(static_cast<double>(zeros) / static_cast<double>(x.size()), 0.3, 0.01);
}

TEST(Attention, LengthOneSequencePassesThrough) {
  Rng rng(8);
  AdditiveAttention att("a", 4, 3, rng);
  const Matrix h = random_matrix(1, 4, rng);
  const std::vector<Span> spans{{0, 1}};
  const AttentionOutput out = additive_attention_forward(h, spans, att);
  ASSERT_EQ(out.tape.weights.size(), 1u);
  EXPECT_EQ(out.tape.weights[0], std::vector<double>{1.0});
  for (std::size_t c = 0; c < 4; ++c) EXPECT_DOUBLE_EQ(out.pooled(0, c), h(0, c));
}

TEST(Attention, RejectsBadSpans) {
  Rng rng(8);
  AdditiveAttention att("a", 4, 3, rng);
  const Matrix h = random_matrix(3, 4, rng);
  const std::vector<Span> empty{{0, 0}};
  const std::vector<Span> out_of_range{{2, 2}};
  EXPECT_THROW(additive_attention_forward(h, empty, att), std::invalid_argument);
  EXPECT_THROW(additive_attention_forward(h, out_of_range, att), std::invalid_argument);
  EXPECT_THROW(additive_attention_forward(random_matrix(3, 5, rng), std::vector<Span>{{0, 3}}, att),
               std::invalid_argument);
}

TEST(Bce, ReferenceValues) {
  EXPECT_NEAR(binary_cross_entropy(1, 0.5).value, std::log(2.0), 1e-12);
  EXPECT_NEAR(binary_cross_entropy(1, 0.9).value, 0.10536051565782628, 1e-12);
  const BceTerms clamped = binary_cross_entropy(0, 0.0);
  EXPECT_NEAR(clamped.value, -std::log1p(-1e-7), 1e-15);
  EXPECT_EQ(clamped.d_prediction, 0.0);
}

TEST(Bce, GradientMatchesDifferences) {
  Rng rng(9);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  for (int t = 0; t < kTrials; ++t) {
    const double y = u(rng), p = u(rng), h = 1e-6;
    const BceTerms b = binary_cross_entropy(y, p);
    const double dp = (binary_cross_entropy(y, p + h).value - binary_cross_entropy(y, p - h).value) / (2 * h);
    const double dy = (binary_cross_entropy(y + h, p).value - binary_cross_entropy(y - h, p).value) / (2 * h);
    EXPECT_NEAR(b.d_prediction, dp, kTol * std::max(1.0, std::abs(dp)));
    EXPECT_NEAR(b.d_label, dy, kTol * std::max(1.0, std::abs(dy)));
  }
}

// Gradient of weighted_sum(f(x), w) w.r.t. x compared with central differences.
void check_input_gradient(const std::function<Matrix(const Matrix&)>& forward,
                          const std::function<Matrix(const Matrix&, const Matrix&)>& backward,
                          Matrix x, Rng& rng) {
  Parameter xp("x", std::move(x));
  const Matrix w = random_matrix(forward(xp.value).rows(), forward(xp.value).cols(), rng);
  xp.grad = backward(xp.value, w);
  const auto report = finite_diff_check([&] { return weighted_sum(forward(xp.value), w); }, xp, kTol);
  EXPECT_TRUE(report.passed) << "max rel err " << report.max_relative_error;
  EXPECT_LT(report.max_relative_error, kTol);
}

TEST(GradCheck, Affine) {
  Rng rng(10);
  for (int t = 0; t < kTrials; ++t) {
    Parameter w("w", random_matrix(4, 3, rng));
    Parameter b("b", random_matrix(1, 3, rng));
    const Matrix x = random_matrix(5, 4, rng);
    const Matrix up = random_matrix(5, 3, rng);
    const auto loss = [&] { return weighted_sum(affine_forward(x, w, b), up); };
    check_input_gradient([&](const Matrix& in) { return affine_forward(in, w, b); },
                         [&](const Matrix& in, const Matrix& d) {
                           Parameter w2 = w, b2 = b;
                           return affine_backward(in, d, w2, b2);
                         },
                         x, rng);
    w.zero_grad();
    b.zero_grad();
    affine_backward(x, up, w, b);
    EXPECT_LT(finite_diff_check(loss, w, kTol).max_relative_error, kTol);
    EXPECT_LT(finite_diff_check(loss, b, kTol).max_relative_error, kTol);
  }
}

TEST(GradCheck, Activations) {
  Rng rng(12);
  for (int t = 0; t < kTrials; ++t) {
    Matrix x = random_matrix(3, 4, rng);
    // keep ReLU inputs away from the kink
    for (double& v : x.values()) if (std::abs(v) < 1e-2) v = 0.5;
    check_input_gradient(relu_forward, relu_backward, x, rng);
    check_input_gradient(tanh_forward,
                         [](const Matrix& in, const Matrix& d) {
                           return tanh_backward(tanh_forward(in), d);
                         },
                         x, rng);
    check_input_gradient(sigmoid_forward,
                         [](const Matrix& in, const Matrix& d) {
                           return sigmoid_backward(sigmoid_forward(in), d);
                         },
                         x, rng);
    check_input_gradient(softmax_rows,
                         [](const Matrix& in, const Matrix& d) {
                           return softmax_rows_backward(softmax_rows(in), d);
                         },
                         x, rng);
    const std::vector<std::size_t> blocks{1, 2, 1};
    check_input_gradient([&](const Matrix& in) { return softmax_blocks(in, blocks); },
                         [&](const Matrix& in, const Matrix& d) {
                           return softmax_blocks_backward(softmax_blocks(in, blocks), blocks, d);
                         },
                         x, rng);
  }
}

TEST(GradCheck, DropoutWithFixedMask) {
  Rng rng(13);
  for (int t = 0; t < kTrials; ++t) {
    const Matrix x = random_matrix(4, 5, rng);
    Rng mask_rng(static_cast<std::uint64_t>(t));
    const Matrix mask = dropout_forward(x, 0.3, true, mask_rng).mask;
    check_input_gradient([&](const Matrix& in) { return hadamard(in, mask); },
                         [&](const Matrix&, const Matrix& d) { return dropout_backward(mask, d); },
                         x, rng);
  }
}

TEST(GradCheck, Attention) {
  Rng rng(14);
  for (int t = 0; t < kTrials; ++t) {
    AdditiveAttention att("a", 4, 3, rng);
    const Matrix h = random_matrix(6, 4, rng);
    // overlapping prefix spans, as the session level uses them
    const std::vector<Span> spans{{0, 2}, {0, 4}, {2, 4}, {5, 1}};
    const Matrix up = random_matrix(spans.size(), 4, rng);
    const auto loss = [&] { return weighted_sum(additive_attention_forward(h, spans, att).pooled, up); };

    check_input_gradient(
        [&](const Matrix& in) { return additive_attention_forward(in, spans, att).pooled; },
        [&](const Matrix& in, const Matrix& d) {
          AdditiveAttention copy = att;
          return additive_attention_backward(in, spans, additive_attention_forward(in, spans, att).tape,
                                             d, copy);
        },
        h, rng);

    for (Parameter* p : {&att.projection, &att.bias, &att.context}) p->zero_grad();
    const AttentionOutput out = additive_attention_forward(h, spans, att);
    additive_attention_backward(h, spans, out.tape, up, att);
    for (Parameter* p : {&att.projection, &att.bias, &att.context}) {
      const auto report = finite_diff_check(loss, *p, kTol);
      EXPECT_LT(report.max_relative_error, kTol) << p->name;
    }
  }
}

TEST(GradCheck, ConstantLossHasZeroGradients) {
  Parameter p("p", Matrix{{1.0, -2.0, 3.0}});
  const auto report = finite_diff_check([] { return 4.2; }, p, kTol);
  EXPECT_TRUE(report.passed);
  EXPECT_EQ(report.max_absolute_error, 0.0);
  EXPECT_EQ(p.value, (Matrix{{1.0, -2.0, 3.0}}));
}

TEST(GradCheck, DetectsWrongGradient) {
  Parameter p("p", Matrix{{1.0, 2.0}});
  p.grad = Matrix{{2.0, 0.0}};  // true gradient of x0² + x1² is (2, 4)
  const auto report = finite_diff_check([&] { return p.value[0] * p.value[0] + p.value[1] * p.value[1]; },
                                        p, kTol);
  EXPECT_FALSE(report.passed);
}

TEST(MatrixOps, ProductsAgreeWithLoops) {
  Rng rng(15);
  const Matrix a = random_matrix(3, 4, rng), b = random_matrix(4, 2, rng), c = random_matrix(3, 2, rng);
  const Matrix ab = matmul(a, b), atc = matmul_tn(a, c), cbt = matmul_nt(c, b);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 4; ++k) s += a(i, k) * b(k, j);
      EXPECT_NEAR(ab(i, j), s, 1e-12);
    }
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 3; ++k) s += a(k, i) * c(k, j);
      EXPECT_NEAR(atc(i, j), s, 1e-12);
    }
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 2; ++k) s += c(i, k) * b(j, k);
      EXPECT_NEAR(cbt(i, j), s, 1e-12);
    }
  EXPECT_THROW(matmul(a, a), std::invalid_argument);
}

}  // namespace
}  // namespace reachseg
