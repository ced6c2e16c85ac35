#include <gtest/gtest.h>

#include <cmath>

#include "kpat/grad_check.hpp"
#include "kpat/graph.hpp"
#include "test_util.hpp"

namespace kpat::nn {
namespace {

using kpat::testing::random_matrix;

// Independent attention oracle: explicit loops, one head at a time.
RowMatrix<double> naive_attention(const Tensor<double>& q, const Tensor<double>& k, const Tensor<double>& v,
                                  std::size_t heads, bool causal, double temperature) {
  const std::size_t d = q.cols(), dh = d / heads;
  RowMatrix<double> out = RowMatrix<double>::Zero(q.rows(), d);
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < q.rows(); ++i) {
      const std::size_t visible = causal ? std::min(k.rows(), i + 1) : k.rows();
      std::vector<double> s(visible);
      double mx = -1e300;
      for (std::size_t j = 0; j < visible; ++j) {
        double dot = 0;
        for (std::size_t c = 0; c < dh; ++c) dot += q(i, h * dh + c) * k(j, h * dh + c);
        s[j] = dot / (temperature * std::sqrt(double(dh)));
        mx = std::max(mx, s[j]);
      }
      double z = 0;
      for (auto& x : s) z += (x = std::exp(x - mx));
      for (std::size_t j = 0; j < visible; ++j) {
        for (std::size_t c = 0; c < dh; ++c) out(i, h * dh + c) += s[j] / z * v(j, h * dh + c);
      }
    }
  }
  return out;
}

TEST(Graph, MatmulMatchesTripleLoop) {
  Rng rng(1);
  auto a = random_matrix<double>(3, 5, rng), b = random_matrix<double>(5, 4, rng);
  Graph<double> g(false);
  const auto c = g.value(g.matmul(g.input(a), g.input(b)));
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < 5; ++k) s += a(i, k) * b(k, j);
      EXPECT_NEAR(c(i, j), s, 1e-12);
    }
  }
}

TEST(Graph, MatmulShapeMismatchIsShapeError) {
  Graph<double> g(false);
  Rng rng(2);
  auto a = g.input(random_matrix<double>(3, 5, rng));
  auto b = g.input(random_matrix<double>(4, 2, rng));
  EXPECT_KPAT_ERROR(g.matmul(a, b), ErrorKind::kShape);
}

TEST(Graph, SoftmaxRowsSumToOneAndIgnoreShift) {
  Rng rng(3);
  auto x = random_matrix<double>(4, 7, rng, 5.0);
  auto shifted = x;
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t c = 0; c < 7; ++c) shifted(r, c) += double(r) * 10.0 - 3.0;
  }
  Graph<double> g(false);
  const auto p = g.value(g.softmax_rows(g.input(x)));
  const auto q = g.value(g.softmax_rows(g.input(shifted)));
  for (std::size_t r = 0; r < 4; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < 7; ++c) {
      s += p(r, c);
      EXPECT_NEAR(p(r, c), q(r, c), 1e-12);
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Graph, LayerNormStandardizesRows) {
  Rng rng(4);
  auto x = random_matrix<double>(5, 16, rng, 3.0);
  Tensor<double> gain({16}), bias({16});
  gain.fill(1.0);
  Graph<double> g(false);
  const auto y = g.value(g.layer_norm(g.input(x), g.input(gain), g.input(bias), 0.0));
  for (std::size_t r = 0; r < 5; ++r) {
    double mean = 0, var = 0;
    for (std::size_t c = 0; c < 16; ++c) mean += y(r, c) / 16;
    for (std::size_t c = 0; c < 16; ++c) var += (y(r, c) - mean) * (y(r, c) - mean) / 16;
    EXPECT_NEAR(mean, 0.0, 1e-12);
    EXPECT_NEAR(var, 1.0, 1e-9);
  }
}

TEST(Graph, GeluMatchesErfForm) {
  Tensor<double> x({1, 5}, {-3.0, -0.5, 0.0, 0.7, 2.5});
  Graph<double> g(false);
  const auto y = g.value(g.gelu(g.input(x)));
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(y[i], 0.5 * x[i] * (1 + std::erf(x[i] / std::sqrt(2.0))), 1e-14);
}

class AttentionOracle : public ::testing::TestWithParam<std::tuple<std::size_t, bool, double>> {};

TEST_P(AttentionOracle, MatchesNaiveLoops) {
  const auto [heads, causal, temperature] = GetParam();
  Rng rng(5 + heads);
  auto q = random_matrix<double>(6, 8, rng), k = random_matrix<double>(6, 8, rng), v = random_matrix<double>(6, 8, rng);
  Graph<double> g(false);
  const auto out = g.value(g.attention(g.input(q), g.input(k), g.input(v), AttentionLayout::single(6, 6, heads, causal), temperature));
  const auto ref = naive_attention(q, k, v, heads, causal, temperature);
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(out(i, c), ref(i, c), 1e-12);
  }
}

INSTANTIATE_TEST_SUITE_P(Heads, AttentionOracle,
                         ::testing::Combine(::testing::Values(1u, 2u, 4u), ::testing::Bool(), ::testing::Values(1.0, 2.0)));

TEST(Graph, PackedAttentionEqualsPerItem) {
  Rng rng(6);
  const std::vector<std::size_t> qlen{3, 1, 4}, klen{2, 5, 4};
  std::size_t qt = 0, kt = 0;
  for (auto n : qlen) qt += n;
  for (auto n : klen) kt += n;
  auto q = random_matrix<double>(qt, 8, rng), k = random_matrix<double>(kt, 8, rng), v = random_matrix<double>(kt, 8, rng);
  AttentionLayout layout{{0}, {0}, 2, false};
  for (std::size_t b = 0; b < 3; ++b) {
    layout.q_offsets.push_back(layout.q_offsets.back() + qlen[b]);
    layout.k_offsets.push_back(layout.k_offsets.back() + klen[b]);
  }
  Graph<double> g(false);
  const auto packed = g.value(g.attention(g.input(q), g.input(k), g.input(v), layout));
  for (std::size_t b = 0; b < 3; ++b) {
    auto slice = [](const Tensor<double>& t, std::size_t r0, std::size_t n) {
      auto s = Tensor<double>::matrix(n, t.cols());
      s.mat() = t.mat().block(r0, 0, n, t.cols());
      return s;
    };
    const auto one = naive_attention(slice(q, layout.q_offsets[b], qlen[b]), slice(k, layout.k_offsets[b], klen[b]),
                                     slice(v, layout.k_offsets[b], klen[b]), 2, false, 1.0);
    for (std::size_t i = 0; i < qlen[b]; ++i) {
      for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(packed(layout.q_offsets[b] + i, c), one(i, c), 1e-12);
    }
  }
}

TEST(Graph, CrossEntropySkipsPadding) {
  Tensor<double> logits({3, 4}, {1, 2, 3, 4, 0, 0, 0, 0, 5, 1, 1, 1});
  Graph<double> g(false);
  // Row 1 targets the pad id and must not count.
  const double got = g.value(g.cross_entropy(g.input(logits), std::vector<int>{3, 0, 1}, 0))[0];
  auto nll = [&](std::size_t r, int t) {
    double z = 0;
    for (std::size_t c = 0; c < 4; ++c) z += std::exp(logits(r, c));
    return std::log(z) - logits(r, t);
  };
  EXPECT_NEAR(got, (nll(0, 3) + nll(2, 1)) / 2, 1e-12);
}

TEST(Graph, CrossEntropyAllPaddingIsError) {
  Tensor<double> logits({2, 3});
  Graph<double> g(false);
  EXPECT_KPAT_ERROR(g.cross_entropy(g.input(logits), std::vector<int>{0, 0}, 0), ErrorKind::kParameter);
}

TEST(Graph, EmbeddingRejectsOutOfRangeIds) {
  Tensor<double> table({4, 2});
  Graph<double> g(false);
  EXPECT_KPAT_ERROR(g.embedding(g.input(table), std::vector<int>{1, 4}), ErrorKind::kParameter);
}

TEST(Graph, DropoutIsIdentityWithoutRng) {
  Rng rng(7);
  auto x = random_matrix<double>(3, 3, rng);
  Graph<double> g(false);
  const auto y = g.value(g.dropout(g.input(x), 0.5));
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(y[i], x[i]);
}

TEST(Graph, SmallMatmulCases) {
  Graph<double> g(false);
  const Tensor<double> m({2, 2}, {1, 2, 3, 4});
  const auto eye = g.value(g.matmul(g.input(Tensor<double>({2, 2}, {1, 0, 0, 1})), g.input(m)));
  EXPECT_EQ(eye.storage(), m.storage());
  const auto col = g.value(g.matmul(g.input(m), g.input(Tensor<double>({2, 1}, {0, 1}))));
  EXPECT_EQ(col.to_vector(), (std::vector<double>{2, 4}));
}

TEST(Graph, IdentityMatmulIsBitwiseExact) {
  Rng rng(12);
  auto a = random_matrix<double>(4, 4, rng), b = random_matrix<double>(4, 3, rng);
  auto eye = Tensor<double>::matrix(4, 4);
  for (std::size_t i = 0; i < 4; ++i) eye(i, i) = 1.0;
  Graph<double> g(false);
  const auto ab = g.value(g.matmul(g.input(a), g.input(b)));
  const auto aib = g.value(g.matmul(g.matmul(g.input(a), g.input(eye)), g.input(b)));
  EXPECT_EQ(ab.storage(), aib.storage());
}

TEST(Graph, SoftmaxKnownValues) {
  Graph<double> g(false);
  const auto u = g.value(g.softmax_rows(g.input(Tensor<double>({1, 3}, {0, 0, 0}))));
  for (double x : u.storage()) EXPECT_NEAR(x, 1.0 / 3.0, 1e-15);
  const auto two = g.value(g.softmax_rows(g.input(Tensor<double>({1, 2}, {std::log(2.0), 0}))));
  EXPECT_NEAR(two[0], 2.0 / 3.0, 1e-15);
  const auto big = g.value(g.softmax_rows(g.input(Tensor<double>({1, 2}, {1000, 0}))));
  EXPECT_NEAR(big[0], 1.0, 1e-15);
  EXPECT_TRUE(std::isfinite(big[1]));
}

TEST(Graph, SoftmaxRowsSumToOneOnRandomMatrices) {
  Rng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    auto x = random_matrix<float>(1 + rng.below(6), 1 + rng.below(30), rng, 50.0);
    Graph<float> g(false);
    const auto p = g.value(g.softmax_rows(g.input(x)));
    for (std::size_t r = 0; r < p.rows(); ++r) EXPECT_NEAR(p.mat().row(r).sum(), 1.0f, 1e-6f);
  }
}

TEST(Graph, AttentionEdgeCases) {
  Rng rng(14);
  auto q = random_matrix<double>(3, 4, rng), k = random_matrix<double>(1, 4, rng), v = random_matrix<double>(1, 4, rng);
  Graph<double> g(false);
  const auto one = g.value(g.attention(g.input(q), g.input(k), g.input(v), AttentionLayout::single(3, 1)));
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(one(i, c), v(0, c), 1e-15);
  }
  auto k3 = random_matrix<double>(3, 4, rng), v3 = random_matrix<double>(3, 4, rng);
  const auto causal = g.value(g.attention(g.input(q), g.input(k3), g.input(v3), AttentionLayout::single(3, 3, 1, true)));
  for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(causal(0, c), v3(0, c), 1e-15);
}

TEST(Graph, LayerNormKnownRows) {
  Tensor<double> gain({3}), bias({3});
  gain.fill(1.0);
  Graph<double> g(false);
  const auto flat = g.value(g.layer_norm(g.input(Tensor<double>({1, 3}, {2, 2, 2})), g.input(gain), g.input(bias)));
  for (double x : flat.storage()) EXPECT_EQ(x, 0.0);
  Tensor<double> gain2({2}), bias2({2});
  gain2.fill(1.0);
  const auto pm = g.value(g.layer_norm(g.input(Tensor<double>({1, 2}, {1, -1})), g.input(gain2), g.input(bias2)));
  EXPECT_NEAR(pm[0], 1.0, 1e-4);
  EXPECT_NEAR(pm[1], -1.0, 1e-4);
}

TEST(Graph, CrossEntropyKnownValues) {
  Graph<double> g(false);
  const double uniform = g.value(g.cross_entropy(g.input(Tensor<double>({1, 10})), std::vector<int>{4}, -1))[0];
  EXPECT_NEAR(uniform, std::log(10.0), 1e-12);
  Tensor<double> peaked({1, 10});
  peaked(0, 7) = 1000.0;
  EXPECT_NEAR(g.value(g.cross_entropy(g.input(peaked), std::vector<int>{7}, -1))[0], 0.0, 1e-12);
}

TEST(Graph, CrossEntropyMatchesReferenceOnRandomLogits) {
  Rng rng(15);
  auto logits = random_matrix<double>(4, 10, rng, 3.0);
  const std::vector<int> targets{9, 0, 4, 4};
  double expected = 0;
  for (std::size_t r = 0; r < 4; ++r) {
    double z = 0;
    for (std::size_t c = 0; c < 10; ++c) z += std::exp(logits(r, c));
    expected += (std::log(z) - logits(r, targets[r])) / 4;
  }
  Graph<double> g(false);
  EXPECT_NEAR(g.value(g.cross_entropy(g.input(logits), targets, -1))[0], expected, 1e-12);
}

TEST(Graph, SumOfSquaresGradientIsTwoX) {
  Rng rng(16);
  Parameter<double> x{"x", random_matrix<double>(3, 5, rng), {}};
  x.zero_grad();
  Graph<double> g;
  g.backward(g.sum_squares(g.param(x)));
  for (std::size_t i = 0; i < x.value.size(); ++i) EXPECT_NEAR(x.grad[i], 2 * x.value[i], 1e-15);
  auto r = grad_check([&](Graph<double>& gg) { return gg.sum_squares(gg.param(x)); }, {&x}, {1e-5, 64, 0});
  EXPECT_LT(r.max_relative_error, 1e-7);
}

TEST(Graph, ForwardIsBitIdenticalAcrossRuns) {
  auto run = [] {
    Rng rng(17);
    auto q = random_matrix<float>(5, 8, rng), w = random_matrix<float>(8, 8, rng);
    Graph<float> g(false);
    Var h = g.gelu(g.matmul(g.input(q), g.input(w)));
    return g.value(g.attention(h, h, h, AttentionLayout::single(5, 5, 2, true))).storage();
  };
  EXPECT_EQ(run(), run());
}

// Finite-difference checks for every differentiable op, composed into a scalar.
struct OpCase {
  const char* name;
  std::function<Var(Graph<double>&, Var, Var)> build;  // (a 4x6, b 6x6) -> any tensor
};

class OpGradient : public ::testing::TestWithParam<OpCase> {};

TEST_P(OpGradient, MatchesFiniteDifferences) {
  Rng rng(11);
  Parameter<double> a{"a", random_matrix<double>(4, 6, rng), {}};
  Parameter<double> b{"b", random_matrix<double>(6, 6, rng), {}};
  auto r = grad_check(
      [&](Graph<double>& g) {
        Var out = GetParam().build(g, g.param(a), g.param(b));
        Rng wr(99);
        const auto v = g.value(out);
        auto w = random_matrix<double>(v.cols(), 1, wr);
        return g.add(g.sum(g.matmul(out, g.input(w))), g.scale(g.sum_squares(out), 0.1));
      },
      {&a, &b}, {1e-5, 64, 3});
  EXPECT_LT(r.max_relative_error, 1e-6) << GetParam().name << " worst " << r.worst_parameter << "[" << r.worst_index << "]";
}

INSTANTIATE_TEST_SUITE_P(
    Ops, OpGradient,
    ::testing::Values(
        OpCase{"matmul", [](Graph<double>& g, Var a, Var b) { return g.matmul(a, b); }},
        OpCase{"add", [](Graph<double>& g, Var a, Var) { return g.add(a, g.scale(a, 2.0)); }},
        OpCase{"add_row", [](Graph<double>& g, Var a, Var b) { return g.add_row(a, g.select_rows(b, std::vector<std::size_t>{2})); }},
        OpCase{"gelu", [](Graph<double>& g, Var a, Var) { return g.gelu(a); }},
        OpCase{"layer_norm",
               [](Graph<double>& g, Var a, Var b) {
                 return g.layer_norm(a, g.select_rows(b, std::vector<std::size_t>{0}), g.select_rows(b, std::vector<std::size_t>{1}));
               }},
        OpCase{"softmax_rows", [](Graph<double>& g, Var a, Var) { return g.softmax_rows(a); }},
        OpCase{"attention",
               [](Graph<double>& g, Var a, Var b) {
                 Var kv = g.matmul(a, b);
                 return g.attention(a, kv, g.gelu(kv), AttentionLayout{{0, 1, 4}, {0, 2, 4}, 2, false}, 1.5);
               }},
        OpCase{"causal_attention",
               [](Graph<double>& g, Var a, Var b) {
                 Var kv = g.matmul(a, b);
                 return g.attention(kv, a, kv, AttentionLayout::single(4, 4, 3, true));
               }},
        OpCase{"embedding", [](Graph<double>& g, Var, Var b) { return g.embedding(b, std::vector<int>{5, 0, 5, 2}); }},
        OpCase{"select_rows", [](Graph<double>& g, Var a, Var) { return g.select_rows(a, std::vector<std::size_t>{3, 3, 0}); }},
        OpCase{"cross_entropy",
               [](Graph<double>& g, Var a, Var b) {
                 Var l = g.cross_entropy(g.matmul(a, b), std::vector<int>{1, 0, 5, 3}, 0, 0.1);
                 return g.matmul(l, g.select_rows(b, std::vector<std::size_t>{0}));
               }}),
    [](const auto& info) { return std::string(info.param.name); });

TEST(Graph, GradientsAccumulateAcrossUses) {
  // d/da sum(a + a) = 2 everywhere.
  Parameter<double> a{"a", Tensor<double>({2, 2}, {1, 2, 3, 4}), {}};
  a.zero_grad();
  Graph<double> g;
  Var va = g.param(a);
  g.backward(g.sum(g.add(va, va)));
  for (double x : a.grad.storage()) EXPECT_DOUBLE_EQ(x, 2.0);
}

}  // namespace
}  // namespace kpat::nn
