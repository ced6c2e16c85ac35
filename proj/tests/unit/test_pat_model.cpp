#include <gtest/gtest.h>

#include <cmath>

#include <nlohmann/json.hpp>

#include "kpat/grad_check.hpp"
#include "kpat/lexicon.hpp"
#include "kpat/pat_model.hpp"
#include "kpat/tokenizer.hpp"
#include "kpat/trainer.hpp"
#include "model_fixture.hpp"
#include "test_util.hpp"

namespace kpat::model {
namespace {

using kpat::testing::TempDir;

PatConfig tiny() { return kpat::testing::tiny_config(); }

using kpat::testing::random_example;

template <typename T>
double item_loss(const PatModel<T>& m, const Example& ex) {
  const Example* p = &ex;
  const auto batch = make_batch(std::span<const Example* const>(&p, 1), m.config().max_len);
  nn::Graph<T> g(false);
  return double(g.value(m.loss(g, batch))[0]);
}

TEST(PatConfig, Presets) {
  const auto paper = PatConfig::paper();
  EXPECT_EQ(paper.n_enc_layers, 4u);
  EXPECT_EQ(paper.n_dec_layers, 4u);
  EXPECT_EQ(paper.d_model, 128u);
  EXPECT_EQ(paper.n_heads, 8u);
  EXPECT_EQ(paper.d_ff, 512u);
  EXPECT_EQ(paper.text_vocab, 32000u);
  const auto desk = PatConfig::desk();
  EXPECT_EQ(desk.d_model, 64u);
  EXPECT_EQ(desk.n_heads, 4u);
  EXPECT_EQ(desk.d_ff, 256u);
  EXPECT_EQ(desk.text_vocab, 1000u);
}

TEST(PatConfig, RejectsBadShapes) {
  auto c = tiny();
  c.n_heads = 3;
  EXPECT_KPAT_ERROR(c.validate(), ErrorKind::kConfig);
  c = tiny();
  c.dropout_rate = 1.0;
  EXPECT_KPAT_ERROR(c.validate(), ErrorKind::kConfig);
  c = tiny();
  c.text_vocab = 2;
  EXPECT_KPAT_ERROR(c.validate(), ErrorKind::kConfig);
}

TEST(PatConfig, JsonRoundTrip) {
  const auto c = PatConfig::paper();
  EXPECT_EQ(PatConfig::from_json(c.to_json()).to_json(), c.to_json());
}

TEST(MakeBatch, WrapsAndShiftsSequences) {
  Example ex;
  ex.asr_tokens = {7, 8};
  ex.phones = {10, 11, 12};
  ex.target = {5, 6};
  const Example* p = &ex;
  const auto b = make_batch(std::span<const Example* const>(&p, 1), 32);
  EXPECT_EQ(b.text.ids, (std::vector<int>{text::kBosId, 7, 8, text::kEosId}));
  EXPECT_EQ(b.phones.ids, (std::vector<int>{text::kBosId, 10, 11, 12, text::kEosId}));
  EXPECT_EQ(b.decoder_in.ids, (std::vector<int>{text::kBosId, 5, 6}));
  EXPECT_EQ(b.targets, (std::vector<int>{5, 6, text::kEosId}));
}

TEST(PatModel, InferenceShapes) {
  PatModel<float> m(tiny(), 1);
  const std::vector<int> asr{5, 6, 7}, phones{9, 10, 11, 12}, prefix{text::kBosId, 5, 6};
  const auto enc = m.encode(asr, phones);
  EXPECT_EQ(enc.text.shape(), (nn::Shape{5, 16}));
  EXPECT_EQ(enc.phones.shape(), (nn::Shape{6, 16}));
  const auto full = m.decode_states(enc, prefix);
  EXPECT_EQ(full.states.shape(), (nn::Shape{3, 16}));
  EXPECT_EQ(full.logits.shape(), (nn::Shape{3, 20}));
  const auto last = m.decode_states(enc, prefix, true);
  EXPECT_EQ(last.logits.shape(), (nn::Shape{1, 20}));
  for (std::size_t v = 0; v < 20; ++v) EXPECT_NEAR(last.logits(0, v), full.logits(2, v), 1e-5);
}

TEST(PatModel, PrefixMustStartWithBos) {
  PatModel<float> m(tiny(), 1);
  const auto enc = m.encode(std::vector<int>{5}, std::vector<int>{9});
  EXPECT_KPAT_ERROR(m.decode_states(enc, std::vector<int>{5}), ErrorKind::kParameter);
  EXPECT_KPAT_ERROR(m.decode_states(enc, std::vector<int>{}), ErrorKind::kParameter);
}

TEST(PatModel, DecoderIsCausal) {
  PatModel<double> m(tiny(), 2);
  const auto enc = m.encode(std::vector<int>{5, 6}, std::vector<int>{9, 10, 11});
  const auto a = m.decode_states(enc, std::vector<int>{text::kBosId, 5, 6, 7}).states;
  const auto b = m.decode_states(enc, std::vector<int>{text::kBosId, 5, 6, 19}).states;
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 16; ++c) EXPECT_NEAR(a(r, c), b(r, c), 1e-12);
  double diff = 0;
  for (std::size_t c = 0; c < 16; ++c) diff += std::abs(a(3, c) - b(3, c));
  EXPECT_GT(diff, 1e-6);
}

TEST(PatModel, IncrementalMatchesFullDecode) {
  PatModel<double> m(tiny(), 3);
  const auto enc = m.encode(std::vector<int>{5, 6, 7}, std::vector<int>{9, 10});
  const std::vector<int> prefix{text::kBosId, 8, 9, 10, 11};
  const auto full = m.decode_states(enc, prefix).states;
  for (std::size_t n = 1; n <= prefix.size(); ++n) {
    const auto part = m.decode_states(enc, std::span<const int>(prefix).first(n)).states;
    for (std::size_t c = 0; c < 16; ++c) EXPECT_NEAR(part(n - 1, c), full(n - 1, c), 1e-12);
  }
}

TEST(PatModel, PackedLossIsTokenWeightedMean) {
  const auto c = tiny();
  PatModel<double> m(c, 4);
  Rng rng(4);
  std::vector<Example> exs;
  for (int i = 0; i < 5; ++i) exs.push_back(random_example(rng, c));
  std::vector<const Example*> ptrs;
  double weighted = 0;
  std::size_t tokens = 0;
  for (const auto& ex : exs) {
    ptrs.push_back(&ex);
    weighted += item_loss(m, ex) * double(ex.target.size() + 1);
    tokens += ex.target.size() + 1;
  }
  const auto batch = make_batch(ptrs, c.max_len);
  nn::Graph<double> g(false);
  EXPECT_NEAR(g.value(m.loss(g, batch))[0], weighted / double(tokens), 1e-10);
}

TEST(PatModel, GradientsMatchFiniteDifferences) {
  const auto c = tiny();
  PatModel<double> m(c, 5);
  Rng rng(5);
  std::vector<Example> exs{random_example(rng, c), random_example(rng, c)};
  std::vector<const Example*> ptrs{&exs[0], &exs[1]};
  const auto batch = make_batch(ptrs, c.max_len);
  const auto r = nn::grad_check([&](nn::Graph<double>& g) { return m.loss(g, batch); }, m.parameters(),
                                {1e-5, 6, 5});
  EXPECT_LT(r.max_relative_error, 1e-5) << r.worst_parameter << "[" << r.worst_index << "]";
  EXPECT_GT(r.coordinates_checked, 100u);
}

TEST(PatModel, SeedDeterminesWeights) {
  PatModel<float> a(tiny(), 7), b(tiny(), 7), c(tiny(), 8);
  EXPECT_EQ(a.checksum(), b.checksum());
  EXPECT_NE(a.checksum(), c.checksum());
}

TEST(PatModel, StateDictRoundTripPreservesOutputs) {
  PatModel<float> a(tiny(), 9), b(tiny(), 10);
  b.load_state_dict(a.state_dict());
  EXPECT_EQ(a.checksum(), b.checksum());
  const auto ea = a.encode(std::vector<int>{5, 6}, std::vector<int>{9});
  const auto eb = b.encode(std::vector<int>{5, 6}, std::vector<int>{9});
  const std::vector<int> prefix{text::kBosId, 7};
  EXPECT_EQ(a.decode_states(ea, prefix).logits.to_vector(), b.decode_states(eb, prefix).logits.to_vector());
}

TEST(PatModel, StateDictRejectsWrongShapes) {
  PatModel<float> a(tiny(), 9);
  auto bigger = tiny();
  bigger.d_model = 32;
  PatModel<float> b(bigger, 9);
  EXPECT_THROW(b.load_state_dict(a.state_dict()), Error);
}

TEST(PatModel, SaveLoadRoundTrip) {
  TempDir dir;
  PatModel<float> a(tiny(), 11);
  const auto path = (dir.path() / "m.patw").string();
  save_model(a, path, {{"note", "x"}});
  nlohmann::json meta;
  const auto b = load_model(path, &meta);
  EXPECT_EQ(a.checksum(), b.checksum());
  EXPECT_EQ(b.config().to_json(), a.config().to_json());
  EXPECT_EQ(meta.at("note"), "x");
}

TEST(Schedule, InverseSquareRootWarmup) {
  TrainConfig c;
  c.warmup_steps = 400;
  c.lr_factor = 2.0;
  const double d = 64;
  auto expected = [&](double s) { return 2.0 / std::sqrt(d) * std::min(1.0 / std::sqrt(s), s * std::pow(400.0, -1.5)); };
  for (std::size_t s : {1u, 10u, 399u, 400u, 401u, 1600u, 10000u}) {
    EXPECT_NEAR(learning_rate(c, 64, s), expected(double(s)), 1e-15);
  }
  EXPECT_GT(learning_rate(c, 64, 400), learning_rate(c, 64, 399));
  EXPECT_GT(learning_rate(c, 64, 400), learning_rate(c, 64, 401));
  EXPECT_NEAR(learning_rate(c, 64, 1600) * 2, learning_rate(c, 64, 400), 1e-15);
}

TEST(Adam, MatchesBiasCorrectedUpdate) {
  nn::Parameter<float> p{"w", nn::Tensor<float>({2}, {1.0f, -2.0f}), {}};
  Adam adam({&p}, 0.9, 0.98, 1e-9);
  std::vector<double> w{1.0, -2.0}, m(2, 0.0), v(2, 0.0);
  const std::vector<std::vector<double>> grads{{0.5, -1.0}, {0.25, 2.0}, {-0.75, 0.1}};
  for (std::size_t t = 1; t <= grads.size(); ++t) {
    p.grad = nn::Tensor<float>({2}, {float(grads[t - 1][0]), float(grads[t - 1][1])});
    adam.step(0.01);
    for (std::size_t i = 0; i < 2; ++i) {
      const double g = grads[t - 1][i];
      m[i] = 0.9 * m[i] + 0.1 * g;
      v[i] = 0.98 * v[i] + 0.02 * g * g;
      const double mhat = m[i] / (1 - std::pow(0.9, double(t)));
      const double vhat = v[i] / (1 - std::pow(0.98, double(t)));
      w[i] -= 0.01 * mhat / (std::sqrt(vhat) + 1e-9);
      EXPECT_NEAR(p.value[i], w[i], 1e-6);
    }
  }
  EXPECT_EQ(adam.steps(), 3u);
}

TEST(Trainer, MemorizesTinySet) {
  auto c = tiny();
  PatModel<float> m(c, 12);
  Rng rng(12);
  std::vector<Example> exs;
  for (int i = 0; i < 6; ++i) exs.push_back(random_example(rng, c));
  TrainConfig tc;
  tc.batch_size = 6;
  tc.warmup_steps = 20;
  tc.lr_factor = 2.0;
  Trainer trainer(m, tc);
  const double before = evaluate_loss(m, exs);
  for (int e = 0; e < 150; ++e) trainer.run_epoch(exs);
  EXPECT_LT(evaluate_loss(m, exs), before * 0.1);
  EXPECT_DOUBLE_EQ(token_accuracy(m, exs), 1.0);
  for (const auto& ex : exs) EXPECT_EQ(greedy_decode(m, ex.asr_tokens, ex.phones, 16), ex.target);
}

TEST(Trainer, SameSeedSameWeights) {
  auto c = tiny();
  c.dropout_rate = 0.1;
  c.clean_swap_prob = 0.3;
  Rng rng(13);
  std::vector<Example> exs;
  for (int i = 0; i < 4; ++i) exs.push_back(random_example(rng, c));
  auto run = [&] {
    PatModel<float> m(c, 13);
    Trainer t(m, TrainConfig{});
    for (int e = 0; e < 3; ++e) t.run_epoch(exs);
    return m.checksum();
  };
  EXPECT_EQ(run(), run());
}

TEST(Decoding, SoftmaxAndArgmax) {
  const std::vector<float> logits{1.0f, 3.0f, 3.0f, -2.0f};
  const auto p = softmax(logits);
  double z = 0;
  for (float l : logits) z += std::exp(double(l));
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(p[i], std::exp(double(logits[i])) / z, 1e-15);
  EXPECT_EQ(argmax(p), 1u);
}

}  // namespace
}  // namespace kpat::model
