#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include "kpat/error_sim.hpp"
#include "kpat/eval.hpp"
#include "test_util.hpp"

namespace kpat::eval {
namespace {

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

TEST(Wer, DefinitionExamples) {
  EXPECT_EQ(wer(split("a b c"), split("a b c")), 0.0);
  EXPECT_DOUBLE_EQ(wer(split("a b c"), split("a x c")), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(wer(split("a b c"), {}), 1.0);
  EXPECT_DOUBLE_EQ(wer(split("a b"), split("a b c d")), 1.0);
  EXPECT_KPAT_ERROR(wer({}, split("a")), ErrorKind::kParameter);
}

// Plain dynamic programme, kept separate from the library's implementation.
std::size_t reference_edits(const std::vector<std::string>& r, const std::vector<std::string>& h) {
  std::vector<std::vector<std::size_t>> d(r.size() + 1, std::vector<std::size_t>(h.size() + 1));
  for (std::size_t i = 0; i <= r.size(); ++i) d[i][0] = i;
  for (std::size_t j = 0; j <= h.size(); ++j) d[0][j] = j;
  for (std::size_t i = 1; i <= r.size(); ++i)
    for (std::size_t j = 1; j <= h.size(); ++j)
      d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + (r[i - 1] != h[j - 1])});
  return d[r.size()][h.size()];
}

std::vector<std::string> random_words(Rng& rng, std::size_t max_len) {
  static const char* vocab[] = {"a", "b", "c", "d", "e"};
  std::vector<std::string> out(rng.below(max_len + 1));
  for (auto& w : out) w = vocab[rng.below(5)];
  return out;
}

TEST(Wer, EditsMatchReferenceDp) {
  Rng rng(1);
  for (int trial = 0; trial < 300; ++trial) {
    const auto r = random_words(rng, 9), h = random_words(rng, 9);
    EXPECT_EQ(word_edits(r, h), reference_edits(r, h));
    EXPECT_EQ(word_edits(r, h), word_edits(h, r));
  }
}

TEST(Wer, SharedSuffixAddsNoEdits) {
  Rng rng(2);
  for (int trial = 0; trial < 300; ++trial) {
    auto r = random_words(rng, 8), h = random_words(rng, 8);
    const auto before = word_edits(r, h);
    const auto suffix = random_words(rng, 4);
    r.insert(r.end(), suffix.begin(), suffix.end());
    h.insert(h.end(), suffix.begin(), suffix.end());
    EXPECT_LE(word_edits(r, h), before);
  }
}

// One hand-scored row: expected edits, slot words, slot hits and verbatim flag.
struct Fixture {
  const char* phrase;
  const char* entity;
  const char* hyp;
  std::size_t edits, slot_words, hits;
  bool exact;
};

const Fixture kFixtures[] = {
    {"my name is {entity}", "janie burdick", "my name is janie burdick", 0, 2, 2, true},
    {"my name is {entity}", "janie burdick", "my name is jamie burdick", 1, 2, 1, false},
    {"my name is {entity}", "janie burdick", "my name is", 2, 2, 0, false},
    {"my name is {entity}", "janie burdick", "name is janie burdick", 1, 2, 2, true},
    {"my name is {entity}", "janie burdick", "my name is burdick janie", 2, 2, 2, false},
    {"my name is {entity}", "janie burdick", "my name is janie the burdick", 1, 2, 2, true},
    {"fly to {entity}", "bedford airport", "fly to bedford airport", 0, 2, 2, true},
    {"fly to {entity}", "bedford airport", "fly to bedford airport airport", 1, 2, 2, true},
    {"fly to {entity}", "bedford airport", "fly to bedford report", 1, 2, 1, false},
    {"fly to {entity}", "bedford airport", "airport bedford", 3, 2, 2, false},
    {"i stay in {entity}", "rhode island", "i stay in road island", 1, 2, 1, false},
    {"i live on {entity}", "maple street", "i live on maple street", 0, 2, 2, true},
    {"i live on {entity}", "maple street", "", 5, 2, 0, false},
    {"visit {entity}", "the hague", "visit hague", 1, 1, 1, true},
    {"call {entity}", "bedford bedford", "call bedford", 1, 2, 1, false},
    {"my name is {entity}", "janie burdick", "janie my name is burdick", 2, 2, 2, false},
    {"{entity} please", "gate road", "gate road please", 0, 2, 2, true},
    {"{entity} please", "gate road", "gate rode please", 1, 2, 1, false},
    {"take me to {entity} now", "oak lane", "take me to oak lane", 1, 2, 2, true},
    {"take me to {entity} now", "oak lane", "take me to oak lane lane now", 1, 2, 2, true},
};

data::Utterance utterance(const Fixture& f) { return sim::fill_template(f.phrase, f.entity, "test"); }

TEST(SlotMetrics, HandScoredFixtures) {
  for (const auto& f : kFixtures) {
    SCOPED_TRACE(f.hyp);
    const auto m = score(utterance(f), f.hyp);
    EXPECT_EQ(m.edits, f.edits);
    EXPECT_EQ(m.ref_words, split(utterance(f).ref).size());
    EXPECT_EQ(m.slot_words, f.slot_words);
    EXPECT_EQ(m.slot_word_hits, f.hits);
    EXPECT_EQ(m.exact_utterances, f.exact ? 1u : 0u);
    EXPECT_EQ(m.slot_utterances, 1u);
  }
}

TEST(SlotMetrics, BatchTotalsAreCorpusRatios) {
  std::vector<data::Utterance> refs;
  std::vector<std::string> hyps;
  std::size_t edits = 0, words = 0, slot_words = 0, hits = 0, exact = 0;
  for (const auto& f : kFixtures) {
    refs.push_back(utterance(f));
    hyps.push_back(f.hyp);
    edits += f.edits;
    words += split(refs.back().ref).size();
    slot_words += f.slot_words;
    hits += f.hits;
    exact += f.exact;
  }
  const auto r = evaluate(refs, hyps);
  EXPECT_DOUBLE_EQ(r.overall.wer(), double(edits) / double(words));
  EXPECT_DOUBLE_EQ(r.overall.recall(), double(hits) / double(slot_words));
  EXPECT_DOUBLE_EQ(r.overall.accuracy(), double(exact) / 20.0);
  ASSERT_EQ(r.per_domain.count("test"), 1u);
  EXPECT_EQ(r.per_domain.at("test").edits, edits);
}

TEST(SlotMetrics, TwoSlotsShareOneHypothesisMultiset) {
  data::Utterance u;
  u.ref = "from bedford airport to salem airport";
  u.slots = {{5, 20, "airports"}, {24, 37, "airports"}};
  ASSERT_EQ(u.slot_text(0), "bedford airport");
  ASSERT_EQ(u.slot_text(1), "salem airport");
  const auto m = score(u, "from bedford airport to salem report");
  EXPECT_EQ(m.slot_words, 4u);
  EXPECT_EQ(m.slot_word_hits, 3u);
  EXPECT_EQ(m.exact_utterances, 0u);
  EXPECT_EQ(m.edits, 1u);
}

TEST(SlotMetrics, IdentityAndAccuracyImpliesRecall) {
  for (const auto& f : kFixtures) {
    const auto u = utterance(f);
    const auto self = score(u, u.ref);
    EXPECT_EQ(self.edits, 0u);
    EXPECT_EQ(self.slot_word_hits, self.slot_words);
    EXPECT_EQ(self.exact_utterances, 1u);
    const auto m = score(u, f.hyp);
    if (m.exact_utterances == 1) EXPECT_EQ(m.slot_word_hits, m.slot_words);
  }
}

TEST(SlotMetrics, StopWordsAreBundled) {
  EXPECT_GE(stop_words().size(), 100u);
  EXPECT_LE(stop_words().size(), 140u);
  EXPECT_TRUE(is_stop_word("the"));
  EXPECT_FALSE(is_stop_word("airport"));
  EXPECT_EQ(content_words("fly to the bedford airport"), (std::vector<std::string>{"fly", "bedford", "airport"}));
  EXPECT_FALSE(stop_words_version().empty());
}

TEST(Evaluate, RejectsCountMismatch) {
  const std::vector<data::Utterance> refs{utterance(kFixtures[0])};
  const std::vector<std::string> two{"a", "b"};
  EXPECT_KPAT_ERROR(evaluate(refs, two), ErrorKind::kDataMismatch);
}

TEST(Compare, RelativeReductionMatchesPublishedRows) {
  EXPECT_NEAR(werr(10.7, 9.9), 7.5, 0.1);   // combined row
  EXPECT_NEAR(werr(34.7, 31.3), 9.8, 0.1);  // OOV row
  EXPECT_EQ(werr(5.0, 5.0), 0.0);
  EXPECT_LT(werr(5.0, 6.0), 0.0);
  EXPECT_KPAT_ERROR(werr(0.0, 1.0), ErrorKind::kParameter);
}

TEST(Compare, ReportsOnTheSameTestSet) {
  std::vector<data::Utterance> refs;
  std::vector<std::string> base, cand;
  for (const auto& f : kFixtures) {
    refs.push_back(utterance(f));
    base.push_back(f.hyp);
    cand.push_back(refs.back().ref);
  }
  const auto rb = evaluate(refs, base), rc = evaluate(refs, cand);
  const auto c = compare_report(rb, rc);
  EXPECT_DOUBLE_EQ(c.werr, 100.0);
  EXPECT_DOUBLE_EQ(c.delta_wer, -rb.overall.wer());
  EXPECT_DOUBLE_EQ(c.delta_accuracy, 1.0 - rb.overall.accuracy());
  EXPECT_EQ(compare_report(rb, rb).werr, 0.0);
  const auto other = evaluate(std::span<const data::Utterance>(refs).first(19), std::span<const std::string>(base).first(19));
  EXPECT_KPAT_ERROR(compare_report(rb, other), ErrorKind::kDataMismatch);
  auto shifted = refs;
  shifted[0] = utterance(kFixtures[7]);
  EXPECT_KPAT_ERROR(compare_report(rb, evaluate(shifted, base)), ErrorKind::kDataMismatch);
}

TEST(Bins, BoundariesAreDisjointAndOrdered) {
  EXPECT_EQ(bin_of(0), 0u);
  EXPECT_EQ(bin_of(1), 1u);
  EXPECT_EQ(bin_of(10), 1u);
  EXPECT_EQ(bin_of(11), 2u);
  EXPECT_EQ(bin_of(50), 2u);
  EXPECT_EQ(bin_of(51), 3u);
  EXPECT_EQ(bin_of(200), 3u);
  EXPECT_EQ(bin_of(201), 4u);
  EXPECT_EQ(bin_of(1000000), 4u);
  const auto& bins = frequency_bins();
  for (std::size_t i = 1; i < bins.size(); ++i) EXPECT_EQ(bins[i].lo, bins[i - 1].hi + 1);
}

std::vector<data::Utterance> with_entity(const char* entity, std::size_t n) {
  return std::vector<data::Utterance>(n, sim::fill_template("fly to {entity}", entity, "airports"));
}

TEST(Bins, SlotsLandByTrainingFrequency) {
  std::vector<data::Utterance> train;
  for (auto [e, n] : {std::pair{"bedford airport", 3}, {"salem airport", 11}, {"dover airport", 300}}) {
    const auto v = with_entity(e, std::size_t(n));
    train.insert(train.end(), v.begin(), v.end());
  }
  const auto freq = slot_frequencies(train);
  EXPECT_EQ(freq.at("bedford airport"), 3u);
  const std::vector<data::Utterance> test{with_entity("bedford airport", 1)[0], with_entity("salem airport", 1)[0],
                                          with_entity("dover airport", 1)[0], with_entity("mystic airport", 1)[0]};
  const std::vector<std::string> pat{"fly to bedford report", "fly to salem airport", "fly to dover airport", "fly to"};
  const std::vector<std::string> kpat{"fly to bedford airport", "fly to salem airport", "fly to dover airport",
                                      "fly to mystic airport"};
  const auto rows = binned_report(freq, test, pat, kpat);
  ASSERT_EQ(rows.size(), 5u);
  std::size_t total = 0;
  for (const auto& r : rows) total += r.slots;
  EXPECT_EQ(total, test.size());
  EXPECT_EQ(rows[0].slots, 1u);
  EXPECT_EQ(rows[1].slots, 1u);
  EXPECT_EQ(rows[2].slots, 1u);
  EXPECT_EQ(rows[3].slots, 0u);
  EXPECT_EQ(rows[4].slots, 1u);
  EXPECT_EQ(rows[1].pat.accuracy(), 0.0);
  EXPECT_EQ(rows[1].kpat.accuracy(), 1.0);
  EXPECT_DOUBLE_EQ(rows[1].pat.wer(), 0.25);
  EXPECT_DOUBLE_EQ(rows[0].pat.wer(), 0.5);

  const auto tsv = bins_to_tsv(rows);
  EXPECT_EQ(tsv.substr(0, tsv.find('\n')), "bin\twer_pat\twer_kpat\tacc_pat\tacc_kpat");
  EXPECT_EQ(std::count(tsv.begin(), tsv.end(), '\n'), 6);
  EXPECT_EQ(bins_to_json(rows).size(), 5u);
}

TEST(Bins, UnseenSlotsAllFallInTheOovBin) {
  const auto test = with_entity("mystic airport", 4);
  const std::vector<std::string> hyps(4, "fly to mystic airport");
  const auto rows = binned_report({}, test, hyps, hyps);
  EXPECT_EQ(rows[0].slots, 4u);
  for (std::size_t b = 1; b < rows.size(); ++b) EXPECT_EQ(rows[b].slots, 0u);
  EXPECT_KPAT_ERROR(binned_report({}, test, std::span<const std::string>(hyps).first(3), hyps), ErrorKind::kDataMismatch);
}

}  // namespace
}  // namespace kpat::eval
