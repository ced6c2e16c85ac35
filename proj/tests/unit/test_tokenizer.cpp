#include <gtest/gtest.h>

#include <map>

#include "kpat/tokenizer.hpp"
#include "test_util.hpp"

namespace kpat::text {
namespace {

// Independent BPE reference: string symbols, ordered-map pair counts, the
// same tie rule (smallest merged string, then smallest left part).
std::vector<Vocabulary::Merge> reference_merges(const std::vector<std::string>& corpus, std::size_t n_merges) {
  std::map<std::string, std::size_t> counts;
  for (const auto& line : corpus) {
    for (const auto& w : split_words(normalize(line))) ++counts[w];
  }
  std::vector<std::pair<std::vector<std::string>, std::size_t>> words;
  for (const auto& [w, c] : counts) {
    std::vector<std::string> parts{std::string(kWordMarker)};
    for (const auto& s : utf8_symbols(w)) parts.push_back(s);
    words.emplace_back(parts, c);
  }
  std::vector<Vocabulary::Merge> merges;
  while (merges.size() < n_merges) {
    std::map<std::pair<std::string, std::string>, std::size_t> pairs;
    for (const auto& [parts, c] : words) {
      for (std::size_t i = 0; i + 1 < parts.size(); ++i) pairs[{parts[i], parts[i + 1]}] += c;
    }
    if (pairs.empty()) break;
    auto best = pairs.begin();
    for (auto it = pairs.begin(); it != pairs.end(); ++it) {
      const auto merged = it->first.first + it->first.second;
      const auto best_merged = best->first.first + best->first.second;
      if (it->second > best->second ||
          (it->second == best->second && (merged < best_merged || (merged == best_merged && it->first.first < best->first.first)))) {
        best = it;
      }
    }
    const auto [a, b] = best->first;
    merges.emplace_back(a, b);
    for (auto& [parts, c] : words) {
      std::vector<std::string> next;
      for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i + 1 < parts.size() && parts[i] == a && parts[i + 1] == b) {
          next.push_back(a + b);
          ++i;
        } else {
          next.push_back(parts[i]);
        }
      }
      parts = next;
    }
  }
  return merges;
}

std::size_t alphabet_size(const std::vector<std::string>& corpus) {
  std::set<std::string> s{std::string(kWordMarker)};
  for (const auto& line : corpus) {
    for (const auto& sym : utf8_symbols(normalize(line))) {
      if (sym != " ") s.insert(sym);
    }
  }
  return s.size();
}

TEST(Normalize, LowercasesAndCollapsesWhitespace) {
  EXPECT_EQ(normalize("  My  NAME\tis\n Janie "), "my name is janie");
  EXPECT_EQ(normalize(""), "");
}

TEST(Bpe, SingleMergeTakesMostFrequentPair) {
  const std::vector<std::string> corpus{"aaab aaab"};
  auto v = Vocabulary::train(corpus, alphabet_size(corpus) + kNumSpecial + 1);
  ASSERT_EQ(v.merges().size(), 1u);
  EXPECT_EQ(v.merges()[0], (Vocabulary::Merge{"a", "a"}));
}

TEST(Bpe, AlphabetSizedVocabularyHasNoMerges) {
  const std::vector<std::string> corpus{"hello world", "low"};
  auto v = Vocabulary::train(corpus, alphabet_size(corpus) + kNumSpecial);
  EXPECT_TRUE(v.merges().empty());
  EXPECT_EQ(v.size(), alphabet_size(corpus) + kNumSpecial);
}

TEST(Bpe, TooSmallVocabularyIsRejected) {
  EXPECT_KPAT_ERROR(Vocabulary::train({"abc"}, 5), ErrorKind::kParameter);
}

TEST(Bpe, MergesMatchReferenceImplementation) {
  const std::vector<std::string> corpus{"my name is janie burdick", "i stay in bedford", "i'm at bedford airport",
                                        "my name is jane burton",   "take me to burdick street", "the the the"};
  const std::size_t base = alphabet_size(corpus) + kNumSpecial;
  auto v = Vocabulary::train(corpus, base + 25);
  EXPECT_EQ(v.merges(), reference_merges(corpus, 25));
}

TEST(Bpe, RetrainingIsDeterministic) {
  const std::vector<std::string> corpus{"pick me up at loamview lane", "turn left on loamview lane", "i live on ceeston road"};
  auto a = Vocabulary::train(corpus, 60), b = Vocabulary::train(corpus, 60);
  EXPECT_EQ(a.merges(), b.merges());
  EXPECT_EQ(a.to_json(), b.to_json());
  EXPECT_EQ(a.version(), b.version());
}

TEST(Bpe, ExhaustedCorpusWarns) {
  std::vector<std::string> warnings;
  auto v = Vocabulary::train({"ab"}, 100, &warnings);
  EXPECT_LT(v.size(), 100u);
  ASSERT_EQ(warnings.size(), 1u);
}

class Encoding : public ::testing::Test {
 protected:
  void SetUp() override {
    for (const auto& line : corpus_) {
      for (char c : line) {
        if (c != ' ' && letters_.find(c) == std::string::npos) letters_.push_back(c);
      }
    }
    vocab_ = std::make_unique<Vocabulary>(Vocabulary::train(corpus_, 80));
  }
  const std::vector<std::string> corpus_{"my name is janie burdick", "i stay in bedford", "please connect me to janie",
                                         "ship it to bedford texas"};
  std::string letters_;  // training alphabet
  std::unique_ptr<Vocabulary> vocab_;
};

TEST_F(Encoding, RoundTripsTableSentence) {
  const auto ids = vocab_->encode("my name is janie burdick");
  EXPECT_EQ(vocab_->decode(ids), "my name is janie burdick");
}

TEST_F(Encoding, EmptyStringRoundTrips) {
  EXPECT_TRUE(vocab_->encode("").empty());
  EXPECT_EQ(vocab_->decode(std::vector<int>{}), "");
}

TEST_F(Encoding, UnknownGlyphBecomesUnk) {
  const auto ids = vocab_->encode("janie \xC3\xA9");
  EXPECT_NE(std::find(ids.begin(), ids.end(), kUnkId), ids.end());
  EXPECT_NE(vocab_->decode(ids).find(kUnknownGlyph), std::string::npos);
}

TEST_F(Encoding, SpecialIdsAreNeverEmittedAndIdsStayInRange) {
  Rng rng(3);
  const std::string letters = letters_ + "qz ";
  for (int trial = 0; trial < 200; ++trial) {
    std::string s;
    const auto n = 1 + rng.below(30);
    for (std::size_t i = 0; i < n; ++i) s.push_back(letters[rng.below(letters.size())]);
    const auto ids = vocab_->encode(s);
    for (int id : ids) {
      EXPECT_GE(id, kUnkId);
      EXPECT_LT(static_cast<std::size_t>(id), vocab_->size());
    }
  }
}

TEST_F(Encoding, RoundTripPropertyOnNormalizedText) {
  Rng rng(4);
  // Only symbols from the training alphabet, so nothing maps to UNK.
  const std::string& letters = letters_;
  for (int trial = 0; trial < 300; ++trial) {
    std::string s;
    const auto words = 1 + rng.below(6);
    for (std::size_t w = 0; w < words; ++w) {
      if (w) s.push_back(' ');
      const auto len = 1 + rng.below(8);
      for (std::size_t i = 0; i < len; ++i) s.push_back(letters[rng.below(letters.size())]);
    }
    EXPECT_EQ(vocab_->decode(vocab_->encode(s)), normalize(s)) << s;
  }
}

TEST_F(Encoding, EncodingIsDeterministic) {
  EXPECT_EQ(vocab_->encode("ship it to bedford"), vocab_->encode("ship it to bedford"));
}

TEST_F(Encoding, JsonRoundTripPreservesIds) {
  const auto copy = Vocabulary::from_json(vocab_->to_json());
  EXPECT_EQ(copy.size(), vocab_->size());
  EXPECT_EQ(copy.version(), vocab_->version());
  EXPECT_EQ(copy.encode("please connect me to janie"), vocab_->encode("please connect me to janie"));
}

TEST_F(Encoding, MergePartsAreTokens) {
  for (const auto& [a, b] : vocab_->merges()) {
    EXPECT_GE(vocab_->find(a), kNumSpecial);
    EXPECT_GE(vocab_->find(b), kNumSpecial);
    EXPECT_GE(vocab_->find(a + b), kNumSpecial);
  }
}

TEST(VocabularyFile, MalformedJsonIsFormatError) {
  EXPECT_KPAT_ERROR(Vocabulary::from_json("{\"tokens\": 3"), ErrorKind::kFormat);
}

}  // namespace
}  // namespace kpat::text
