#include <gtest/gtest.h>

#include <algorithm>
#include <limits>
#include <map>

#include "kpat/binary_io.hpp"
#include "kpat/lexicon.hpp"
#include "test_util.hpp"

namespace kpat::phon {
namespace {

Pronunciation ph(std::initializer_list<std::string_view> symbols) {
  Pronunciation p;
  for (auto s : symbols) p.push_back(phone_id(s));
  return p;
}

// Plain O(n·m) Levenshtein with the class discount, written independently.
double reference_distance(const std::vector<int>& a, const std::vector<int>& b) {
  std::vector<std::vector<double>> d(a.size() + 1, std::vector<double>(b.size() + 1));
  for (std::size_t i = 0; i <= a.size(); ++i) d[i][0] = double(i);
  for (std::size_t j = 0; j <= b.size(); ++j) d[0][j] = double(j);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      double sub = a[i - 1] == b[j - 1] ? 0.0 : (phone_class(a[i - 1]) == phone_class(b[j - 1]) ? 0.5 : 1.0);
      d[i][j] = std::min({d[i - 1][j - 1] + sub, d[i - 1][j] + 1.0, d[i][j - 1] + 1.0});
    }
  }
  return d[a.size()][b.size()];
}

std::vector<int> random_phones(Rng& rng, std::size_t max_len) {
  static const auto all = all_phones();
  std::vector<int> p(1 + rng.below(max_len));
  for (auto& x : p) x = all[rng.below(all.size())];
  return p;
}

const Lexicon& fixture() {
  static const Lexicon lex = Lexicon::load(KPAT_DATA_DIR "/base_lexicon.txt");
  return lex;
}

TEST(Inventory, HasThirtyNineDenseSymbols) {
  EXPECT_EQ(all_phones().size(), 39u);
  EXPECT_EQ(phone_vocab_size(), 39u + kFirstPhone);
  EXPECT_EQ(phone_id("ZZ"), -1);
  for (int id : all_phones()) EXPECT_EQ(phone_id(phone_symbol(id)), id);
}

TEST(LexiconFile, BedfordEntry) {
  auto lex = Lexicon::parse("BEDFORD  B EH D F ER D\n");
  ASSERT_NE(lex.lookup("bedford"), nullptr);
  EXPECT_EQ(lex.lookup("bedford")->front(), ph({"B", "EH", "D", "F", "ER", "D"}));
  EXPECT_TRUE(lex.contains("BedFord"));
}

TEST(LexiconFile, EmptyFileMissesEverything) {
  auto lex = Lexicon::parse("");
  EXPECT_TRUE(lex.empty());
  EXPECT_EQ(lex.lookup("bedford"), nullptr);
}

TEST(LexiconFile, DuplicateWordsKeepAllVariants) {
  auto lex = Lexicon::parse("TOMATO  T AH M EY T OW\nTOMATO(2)  T AH M AA T OW\n;;; comment\n");
  ASSERT_NE(lex.lookup("tomato"), nullptr);
  ASSERT_EQ(lex.lookup("tomato")->size(), 2u);
  EXPECT_EQ(lex.lookup("tomato")->front(), ph({"T", "AH", "M", "EY", "T", "OW"}));
}

TEST(LexiconFile, MalformedLineNamesLineNumber) {
  try {
    Lexicon::parse("A  AH\nB  B QQ\n", "lex.txt");
    FAIL() << "expected a format error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kFormat);
    EXPECT_NE(std::string(e.what()).find("lex.txt:2"), std::string::npos) << e.what();
  }
}

TEST(LexiconFile, TextRoundTrip) {
  const auto again = Lexicon::parse(fixture().to_text());
  EXPECT_EQ(again.entries(), fixture().entries());
}

TEST(Phonemize, InLexiconSentenceIsLookupWithBoundaries) {
  const auto& lex = fixture();
  const std::vector<std::string> words{"i", "stay", "in", "bedford"};
  std::vector<int> expected;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) expected.push_back(kWordBoundary);
    const auto& p = lex.lookup(words[i])->front();
    expected.insert(expected.end(), p.begin(), p.end());
  }
  EXPECT_EQ(phonemize("i stay in bedford", lex), expected);
  EXPECT_EQ(phonemize(words, lex), expected);
}

TEST(Phonemize, UnknownWordUsesLetterRules) {
  Lexicon empty;
  EXPECT_EQ(phonemize("zz", empty), ph({"Z", "Z"}));
  EXPECT_EQ(letter_to_sound("beet"), ph({"B", "IY", "T"}));
}

TEST(Phonemize, BoundariesNeverAdjacentOrAtEdges) {
  Rng rng(5);
  const std::string letters = "abcdefghijklmnopqrstuvwxyz";
  for (int trial = 0; trial < 200; ++trial) {
    std::string s;
    const auto words = 1 + rng.below(5);
    for (std::size_t w = 0; w < words; ++w) {
      if (w) s += ' ';
      const auto len = 1 + rng.below(7);
      for (std::size_t i = 0; i < len; ++i) s.push_back(letters[rng.below(letters.size())]);
    }
    const auto p = phonemize(s, fixture());
    ASSERT_FALSE(p.empty());
    EXPECT_NE(p.front(), kWordBoundary);
    EXPECT_NE(p.back(), kWordBoundary);
    for (std::size_t i = 1; i < p.size(); ++i) EXPECT_FALSE(p[i] == kWordBoundary && p[i - 1] == kWordBoundary);
    EXPECT_EQ(p, phonemize(s, fixture()));
  }
}

TEST(EditDistance, CostTable) {
  EXPECT_EQ(phoneme_edit_distance(ph({"B", "EH", "D"}), ph({"B", "EH", "D"})), 0.0);
  EXPECT_EQ(phoneme_edit_distance(ph({"EH"}), ph({"IH"})), 0.5);
  EXPECT_EQ(phoneme_edit_distance(ph({"EH"}), ph({"B"})), 1.0);
  EXPECT_EQ(phoneme_edit_distance(ph({"EH", "D"}), ph({"EH"})), 1.0);
}

TEST(EditDistance, MatchesReferenceDp) {
  Rng rng(6);
  for (int trial = 0; trial < 300; ++trial) {
    const auto a = random_phones(rng, 9), b = random_phones(rng, 9);
    EXPECT_DOUBLE_EQ(phoneme_edit_distance(a, b), reference_distance(a, b));
  }
}

TEST(EditDistance, MetricProperties) {
  Rng rng(7);
  for (int trial = 0; trial < 300; ++trial) {
    const auto a = random_phones(rng, 7), b = random_phones(rng, 7), c = random_phones(rng, 7);
    EXPECT_EQ(phoneme_edit_distance(a, a), 0.0);
    EXPECT_EQ(phoneme_edit_distance(a, b), phoneme_edit_distance(b, a));
    EXPECT_LE(phoneme_edit_distance(a, c), phoneme_edit_distance(a, b) + phoneme_edit_distance(b, c) + 1e-12);
  }
}

// Exhaustive scan: minimum over every variant of every word, ties alphabetical.
std::string brute_force_nearest(const std::vector<int>& q, const Lexicon& lex) {
  std::string best;
  double best_d = std::numeric_limits<double>::infinity();
  for (const auto& [w, prons] : lex.entries()) {
    for (const auto& p : prons) {
      const double d = reference_distance(q, p);
      if (d < best_d || (d == best_d && w < best)) {
        best_d = d;
        best = w;
      }
    }
  }
  return best;
}

TEST(NearestWord, ExactPronunciationWins) {
  EXPECT_EQ(nearest_word(ph({"B", "EH", "D", "F", "ER", "D"}), fixture()), "bedford");
}

TEST(NearestWord, TiesGoAlphabetically) {
  auto lex = Lexicon::parse("ZED  Z EH D\nBED  B EH D\n");
  // Equidistant from both: the first phoneme differs from each by a class-external substitution.
  EXPECT_EQ(nearest_word(ph({"M", "EH", "D"}), lex), "bed");
  EXPECT_EQ(nearest_word(ph({"R", "OW", "D"}), fixture()), "rhode");  // homophone of "road"
}

TEST(NearestWord, AgreesWithBruteForce) {
  Rng rng(8);
  const auto& lex = fixture();
  for (int trial = 0; trial < 150; ++trial) {
    const auto q = random_phones(rng, 10);
    EXPECT_EQ(nearest_word(q, lex), brute_force_nearest(q, lex));
  }
}

TEST(NearestWord, CandidatesAscendWithAlphabeticalTies) {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const auto matches = nearest_words(random_phones(rng, 8), fixture(), 8);
    ASSERT_EQ(matches.size(), 8u);
    for (std::size_t i = 1; i < matches.size(); ++i) {
      EXPECT_TRUE(matches[i - 1].distance < matches[i].distance ||
                  (matches[i - 1].distance == matches[i].distance && matches[i - 1].word < matches[i].word));
    }
  }
}

TEST(NearestWord, UniquePronunciationsMapToThemselves) {
  const auto& lex = fixture();
  std::map<Pronunciation, int> uses;
  for (const auto& [w, prons] : lex.entries()) ++uses[prons.front()];
  for (const auto& [w, prons] : lex.entries()) {
    if (uses[prons.front()] == 1 && prons.size() == 1) EXPECT_EQ(nearest_word(prons.front(), lex), w);
  }
}

}  // namespace
}  // namespace kpat::phon
