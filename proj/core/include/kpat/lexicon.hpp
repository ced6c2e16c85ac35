#pragma once

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace kpat::phon {

// Phoneme vocabulary ids. Specials mirror the text vocabulary layout.
inline constexpr int kPhonePad = 0;
inline constexpr int kPhoneBos = 1;
inline constexpr int kPhoneEos = 2;
inline constexpr int kPhoneUnk = 3;
inline constexpr int kWordBoundary = 4;
inline constexpr int kFirstPhone = 5;

enum class PhoneClass { kVowel, kStop, kFricative, kNasal, kLiquid, kOther };

/// Closed ARPAbet inventory (39 symbols, no stress).
int phone_id(std::string_view symbol);  // -1 if unknown
std::string_view phone_symbol(int id);
PhoneClass phone_class(int id);
std::size_t phone_vocab_size();
std::vector<int> phones_in_class(PhoneClass c);
std::vector<int> all_phones();

using Pronunciation = std::vector<int>;

/// Word to pronunciation map. Keys are lowercase; the first variant of a
/// word is its primary pronunciation.
class Lexicon {
 public:
  Lexicon() = default;
  Lexicon(const Lexicon& other) : entries_(other.entries_) { reindex(); }
  Lexicon& operator=(const Lexicon& other) {
    if (this != &other) {
      entries_ = other.entries_;
      reindex();
    }
    return *this;
  }
  Lexicon(Lexicon&&) noexcept = default;
  Lexicon& operator=(Lexicon&&) noexcept = default;

  /// CMU-dictionary-style text: WORD, whitespace, phonemes. Lines starting
  /// with ";;;" are comments. Stress digits and "(n)" variant suffixes are
  /// stripped. Malformed lines raise a format error naming the line.
  static Lexicon parse(std::string_view text, const std::string& source = "lexicon");
  static Lexicon load(const std::string& path);
  std::string to_text() const;

  void add(std::string_view word, Pronunciation pron);

  /// nullptr when the word is absent. Case-insensitive.
  const std::vector<Pronunciation>* lookup(std::string_view word) const;
  bool contains(std::string_view word) const { return lookup(word) != nullptr; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::map<std::string, std::vector<Pronunciation>>& entries() const { return entries_; }

  struct Candidate {
    const std::string* word;
    const Pronunciation* pron;
  };
  /// Pronunciations grouped by phoneme count (index = length).
  const std::vector<std::vector<Candidate>>& by_length() const { return by_length_; }

 private:
  void reindex();

  std::map<std::string, std::vector<Pronunciation>> entries_;
  std::vector<std::vector<Candidate>> by_length_;
};

/// Deterministic letter-to-sound rules used for words missing from the lexicon.
Pronunciation letter_to_sound(std::string_view word);

/// Primary lexicon pronunciation, falling back to letter_to_sound.
Pronunciation pronounce(std::string_view word, const Lexicon& lexicon);

/// Concatenated pronunciations with kWordBoundary between words. Words
/// without any phoneme are skipped, so boundaries are never adjacent and never
/// lead or trail.
std::vector<int> phonemize(const std::vector<std::string>& words, const Lexicon& lexicon);
std::vector<int> phonemize(std::string_view text, const Lexicon& lexicon);

/// Levenshtein distance: insert/delete 1, substitution 1 or 0.5 within a phoneme class.
double phoneme_edit_distance(std::span<const int> a, std::span<const int> b);

struct WordMatch {
  std::string word;
  double distance;
};

/// Up to `max_candidates` lexicon words closest to `phonemes`, ascending by
/// distance, ties alphabetical. A word's distance is the minimum over its
/// variants. Only pronunciations within 3 phonemes of the query length are
/// scored unless nothing that close is within reach, in which case the band
/// widens to whatever the current best distance allows, so the result always
/// equals an exhaustive scan.
std::vector<WordMatch> nearest_words(std::span<const int> phonemes, const Lexicon& lexicon,
                                     std::size_t max_candidates);
std::string nearest_word(std::span<const int> phonemes, const Lexicon& lexicon);

}  // namespace kpat::phon
