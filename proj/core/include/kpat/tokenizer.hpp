#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace kpat::text {

inline constexpr int kPadId = 0;
inline constexpr int kBosId = 1;
inline constexpr int kEosId = 2;
inline constexpr int kUnkId = 3;
inline constexpr int kNumSpecial = 4;

/// Prefix symbol carried by word-initial pieces (U+2581).
inline constexpr std::string_view kWordMarker = "\xE2\x96\x81";
/// Rendering of UNK ids on decode (U+2047).
inline constexpr std::string_view kUnknownGlyph = "\xE2\x81\x87";

/// Lowercases ASCII letters and collapses whitespace runs to single spaces.
std::string normalize(std::string_view text);

/// Splits UTF-8 text into code point strings. Invalid bytes become single-byte symbols.
std::vector<std::string> utf8_symbols(std::string_view text);

std::vector<std::string> split_words(std::string_view normalized);

/// Byte-pair-encoding vocabulary. Ids are dense: the four specials, then the
/// base alphabet in byte order, then each newly merged string in merge order.
class Vocabulary {
 public:
  using Merge = std::pair<std::string, std::string>;

  /// Greedy BPE: repeatedly merges the most frequent adjacent pair (ties go to
  /// the lexicographically smallest merged string, then the smallest left
  /// part) until `vocab_size` tokens exist or no pair remains.
  /// Stopping early appends a message to `warnings` when given.
  static Vocabulary train(const std::vector<std::string>& corpus, std::size_t vocab_size,
                          std::vector<std::string>* warnings = nullptr);

  static Vocabulary from_json(std::string_view json);
  static Vocabulary load(const std::string& path);
  std::string to_json() const;
  void save(const std::string& path) const;

  std::vector<int> encode(std::string_view text) const;
  /// PAD/BOS/EOS are skipped, UNK renders as kUnknownGlyph.
  std::string decode(std::span<const int> ids) const;

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  /// -1 when absent. Special tokens are not addressable by string.
  int find(std::string_view token) const;
  const std::vector<Merge>& merges() const { return merges_; }
  /// Stable content hash; datastores and checkpoints record it.
  std::string version() const;

 private:
  Vocabulary() = default;
  static Vocabulary build(std::vector<std::string> alphabet, std::vector<Merge> merges);
  void index();
  std::vector<int> encode_word(std::string_view word) const;

  std::vector<std::string> tokens_;
  std::vector<Merge> merges_;
  std::unordered_map<std::string, int> ids_;
  // (left id << 32 | right id) -> (rank, merged id)
  std::unordered_map<std::uint64_t, std::pair<int, int>> merge_table_;
};

}  // namespace kpat::text
