#pragma once

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "kpat/corpus.hpp"

namespace kpat::eval {

/// Word-level Levenshtein distance, unit costs.
std::size_t word_edits(std::span<const std::string> ref, std::span<const std::string> hyp);

/// Edits ÷ reference length. Empty references are an error.
double wer(std::span<const std::string> ref, std::span<const std::string> hyp);

/// Bundled English function-word list used before slot scoring.
const std::vector<std::string>& stop_words();
std::string_view stop_words_version();
bool is_stop_word(std::string_view word);
std::vector<std::string> content_words(std::string_view text);

struct Metrics {
  std::size_t utterances = 0;
  std::size_t ref_words = 0;
  std::size_t edits = 0;
  std::size_t slot_words = 0;      // reference slot words after stop-word removal
  std::size_t slot_word_hits = 0;  // multiset intersection with the hypothesis
  std::size_t slot_utterances = 0;
  std::size_t exact_utterances = 0;  // every slot reproduced verbatim

  double wer() const;
  double recall() const;
  double accuracy() const;
  void add(const Metrics& other);
};

/// Scores one utterance.
Metrics score(const data::Utterance& u, std::string_view hyp);

struct SlotScore {
  std::size_t words = 0;
  std::size_t hits = 0;
  bool exact = false;
};
/// Recall counts and verbatim check for slot i (stop words removed on both sides).
SlotScore score_slot(const data::Utterance& u, std::size_t i, std::string_view hyp);

struct EvalReport {
  Metrics overall;
  std::map<std::string, Metrics> per_domain;
  std::string test_set;  // fingerprint of the references
  std::size_t seed = 0;

  nlohmann::json to_json() const;
};

/// Hypotheses must pair one-to-one with utterances (data-mismatch error otherwise).
EvalReport evaluate(std::span<const data::Utterance> utterances, std::span<const std::string> hyps);

struct Comparison {
  double werr = 0.0;  // percent
  double delta_wer = 0.0;
  double delta_recall = 0.0;
  double delta_accuracy = 0.0;

  nlohmann::json to_json() const;
};

/// (WER_base - WER_cand) / WER_base × 100.
double werr(double base_wer, double cand_wer);
Comparison compare_report(const EvalReport& baseline, const EvalReport& candidate);

/// Training-set occurrences of each slot string (normalized).
using FrequencyTable = std::unordered_map<std::string, std::size_t>;
FrequencyTable slot_frequencies(std::span<const data::Utterance> train);

struct Bin {
  std::string label;
  std::size_t lo = 0;
  std::size_t hi = 0;  // inclusive; SIZE_MAX for open-ended
};
/// OOV (0), [1-10], [11-50], [51-200], [201+].
const std::vector<Bin>& frequency_bins();
std::size_t bin_of(std::size_t frequency);

struct BinRow {
  Bin bin;
  std::size_t slots = 0;
  Metrics pat;  // per-slot exactness in exact_utterances, WER over the slot's utterance
  Metrics kpat;
};

std::vector<BinRow> binned_report(const FrequencyTable& freq, std::span<const data::Utterance> test,
                                  std::span<const std::string> hyp_pat, std::span<const std::string> hyp_kpat);
std::string bins_to_tsv(const std::vector<BinRow>& rows);
nlohmann::json bins_to_json(const std::vector<BinRow>& rows);

}  // namespace kpat::eval
