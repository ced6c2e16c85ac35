#include "kpat/eval.hpp"

#include <algorithm>
#include <climits>
#include <cstdint>
#include <iomanip>
#include <nlohmann/json.hpp>
#include <sstream>
#include <unordered_set>

#include "kpat/binary_io.hpp"
#include "kpat/error.hpp"
#include "kpat/tokenizer.hpp"

namespace kpat::eval {

namespace {

std::vector<std::string> words_of(std::string_view text) { return text::split_words(text::normalize(text)); }

double ratio(std::size_t a, std::size_t b) { return b ? static_cast<double>(a) / static_cast<double>(b) : 0.0; }

// True when `needle` occurs as a contiguous run inside `hay`.
bool contains_run(const std::vector<std::string>& hay, const std::vector<std::string>& needle) {
  if (needle.empty()) return true;
  return std::search(hay.begin(), hay.end(), needle.begin(), needle.end()) != hay.end();
}

nlohmann::json metrics_json(const Metrics& m) {
  return {{"utterances", m.utterances},     {"ref_words", m.ref_words},
          {"edits", m.edits},               {"wer", m.wer()},
          {"slot_words", m.slot_words},     {"slot_word_hits", m.slot_word_hits},
          {"slot_recall", m.recall()},      {"slot_utterances", m.slot_utterances},
          {"exact_utterances", m.exact_utterances}, {"slot_accuracy", m.accuracy()}};
}

}  // namespace

std::size_t word_edits(std::span<const std::string> ref, std::span<const std::string> hyp) {
  std::vector<std::size_t> prev(hyp.size() + 1), cur(hyp.size() + 1);
  for (std::size_t j = 0; j <= hyp.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= ref.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= hyp.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[hyp.size()];
}

double wer(std::span<const std::string> ref, std::span<const std::string> hyp) {
  if (ref.empty()) fail(ErrorKind::kParameter, "wer: empty reference");
  return static_cast<double>(word_edits(ref, hyp)) / static_cast<double>(ref.size());
}

const std::vector<std::string>& stop_words() {
  static const std::vector<std::string> words = {
      "a",       "about",   "above",  "after",  "again",  "against", "all",     "am",      "an",     "and",
      "any",     "are",     "as",     "at",     "be",     "because", "been",    "before",  "being",  "below",
      "between", "both",    "but",    "by",     "can",    "could",   "did",     "do",      "does",   "doing",
      "down",    "during",  "each",   "few",    "for",    "from",    "further", "had",     "has",    "have",
      "having",  "he",      "her",    "here",   "hers",   "herself", "him",     "himself", "his",    "how",
      "i",       "i'm",     "if",     "in",     "into",   "is",      "it",      "it's",    "its",    "itself",
      "just",    "me",      "more",   "most",   "my",     "myself",  "no",      "nor",     "not",    "now",
      "of",      "off",     "on",     "once",   "only",   "or",      "other",   "our",     "ours",   "ourselves",
      "out",     "over",    "own",    "same",   "she",    "should",  "so",      "some",    "such",   "than",
      "that",    "the",     "their",  "theirs", "them",   "then",    "there",   "these",   "they",   "this",
      "those",   "through", "to",     "too",    "under",  "until",   "up",      "very",    "was",    "we",
      "were",    "what",    "when",   "where",  "which",  "while",   "who",     "whom",    "why",    "will",
      "with",    "would",   "you",    "your",   "yours",  "yourself"};
  return words;
}

std::string_view stop_words_version() { return "function-words-v1"; }

bool is_stop_word(std::string_view word) {
  static const std::unordered_set<std::string_view> set(stop_words().begin(), stop_words().end());
  return set.contains(word);
}

std::vector<std::string> content_words(std::string_view text) {
  auto words = words_of(text);
  std::erase_if(words, [](const std::string& w) { return is_stop_word(w); });
  return words;
}

double Metrics::wer() const { return ratio(edits, ref_words); }
double Metrics::recall() const { return ratio(slot_word_hits, slot_words); }
double Metrics::accuracy() const { return ratio(exact_utterances, slot_utterances); }

void Metrics::add(const Metrics& o) {
  utterances += o.utterances;
  ref_words += o.ref_words;
  edits += o.edits;
  slot_words += o.slot_words;
  slot_word_hits += o.slot_word_hits;
  slot_utterances += o.slot_utterances;
  exact_utterances += o.exact_utterances;
}

SlotScore score_slot(const data::Utterance& u, std::size_t i, std::string_view hyp) {
  const auto slot = content_words(u.slot_text(i));
  const auto hyp_words = content_words(hyp);
  std::unordered_map<std::string, std::size_t> available;
  for (const auto& w : hyp_words) ++available[w];
  SlotScore s;
  s.words = slot.size();
  for (const auto& w : slot) {
    auto it = available.find(w);
    if (it != available.end() && it->second > 0) {
      --it->second;
      ++s.hits;
    }
  }
  s.exact = contains_run(hyp_words, slot);
  return s;
}

Metrics score(const data::Utterance& u, std::string_view hyp) {
  Metrics m;
  m.utterances = 1;
  const auto ref = words_of(u.ref);
  const auto h = words_of(hyp);
  m.ref_words = ref.size();
  m.edits = word_edits(ref, h);
  if (u.slots.empty()) return m;
  // Recall uses one multiset per utterance so two slots cannot claim the same hypothesis word.
  std::unordered_map<std::string, std::size_t> available;
  for (const auto& w : content_words(hyp)) ++available[w];
  bool exact = true;
  for (std::size_t i = 0; i < u.slots.size(); ++i) {
    for (const auto& w : content_words(u.slot_text(i))) {
      ++m.slot_words;
      auto it = available.find(w);
      if (it != available.end() && it->second > 0) {
        --it->second;
        ++m.slot_word_hits;
      }
    }
    exact = exact && score_slot(u, i, hyp).exact;
  }
  m.slot_utterances = 1;
  m.exact_utterances = exact ? 1 : 0;
  return m;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["overall"] = metrics_json(overall);
  j["per_domain"] = nlohmann::json::object();
  for (const auto& [d, m] : per_domain) j["per_domain"][d] = metrics_json(m);
  j["test_set"] = test_set;
  j["seed"] = seed;
  j["definitions"] = {
      {"wer", "corpus word edits / reference words"},
      {"slot_recall", "reference slot words found in the hypothesis, multiset per utterance, stop words removed"},
      {"slot_accuracy", "utterances whose every slot appears verbatim and contiguous in the hypothesis, stop words removed"},
      {"stop_words", std::string(stop_words_version())}};
  return j;
}

EvalReport evaluate(std::span<const data::Utterance> utterances, std::span<const std::string> hyps) {
  if (utterances.size() != hyps.size()) {
    fail(ErrorKind::kDataMismatch, std::to_string(hyps.size()) + " hypotheses for " +
                                       std::to_string(utterances.size()) + " reference utterances");
  }
  EvalReport r;
  std::string refs;
  for (std::size_t i = 0; i < utterances.size(); ++i) {
    const Metrics m = score(utterances[i], hyps[i]);
    r.overall.add(m);
    if (!utterances[i].domain().empty()) r.per_domain[utterances[i].domain()].add(m);
    refs += utterances[i].ref;
    refs += '\n';
  }
  r.test_set = to_hex(sha256(refs)).substr(0, 16);
  return r;
}

double werr(double base_wer, double cand_wer) {
  if (!(base_wer > 0.0)) fail(ErrorKind::kParameter, "werr: baseline WER must be > 0");
  return (base_wer - cand_wer) / base_wer * 100.0;
}

nlohmann::json Comparison::to_json() const {
  return {{"werr", werr}, {"delta_wer", delta_wer}, {"delta_recall", delta_recall}, {"delta_accuracy", delta_accuracy}};
}

Comparison compare_report(const EvalReport& baseline, const EvalReport& candidate) {
  if (baseline.test_set != candidate.test_set || baseline.overall.utterances != candidate.overall.utterances) {
    fail(ErrorKind::kDataMismatch, "compare: reports cover different test sets");
  }
  Comparison c;
  c.werr = baseline.overall.wer() > 0.0 ? werr(baseline.overall.wer(), candidate.overall.wer()) : 0.0;
  c.delta_wer = candidate.overall.wer() - baseline.overall.wer();
  c.delta_recall = candidate.overall.recall() - baseline.overall.recall();
  c.delta_accuracy = candidate.overall.accuracy() - baseline.overall.accuracy();
  return c;
}

FrequencyTable slot_frequencies(std::span<const data::Utterance> train) {
  FrequencyTable t;
  for (const auto& u : train) {
    for (std::size_t i = 0; i < u.slots.size(); ++i) ++t[text::normalize(u.slot_text(i))];
  }
  return t;
}

const std::vector<Bin>& frequency_bins() {
  static const std::vector<Bin> bins = {
      {"oov", 0, 0}, {"1-10", 1, 10}, {"11-50", 11, 50}, {"51-200", 51, 200}, {"201+", 201, SIZE_MAX}};
  return bins;
}

std::size_t bin_of(std::size_t frequency) {
  const auto& bins = frequency_bins();
  for (std::size_t b = 0; b < bins.size(); ++b) {
    if (frequency >= bins[b].lo && frequency <= bins[b].hi) return b;
  }
  return bins.size() - 1;
}

std::vector<BinRow> binned_report(const FrequencyTable& freq, std::span<const data::Utterance> test,
                                  std::span<const std::string> hyp_pat, std::span<const std::string> hyp_kpat) {
  if (hyp_pat.size() != test.size() || hyp_kpat.size() != test.size()) {
    fail(ErrorKind::kDataMismatch, "binned report: hypothesis counts differ from the test set");
  }
  std::vector<BinRow> rows;
  for (const auto& b : frequency_bins()) rows.push_back({b, 0, {}, {}});
  for (std::size_t u = 0; u < test.size(); ++u) {
    for (std::size_t i = 0; i < test[u].slots.size(); ++i) {
      auto it = freq.find(text::normalize(test[u].slot_text(i)));
      BinRow& row = rows[bin_of(it == freq.end() ? 0 : it->second)];
      ++row.slots;
      for (auto [m, hyp] : {std::pair{&row.pat, hyp_pat[u]}, std::pair{&row.kpat, hyp_kpat[u]}}) {
        Metrics s = score(test[u], hyp);
        const SlotScore ss = score_slot(test[u], i, hyp);
        s.slot_words = ss.words;
        s.slot_word_hits = ss.hits;
        s.slot_utterances = 1;
        s.exact_utterances = ss.exact ? 1 : 0;
        m->add(s);
      }
    }
  }
  return rows;
}

std::string bins_to_tsv(const std::vector<BinRow>& rows) {
  std::ostringstream out;
  out << "bin\twer_pat\twer_kpat\tacc_pat\tacc_kpat\n";
  out << std::fixed << std::setprecision(4);
  for (const auto& r : rows) {
    out << r.bin.label << '\t' << r.pat.wer() << '\t' << r.kpat.wer() << '\t' << r.pat.accuracy() << '\t'
        << r.kpat.accuracy() << '\n';
  }
  return out.str();
}

nlohmann::json bins_to_json(const std::vector<BinRow>& rows) {
  auto out = nlohmann::json::array();
  for (const auto& r : rows) {
    out.push_back({{"bin", r.bin.label},
                   {"slots", r.slots},
                   {"pat", metrics_json(r.pat)},
                   {"kpat", metrics_json(r.kpat)}});
  }
  return out;
}

}  // namespace kpat::eval
