#pragma once

#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace kpat::data {

/// Character range [start, end) of an entity inside the reference text.
struct Slot {
  std::size_t start = 0;
  std::size_t end = 0;
  std::string domain;
};

struct Utterance {
  std::string ref;
  std::string asr;
  std::vector<Slot> slots;
  std::string split;
  std::size_t freq_rank = 0;  // 1 = most frequent entity of its domain

  /// Domain of the first slot, empty without slots.
  std::string domain() const;
  std::string slot_text(std::size_t i) const;
  void validate() const;
};

nlohmann::json to_json(const Utterance& u);
Utterance utterance_from_json(const nlohmann::json& j);

/// One JSON object per line. Reading reports the failing line.
std::vector<Utterance> read_corpus(const std::string& path);
void write_corpus(const std::string& path, const std::vector<Utterance>& utterances);

/// Hypothesis records written by decode: {"input":..., "output":...}.
std::vector<std::string> read_hypotheses(const std::string& path);

}  // namespace kpat::data
