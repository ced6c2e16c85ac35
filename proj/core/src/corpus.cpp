#include "kpat/corpus.hpp"

#include <nlohmann/json.hpp>
#include <sstream>

#include "kpat/binary_io.hpp"
#include "kpat/error.hpp"

namespace kpat::data {

std::string Utterance::domain() const { return slots.empty() ? std::string() : slots.front().domain; }

std::string Utterance::slot_text(std::size_t i) const {
  const Slot& s = slots.at(i);
  return ref.substr(s.start, s.end - s.start);
}

void Utterance::validate() const {
  if (ref.empty()) fail(ErrorKind::kFormat, "utterance has an empty reference");
  if (asr.empty()) fail(ErrorKind::kFormat, "utterance has an empty ASR output");
  for (const auto& s : slots) {
    if (s.start >= s.end || s.end > ref.size()) {
      fail(ErrorKind::kFormat, "slot [" + std::to_string(s.start) + ", " + std::to_string(s.end) +
                                   ") outside reference '" + ref + "'");
    }
  }
}

nlohmann::json to_json(const Utterance& u) {
  nlohmann::json slots = nlohmann::json::array();
  for (const auto& s : u.slots) slots.push_back({{"start", s.start}, {"end", s.end}, {"domain", s.domain}});
  return {{"ref", u.ref}, {"asr", u.asr}, {"slots", slots}, {"split", u.split}, {"freq_rank", u.freq_rank}};
}

Utterance utterance_from_json(const nlohmann::json& j) {
  Utterance u;
  u.ref = j.at("ref").get<std::string>();
  u.asr = j.at("asr").get<std::string>();
  for (const auto& s : j.at("slots")) {
    u.slots.push_back({s.at("start").get<std::size_t>(), s.at("end").get<std::size_t>(), s.at("domain").get<std::string>()});
  }
  u.split = j.value("split", std::string());
  u.freq_rank = j.value("freq_rank", std::size_t{0});
  u.validate();
  return u;
}

std::vector<Utterance> read_corpus(const std::string& path) {
  std::istringstream in(read_text_file(path));
  std::vector<Utterance> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(utterance_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::kFormat, path + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      fail(ErrorKind::kFormat, path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void write_corpus(const std::string& path, const std::vector<Utterance>& utterances) {
  std::string text;
  for (const auto& u : utterances) text += to_json(u).dump() + "\n";
  write_text_file(path, text);
}

std::vector<std::string> read_hypotheses(const std::string& path) {
  std::istringstream in(read_text_file(path));
  std::vector<std::string> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line).at("output").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::kFormat, path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace kpat::data
