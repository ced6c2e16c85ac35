#include "kpat/tokenizer.hpp"

#include <algorithm>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "kpat/binary_io.hpp"
#include "kpat/error.hpp"

namespace kpat::text {

namespace {

constexpr std::string_view kSpecialNames[kNumSpecial] = {"<pad>", "<s>", "</s>", "<unk>"};

std::uint64_t pair_key(int a, int b) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) | static_cast<std::uint32_t>(b);
}

}  // namespace

std::string normalize(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
  }
  return out;
}

std::vector<std::string> utf8_symbols(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto lead = static_cast<unsigned char>(text[i]);
    std::size_t len = 1;
    if (lead >= 0xF0 && lead < 0xF8) len = 4;
    else if (lead >= 0xE0) len = 3;
    else if (lead >= 0xC0) len = 2;
    if (lead >= 0xF8 || i + len > text.size()) len = 1;
    for (std::size_t j = 1; j < len; ++j) {
      if ((static_cast<unsigned char>(text[i + j]) & 0xC0) != 0x80) {
        len = 1;
        break;
      }
    }
    out.emplace_back(text.substr(i, len));
    i += len;
  }
  return out;
}

std::vector<std::string> split_words(std::string_view normalized) {
  std::vector<std::string> words;
  std::size_t start = 0;
  while (start < normalized.size()) {
    auto end = normalized.find(' ', start);
    if (end == std::string_view::npos) end = normalized.size();
    if (end > start) words.emplace_back(normalized.substr(start, end - start));
    start = end + 1;
  }
  return words;
}

Vocabulary Vocabulary::build(std::vector<std::string> alphabet, std::vector<Merge> merges) {
  Vocabulary v;
  for (auto name : kSpecialNames) v.tokens_.emplace_back(name);
  for (auto& s : alphabet) v.tokens_.push_back(std::move(s));
  std::set<std::string> seen(v.tokens_.begin() + kNumSpecial, v.tokens_.end());
  for (const auto& [a, b] : merges) {
    if (seen.insert(a + b).second) v.tokens_.push_back(a + b);
  }
  v.merges_ = std::move(merges);
  v.index();
  return v;
}

void Vocabulary::index() {
  ids_.clear();
  merge_table_.clear();
  for (std::size_t i = kNumSpecial; i < tokens_.size(); ++i) {
    if (!ids_.emplace(tokens_[i], static_cast<int>(i)).second) {
      fail(ErrorKind::kFormat, "vocabulary: duplicate token '" + tokens_[i] + "'");
    }
  }
  for (std::size_t r = 0; r < merges_.size(); ++r) {
    const int a = find(merges_[r].first);
    const int b = find(merges_[r].second);
    const int merged = find(merges_[r].first + merges_[r].second);
    if (a < 0 || b < 0 || merged < 0) fail(ErrorKind::kFormat, "vocabulary: merge part missing from tokens");
    merge_table_.emplace(pair_key(a, b), std::make_pair(static_cast<int>(r), merged));
  }
}

int Vocabulary::find(std::string_view token) const {
  const auto it = ids_.find(std::string(token));
  return it == ids_.end() ? -1 : it->second;
}

Vocabulary Vocabulary::train(const std::vector<std::string>& corpus, std::size_t vocab_size,
                             std::vector<std::string>* warnings) {
  std::map<std::string, std::size_t> word_counts;
  std::set<std::string> alphabet_set{std::string(kWordMarker)};
  for (const auto& line : corpus) {
    for (auto& w : split_words(normalize(line))) {
      for (auto& s : utf8_symbols(w)) alphabet_set.insert(s);
      ++word_counts[w];
    }
  }
  std::vector<std::string> alphabet(alphabet_set.begin(), alphabet_set.end());
  if (vocab_size < alphabet.size() + kNumSpecial) {
    fail(ErrorKind::kParameter, "train_bpe: vocab_size " + std::to_string(vocab_size) +
                                    " is below alphabet + specials (" +
                                    std::to_string(alphabet.size() + kNumSpecial) + ")");
  }

  // Working state uses integer symbols; strings only matter for tie-breaks.
  std::vector<std::string> symbols = alphabet;
  std::unordered_map<std::string, int> symbol_id;
  for (std::size_t i = 0; i < symbols.size(); ++i) symbol_id[symbols[i]] = static_cast<int>(i);
  struct Word {
    std::vector<int> parts;
    std::size_t count;
  };
  std::vector<Word> words;
  words.reserve(word_counts.size());
  for (const auto& [w, count] : word_counts) {
    Word word{{symbol_id.at(std::string(kWordMarker))}, count};
    for (auto& s : utf8_symbols(w)) word.parts.push_back(symbol_id.at(s));
    words.push_back(std::move(word));
  }

  std::vector<Merge> merges;
  while (symbols.size() + kNumSpecial < vocab_size) {
    std::unordered_map<std::uint64_t, std::size_t> pair_counts;
    for (const auto& w : words) {
      for (std::size_t i = 0; i + 1 < w.parts.size(); ++i) pair_counts[pair_key(w.parts[i], w.parts[i + 1])] += w.count;
    }
    if (pair_counts.empty()) {
      const std::string msg = "train_bpe: corpus exhausted after " + std::to_string(merges.size()) +
                              " merges; vocabulary has " +
                              std::to_string(symbols.size() + kNumSpecial) + " tokens";
      if (warnings) warnings->push_back(msg);
      break;
    }
    std::uint64_t best_key = 0;
    std::size_t best_count = 0;
    std::string best_merged, best_left;
    for (const auto& [key, count] : pair_counts) {
      if (count < best_count) continue;
      const auto& left = symbols[key >> 32];
      const auto& right = symbols[key & 0xffffffffu];
      std::string merged = left + right;
      if (count > best_count || merged < best_merged || (merged == best_merged && left < best_left)) {
        best_key = key;
        best_count = count;
        best_merged = std::move(merged);
        best_left = left;
      }
    }
    const int a = static_cast<int>(best_key >> 32);
    const int b = static_cast<int>(best_key & 0xffffffffu);
    merges.emplace_back(symbols[static_cast<std::size_t>(a)], symbols[static_cast<std::size_t>(b)]);
    // A string can be reachable through two different splits; the second
    // merge then maps onto the existing token.
    auto [merged_it, fresh] = symbol_id.emplace(best_merged, static_cast<int>(symbols.size()));
    if (fresh) symbols.push_back(best_merged);
    const int merged_id = merged_it->second;
    for (auto& w : words) {
      std::vector<int> next;
      next.reserve(w.parts.size());
      for (std::size_t i = 0; i < w.parts.size(); ++i) {
        if (i + 1 < w.parts.size() && w.parts[i] == a && w.parts[i + 1] == b) {
          next.push_back(merged_id);
          ++i;
        } else {
          next.push_back(w.parts[i]);
        }
      }
      w.parts = std::move(next);
    }
  }
  return build(std::move(alphabet), std::move(merges));
}

std::vector<int> Vocabulary::encode_word(std::string_view word) const {
  const int marker = find(kWordMarker);
  std::vector<int> parts{marker < 0 ? kUnkId : marker};
  for (const auto& s : utf8_symbols(word)) {
    const int id = find(s);
    parts.push_back(id < 0 ? kUnkId : id);
  }
  while (parts.size() > 1) {
    int best_rank = -1, best_id = -1;
    std::uint64_t best_pair = 0;
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
      const auto it = merge_table_.find(pair_key(parts[i], parts[i + 1]));
      if (it == merge_table_.end()) continue;
      if (best_rank < 0 || it->second.first < best_rank) {
        best_rank = it->second.first;
        best_id = it->second.second;
        best_pair = it->first;
      }
    }
    if (best_rank < 0) break;
    const int a = static_cast<int>(best_pair >> 32);
    const int b = static_cast<int>(best_pair & 0xffffffffu);
    std::vector<int> next;
    next.reserve(parts.size());
    for (std::size_t i = 0; i < parts.size(); ++i) {
      if (i + 1 < parts.size() && parts[i] == a && parts[i + 1] == b) {
        next.push_back(best_id);
        ++i;
      } else {
        next.push_back(parts[i]);
      }
    }
    parts = std::move(next);
  }
  return parts;
}

std::vector<int> Vocabulary::encode(std::string_view text) const {
  std::vector<int> ids;
  for (const auto& w : split_words(normalize(text))) {
    const auto piece = encode_word(w);
    ids.insert(ids.end(), piece.begin(), piece.end());
  }
  return ids;
}

std::string Vocabulary::decode(std::span<const int> ids) const {
  std::string joined;
  for (int id : ids) {
    if (id == kPadId || id == kBosId || id == kEosId) continue;
    if (id == kUnkId || id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
      joined += kUnknownGlyph;
      continue;
    }
    joined += tokens_[static_cast<std::size_t>(id)];
  }
  std::string out;
  std::size_t pos = 0;
  while (true) {
    const auto hit = joined.find(kWordMarker, pos);
    out.append(joined, pos, hit == std::string::npos ? std::string::npos : hit - pos);
    if (hit == std::string::npos) break;
    if (!out.empty()) out.push_back(' ');
    pos = hit + kWordMarker.size();
  }
  return out;
}

std::string Vocabulary::to_json() const {
  nlohmann::json j;
  j["version"] = 1;
  j["tokens"] = tokens_;
  auto merges = nlohmann::json::array();
  for (const auto& [a, b] : merges_) merges.push_back({a, b});
  j["merges"] = std::move(merges);
  return j.dump();
}

Vocabulary Vocabulary::from_json(std::string_view json) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, std::string("vocabulary: ") + e.what());
  }
  if (j.value("version", 0) != 1) fail(ErrorKind::kFormat, "vocabulary: unsupported version");
  Vocabulary v;
  v.tokens_ = j.at("tokens").get<std::vector<std::string>>();
  if (v.tokens_.size() < kNumSpecial) fail(ErrorKind::kFormat, "vocabulary: missing special tokens");
  for (const auto& m : j.at("merges")) v.merges_.emplace_back(m.at(0).get<std::string>(), m.at(1).get<std::string>());
  if (v.merges_.size() + kNumSpecial > v.tokens_.size()) fail(ErrorKind::kFormat, "vocabulary: more merges than tokens");
  v.index();
  return v;
}

Vocabulary Vocabulary::load(const std::string& path) { return from_json(read_text_file(path)); }

void Vocabulary::save(const std::string& path) const { write_text_file(path, to_json()); }

std::string Vocabulary::version() const { return to_hex(sha256(to_json())).substr(0, 16); }

}  // namespace kpat::text
