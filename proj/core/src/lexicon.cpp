#include "kpat/lexicon.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <limits>
#include <unordered_map>

#include "kpat/binary_io.hpp"
#include "kpat/error.hpp"
#include "kpat/tokenizer.hpp"

namespace kpat::phon {

namespace {

struct PhoneInfo {
  std::string_view symbol;
  PhoneClass cls;
};

constexpr std::array<PhoneInfo, 39> kPhones{{
    {"AA", PhoneClass::kVowel}, {"AE", PhoneClass::kVowel}, {"AH", PhoneClass::kVowel},
    {"AO", PhoneClass::kVowel}, {"AW", PhoneClass::kVowel}, {"AY", PhoneClass::kVowel},
    {"EH", PhoneClass::kVowel}, {"ER", PhoneClass::kVowel}, {"EY", PhoneClass::kVowel},
    {"IH", PhoneClass::kVowel}, {"IY", PhoneClass::kVowel}, {"OW", PhoneClass::kVowel},
    {"OY", PhoneClass::kVowel}, {"UH", PhoneClass::kVowel}, {"UW", PhoneClass::kVowel},
    {"B", PhoneClass::kStop},   {"D", PhoneClass::kStop},   {"G", PhoneClass::kStop},
    {"K", PhoneClass::kStop},   {"P", PhoneClass::kStop},   {"T", PhoneClass::kStop},
    {"CH", PhoneClass::kFricative}, {"DH", PhoneClass::kFricative}, {"F", PhoneClass::kFricative},
    {"HH", PhoneClass::kFricative}, {"JH", PhoneClass::kFricative}, {"S", PhoneClass::kFricative},
    {"SH", PhoneClass::kFricative}, {"TH", PhoneClass::kFricative}, {"V", PhoneClass::kFricative},
    {"Z", PhoneClass::kFricative},  {"ZH", PhoneClass::kFricative},
    {"M", PhoneClass::kNasal},  {"N", PhoneClass::kNasal},  {"NG", PhoneClass::kNasal},
    {"L", PhoneClass::kLiquid}, {"R", PhoneClass::kLiquid}, {"W", PhoneClass::kLiquid},
    {"Y", PhoneClass::kLiquid},
}};

constexpr std::string_view kSpecialSymbols[kFirstPhone] = {"<pad>", "<s>", "</s>", "<unk>", "|"};

int must_phone(std::string_view s) {
  const int id = phone_id(s);
  if (id < 0) fail(ErrorKind::kParameter, "unknown phoneme " + std::string(s));
  return id;
}

std::vector<int> phones(std::initializer_list<std::string_view> symbols) {
  std::vector<int> out;
  for (auto s : symbols) out.push_back(must_phone(s));
  return out;
}

struct Rule {
  std::string_view graphemes;
  std::vector<int> phones;
};

const std::vector<Rule>& rules() {
  // Longest graphemes first; matched greedily left to right.
  static const std::vector<Rule> table = [] {
    std::vector<Rule> r{
        {"tch", phones({"CH"})}, {"igh", phones({"AY"})},
        {"sh", phones({"SH"})},  {"ch", phones({"CH"})},  {"th", phones({"TH"})},  {"ph", phones({"F"})},
        {"ck", phones({"K"})},   {"ng", phones({"NG"})},  {"qu", phones({"K", "W"})}, {"wh", phones({"W"})},
        {"gh", phones({"G"})},   {"ee", phones({"IY"})},  {"ea", phones({"IY"})},  {"ie", phones({"IY"})},
        {"ey", phones({"IY"})},  {"oo", phones({"UW"})},  {"ou", phones({"AW"})},  {"ow", phones({"OW"})},
        {"oa", phones({"OW"})},  {"oe", phones({"OW"})},  {"ai", phones({"EY"})},  {"ay", phones({"EY"})},
        {"ei", phones({"EY"})},  {"oi", phones({"OY"})},  {"oy", phones({"OY"})},  {"au", phones({"AO"})},
        {"aw", phones({"AO"})},  {"ue", phones({"UW"})},  {"ew", phones({"UW"})},  {"er", phones({"ER"})},
        {"ir", phones({"ER"})},  {"ur", phones({"ER"})},  {"ar", phones({"AA", "R"})}, {"or", phones({"AO", "R"})},
        {"a", phones({"AE"})},   {"b", phones({"B"})},    {"c", phones({"K"})},    {"d", phones({"D"})},
        {"e", phones({"EH"})},   {"f", phones({"F"})},    {"g", phones({"G"})},    {"h", phones({"HH"})},
        {"i", phones({"IH"})},   {"j", phones({"JH"})},   {"k", phones({"K"})},    {"l", phones({"L"})},
        {"m", phones({"M"})},    {"n", phones({"N"})},    {"o", phones({"AA"})},   {"p", phones({"P"})},
        {"q", phones({"K"})},    {"r", phones({"R"})},    {"s", phones({"S"})},    {"t", phones({"T"})},
        {"u", phones({"AH"})},   {"v", phones({"V"})},    {"w", phones({"W"})},    {"x", phones({"K", "S"})},
        {"y", phones({"IY"})},   {"z", phones({"Z"})},
    };
    return r;
  }();
  return table;
}

bool is_vowel_letter(char c) { return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u' || c == 'y'; }

std::string lowercase(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

int phone_id(std::string_view symbol) {
  for (std::size_t i = 0; i < kPhones.size(); ++i) {
    if (kPhones[i].symbol == symbol) return static_cast<int>(i) + kFirstPhone;
  }
  return -1;
}

std::string_view phone_symbol(int id) {
  if (id >= 0 && id < kFirstPhone) return kSpecialSymbols[id];
  if (id < 0 || static_cast<std::size_t>(id - kFirstPhone) >= kPhones.size()) return "?";
  return kPhones[static_cast<std::size_t>(id - kFirstPhone)].symbol;
}

PhoneClass phone_class(int id) {
  if (id < kFirstPhone || static_cast<std::size_t>(id - kFirstPhone) >= kPhones.size()) return PhoneClass::kOther;
  return kPhones[static_cast<std::size_t>(id - kFirstPhone)].cls;
}

std::size_t phone_vocab_size() { return kFirstPhone + kPhones.size(); }

std::vector<int> phones_in_class(PhoneClass c) {
  std::vector<int> out;
  for (std::size_t i = 0; i < kPhones.size(); ++i) {
    if (kPhones[i].cls == c) out.push_back(static_cast<int>(i) + kFirstPhone);
  }
  return out;
}

std::vector<int> all_phones() {
  std::vector<int> out;
  for (std::size_t i = 0; i < kPhones.size(); ++i) out.push_back(static_cast<int>(i) + kFirstPhone);
  return out;
}

Lexicon Lexicon::parse(std::string_view text, const std::string& source) {
  Lexicon lex;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.starts_with(";;;")) continue;
    const auto fields = text::split_words(text::normalize(line));
    if (fields.empty()) continue;
    const auto where = [&] { return source + ":" + std::to_string(line_no); };
    if (fields.size() < 2) fail(ErrorKind::kFormat, where() + ": entry has no phonemes");
    std::string word = fields[0];
    if (const auto paren = word.find('('); paren != std::string::npos && paren > 0 && word.back() == ')') {
      word.resize(paren);
    }
    Pronunciation pron;
    for (std::size_t i = 1; i < fields.size(); ++i) {
      std::string sym;
      for (char c : fields[i]) {
        if (!std::isdigit(static_cast<unsigned char>(c))) sym.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
      }
      const int id = phone_id(sym);
      if (id < 0) fail(ErrorKind::kFormat, where() + ": unknown phoneme '" + fields[i] + "'");
      pron.push_back(id);
    }
    lex.entries_[word].push_back(std::move(pron));
    if (end == text.size()) break;
  }
  lex.reindex();
  return lex;
}

Lexicon Lexicon::load(const std::string& path) { return parse(read_text_file(path), path); }

std::string Lexicon::to_text() const {
  std::string out;
  for (const auto& [word, prons] : entries_) {
    for (const auto& p : prons) {
      std::string upper = word;
      for (auto& c : upper) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
      out += upper;
      out += ' ';
      for (int id : p) {
        out += ' ';
        out += phone_symbol(id);
      }
      out += '\n';
    }
  }
  return out;
}

void Lexicon::add(std::string_view word, Pronunciation pron) {
  for (int id : pron) {
    if (phone_class(id) == PhoneClass::kOther) fail(ErrorKind::kParameter, "lexicon: pronunciation uses a non-phoneme id");
  }
  entries_[lowercase(word)].push_back(std::move(pron));
  reindex();
}

void Lexicon::reindex() {
  by_length_.clear();
  for (const auto& [word, prons] : entries_) {
    for (const auto& p : prons) {
      if (by_length_.size() <= p.size()) by_length_.resize(p.size() + 1);
      by_length_[p.size()].push_back(Candidate{&word, &p});
    }
  }
}

const std::vector<Pronunciation>* Lexicon::lookup(std::string_view word) const {
  const auto it = entries_.find(lowercase(word));
  return it == entries_.end() ? nullptr : &it->second;
}

Pronunciation letter_to_sound(std::string_view word) {
  const std::string w = lowercase(word);
  // Letters only; apostrophes and other marks are silent.
  std::string letters;
  for (char c : w) {
    if (c >= 'a' && c <= 'z') letters.push_back(c);
  }
  std::size_t n = letters.size();
  // A final 'e' after a consonant is silent when another vowel precedes it.
  if (n > 2 && letters[n - 1] == 'e' && !is_vowel_letter(letters[n - 2])) {
    for (std::size_t i = 0; i + 2 < n; ++i) {
      if (is_vowel_letter(letters[i])) {
        --n;
        break;
      }
    }
  }
  Pronunciation out;
  std::size_t i = 0;
  while (i < n) {
    if (i == 0 && letters[0] == 'y' && n > 1 && is_vowel_letter(letters[1])) {
      out.push_back(must_phone("Y"));
      ++i;
      continue;
    }
    for (const auto& rule : rules()) {
      const auto len = rule.graphemes.size();
      if (i + len <= n && std::string_view(letters).substr(i, len) == rule.graphemes) {
        out.insert(out.end(), rule.phones.begin(), rule.phones.end());
        i += len;
        break;
      }
    }
  }
  return out;
}

Pronunciation pronounce(std::string_view word, const Lexicon& lexicon) {
  if (const auto* prons = lexicon.lookup(word)) return prons->front();
  return letter_to_sound(word);
}

std::vector<int> phonemize(const std::vector<std::string>& words, const Lexicon& lexicon) {
  std::vector<int> out;
  for (const auto& w : words) {
    const auto p = pronounce(w, lexicon);
    if (p.empty()) continue;
    if (!out.empty()) out.push_back(kWordBoundary);
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

std::vector<int> phonemize(std::string_view text, const Lexicon& lexicon) {
  return phonemize(text::split_words(text::normalize(text)), lexicon);
}

namespace {

double substitution_cost(int a, int b) {
  if (a == b) return 0.0;
  const auto ca = phone_class(a);
  if (ca != PhoneClass::kOther && ca == phone_class(b)) return 0.5;
  return 1.0;
}

/// Edit distance, or +inf as soon as every cell of a DP row exceeds `bound`.
double bounded_distance(std::span<const int> a, std::span<const int> b, double bound) {
  std::vector<double> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = static_cast<double>(j);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = static_cast<double>(i);
    double row_min = cur[0];
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1.0, cur[j - 1] + 1.0, prev[j - 1] + substitution_cost(a[i - 1], b[j - 1])});
      row_min = std::min(row_min, cur[j]);
    }
    if (row_min > bound) return std::numeric_limits<double>::infinity();
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace

double phoneme_edit_distance(std::span<const int> a, std::span<const int> b) {
  return bounded_distance(a, b, std::numeric_limits<double>::infinity());
}

std::vector<WordMatch> nearest_words(std::span<const int> phonemes, const Lexicon& lexicon,
                                     std::size_t max_candidates) {
  if (lexicon.empty()) fail(ErrorKind::kParameter, "nearest_word: lexicon is empty");
  if (max_candidates == 0) return {};
  const auto& buckets = lexicon.by_length();
  const std::size_t q = phonemes.size();
  constexpr double kInf = std::numeric_limits<double>::infinity();

  std::unordered_map<const std::string*, double> best;
  std::vector<WordMatch> top;  // sorted (distance, word), size <= max_candidates
  const auto kth = [&] { return top.size() < max_candidates ? kInf : top.back().distance; };
  const auto offer = [&](const std::string* word, double d) {
    auto [it, fresh] = best.emplace(word, d);
    if (!fresh) {
      if (d >= it->second) return;
      it->second = d;
      top.erase(std::remove_if(top.begin(), top.end(), [&](const WordMatch& m) { return m.word == *word; }), top.end());
    }
    const auto before = [](const WordMatch& m, double dist, const std::string& w) {
      return m.distance < dist || (m.distance == dist && m.word < w);
    };
    auto pos = top.begin();
    while (pos != top.end() && before(*pos, d, *word)) ++pos;
    if (static_cast<std::size_t>(pos - top.begin()) >= max_candidates) return;
    top.insert(pos, WordMatch{*word, d});
    if (top.size() > max_candidates) top.pop_back();
  };
  const auto scan_length = [&](std::size_t len) {
    if (len >= buckets.size()) return;
    for (const auto& c : buckets[len]) {
      const double d = bounded_distance(phonemes, *c.pron, kth());
      if (d < kInf) offer(c.word, d);
    }
  };

  // Length difference is a lower bound on the distance, so nearer lengths first.
  constexpr std::size_t kBand = 3;
  std::size_t scanned_radius = 0;
  scan_length(q);
  for (std::size_t r = 1; r <= kBand; ++r) {
    if (q >= r) scan_length(q - r);
    scan_length(q + r);
    scanned_radius = r;
  }
  const std::size_t max_len = buckets.empty() ? 0 : buckets.size() - 1;
  while (scanned_radius < std::max(q, max_len) && static_cast<double>(scanned_radius + 1) <= kth()) {
    const std::size_t r = ++scanned_radius;
    if (q >= r) scan_length(q - r);
    scan_length(q + r);
  }
  return top;
}

std::string nearest_word(std::span<const int> phonemes, const Lexicon& lexicon) {
  auto top = nearest_words(phonemes, lexicon, 1);
  return top.front().word;
}

}  // namespace kpat::phon
