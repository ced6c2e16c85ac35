#include "kpat/error_sim.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "kpat/binary_io.hpp"
#include "kpat/error.hpp"
#include "kpat/tokenizer.hpp"

namespace kpat::sim {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kPlaceholder = "{entity}";

std::vector<std::string> read_lines(const std::string& path) {
  std::istringstream in(read_text_file(path));
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    line = text::normalize(line);
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::string text;
  for (const auto& l : lines) text += l + "\n";
  write_text_file(path, text);
}

// Spans of each word in a normalized string.
std::vector<std::pair<std::size_t, std::size_t>> word_spans(const std::string& s) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && s[i] == ' ') ++i;
    const std::size_t start = i;
    while (i < s.size() && s[i] != ' ') ++i;
    if (i > start) out.emplace_back(start, i);
  }
  return out;
}

std::vector<std::string> words_in(const std::string& entity) { return text::split_words(entity); }

}  // namespace

const std::vector<std::string>& domains() {
  static const std::vector<std::string> d = {"full_names", "airports", "street_names", "cities_states"};
  return d;
}

std::size_t Catalog::size() const {
  std::size_t n = 0;
  for (const auto& [_, list] : entities) n += list.size();
  return n;
}

Catalog Catalog::load(const std::string& dir) {
  Catalog c;
  for (const auto& d : domains()) {
    const std::string path = (fs::path(dir) / (d + ".txt")).string();
    if (!fs::exists(path)) continue;
    c.entities[d] = read_lines(path);
  }
  if (c.entities.empty()) fail(ErrorKind::kConfig, "catalog directory " + dir + " holds no domain files");
  return c;
}

void Catalog::save(const std::string& dir) const {
  fs::create_directories(dir);
  for (const auto& [d, list] : entities) write_lines((fs::path(dir) / (d + ".txt")).string(), list);
}

Templates Templates::load(const std::string& dir) {
  Templates t;
  for (const auto& d : domains()) {
    const std::string path = (fs::path(dir) / (d + ".txt")).string();
    if (!fs::exists(path)) continue;
    auto lines = read_lines(path);
    for (const auto& l : lines) {
      if (l.find(kPlaceholder) == std::string::npos) {
        fail(ErrorKind::kFormat, path + ": template without {entity}: '" + l + "'");
      }
    }
    t.phrases[d] = std::move(lines);
  }
  return t;
}

void Templates::save(const std::string& dir) const {
  fs::create_directories(dir);
  for (const auto& [d, list] : phrases) write_lines((fs::path(dir) / (d + ".txt")).string(), list);
}

void NoiseParams::validate() const {
  for (double p : {sub_prob, ins_prob, del_prob, in_class_bias}) {
    if (!(p >= 0.0 && p <= 1.0)) fail(ErrorKind::kConfig, "noise: probabilities must be in [0, 1]");
  }
  if (sub_prob + del_prob > 0.9) fail(ErrorKind::kConfig, "noise: sub_prob + del_prob must be <= 0.9");
  if (slot_multiplier < 0.0) fail(ErrorKind::kConfig, "noise: slot_multiplier must be >= 0");
  if (n_voices == 0) fail(ErrorKind::kConfig, "noise: n_voices must be >= 1");
}

nlohmann::json NoiseParams::to_json() const {
  return {{"sub_prob", sub_prob},
          {"ins_prob", ins_prob},
          {"del_prob", del_prob},
          {"in_class_bias", in_class_bias},
          {"slot_multiplier", slot_multiplier},
          {"n_voices", n_voices},
          {"seed", seed}};
}

NoiseParams NoiseParams::from_json(const nlohmann::json& j) {
  NoiseParams n;
  try {
    n.sub_prob = j.value("sub_prob", n.sub_prob);
    n.ins_prob = j.value("ins_prob", n.ins_prob);
    n.del_prob = j.value("del_prob", n.del_prob);
    n.in_class_bias = j.value("in_class_bias", n.in_class_bias);
    n.slot_multiplier = j.value("slot_multiplier", n.slot_multiplier);
    n.n_voices = j.value("n_voices", n.n_voices);
    n.seed = j.value("seed", n.seed);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kConfig, std::string("noise: ") + e.what());
  }
  n.validate();
  return n;
}

std::vector<double> zipf_weights(std::size_t n, double s) {
  std::vector<double> w(n);
  for (std::size_t r = 0; r < n; ++r) w[r] = std::pow(static_cast<double>(r + 1), -s);
  return w;
}

data::Utterance fill_template(const std::string& phrase, const std::string& entity, const std::string& domain) {
  const auto pos = phrase.find(kPlaceholder);
  if (pos == std::string::npos) fail(ErrorKind::kParameter, "template without {entity}: '" + phrase + "'");
  if (entity.empty()) fail(ErrorKind::kParameter, "empty entity");
  data::Utterance u;
  u.ref = phrase.substr(0, pos) + entity + phrase.substr(pos + kPlaceholder.size());
  u.slots.push_back({pos, pos + entity.size(), domain});
  return u;
}

ReferenceSampler::ReferenceSampler(const Catalog& catalog, const Templates& templates, double zipf_s)
    : catalog_(catalog), templates_(templates) {
  for (const auto& [d, list] : catalog.entities) {
    if (list.empty()) continue;
    if (!templates.phrases.contains(d) || templates.phrases.at(d).empty()) {
      fail(ErrorKind::kConfig, "no templates for domain " + d);
    }
    auto w = zipf_weights(list.size(), zipf_s);
    for (std::size_t i = 1; i < w.size(); ++i) w[i] += w[i - 1];
    cumulative_[d] = std::move(w);
  }
  if (cumulative_.empty()) fail(ErrorKind::kParameter, "empty catalog");
}

data::Utterance ReferenceSampler::sample(Rng& rng) const {
  auto it = cumulative_.begin();
  std::advance(it, static_cast<std::ptrdiff_t>(rng.below(cumulative_.size())));
  return sample(rng, it->first);
}

data::Utterance ReferenceSampler::sample(Rng& rng, const std::string& domain) const {
  const auto& phrases = templates_.phrases.at(domain);
  const std::string& phrase = phrases[rng.below(phrases.size())];
  const std::size_t rank = rng.pick_cumulative(cumulative_.at(domain));
  data::Utterance u = fill_template(phrase, catalog_.entities.at(domain)[rank], domain);
  u.freq_rank = rank + 1;
  return u;
}

Recognizer::Recognizer(const phon::Lexicon& lexicon, NoiseParams noise) : lexicon_(lexicon), noise_(noise) {
  noise_.validate();
  if (lexicon_.empty()) fail(ErrorKind::kParameter, "recognizer: empty lexicon");
}

std::vector<int> Recognizer::perturb(const std::vector<int>& phones, bool slot, Rng& rng) const {
  const double m = slot ? noise_.slot_multiplier : 1.0;
  double sub = noise_.sub_prob * m, del = noise_.del_prob * m;
  const double ins = std::min(1.0, noise_.ins_prob * m);
  if (sub + del > 0.9) {
    const double scale = 0.9 / (sub + del);
    sub *= scale;
    del *= scale;
  }
  static const std::vector<int> all = phon::all_phones();
  auto other_from = [&](const std::vector<int>& pool, int p) {
    std::vector<int> c;
    for (int q : pool) {
      if (q != p) c.push_back(q);
    }
    return c.empty() ? p : c[rng.below(c.size())];
  };
  std::vector<int> out;
  for (int p : phones) {
    const double u = rng.uniform();
    if (u < del) {
      // dropped
    } else if (u < del + sub) {
      if (rng.bernoulli(noise_.in_class_bias)) {
        out.push_back(other_from(phon::phones_in_class(phon::phone_class(p)), p));
      } else {
        out.push_back(other_from(all, p));
      }
    } else {
      out.push_back(p);
    }
    if (rng.bernoulli(ins)) out.push_back(all[rng.below(all.size())]);
  }
  return out;
}

const std::string& Recognizer::nearest(const std::vector<int>& phones) {
  auto it = cache_.find(phones);
  if (it != cache_.end()) return it->second;
  return cache_.emplace(phones, phon::nearest_word(phones, lexicon_)).first->second;
}

std::string Recognizer::recognize(const data::Utterance& reference, std::size_t voice) {
  const std::string ref = text::normalize(reference.ref);
  const auto spans = word_spans(ref);
  const std::uint64_t context = hash_string(ref);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < spans.size(); ++i) {
    const auto [start, end] = spans[i];
    const std::string word = ref.substr(start, end - start);
    bool slot = false;
    for (const auto& s : reference.slots) slot = slot || (start >= s.start && end <= s.end);
    const auto pron = phon::pronounce(word, lexicon_);
    Rng rng(slot ? derive_seed(noise_.seed, voice + 1, hash_string(word))
                 : derive_seed(noise_.seed ^ context, voice + 1, hash_string(word) + i));
    const auto heard = perturb(pron, slot, rng);
    if (heard.empty()) continue;
    if (heard == pron && lexicon_.contains(word)) {
      out.push_back(word);
    } else {
      out.push_back(nearest(heard));
    }
  }
  if (out.empty()) out.push_back(nearest(phon::pronounce(text::split_words(ref).front(), lexicon_)));
  std::string joined;
  for (const auto& w : out) joined += (joined.empty() ? "" : " ") + w;
  return joined;
}

std::string corrupt(const data::Utterance& reference, const phon::Lexicon& lexicon, const NoiseParams& noise,
                    std::size_t voice) {
  Recognizer r(lexicon, noise);
  return r.recognize(reference, voice);
}

nlohmann::json CorpusSizes::to_json() const {
  return {{"references", references},
          {"train_variants", train_variants},
          {"oov_memory_per_entity", oov_memory_per_entity},
          {"oov_test_per_entity", oov_test_per_entity},
          {"zipf_s", zipf_s}};
}

CorpusSizes CorpusSizes::from_json(const nlohmann::json& j) {
  CorpusSizes s;
  try {
    s.references = j.value("references", s.references);
    s.train_variants = j.value("train_variants", s.train_variants);
    s.oov_memory_per_entity = j.value("oov_memory_per_entity", s.oov_memory_per_entity);
    s.oov_test_per_entity = j.value("oov_test_per_entity", s.oov_test_per_entity);
    s.zipf_s = j.value("zipf_s", s.zipf_s);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kConfig, std::string("corpus sizes: ") + e.what());
  }
  if (s.references < 10) fail(ErrorKind::kConfig, "corpus sizes: need at least 10 references");
  if (s.train_variants == 0) fail(ErrorKind::kConfig, "corpus sizes: train_variants must be >= 1");
  return s;
}

Corpus build_corpus(const Catalog& catalog, const Catalog& oov_catalog, const Templates& templates,
                    const phon::Lexicon& lexicon, const CorpusSizes& sizes, const NoiseParams& noise,
                    std::uint64_t seed) {
  std::set<std::string> seen_words, seen_entities;
  for (const auto& [_, list] : catalog.entities) {
    for (const auto& e : list) {
      seen_entities.insert(e);
      for (const auto& w : words_in(e)) seen_words.insert(w);
    }
  }
  for (const auto& [d, list] : oov_catalog.entities) {
    for (const auto& e : list) {
      if (seen_entities.contains(e)) fail(ErrorKind::kDataMismatch, "OOV entity '" + e + "' is also a training entity");
      for (const auto& w : words_in(e)) {
        // Shared category words ("airport", state names) live in the lexicon.
        if (lexicon.contains(w)) continue;
        if (seen_words.contains(w)) {
          fail(ErrorKind::kDataMismatch, "OOV entity '" + e + "' shares the word '" + w + "' with the training catalog");
        }
      }
    }
  }

  Recognizer recognizer(lexicon, noise);
  const ReferenceSampler sampler(catalog, templates, sizes.zipf_s);
  Rng rng(derive_seed(seed, 0x636f));
  Corpus corpus;
  const std::size_t n_train = sizes.references * 8 / 10;
  const std::size_t n_dev = sizes.references / 10;
  std::vector<std::size_t> voices(noise.n_voices);
  for (std::size_t r = 0; r < sizes.references; ++r) {
    data::Utterance ref = sampler.sample(rng);
    for (std::size_t v = 0; v < voices.size(); ++v) voices[v] = v;
    rng.shuffle(voices.begin(), voices.end());
    if (r < n_train) {
      ref.split = "train";
      for (std::size_t v = 0; v < std::min(sizes.train_variants, voices.size()); ++v) {
        data::Utterance u = ref;
        u.asr = recognizer.recognize(ref, voices[v]);
        corpus.train.push_back(std::move(u));
      }
    } else {
      ref.split = r < n_train + n_dev ? "dev" : "test";
      ref.asr = recognizer.recognize(ref, voices[0]);
      (r < n_train + n_dev ? corpus.dev : corpus.test).push_back(std::move(ref));
    }
  }

  for (const auto& [d, list] : oov_catalog.entities) {
    const auto& phrases = templates.phrases.at(d);
    for (const auto& entity : list) {
      for (std::size_t k = 0; k < sizes.oov_memory_per_entity + sizes.oov_test_per_entity; ++k) {
        data::Utterance u = fill_template(phrases[rng.below(phrases.size())], entity, d);
        u.split = k < sizes.oov_memory_per_entity ? "oov_memory" : "oov_test";
        u.asr = recognizer.recognize(u, rng.below(noise.n_voices));
        corpus.oov.push_back(std::move(u));
      }
    }
  }
  spdlog::info("corpus: {} train, {} dev, {} test, {} oov utterances", corpus.train.size(), corpus.dev.size(),
               corpus.test.size(), corpus.oov.size());
  return corpus;
}

namespace {

const std::vector<std::string> kStates = {
    "alabama",      "alaska",        "arizona",       "arkansas",     "california",  "colorado",
    "connecticut",  "delaware",      "florida",       "georgia",      "hawaii",      "idaho",
    "illinois",     "indiana",       "iowa",          "kansas",       "kentucky",    "louisiana",
    "maine",        "maryland",      "massachusetts", "michigan",     "minnesota",   "mississippi",
    "missouri",     "montana",       "nebraska",      "nevada",       "new hampshire", "new jersey",
    "new mexico",   "new york",      "north carolina", "north dakota", "ohio",       "oklahoma",
    "oregon",       "pennsylvania",  "rhode island",  "south carolina", "south dakota", "tennessee",
    "texas",        "utah",          "vermont",       "virginia",     "washington",  "west virginia",
    "wisconsin",    "wyoming"};

const std::vector<std::string> kStreetTypes = {"street", "avenue", "road", "drive", "lane"};

// Syllable pieces chosen so letter_to_sound gives stable, pronounceable output.
const std::vector<std::string> kOnsets = {"b", "br", "c", "ch", "d", "dr", "f", "fl", "g", "gr", "h", "j", "k",
                                          "l", "m", "n", "p", "pr", "r", "s", "sh", "st", "t", "th", "tr", "v", "w", "z"};
const std::vector<std::string> kNuclei = {"a", "e", "i", "o", "u", "ai", "ee", "oo", "ou", "oa"};
const std::vector<std::string> kCodas = {"", "", "", "n", "r", "l", "s", "m", "rd", "ck", "nt", "ld", "st", "ng"};

struct WordStyle {
  std::size_t min_syllables, max_syllables;
  std::vector<std::string> suffixes;  // appended to the syllables when non-empty
};

const WordStyle kFirstName{1, 2, {"a", "ie", "o", "y", "en", "el", "an", "ice", "ine"}};
const WordStyle kLastName{1, 2, {"son", "ley", "ton", "wick", "dale", "ford", "er", "man", "well", "by", "ridge"}};
const WordStyle kPlace{1, 2, {"ville", "burg", "field", "ton", "ford", "port", "dale", "wood", "mont", "view"}};
const WordStyle kPlain{2, 3, {}};

class WordMaker {
 public:
  WordMaker(phon::Lexicon& lexicon, std::uint64_t seed) : lexicon_(lexicon), rng_(seed) {
    for (const auto& [w, prons] : lexicon.entries()) {
      used_.insert(w);
      for (const auto& p : prons) prons_.insert(p);
    }
  }

  // A fresh word whose spelling and pronunciation are unused. With `register_word`
  // the word joins the lexicon, otherwise it is only reserved.
  std::string make(const WordStyle& style, bool register_word) {
    for (int attempt = 0; attempt < 10000; ++attempt) {
      std::string w;
      const std::size_t n = style.min_syllables + rng_.below(style.max_syllables - style.min_syllables + 1);
      for (std::size_t s = 0; s < n; ++s) {
        w += kOnsets[rng_.below(kOnsets.size())];
        w += kNuclei[rng_.below(kNuclei.size())];
        if (s + 1 == n || rng_.bernoulli(0.3)) w += kCodas[rng_.below(kCodas.size())];
      }
      if (!style.suffixes.empty()) w += style.suffixes[rng_.below(style.suffixes.size())];
      if (w.size() < 3 || used_.contains(w)) continue;
      auto pron = phon::letter_to_sound(w);
      if (pron.size() < 2 || prons_.contains(pron)) continue;
      used_.insert(w);
      prons_.insert(pron);
      if (register_word) lexicon_.add(w, pron);
      return w;
    }
    fail(ErrorKind::kParameter, "fixture: could not find a fresh pseudo-word");
  }

  Rng& rng() { return rng_; }

 private:
  phon::Lexicon& lexicon_;
  Rng rng_;
  std::set<std::string> used_;
  std::set<phon::Pronunciation> prons_;
};

}  // namespace

Fixture generate_fixture(const phon::Lexicon& base, const FixtureOptions& options) {
  Fixture f;
  f.lexicon = base;
  for (const auto& s : kStates) {
    for (const auto& w : words_in(s)) {
      if (!f.lexicon.contains(w)) f.lexicon.add(w, phon::letter_to_sound(w));
    }
  }
  for (const auto& w : kStreetTypes) {
    if (!f.lexicon.contains(w)) f.lexicon.add(w, phon::letter_to_sound(w));
  }
  if (!f.lexicon.contains("airport")) f.lexicon.add("airport", phon::letter_to_sound("airport"));

  WordMaker maker(f.lexicon, derive_seed(options.seed, 0x6678));
  Rng& rng = maker.rng();

  auto names = [&](std::size_t n_entities, std::size_t n_first, bool in_lexicon) {
    std::vector<std::string> first, last, out;
    for (std::size_t i = 0; i < n_first; ++i) first.push_back(maker.make(kFirstName, in_lexicon));
    const std::size_t n_last = std::max<std::size_t>(1, n_entities * 2 / 3);
    for (std::size_t i = 0; i < n_last; ++i) last.push_back(maker.make(kLastName, in_lexicon));
    std::set<std::string> taken;
    while (out.size() < n_entities) {
      std::string e = first[rng.below(first.size())] + " " + last[rng.below(last.size())];
      if (taken.insert(e).second) out.push_back(e);
    }
    return out;
  };
  auto places = [&](std::size_t n, bool in_lexicon) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(maker.make(kPlace, in_lexicon) + " airport");
    return out;
  };
  auto streets = [&](std::size_t n, bool in_lexicon) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) {
      out.push_back(maker.make(kPlace, in_lexicon) + " " + kStreetTypes[rng.below(kStreetTypes.size())]);
    }
    return out;
  };
  auto cities = [&](std::size_t n, bool in_lexicon) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(maker.make(kPlace, in_lexicon) + " " + kStates[rng.below(kStates.size())]);
    return out;
  };

  const std::size_t n = options.entities_per_domain;
  const std::size_t n_oov = options.oov_per_domain;
  f.catalog.entities["full_names"] = names(n, options.first_names, true);
  f.catalog.entities["airports"] = places(n, true);
  f.catalog.entities["street_names"] = streets(n, true);
  f.catalog.entities["cities_states"] = cities(n, true);
  // OOV entity words are reserved but kept out of the recognition lexicon.
  f.oov.entities["full_names"] = names(n_oov, std::max<std::size_t>(2, options.first_names * n_oov / std::max<std::size_t>(n, 1)), false);
  f.oov.entities["airports"] = places(n_oov, false);
  f.oov.entities["street_names"] = streets(n_oov, false);
  f.oov.entities["cities_states"] = cities(n_oov, false);
  for (std::size_t i = 0; i < options.distractors; ++i) {
    const WordStyle* styles[] = {&kFirstName, &kLastName, &kPlace, &kPlain};
    maker.make(*styles[rng.below(4)], true);
  }
  for (auto& [_, list] : f.catalog.entities) rng.shuffle(list.begin(), list.end());
  return f;
}

}  // namespace kpat::sim
