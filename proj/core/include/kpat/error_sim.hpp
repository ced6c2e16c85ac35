#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "kpat/corpus.hpp"
#include "kpat/lexicon.hpp"
#include "kpat/random.hpp"

namespace kpat::sim {

/// full_names, airports, street_names, cities_states.
const std::vector<std::string>& domains();

/// Per-domain entity lists in popularity order (line 1 = rank 1).
struct Catalog {
  std::map<std::string, std::vector<std::string>> entities;

  std::size_t size() const;
  static Catalog load(const std::string& dir);
  void save(const std::string& dir) const;
};

/// Per-domain carrier phrases containing one "{entity}" placeholder.
struct Templates {
  std::map<std::string, std::vector<std::string>> phrases;

  static Templates load(const std::string& dir);
  void save(const std::string& dir) const;
};

struct NoiseParams {
  double sub_prob = 0.08;
  double ins_prob = 0.02;
  double del_prob = 0.02;
  double in_class_bias = 0.7;   // share of substitutions that stay within the phoneme class
  double slot_multiplier = 2.0;  // rate scale for slot words
  std::size_t n_voices = 3;
  std::uint64_t seed = 7;

  void validate() const;
  nlohmann::json to_json() const;
  static NoiseParams from_json(const nlohmann::json& j);
};

/// Zipf weights w_r = r^-s for ranks 1..n.
std::vector<double> zipf_weights(std::size_t n, double s);

/// Substitutes `entity` into `phrase` and records its character span.
data::Utterance fill_template(const std::string& phrase, const std::string& entity, const std::string& domain);

/// Samples a domain uniformly, then a template uniformly and an entity by
/// Zipf weight within that domain.
class ReferenceSampler {
 public:
  ReferenceSampler(const Catalog& catalog, const Templates& templates, double zipf_s);
  data::Utterance sample(Rng& rng) const;
  data::Utterance sample(Rng& rng, const std::string& domain) const;

 private:
  const Catalog& catalog_;
  const Templates& templates_;
  std::map<std::string, std::vector<double>> cumulative_;
};

/// Simulated recognizer: phonemize, perturb phonemes, map each word's chunk
/// back to the nearest lexicon word. Slot words are perturbed with a seed
/// that depends only on (seed, voice, word), so an entity has one rendering
/// per voice; carrier words also depend on the whole reference.
class Recognizer {
 public:
  Recognizer(const phon::Lexicon& lexicon, NoiseParams noise);
  std::string recognize(const data::Utterance& reference, std::size_t voice);
  /// Phoneme-level perturbation of one word.
  std::vector<int> perturb(const std::vector<int>& phones, bool slot, Rng& rng) const;

 private:
  const std::string& nearest(const std::vector<int>& phones);

  const phon::Lexicon& lexicon_;
  NoiseParams noise_;
  std::map<std::vector<int>, std::string> cache_;
};

/// Convenience wrapper: voice 0 of a fresh recognizer.
std::string corrupt(const data::Utterance& reference, const phon::Lexicon& lexicon, const NoiseParams& noise,
                    std::size_t voice = 0);

struct CorpusSizes {
  std::size_t references = 1000;  // split 80:10:10 into train/dev/test
  std::size_t train_variants = 2;  // recognitions per training reference, distinct voices
  std::size_t oov_memory_per_entity = 3;
  std::size_t oov_test_per_entity = 1;
  double zipf_s = 1.2;

  nlohmann::json to_json() const;
  static CorpusSizes from_json(const nlohmann::json& j);
};

struct Corpus {
  std::vector<data::Utterance> train, dev, test, oov;
};

/// OOV entities must not be training entities, and their out-of-lexicon words
/// must not occur in the training catalog.
Corpus build_corpus(const Catalog& catalog, const Catalog& oov_catalog, const Templates& templates,
                    const phon::Lexicon& lexicon, const CorpusSizes& sizes, const NoiseParams& noise,
                    std::uint64_t seed);

struct FixtureOptions {
  std::size_t entities_per_domain = 600;
  std::size_t oov_per_domain = 50;
  std::size_t first_names = 150;
  std::size_t distractors = 2500;
  std::uint64_t seed = 2024;
};

struct Fixture {
  phon::Lexicon lexicon;  // base entries + in-catalog entity words + distractors
  Catalog catalog;
  Catalog oov;
};

/// Deterministic synthetic entity catalogs. Generated words are pseudo-words
/// with letter-to-sound pronunciations that are unique within the lexicon.
Fixture generate_fixture(const phon::Lexicon& base, const FixtureOptions& options);

}  // namespace kpat::sim
