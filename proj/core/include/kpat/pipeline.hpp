#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "kpat/corpus.hpp"
#include "kpat/error_sim.hpp"
#include "kpat/knn_decode.hpp"
#include "kpat/lexicon.hpp"
#include "kpat/pat_model.hpp"
#include "kpat/tokenizer.hpp"
#include "kpat/trainer.hpp"

namespace kpat::pipeline {

/// Effective run configuration: built-in defaults, then the config file, then
/// `--dotted.key value` overrides. Path strings may reference "{data_dir}" and
/// "{work_dir}".
class RunConfig {
 public:
  static nlohmann::json defaults();
  static RunConfig from_json(const nlohmann::json& overlay);
  static RunConfig load(const std::string& path, const std::vector<std::pair<std::string, std::string>>& overrides = {});

  /// Sets a dotted key. The value is parsed as JSON when possible, else kept as a string.
  void set(const std::string& dotted_key, const std::string& value);

  const nlohmann::json& json() const { return json_; }
  std::uint64_t seed() const;
  /// First 16 hex digits of the SHA-256 of the canonical config dump.
  std::string hash() const;
  /// Resolved "paths.<key>"; a missing entry is a config error naming the field.
  std::string path(const std::string& key) const;
  /// Like path(), and the file or directory must exist.
  std::string input_path(const std::string& key) const;

  model::PatConfig model() const;
  model::TrainConfig train() const;
  knn::InterpolationParams knn() const;
  sim::NoiseParams noise() const;
  sim::CorpusSizes corpus() const;
  sim::FixtureOptions fixture() const;

 private:
  void check() const;
  nlohmann::json json_;
};

/// Config hash and seed stamped into every artifact.
nlohmann::json provenance(const RunConfig& cfg);

/// Model-ready tensors for one utterance.
model::Example make_example(const data::Utterance& u, const text::Vocabulary& vocab, const phon::Lexicon& lexicon);

struct Loaded {
  text::Vocabulary vocab;
  phon::Lexicon lexicon;
  model::PatModel<float> model;
};
/// Vocabulary, lexicon and checkpoint of a trained run; the checkpoint must match the vocabulary.
Loaded load_trained(const RunConfig& cfg);

// Commands. Each reads its inputs from the configured paths and writes its artifacts there.

/// Lexicon, entity catalogs and OOV catalogs from the base lexicon.
void gen_catalog(const RunConfig& cfg);
/// train/dev/test/oov JSONL files under paths.corpus_dir.
void gen_data(const RunConfig& cfg);
/// Vocabulary, checkpoint and per-epoch TSV log.
void train(const RunConfig& cfg);

struct DatastoreRequest {
  std::string source = "train";  // train | oov | train+oov
  std::string domain;            // empty = all domains
  std::string output;            // empty = paths.datastore
};
void build_datastore(const RunConfig& cfg, const DatastoreRequest& request = {});

/// Returns the number of self-check failures (0 when not requested).
std::size_t build_index(const RunConfig& cfg, bool self_check, const std::string& datastore = "",
                        const std::string& output = "");

struct DecodeRequest {
  std::string mode = "pat";  // pat | kpat
  std::string split = "test";  // train | dev | test | oov_memory | oov_test
  std::string domain;  // empty = every utterance of the split
  std::string datastore;  // empty = paths.datastore
  std::string index;  // empty = paths.index; "exact" = flat search
  std::string output;  // empty = paths.hyp
  bool trace = false;
};
/// Writes one JSON line per input utterance, in input order.
void decode(const RunConfig& cfg, const DecodeRequest& request);

struct EvalRequest {
  std::string hyp;
  std::string baseline;  // optional
  std::string split = "test";
  std::string domain;
  std::string output;  // report path stem; empty = paths.reports/<hyp stem>
};
nlohmann::json evaluate(const RunConfig& cfg, const EvalRequest& request);

/// Utterances of a split, in file order.
std::vector<data::Utterance> load_split(const RunConfig& cfg, const std::string& split,
                                        const std::string& domain = "");

}  // namespace kpat::pipeline
