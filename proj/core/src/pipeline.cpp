#include "kpat/pipeline.hpp"

#include <spdlog/spdlog.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>

#include "kpat/ann_index.hpp"
#include "kpat/binary_io.hpp"
#include "kpat/datastore.hpp"
#include "kpat/error.hpp"
#include "kpat/eval.hpp"

namespace kpat::pipeline {

namespace fs = std::filesystem;

namespace {

void replace_all(std::string& s, std::string_view from, const std::string& to) {
  for (auto pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
}

void ensure_parent(const std::string& path) {
  const auto parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

void write_manifest(const std::string& artifact, const RunConfig& cfg, nlohmann::json extra = nlohmann::json::object()) {
  extra["provenance"] = provenance(cfg);
  write_text_file(artifact + ".meta.json", extra.dump(2) + "\n");
}

std::size_t json_size_field(const nlohmann::json& j, const char* key, std::size_t fallback) {
  try {
    return j.value(key, fallback);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kConfig, std::string("config field ") + key + ": " + e.what());
  }
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

const nlohmann::json& section(const nlohmann::json& j, const std::string& name) {
  if (!j.contains(name) || !j.at(name).is_object()) fail(ErrorKind::kConfig, "config field " + name + " must be an object");
  return j.at(name);
}

std::string hyp_text(const text::Vocabulary& vocab, std::span<const int> tokens) {
  return text::normalize(vocab.decode(tokens));
}

double corpus_wer(std::span<const data::Utterance> utts, std::span<const std::string> hyps) {
  return eval::evaluate(utts, hyps).overall.wer();
}

}  // namespace

nlohmann::json RunConfig::defaults() {
  return {
      {"seed", 1},
      {"paths",
       {{"data_dir", "data"},
        {"work_dir", "runs/desk"},
        {"base_lexicon", "{data_dir}/base_lexicon.txt"},
        {"templates", "{data_dir}/templates"},
        {"lexicon", "{data_dir}/lexicon.txt"},
        {"catalog", "{data_dir}/catalog"},
        {"oov_catalog", "{data_dir}/catalog/oov"},
        {"corpus_dir", "{work_dir}/corpus"},
        {"vocab", "{work_dir}/vocab.json"},
        {"checkpoint", "{work_dir}/model.patw"},
        {"train_log", "{work_dir}/train_log.tsv"},
        {"datastore", "{work_dir}/datastore.kpds"},
        {"index", "{work_dir}/index.kivf"},
        {"hyp", "{work_dir}/hyp.jsonl"},
        {"reports", "{work_dir}/reports"}}},
      {"fixture", {{"entities_per_domain", 600}, {"oov_per_domain", 50}, {"first_names", 150}, {"distractors", 2500}, {"seed", 2024}}},
      {"corpus", sim::CorpusSizes{}.to_json()},
      {"noise", sim::NoiseParams{}.to_json()},
      {"vocab_size", 1000},
      {"model", {{"preset", "desk"}}},
      {"train", model::TrainConfig{}.to_json()},
      {"schedule", {{"dev_every", 1}, {"dev_utterances", 200}, {"stop_train_accuracy", 0.0}, {"check_every", 10}}},
      {"datastore", {{"strict", false}}},
      {"index", {{"n_centroids", 0}, {"kmeans_iterations", 25}}},
      {"knn", knn::InterpolationParams{}.to_json()},
      {"decode", {{"max_len", 64}}},
  };
}

RunConfig RunConfig::from_json(const nlohmann::json& overlay) {
  if (!overlay.is_object()) fail(ErrorKind::kConfig, "config must be a JSON object");
  RunConfig c;
  c.json_ = defaults();
  c.json_.merge_patch(overlay);
  c.check();
  return c;
}

RunConfig RunConfig::load(const std::string& path, const std::vector<std::pair<std::string, std::string>>& overrides) {
  nlohmann::json overlay = nlohmann::json::object();
  if (!path.empty()) {
    if (!fs::exists(path)) fail(ErrorKind::kConfig, "config file '" + path + "' does not exist");
    try {
      overlay = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::kConfig, path + ": " + e.what());
    }
  }
  RunConfig c = from_json(overlay);
  for (const auto& [k, v] : overrides) c.set(k, v);
  c.check();
  return c;
}

void RunConfig::set(const std::string& dotted_key, const std::string& value) {
  if (dotted_key.empty()) fail(ErrorKind::kConfig, "empty override key");
  nlohmann::json parsed;
  try {
    parsed = nlohmann::json::parse(value);
  } catch (const nlohmann::json::exception&) {
    parsed = value;
  }
  nlohmann::json* node = &json_;
  std::string_view rest = dotted_key;
  while (true) {
    const auto dot = rest.find('.');
    const std::string part(rest.substr(0, dot));
    if (part.empty()) fail(ErrorKind::kConfig, "malformed override key '" + dotted_key + "'");
    if (!node->is_object()) fail(ErrorKind::kConfig, "override '" + dotted_key + "' descends into a non-object");
    if (dot == std::string_view::npos) {
      (*node)[part] = parsed;
      break;
    }
    node = &(*node)[part];
    rest.remove_prefix(dot + 1);
  }
}

void RunConfig::check() const {
  if (!json_.at("seed").is_number_integer() || json_.at("seed").get<std::int64_t>() < 0) fail(ErrorKind::kConfig, "config field seed must be a non-negative integer");
  for (const char* s : {"paths", "fixture", "corpus", "noise", "model", "train", "schedule", "datastore", "index", "knn", "decode"}) {
    section(json_, s);
  }
  for (const auto& [k, v] : json_.at("paths").items()) {
    if (!v.is_string()) fail(ErrorKind::kConfig, "config field paths." + k + " must be a string");
  }
  model().validate();
  knn().validate();
  noise().validate();
  corpus();
}

std::uint64_t RunConfig::seed() const { return json_.at("seed").get<std::uint64_t>(); }

std::string RunConfig::hash() const {
  // Locations do not change results, so paths are left out.
  nlohmann::json content = json_;
  content.erase("paths");
  return to_hex(sha256(content.dump())).substr(0, 16);
}

std::string RunConfig::path(const std::string& key) const {
  const auto& paths = json_.at("paths");
  if (!paths.contains(key)) fail(ErrorKind::kConfig, "config field paths." + key + " is missing");
  std::string p = paths.at(key).get<std::string>();
  if (key != "work_dir" && key != "data_dir") {
    replace_all(p, "{data_dir}", path("data_dir"));
    replace_all(p, "{work_dir}", path("work_dir"));
  }
  if (p.empty()) fail(ErrorKind::kConfig, "config field paths." + key + " is empty");
  return p;
}

std::string RunConfig::input_path(const std::string& key) const {
  const std::string p = path(key);
  if (!fs::exists(p)) fail(ErrorKind::kConfig, "config field paths." + key + ": '" + p + "' does not exist");
  return p;
}

model::PatConfig RunConfig::model() const {
  auto c = model::PatConfig::from_json(json_.at("model"));
  return c;
}

model::TrainConfig RunConfig::train() const {
  auto c = model::TrainConfig::from_json(json_.at("train"));
  c.seed = derive_seed(seed(), c.seed, 0x7472);
  return c;
}

knn::InterpolationParams RunConfig::knn() const { return knn::InterpolationParams::from_json(json_.at("knn")); }

sim::NoiseParams RunConfig::noise() const {
  auto n = sim::NoiseParams::from_json(json_.at("noise"));
  n.seed = derive_seed(seed(), n.seed, 0x6e6f);
  return n;
}

sim::CorpusSizes RunConfig::corpus() const { return sim::CorpusSizes::from_json(json_.at("corpus")); }

sim::FixtureOptions RunConfig::fixture() const {
  const auto& j = json_.at("fixture");
  sim::FixtureOptions o;
  try {
    o.entities_per_domain = j.value("entities_per_domain", o.entities_per_domain);
    o.oov_per_domain = j.value("oov_per_domain", o.oov_per_domain);
    o.first_names = j.value("first_names", o.first_names);
    o.distractors = j.value("distractors", o.distractors);
    o.seed = j.value("seed", o.seed);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kConfig, std::string("fixture: ") + e.what());
  }
  if (o.entities_per_domain == 0 || o.first_names == 0) fail(ErrorKind::kConfig, "fixture: entity counts must be >= 1");
  return o;
}

nlohmann::json provenance(const RunConfig& cfg) { return {{"config_hash", cfg.hash()}, {"seed", cfg.seed()}}; }

model::Example make_example(const data::Utterance& u, const text::Vocabulary& vocab, const phon::Lexicon& lexicon) {
  model::Example e;
  e.asr_tokens = vocab.encode(u.asr);
  e.phones = phon::phonemize(text::normalize(u.asr), lexicon);
  e.target = vocab.encode(u.ref);
  e.clean_tokens = e.target;
  return e;
}

std::vector<data::Utterance> load_split(const RunConfig& cfg, const std::string& split, const std::string& domain) {
  const std::string dir = cfg.input_path("corpus_dir");
  std::vector<data::Utterance> all;
  if (split == "train" || split == "dev" || split == "test") {
    all = data::read_corpus((fs::path(dir) / (split + ".jsonl")).string());
  } else if (split == "oov_memory" || split == "oov_test") {
    for (auto& u : data::read_corpus((fs::path(dir) / "oov.jsonl").string())) {
      if (u.split == split) all.push_back(std::move(u));
    }
  } else {
    fail(ErrorKind::kConfig, "unknown split '" + split + "' (train, dev, test, oov_memory, oov_test)");
  }
  if (!domain.empty()) std::erase_if(all, [&](const data::Utterance& u) { return u.domain() != domain; });
  return all;
}

void gen_catalog(const RunConfig& cfg) {
  const auto base = phon::Lexicon::load(cfg.input_path("base_lexicon"));
  const auto fixture = sim::generate_fixture(base, cfg.fixture());
  const std::string lexicon = cfg.path("lexicon");
  ensure_parent(lexicon);
  write_text_file(lexicon, fixture.lexicon.to_text());
  fixture.catalog.save(cfg.path("catalog"));
  fixture.oov.save(cfg.path("oov_catalog"));
  spdlog::info("gen-catalog: {} lexicon words, {} catalog entities, {} OOV entities", fixture.lexicon.size(),
               fixture.catalog.size(), fixture.oov.size());
}

void gen_data(const RunConfig& cfg) {
  const auto lexicon = phon::Lexicon::load(cfg.input_path("lexicon"));
  const auto catalog = sim::Catalog::load(cfg.input_path("catalog"));
  const auto oov = sim::Catalog::load(cfg.input_path("oov_catalog"));
  const auto templates = sim::Templates::load(cfg.input_path("templates"));
  const auto corpus = sim::build_corpus(catalog, oov, templates, lexicon, cfg.corpus(), cfg.noise(), cfg.seed());
  const fs::path dir = cfg.path("corpus_dir");
  fs::create_directories(dir);
  data::write_corpus((dir / "train.jsonl").string(), corpus.train);
  data::write_corpus((dir / "dev.jsonl").string(), corpus.dev);
  data::write_corpus((dir / "test.jsonl").string(), corpus.test);
  data::write_corpus((dir / "oov.jsonl").string(), corpus.oov);
  write_manifest((dir / "corpus").string(), cfg,
                 {{"train", corpus.train.size()},
                  {"dev", corpus.dev.size()},
                  {"test", corpus.test.size()},
                  {"oov", corpus.oov.size()},
                  {"sizes", cfg.corpus().to_json()},
                  {"noise", cfg.noise().to_json()}});
}

void train(const RunConfig& cfg) {
  const auto lexicon = phon::Lexicon::load(cfg.input_path("lexicon"));
  const auto train_utts = load_split(cfg, "train");
  const auto dev_utts = load_split(cfg, "dev");
  if (train_utts.empty()) fail(ErrorKind::kConfig, "train split is empty");

  std::vector<std::string> texts;
  for (const auto& u : train_utts) {
    texts.push_back(u.ref);
    texts.push_back(u.asr);
  }
  std::vector<std::string> warnings;
  const auto vocab = text::Vocabulary::train(texts, json_size_field(cfg.json(), "vocab_size", 1000), &warnings);
  for (const auto& w : warnings) spdlog::warn("vocab: {}", w);
  const std::string vocab_path = cfg.path("vocab");
  ensure_parent(vocab_path);
  vocab.save(vocab_path);
  write_manifest(vocab_path, cfg, {{"version", vocab.version()}, {"size", vocab.size()}});

  std::vector<model::Example> examples;
  for (const auto& u : train_utts) examples.push_back(make_example(u, vocab, lexicon));

  const auto& sched = cfg.json().at("schedule");
  const std::size_t dev_every = sched.value("dev_every", std::size_t{1});
  const std::size_t dev_n = std::min(sched.value("dev_utterances", std::size_t{200}), dev_utts.size());
  const double stop_acc = sched.value("stop_train_accuracy", 0.0);
  const std::size_t check_every = std::max<std::size_t>(1, sched.value("check_every", std::size_t{10}));
  const std::span<const data::Utterance> dev_subset(dev_utts.data(), dev_n);
  std::vector<model::Example> dev_examples;
  for (const auto& u : dev_subset) dev_examples.push_back(make_example(u, vocab, lexicon));
  const std::size_t max_len = cfg.json().at("decode").value("max_len", std::size_t{64});

  auto mc = cfg.model();
  mc.text_vocab = vocab.size();
  model::PatModel<float> model(mc, derive_seed(cfg.seed(), 0x6d6f));
  const auto tc = cfg.train();
  model::Trainer trainer(model, tc);
  spdlog::info("train: {} examples, {} parameters, vocab {}", examples.size(), model.parameter_count(), vocab.size());

  const std::string log_path = cfg.path("train_log");
  ensure_parent(log_path);
  std::ofstream log(log_path);
  log << "epoch\tsteps\tlr\ttrain_loss\tdev_wer\tseconds\n";
  const auto t0 = std::chrono::steady_clock::now();
  for (std::size_t epoch = 1; epoch <= tc.epochs; ++epoch) {
    const auto stats = trainer.run_epoch(examples);
    std::string dev_wer = "";
    if (dev_n > 0 && dev_every > 0 && (epoch % dev_every == 0 || epoch == tc.epochs)) {
      std::vector<std::string> hyps;
      for (const auto& e : dev_examples) hyps.push_back(hyp_text(vocab, model::greedy_decode(model, e.asr_tokens, e.phones, max_len)));
      std::ostringstream s;
      s << std::fixed << std::setprecision(4) << corpus_wer(dev_subset, hyps);
      dev_wer = s.str();
    }
    const double lr = model::learning_rate(tc, mc.d_model, std::max<std::size_t>(1, trainer.steps()));
    log << epoch << '\t' << trainer.steps() << '\t' << lr << '\t' << std::setprecision(6) << stats.mean_loss << '\t'
        << dev_wer << '\t' << std::setprecision(4) << seconds_since(t0) << '\n';
    log.flush();
    spdlog::info("epoch {}: loss {:.4f} dev_wer {} ({:.0f}s)", epoch, stats.mean_loss, dev_wer.empty() ? "-" : dev_wer,
                 seconds_since(t0));
    if (stop_acc > 0.0 && epoch % check_every == 0) {
      const double acc = model::token_accuracy(model, examples);
      spdlog::info("epoch {}: train token accuracy {:.4f}", epoch, acc);
      if (acc >= stop_acc) break;
    }
  }
  nlohmann::json meta = {{"provenance", provenance(cfg)}, {"tokenizer_version", vocab.version()}, {"train", tc.to_json()}};
  const std::string ckpt = cfg.path("checkpoint");
  ensure_parent(ckpt);
  model::save_model(model, ckpt, meta);
}

Loaded load_trained(const RunConfig& cfg) {
  auto vocab = text::Vocabulary::load(cfg.input_path("vocab"));
  auto lexicon = phon::Lexicon::load(cfg.input_path("lexicon"));
  nlohmann::json meta;
  auto model = model::load_model(cfg.input_path("checkpoint"), &meta);
  if (meta.value("tokenizer_version", std::string()) != vocab.version()) {
    fail(ErrorKind::kDataMismatch, "checkpoint was trained with a different vocabulary");
  }
  return {std::move(vocab), std::move(lexicon), std::move(model)};
}

void build_datastore(const RunConfig& cfg, const DatastoreRequest& request) {
  auto [vocab, lexicon, model] = load_trained(cfg);
  std::vector<std::string> splits;
  if (request.source == "train") {
    splits = {"train"};
  } else if (request.source == "oov") {
    splits = {"oov_memory"};
  } else if (request.source == "train+oov") {
    splits = {"train", "oov_memory"};
  } else {
    fail(ErrorKind::kConfig, "datastore source must be train, oov or train+oov, got '" + request.source + "'");
  }
  store::BuildOptions options;
  options.strict_paper = cfg.json().at("datastore").value("strict", false);
  options.domain_filter = request.domain;
  std::vector<store::Datastore> parts;
  for (const auto& split : splits) {
    std::vector<store::MemoryItem> items;
    for (const auto& u : load_split(cfg, split)) {
      auto e = make_example(u, vocab, lexicon);
      items.push_back({std::move(e.asr_tokens), std::move(e.phones), std::move(e.target), u.domain()});
    }
    parts.push_back(store::build_datastore(model, vocab.version(), items, options));
  }
  store::Datastore ds = std::move(parts.front());
  for (std::size_t i = 1; i < parts.size(); ++i) ds = store::merge_datastores(ds, parts[i]);
  if (ds.empty()) spdlog::warn("build-datastore: no entries (domain filter '{}')", request.domain);
  const std::string out = request.output.empty() ? cfg.path("datastore") : request.output;
  ensure_parent(out);
  ds.save(out);
  write_manifest(out, cfg,
                 {{"source", request.source}, {"domain", request.domain}, {"entries", ds.size()},
                  {"checksum", to_hex(ds.checksum())}, {"strict", options.strict_paper}});
  spdlog::info("build-datastore: {} entries from {} -> {}", ds.size(), request.source, out);
}

std::size_t build_index(const RunConfig& cfg, bool self_check, const std::string& datastore, const std::string& output) {
  const std::string ds_path = datastore.empty() ? cfg.input_path("datastore") : datastore;
  const auto ds = store::Datastore::load(ds_path);
  if (ds.empty()) fail(ErrorKind::kDataMismatch, "build-index: datastore '" + ds_path + "' is empty");
  const auto& ij = cfg.json().at("index");
  std::size_t n = json_size_field(ij, "n_centroids", 0);
  if (n == 0) n = ann::default_centroids(ds.size());
  n = std::min(n, ds.size());
  ann::KMeansOptions km;
  km.iterations = json_size_field(ij, "kmeans_iterations", 25);
  km.seed = derive_seed(cfg.seed(), 0x6976);
  auto index = ann::IvfIndex::train(ds.keys, ds.dim, n, km);
  index.add(ds);
  const std::string out = output.empty() ? cfg.path("index") : output;
  ensure_parent(out);
  index.save(out, ds.checksum());
  write_manifest(out, cfg, {{"datastore", to_hex(ds.checksum())}, {"n_centroids", n}, {"entries", ds.size()}});
  spdlog::info("build-index: {} centroids over {} entries -> {}", n, ds.size(), out);
  std::size_t failures = 0;
  if (self_check) {
    const auto loaded = ann::IvfIndex::load(out, ds);
    const std::size_t probes = std::min<std::size_t>(ds.size(), 100);
    for (std::size_t i = 0; i < probes; ++i) {
      const std::size_t id = i * ds.size() / probes;
      const auto hits = loaded.search(ds.key(id), 1, 1);
      if (hits.empty() || hits.front().distance != 0.0f) ++failures;
    }
    if (failures) {
      spdlog::error("build-index self-check: {} of {} self-queries missed distance 0", failures, probes);
    } else {
      spdlog::info("build-index self-check: {} self-queries at distance 0", probes);
    }
  }
  return failures;
}

void decode(const RunConfig& cfg, const DecodeRequest& request) {
  if (request.mode != "pat" && request.mode != "kpat") fail(ErrorKind::kConfig, "decode mode must be pat or kpat");
  auto [vocab, lexicon, model] = load_trained(cfg);
  const auto utts = load_split(cfg, request.split, request.domain);
  const std::size_t max_len = json_size_field(cfg.json().at("decode"), "max_len", 64);
  auto params = cfg.knn();

  store::Datastore ds;
  ann::IvfIndex index;
  std::unique_ptr<knn::Searcher> searcher;
  if (request.mode == "kpat") {
    const std::string ds_path = request.datastore.empty() ? cfg.input_path("datastore") : request.datastore;
    ds = store::Datastore::load(ds_path);
    if (!ds.empty()) {
      if (request.index == "exact") {
        searcher = std::make_unique<knn::ExactSearcher>(ds);
      } else {
        const std::string index_path = request.index.empty() ? cfg.input_path("index") : request.index;
        index = ann::IvfIndex::load(index_path, ds);
        params.nprobe = std::min(params.nprobe, index.n_centroids());
        searcher = std::make_unique<knn::IvfSearcher>(index, params.nprobe);
      }
    }
  }
  std::optional<knn::KnnDecoder> decoder;
  if (request.mode == "kpat") decoder.emplace(model, &ds, searcher.get(), params);

  const std::string out = request.output.empty() ? cfg.path("hyp") : request.output;
  ensure_parent(out);
  std::ofstream hyp(out, std::ios::binary);
  std::ofstream trace;
  if (request.trace) trace.open(out + ".trace.jsonl", std::ios::binary);
  const auto prov = provenance(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  for (std::size_t i = 0; i < utts.size(); ++i) {
    const auto e = make_example(utts[i], vocab, lexicon);
    std::vector<int> tokens;
    if (decoder) {
      auto r = decoder->decode(e.asr_tokens, e.phones, max_len, request.trace);
      tokens = std::move(r.tokens);
      if (request.trace) trace << nlohmann::json{{"index", i}, {"steps", knn::trace_to_json(r.steps)}}.dump() << '\n';
    } else {
      tokens = model::greedy_decode(model, e.asr_tokens, e.phones, max_len);
    }
    hyp << nlohmann::json{{"index", i}, {"input", utts[i].asr}, {"output", hyp_text(vocab, tokens)},
                          {"mode", request.mode}, {"config_hash", prov["config_hash"]}, {"seed", prov["seed"]}}
               .dump()
        << '\n';
  }
  if (!hyp) fail(ErrorKind::kIo, "could not write " + out);
  nlohmann::json meta = {{"mode", request.mode}, {"split", request.split}, {"domain", request.domain},
                         {"utterances", utts.size()}};
  if (request.mode == "kpat") {
    meta["knn"] = params.to_json();
    meta["datastore"] = to_hex(ds.checksum());
    meta["search"] = request.index == "exact" ? "exact" : "ivf";
  }
  write_manifest(out, cfg, meta);
  spdlog::info("decode: {} {} utterances in {:.1f}s -> {}", utts.size(), request.mode, seconds_since(t0), out);
}

nlohmann::json evaluate(const RunConfig& cfg, const EvalRequest& request) {
  const auto utts = load_split(cfg, request.split, request.domain);
  const auto hyps = data::read_hypotheses(request.hyp);
  auto report = eval::evaluate(utts, hyps);
  report.seed = cfg.seed();
  nlohmann::json j = {{"provenance", provenance(cfg)}, {"split", request.split}, {"domain", request.domain},
                      {"report", report.to_json()}};
  std::string stem = request.output;
  if (stem.empty()) stem = (fs::path(cfg.path("reports")) / fs::path(request.hyp).stem()).string();
  ensure_parent(stem);
  if (!request.baseline.empty()) {
    const auto base_hyps = data::read_hypotheses(request.baseline);
    auto base = eval::evaluate(utts, base_hyps);
    base.seed = cfg.seed();
    j["baseline"] = base.to_json();
    j["comparison"] = eval::compare_report(base, report).to_json();
    const auto freq = eval::slot_frequencies(load_split(cfg, "train"));
    const auto rows = eval::binned_report(freq, utts, base_hyps, hyps);
    j["bins"] = eval::bins_to_json(rows);
    write_text_file(stem + ".tsv", eval::bins_to_tsv(rows));
  }
  write_text_file(stem + ".json", j.dump(2) + "\n");
  return j;
}

}  // namespace kpat::pipeline
