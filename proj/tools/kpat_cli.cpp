// kpat: command-line driver for data generation, training, memorization,
// indexing, decoding and evaluation.
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <iostream>
#include <optional>

#include "kpat/error.hpp"
#include "kpat/pipeline.hpp"

namespace {

using Overrides = std::vector<std::pair<std::string, std::string>>;

// Leftover "--dotted.key value" or "--dotted.key=value" arguments.
Overrides parse_overrides(const std::vector<std::string>& extras) {
  Overrides out;
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& a = extras[i];
    if (!a.starts_with("--") || a.size() < 3) {
      kpat::fail(kpat::ErrorKind::kConfig, "unexpected argument '" + a + "'");
    }
    const std::string body = a.substr(2);
    if (const auto eq = body.find('='); eq != std::string::npos) {
      out.emplace_back(body.substr(0, eq), body.substr(eq + 1));
    } else if (i + 1 < extras.size()) {
      out.emplace_back(body, extras[++i]);
    } else {
      kpat::fail(kpat::ErrorKind::kConfig, "override '" + a + "' has no value");
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("kpat"));
  spdlog::set_pattern("[%H:%M:%S] %^%l%$ %v");

  CLI::App app{"kNN-augmented phone-and-text ASR error corrector"};
  app.require_subcommand(1);
  app.allow_extras();
  std::string config_path;
  bool quiet = false;
  app.add_option("--config", config_path, "JSON run configuration");
  app.add_flag("-q,--quiet", quiet, "Only log warnings and errors");

  auto* gen_catalog = app.add_subcommand("gen-catalog", "Generate the lexicon and entity catalogs");
  auto* gen_data = app.add_subcommand("gen-data", "Generate train/dev/test/oov corpora");
  auto* train = app.add_subcommand("train", "Train the corrector");

  auto* build_ds = app.add_subcommand("build-datastore", "Memorize decoder states into a datastore");
  kpat::pipeline::DatastoreRequest ds_req;
  build_ds->add_option("--source", ds_req.source, "train, oov or train+oov")->capture_default_str();
  build_ds->add_option("--domain", ds_req.domain, "Keep only this slot domain");
  build_ds->add_option("--out", ds_req.output, "Output path (default paths.datastore)");

  auto* build_index = app.add_subcommand("build-index", "Build the IVF index over a datastore");
  bool self_check = false;
  std::string index_ds, index_out;
  build_index->add_flag("--self-check", self_check, "Query stored keys and expect distance 0");
  build_index->add_option("--datastore", index_ds, "Datastore path (default paths.datastore)");
  build_index->add_option("--out", index_out, "Output path (default paths.index)");

  auto* decode = app.add_subcommand("decode", "Correct ASR hypotheses");
  kpat::pipeline::DecodeRequest dec_req;
  std::optional<double> lambda;
  std::optional<std::size_t> k;
  decode->add_option("--mode", dec_req.mode, "pat or kpat")->capture_default_str();
  decode->add_option("--split", dec_req.split, "train, dev, test, oov_memory or oov_test")->capture_default_str();
  decode->add_option("--domain", dec_req.domain, "Decode only this slot domain");
  decode->add_option("--datastore", dec_req.datastore, "Datastore path (default paths.datastore)");
  decode->add_option("--index", dec_req.index, "Index path, or 'exact' for flat search");
  decode->add_option("--out", dec_req.output, "Output path (default paths.hyp)");
  decode->add_option("--lambda", lambda, "Interpolation weight");
  decode->add_option("--k", k, "Neighbors per step");
  decode->add_flag("--trace", dec_req.trace, "Write per-step retrieval traces");

  auto* eval = app.add_subcommand("eval", "Score hypotheses against references");
  kpat::pipeline::EvalRequest eval_req;
  eval->add_option("--hyp", eval_req.hyp, "Hypothesis JSONL")->required();
  eval->add_option("--baseline", eval_req.baseline, "Baseline hypotheses for WERR and frequency bins");
  eval->add_option("--split", eval_req.split, "Reference split")->capture_default_str();
  eval->add_option("--domain", eval_req.domain, "Score only this slot domain");
  eval->add_option("--out", eval_req.output, "Report path stem (default paths.reports/<hyp name>)");

  for (auto* sub : app.get_subcommands({})) sub->allow_extras();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }
  if (quiet) spdlog::set_level(spdlog::level::warn);

  try {
    std::vector<std::string> extras = app.remaining();
    for (auto* sub : app.get_subcommands()) {
      const auto more = sub->remaining();
      extras.insert(extras.end(), more.begin(), more.end());
    }
    Overrides overrides = parse_overrides(extras);
    if (lambda) overrides.emplace_back("knn.lambda", std::to_string(*lambda));
    if (k) overrides.emplace_back("knn.k", std::to_string(*k));
    const auto cfg = kpat::pipeline::RunConfig::load(config_path, overrides);

    if (gen_catalog->parsed()) {
      kpat::pipeline::gen_catalog(cfg);
    } else if (gen_data->parsed()) {
      kpat::pipeline::gen_data(cfg);
    } else if (train->parsed()) {
      kpat::pipeline::train(cfg);
    } else if (build_ds->parsed()) {
      kpat::pipeline::build_datastore(cfg, ds_req);
    } else if (build_index->parsed()) {
      if (kpat::pipeline::build_index(cfg, self_check, index_ds, index_out) > 0) return 3;
    } else if (decode->parsed()) {
      kpat::pipeline::decode(cfg, dec_req);
    } else if (eval->parsed()) {
      const auto report = kpat::pipeline::evaluate(cfg, eval_req);
      std::cout << report.dump(2) << '\n';
    }
  } catch (const kpat::Error& e) {
    spdlog::error("{}", e.what());
    return kpat::exit_code_for(e.kind());
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
