#include "kpat/datastore.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>

#include "kpat/tokenizer.hpp"

namespace kpat::store {

namespace {

constexpr char kMagic[4] = {'K', 'P', 'A', 'T'};
constexpr std::uint32_t kVersion = 1;

// In-place softmax of scores[0..n), returned as double weights.
void softmax_inplace(std::vector<double>& w, std::size_t n) {
  const double mx = *std::max_element(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(n));
  double z = 0.0;
  for (std::size_t j = 0; j < n; ++j) z += (w[j] = std::exp(w[j] - mx));
  for (std::size_t j = 0; j < n; ++j) w[j] /= z;
}

}  // namespace

KeyMatrix pool_keys(const KeyMatrix& states) {
  const auto n = static_cast<std::size_t>(states.rows());
  const auto d = static_cast<std::size_t>(states.cols());
  KeyMatrix keys(states.rows(), states.cols());
  // Same loop order as CausalPooler, so the final row matches its last key bit for bit.
  auto row = [&](std::size_t j) { return states.data() + j * d; };
  std::vector<double> w(n), acc(d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double dot = 0.0;
      for (std::size_t c = 0; c < d; ++c) dot += static_cast<double>(row(i)[c]) * row(j)[c];
      w[j] = dot;
    }
    softmax_inplace(w, n);
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t c = 0; c < d; ++c) acc[c] += w[j] * row(j)[c];
    }
    for (std::size_t c = 0; c < d; ++c) keys(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = static_cast<float>(acc[c]);
  }
  return keys;
}

std::vector<float> query_key(const KeyMatrix& states) {
  if (states.rows() == 0) fail(ErrorKind::kParameter, "query_key: empty prefix");
  CausalPooler pooler(static_cast<std::size_t>(states.cols()));
  std::span<const float> key;
  for (Eigen::Index r = 0; r < states.rows(); ++r) {
    key = pooler.push(std::span<const float>(states.row(r).data(), static_cast<std::size_t>(states.cols())));
  }
  return {key.begin(), key.end()};
}

std::span<const float> CausalPooler::push(std::span<const float> state) {
  if (state.size() != dim_) fail(ErrorKind::kShape, "causal pooler: state has wrong dimension");
  rows_.insert(rows_.end(), state.begin(), state.end());
  const std::size_t n = size();
  weights_.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    double dot = 0.0;
    const float* row = rows_.data() + j * dim_;
    for (std::size_t c = 0; c < dim_; ++c) dot += static_cast<double>(state[c]) * row[c];
    weights_[j] = dot;
  }
  softmax_inplace(weights_, n);
  key_.assign(dim_, 0.0f);
  std::vector<double> acc(dim_, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    const float* row = rows_.data() + j * dim_;
    for (std::size_t c = 0; c < dim_; ++c) acc[c] += weights_[j] * row[c];
  }
  for (std::size_t c = 0; c < dim_; ++c) key_[c] = static_cast<float>(acc[c]);
  return key_;
}

std::string Datastore::domain_of(std::size_t i) const {
  for (const auto& r : domains) {
    if (i >= r.begin && i < r.end) return r.domain;
  }
  return {};
}

void Datastore::append(std::span<const float> key, std::uint32_t value, const std::string& domain) {
  if (key.size() != dim) fail(ErrorKind::kShape, "datastore: key dimension mismatch");
  for (float x : key) {
    if (!std::isfinite(x)) fail(ErrorKind::kNumeric, "datastore: non-finite key");
  }
  const std::uint64_t id = values.size();
  keys.insert(keys.end(), key.begin(), key.end());
  values.push_back(value);
  if (domain.empty()) return;
  if (!domains.empty() && domains.back().domain == domain && domains.back().end == id) {
    domains.back().end = id + 1;
  } else {
    domains.push_back({domain, id, id + 1});
  }
}

std::vector<std::uint8_t> Datastore::encode() const {
  ByteWriter w;
  w.bytes(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(kMagic), 4));
  w.u32(kVersion);
  w.u32(dim);
  w.u64(values.size());
  w.bytes(model_checksum);
  for (float x : keys) w.f32(x);
  for (std::uint32_t v : values) w.u32(v);
  nlohmann::json trailer;
  trailer["tokenizer_version"] = tokenizer_version;
  trailer["domains"] = nlohmann::json::array();
  for (const auto& r : domains) trailer["domains"].push_back({{"domain", r.domain}, {"begin", r.begin}, {"end", r.end}});
  const std::uint64_t offset = w.size();
  w.text(trailer.dump());
  w.u64(offset);
  return w.release();
}

Datastore Datastore::decode(std::span<const std::uint8_t> bytes, const std::string& what) {
  ByteReader r(bytes, what);
  const auto magic = r.bytes(4);
  if (!std::equal(magic.begin(), magic.end(), kMagic)) fail(ErrorKind::kFormat, what + ": not a datastore file");
  const std::uint32_t version = r.u32();
  if (version != kVersion) fail(ErrorKind::kFormat, what + ": unsupported version " + std::to_string(version));
  Datastore ds;
  ds.dim = r.u32();
  const std::uint64_t count = r.u64();
  const auto digest = r.bytes(32);
  std::copy(digest.begin(), digest.end(), ds.model_checksum.begin());
  if (ds.dim == 0 && count > 0) fail(ErrorKind::kFormat, what + ": zero key dimension");
  const std::uint64_t body = count * ds.dim * 4 + count * 4;
  if (r.remaining() < body + 8) fail(ErrorKind::kFormat, what + ": unexpected end of data");
  ds.keys.resize(count * ds.dim);
  for (auto& x : ds.keys) x = r.f32();
  ds.values.resize(count);
  for (auto& v : ds.values) v = r.u32();
  const std::size_t trailer_start = r.position();
  r.seek(bytes.size() - 8);
  const std::uint64_t offset = r.u64();
  if (offset != trailer_start) fail(ErrorKind::kFormat, what + ": trailer offset does not match layout");
  r.seek(trailer_start);
  const std::string text = r.text(bytes.size() - 8 - trailer_start);
  try {
    const auto j = nlohmann::json::parse(text);
    ds.tokenizer_version = j.at("tokenizer_version").get<std::string>();
    for (const auto& d : j.at("domains")) {
      ds.domains.push_back({d.at("domain").get<std::string>(), d.at("begin").get<std::uint64_t>(),
                            d.at("end").get<std::uint64_t>()});
      if (ds.domains.back().end > count || ds.domains.back().begin > ds.domains.back().end) {
        fail(ErrorKind::kFormat, what + ": domain range outside entries");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, what + ": bad trailer: " + e.what());
  }
  return ds;
}

void Datastore::save(const std::string& path) const { write_file_bytes(path, encode()); }

Datastore Datastore::load(const std::string& path) { return decode(read_file_bytes(path), path); }

Digest Datastore::checksum() const { return sha256(encode()); }

void add_utterance(Datastore& ds, const model::PatModel<float>& model, const MemoryItem& item,
                   const BuildOptions& options) {
  const std::size_t max_target = model.config().max_len - 1;
  const std::size_t n = std::min(item.target.size(), max_target);
  if (options.strict_paper && n + 1 < 2) return;
  std::vector<int> prefix{text::kBosId};
  prefix.insert(prefix.end(), item.target.begin(), item.target.begin() + static_cast<std::ptrdiff_t>(n));
  const auto enc = model.encode(item.asr_tokens, item.phones);
  const auto result = model.decode_states(enc, prefix, true);
  const KeyMatrix keys = pool_keys(result.states.mat());
  for (std::size_t i = options.strict_paper ? 1 : 0; i <= n; ++i) {
    const int value = i < n ? prefix[i + 1] : text::kEosId;
    ds.append(std::span<const float>(keys.row(static_cast<Eigen::Index>(i)).data(), ds.dim),
              static_cast<std::uint32_t>(value), item.domain);
  }
}

Datastore build_datastore(const model::PatModel<float>& model, const std::string& tokenizer_version,
                          std::span<const MemoryItem> items, const BuildOptions& options) {
  Datastore ds;
  ds.dim = static_cast<std::uint32_t>(model.config().d_model);
  ds.model_checksum = model.checksum();
  ds.tokenizer_version = tokenizer_version;
  std::size_t used = 0;
  for (const auto& item : items) {
    if (!options.domain_filter.empty() && item.domain != options.domain_filter) continue;
    add_utterance(ds, model, item, options);
    ++used;
  }
  spdlog::info("datastore: {} entries from {} utterances", ds.size(), used);
  return ds;
}

Datastore merge_datastores(const Datastore& a, const Datastore& b) {
  if (a.empty() && a.keys.empty() && a.dim == 0) return b;
  if (b.empty() && b.dim == 0) return a;
  if (a.dim != b.dim) fail(ErrorKind::kDataMismatch, "merge: key dimensions differ");
  if (a.model_checksum != b.model_checksum) fail(ErrorKind::kDataMismatch, "merge: datastores come from different models");
  if (a.tokenizer_version != b.tokenizer_version) {
    fail(ErrorKind::kDataMismatch, "merge: datastores use different tokenizers");
  }
  Datastore out = a;
  const std::uint64_t shift = a.size();
  out.keys.insert(out.keys.end(), b.keys.begin(), b.keys.end());
  out.values.insert(out.values.end(), b.values.begin(), b.values.end());
  for (auto r : b.domains) {
    r.begin += shift;
    r.end += shift;
    if (!out.domains.empty() && out.domains.back().domain == r.domain && out.domains.back().end == r.begin) {
      out.domains.back().end = r.end;
    } else {
      out.domains.push_back(r);
    }
  }
  return out;
}

void check_compatible(const Datastore& ds, const model::PatModel<float>& model) {
  if (ds.dim != model.config().d_model) {
    fail(ErrorKind::kDataMismatch, "datastore key dimension " + std::to_string(ds.dim) + " differs from model d_model " +
                                       std::to_string(model.config().d_model));
  }
  if (ds.model_checksum != model.checksum()) {
    fail(ErrorKind::kDataMismatch, "datastore was built with a different model checkpoint");
  }
}

}  // namespace kpat::store
