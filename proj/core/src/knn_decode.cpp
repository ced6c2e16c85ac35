#include "kpat/knn_decode.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>

#include "kpat/tokenizer.hpp"

namespace kpat::knn {

void InterpolationParams::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) fail(ErrorKind::kConfig, "lambda must be in [0, 1]");
  if (k == 0) fail(ErrorKind::kConfig, "k must be >= 1");
  if (!(knn_temperature > 0.0)) fail(ErrorKind::kConfig, "knn_temperature must be > 0");
  if (nprobe == 0) fail(ErrorKind::kConfig, "nprobe must be >= 1");
}

nlohmann::json InterpolationParams::to_json() const {
  return {{"lambda", lambda}, {"k", k}, {"knn_temperature", knn_temperature}, {"nprobe", nprobe},
          {"distance", "squared_l2"}};
}

InterpolationParams InterpolationParams::from_json(const nlohmann::json& j) {
  InterpolationParams p;
  try {
    p.lambda = j.value("lambda", p.lambda);
    p.k = j.value("k", p.k);
    p.knn_temperature = j.value("knn_temperature", p.knn_temperature);
    p.nprobe = j.value("nprobe", p.nprobe);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kConfig, std::string("interpolation config: ") + e.what());
  }
  p.validate();
  return p;
}

std::vector<double> knn_distribution(const ann::NeighborSet& neighbors, double temperature, std::size_t vocab) {
  if (neighbors.empty()) fail(ErrorKind::kParameter, "knn_distribution: no neighbors");
  if (!(temperature > 0.0)) fail(ErrorKind::kParameter, "knn_distribution: temperature must be > 0");
  double d_min = neighbors.front().distance;
  for (const auto& n : neighbors) d_min = std::min(d_min, static_cast<double>(n.distance));
  std::vector<double> p(vocab, 0.0);
  double z = 0.0;
  for (const auto& n : neighbors) {
    if (n.value >= vocab) fail(ErrorKind::kDataMismatch, "knn_distribution: neighbor value outside vocabulary");
    // Shifting by the minimum keeps the nearest weight at 1 regardless of scale.
    const double w = std::exp(-(static_cast<double>(n.distance) - d_min) / temperature);
    p[n.value] += w;
    z += w;
  }
  for (auto& x : p) x /= z;
  return p;
}

std::vector<double> interpolate(std::span<const double> p_pat, std::span<const double> p_knn, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) fail(ErrorKind::kParameter, "interpolate: lambda must be in [0, 1]");
  if (p_pat.size() != p_knn.size()) fail(ErrorKind::kShape, "interpolate: distributions differ in size");
  std::vector<double> out(p_pat.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (1.0 - lambda) * p_pat[i] + lambda * p_knn[i];
  return out;
}

ann::NeighborSet ExactSearcher::search(std::span<const float> query, std::size_t k) const {
  return ann::exact_search(ds_, query, k);
}

ann::NeighborSet IvfSearcher::search(std::span<const float> query, std::size_t k) const {
  return index_.search(query, k, std::min(nprobe_, index_.n_centroids()));
}

KnnDecoder::KnnDecoder(const model::PatModel<float>& model, const store::Datastore* datastore, const Searcher* searcher,
                       InterpolationParams params)
    : model_(model), searcher_(searcher), params_(params) {
  params_.validate();
  if (datastore != nullptr) store::check_compatible(*datastore, model);
  if (searcher_ != nullptr && (datastore == nullptr || datastore->empty())) {
    spdlog::warn("datastore is empty; decoding with the model distribution only");
    searcher_ = nullptr;
  }
}

DecodeResult KnnDecoder::decode(std::span<const int> asr_tokens, std::span<const int> phones, std::size_t max_len,
                                bool trace) const {
  const auto enc = model_.encode(asr_tokens, phones);
  const std::size_t vocab = model_.config().text_vocab;
  const std::size_t limit = std::min(max_len, model_.config().max_len - 1);
  const bool retrieve = searcher_ != nullptr && params_.lambda > 0.0;
  store::CausalPooler pooler(model_.config().d_model);
  std::vector<int> prefix{text::kBosId};
  DecodeResult result;
  while (result.tokens.size() < limit) {
    const auto step = model_.decode_states(enc, prefix, true);
    const auto p_pat = model::softmax(step.logits.data());
    std::vector<double> p = p_pat;
    StepTrace st;
    if (retrieve) {
      // Only the newest state row enters the pooler; earlier rows are
      // unchanged by causality.
      const std::size_t d = model_.config().d_model;
      const auto state = step.states.data().subspan((prefix.size() - 1) * d, d);
      const auto query = pooler.push(state);
      const auto neighbors = searcher_->search(query, params_.k);
      if (!neighbors.empty()) {
        p = interpolate(p_pat, knn_distribution(neighbors, params_.knn_temperature, vocab), params_.lambda);
        st.lambda_used = params_.lambda;
      }
      if (trace) {
        for (const auto& n : neighbors) {
          st.knn_values.push_back(n.value);
          st.knn_distances.push_back(n.distance);
        }
      }
    }
    const int next = static_cast<int>(model::argmax(p));
    if (trace) {
      std::vector<int> order(p_pat.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
      const std::size_t top = std::min<std::size_t>(5, order.size());
      std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(top), order.end(),
                        [&](int a, int b) { return p_pat[a] > p_pat[b] || (p_pat[a] == p_pat[b] && a < b); });
      for (std::size_t i = 0; i < top; ++i) st.p_pat_top5.emplace_back(order[i], p_pat[order[i]]);
      st.token = next;
      result.steps.push_back(std::move(st));
    }
    if (next == text::kEosId) break;
    result.tokens.push_back(next);
    prefix.push_back(next);
  }
  return result;
}

nlohmann::json trace_to_json(const std::vector<StepTrace>& steps) {
  auto out = nlohmann::json::array();
  for (const auto& s : steps) {
    nlohmann::json top = nlohmann::json::array();
    for (const auto& [id, p] : s.p_pat_top5) top.push_back({id, p});
    out.push_back({{"token", s.token},
                   {"p_pat_top5", top},
                   {"knn_values", s.knn_values},
                   {"knn_distances", s.knn_distances},
                   {"lambda_used", s.lambda_used}});
  }
  return out;
}

}  // namespace kpat::knn
