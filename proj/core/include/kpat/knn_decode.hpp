#pragma once

#include <memory>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "kpat/ann_index.hpp"
#include "kpat/datastore.hpp"
#include "kpat/pat_model.hpp"

namespace kpat::knn {

struct InterpolationParams {
  double lambda = 0.5;
  std::size_t k = 10;
  double knn_temperature = 1.0;  // over squared L2 distances
  std::size_t nprobe = 32;

  void validate() const;
  nlohmann::json to_json() const;
  static InterpolationParams from_json(const nlohmann::json& j);
};

/// p(y) ∝ Σ_j [v_j = y] exp(-d_j / T). Empty neighbor sets are an error.
std::vector<double> knn_distribution(const ann::NeighborSet& neighbors, double temperature, std::size_t vocab);

/// (1 - λ) p_pat + λ p_knn.
std::vector<double> interpolate(std::span<const double> p_pat, std::span<const double> p_knn, double lambda);

class Searcher {
 public:
  virtual ~Searcher() = default;
  virtual ann::NeighborSet search(std::span<const float> query, std::size_t k) const = 0;
};

class ExactSearcher : public Searcher {
 public:
  explicit ExactSearcher(const store::Datastore& ds) : ds_(ds) {}
  ann::NeighborSet search(std::span<const float> query, std::size_t k) const override;

 private:
  const store::Datastore& ds_;
};

class IvfSearcher : public Searcher {
 public:
  IvfSearcher(const ann::IvfIndex& index, std::size_t nprobe) : index_(index), nprobe_(nprobe) {}
  ann::NeighborSet search(std::span<const float> query, std::size_t k) const override;

 private:
  const ann::IvfIndex& index_;
  std::size_t nprobe_;
};

struct StepTrace {
  int token = 0;
  std::vector<std::pair<int, double>> p_pat_top5;
  std::vector<std::uint32_t> knn_values;
  std::vector<float> knn_distances;
  double lambda_used = 0.0;
};

struct DecodeResult {
  std::vector<int> tokens;  // without BOS/EOS
  std::vector<StepTrace> steps;  // filled only when tracing
};

/// Greedy decoding with per-step retrieval: the causal pooled key of the
/// newest decoder state queries the datastore and the kNN distribution is
/// mixed into the model's. Steps without neighbors fall back to the model.
class KnnDecoder {
 public:
  /// `searcher` may be null (or the datastore empty): decoding is then model-only.
  KnnDecoder(const model::PatModel<float>& model, const store::Datastore* datastore, const Searcher* searcher,
             InterpolationParams params);

  DecodeResult decode(std::span<const int> asr_tokens, std::span<const int> phones, std::size_t max_len,
                      bool trace = false) const;

  const InterpolationParams& params() const { return params_; }

 private:
  const model::PatModel<float>& model_;
  const Searcher* searcher_;
  InterpolationParams params_;
};

nlohmann::json trace_to_json(const std::vector<StepTrace>& steps);

}  // namespace kpat::knn
