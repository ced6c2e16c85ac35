#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "kpat/binary_io.hpp"
#include "kpat/pat_model.hpp"

namespace kpat::store {

using KeyMatrix = nn::RowMatrix<float>;

/// Look-ahead pooling over decoder states: S = softmax_rows(D·Dᵀ) over every
/// position, key row i = S[i]·D. Row i of the result is the key paired with
/// the token that follows position i.
KeyMatrix pool_keys(const KeyMatrix& states);

/// Causal pooling for the last row of `states`: attention over rows ≤ last.
std::vector<float> query_key(const KeyMatrix& states);

/// Incremental causal query keys: push one decoder state per step and get the
/// pooled key for that step in O(t·d).
class CausalPooler {
 public:
  explicit CausalPooler(std::size_t dim) : dim_(dim) {}
  std::span<const float> push(std::span<const float> state);
  std::size_t size() const { return rows_.size() / dim_; }

 private:
  std::size_t dim_;
  std::vector<float> rows_;
  std::vector<float> key_;
  std::vector<double> weights_;
};

struct DomainRange {
  std::string domain;
  std::uint64_t begin = 0;
  std::uint64_t end = 0;
};

/// Memorized (key, next token) pairs plus the metadata that ties them to a
/// model's key space.
struct Datastore {
  std::uint32_t dim = 0;
  Digest model_checksum{};
  std::string tokenizer_version;
  std::vector<float> keys;  // count x dim, row-major
  std::vector<std::uint32_t> values;
  std::vector<DomainRange> domains;  // contiguous, in entry order

  std::size_t size() const { return values.size(); }
  bool empty() const { return values.empty(); }
  std::span<const float> key(std::size_t i) const { return {keys.data() + i * dim, dim}; }
  /// Tag of entry i, empty when untagged.
  std::string domain_of(std::size_t i) const;

  void append(std::span<const float> key, std::uint32_t value, const std::string& domain);
  std::vector<std::uint8_t> encode() const;
  static Datastore decode(std::span<const std::uint8_t> bytes, const std::string& what = "datastore");
  void save(const std::string& path) const;
  static Datastore load(const std::string& path);
  Digest checksum() const;
};

/// One utterance's teacher-forcing inputs. Ids exclude BOS/EOS.
struct MemoryItem {
  std::vector<int> asr_tokens;
  std::vector<int> phones;
  std::vector<int> target;
  std::string domain;
};

struct BuildOptions {
  /// Drop the entry keyed by the BOS-position state (the first target token).
  bool strict_paper = false;
  /// When non-empty, only items of this domain are memorized.
  std::string domain_filter;
};

/// Entries for one utterance: with O = target length + 1 decoder positions,
/// position i's pooled key maps to token i+1 of target+EOS.
void add_utterance(Datastore& ds, const model::PatModel<float>& model, const MemoryItem& item,
                   const BuildOptions& options = {});

Datastore build_datastore(const model::PatModel<float>& model, const std::string& tokenizer_version,
                          std::span<const MemoryItem> items, const BuildOptions& options = {});

/// Concatenation; domain ranges of `b` are shifted past `a`.
Datastore merge_datastores(const Datastore& a, const Datastore& b);

/// Refuses (data-mismatch error) when the datastore was built by another model.
void check_compatible(const Datastore& ds, const model::PatModel<float>& model);

}  // namespace kpat::store
