#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "kpat/binary_io.hpp"
#include "kpat/datastore.hpp"

namespace kpat::ann {

struct Neighbor {
  std::uint64_t id = 0;
  std::uint32_t value = 0;
  float distance = 0.0f;  // squared L2
};

/// Ascending by distance, ties by lower entry id.
using NeighborSet = std::vector<Neighbor>;

float squared_l2(std::span<const float> a, std::span<const float> b);

/// Full scan over `count` row-major keys of size `dim`.
NeighborSet exact_search(std::span<const float> keys, std::span<const std::uint32_t> values, std::size_t dim,
                         std::span<const float> query, std::size_t k);
NeighborSet exact_search(const store::Datastore& ds, std::span<const float> query, std::size_t k);

struct KMeansOptions {
  std::size_t iterations = 25;
  std::uint64_t seed = 0;
};

/// k-means++ seeding then Lloyd iterations. Empty clusters are re-seeded from
/// the point farthest from its assigned centroid. Returns n_centroids x dim.
std::vector<float> train_kmeans(std::span<const float> points, std::size_t dim, std::size_t n_centroids,
                                const KMeansOptions& options = {});

/// ceil(sqrt(n)) clamped to [16, 4096].
std::size_t default_centroids(std::size_t n_entries);

/// Coarse-quantized inverted lists with exact L2 inside the probed lists.
class IvfIndex {
 public:
  IvfIndex() = default;
  IvfIndex(std::size_t dim, std::vector<float> centroids);

  /// Train on (a sample of) `keys` then return an empty index.
  static IvfIndex train(std::span<const float> keys, std::size_t dim, std::size_t n_centroids,
                        const KMeansOptions& options = {});

  /// Assigns every entry of `keys` to its nearest centroid. Ids continue from
  /// the current size.
  void add(std::span<const float> keys, std::span<const std::uint32_t> values);
  void add(const store::Datastore& ds);

  NeighborSet search(std::span<const float> query, std::size_t k, std::size_t nprobe) const;

  std::size_t dim() const { return dim_; }
  std::size_t n_centroids() const { return n_lists_; }
  std::size_t size() const { return total_; }
  const std::vector<float>& centroids() const { return centroids_; }
  const std::vector<std::uint64_t>& list(std::size_t c) const { return ids_[c]; }
  std::size_t nearest_centroid(std::span<const float> x) const;

  /// "KIVF" | version u32 | dim u32 | n_centroids u32 | datastore checksum 32B |
  /// centroids f32 | list lengths u64 | entry ids u64.
  void save(const std::string& path, const Digest& datastore_checksum) const;
  /// Keys and values are re-read from the datastore, which must match the checksum.
  static IvfIndex load(const std::string& path, const store::Datastore& ds);

 private:
  std::size_t dim_ = 0;
  std::size_t n_lists_ = 0;
  std::size_t total_ = 0;
  std::vector<float> centroids_;
  std::vector<std::vector<std::uint64_t>> ids_;
  // Per-list contiguous copies so a probe scans sequential memory.
  std::vector<std::vector<float>> list_keys_;
  std::vector<std::vector<std::uint32_t>> list_values_;
};

}  // namespace kpat::ann
