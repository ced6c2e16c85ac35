#include "kpat/ann_index.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>

#include "kpat/random.hpp"

namespace kpat::ann {

namespace {

constexpr char kMagic[4] = {'K', 'I', 'V', 'F'};
constexpr std::uint32_t kVersion = 1;

bool closer(const Neighbor& a, const Neighbor& b) {
  return a.distance < b.distance || (a.distance == b.distance && a.id < b.id);
}

// Bounded max-heap keeping the k best neighbors seen so far.
class TopK {
 public:
  explicit TopK(std::size_t k) : k_(k) { heap_.reserve(k + 1); }

  bool admits(float distance, std::uint64_t id) const {
    if (heap_.size() < k_) return true;
    const Neighbor& worst = heap_.front();
    return distance < worst.distance || (distance == worst.distance && id < worst.id);
  }
  void push(const Neighbor& n) {
    if (!admits(n.distance, n.id)) return;
    heap_.push_back(n);
    std::push_heap(heap_.begin(), heap_.end(), closer);
    if (heap_.size() > k_) {
      std::pop_heap(heap_.begin(), heap_.end(), closer);
      heap_.pop_back();
    }
  }
  NeighborSet take() {
    std::sort(heap_.begin(), heap_.end(), closer);
    return std::move(heap_);
  }

 private:
  std::size_t k_;
  NeighborSet heap_;
};

// Nearest centroid per point via ||x||^2 - 2 x.c + ||c||^2 in row blocks.
void assign_nearest(std::span<const float> points, std::size_t dim, const std::vector<float>& centroids,
                    std::vector<std::size_t>& assign, std::vector<float>& dist) {
  using Mat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const auto d = static_cast<Eigen::Index>(dim);
  const auto n = static_cast<Eigen::Index>(points.size() / dim);
  const auto k = static_cast<Eigen::Index>(centroids.size() / dim);
  const Eigen::Map<const Mat> C(centroids.data(), k, d);
  const Eigen::VectorXf c_norm = C.rowwise().squaredNorm();
  constexpr Eigen::Index kBlock = 2048;
  Mat dots;
  for (Eigen::Index start = 0; start < n; start += kBlock) {
    const Eigen::Index rows = std::min(kBlock, n - start);
    const Eigen::Map<const Mat> X(points.data() + start * d, rows, d);
    dots.noalias() = X * C.transpose();
    for (Eigen::Index i = 0; i < rows; ++i) {
      const float x_norm = X.row(i).squaredNorm();
      Eigen::Index best = 0;
      float best_d = std::numeric_limits<float>::infinity();
      for (Eigen::Index c = 0; c < k; ++c) {
        const float v = x_norm - 2.0f * dots(i, c) + c_norm(c);
        if (v < best_d) {
          best_d = v;
          best = c;
        }
      }
      assign[static_cast<std::size_t>(start + i)] = static_cast<std::size_t>(best);
      dist[static_cast<std::size_t>(start + i)] = std::max(best_d, 0.0f);
    }
  }
}

void check_k(std::size_t k) {
  if (k == 0) fail(ErrorKind::kParameter, "search: k must be >= 1");
}

}  // namespace

float squared_l2(std::span<const float> a, std::span<const float> b) {
  // Fixed lane layout: the summation order never depends on buffer alignment,
  // so a key stored twice (datastore and inverted list) gets the same distance.
  constexpr std::size_t kLanes = 8;
  float lanes[kLanes] = {};
  const std::size_t n = a.size(), body = n - n % kLanes;
  for (std::size_t i = 0; i < body; i += kLanes) {
    for (std::size_t l = 0; l < kLanes; ++l) {
      const float d = a[i + l] - b[i + l];
      lanes[l] += d * d;
    }
  }
  float tail = 0.0f;
  for (std::size_t i = body; i < n; ++i) tail += (a[i] - b[i]) * (a[i] - b[i]);
  float total = 0.0f;
  for (float x : lanes) total += x;
  return total + tail;
}

NeighborSet exact_search(std::span<const float> keys, std::span<const std::uint32_t> values, std::size_t dim,
                         std::span<const float> query, std::size_t k) {
  check_k(k);
  if (query.size() != dim) fail(ErrorKind::kShape, "exact_search: query dimension mismatch");
  TopK top(k);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const float d = squared_l2(keys.subspan(i * dim, dim), query);
    if (top.admits(d, i)) top.push({i, values[i], d});
  }
  return top.take();
}

NeighborSet exact_search(const store::Datastore& ds, std::span<const float> query, std::size_t k) {
  return exact_search(ds.keys, ds.values, ds.dim, query, k);
}

std::size_t default_centroids(std::size_t n_entries) {
  const auto root = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n_entries))));
  return std::clamp<std::size_t>(root, 16, 4096);
}

std::vector<float> train_kmeans(std::span<const float> points, std::size_t dim, std::size_t n_centroids,
                                const KMeansOptions& options) {
  if (dim == 0) fail(ErrorKind::kParameter, "kmeans: zero dimension");
  const std::size_t n = points.size() / dim;
  if (n_centroids == 0) fail(ErrorKind::kParameter, "kmeans: need at least one centroid");
  if (n < n_centroids) {
    fail(ErrorKind::kParameter, "kmeans: sample of " + std::to_string(n) + " points is smaller than " +
                                    std::to_string(n_centroids) + " centroids");
  }
  auto point = [&](std::size_t i) { return points.subspan(i * dim, dim); };
  Rng rng(derive_seed(options.seed, 0x6b6d));
  std::vector<float> centroids;
  centroids.reserve(n_centroids * dim);

  // k-means++: each new seed drawn proportionally to squared distance from the nearest chosen one.
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  std::size_t first = rng.below(n);
  centroids.insert(centroids.end(), point(first).begin(), point(first).end());
  std::vector<double> cumulative(n);
  for (std::size_t c = 1; c < n_centroids; ++c) {
    const auto last = std::span<const float>(centroids).subspan((c - 1) * dim, dim);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], static_cast<double>(squared_l2(point(i), last)));
      total += nearest[i];
      cumulative[i] = total;
    }
    std::size_t pick;
    if (total > 0.0) {
      pick = rng.pick_cumulative(cumulative);
    } else {
      pick = rng.below(n);  // every point coincides with a chosen centroid
    }
    centroids.insert(centroids.end(), point(pick).begin(), point(pick).end());
  }

  std::vector<std::size_t> assign(n, 0), previous(n, 0);
  std::vector<float> dist(n, 0.0f);
  std::vector<double> sums(n_centroids * dim);
  std::vector<std::size_t> counts(n_centroids);
  for (std::size_t it = 0; it < options.iterations; ++it) {
    bool changed = it == 0;
    assign_nearest(points, dim, centroids, assign, dist);
    for (std::size_t i = 0; i < n; ++i) changed |= assign[i] != previous[i];
    previous = assign;
    if (!changed) break;
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[assign[i]];
      for (std::size_t j = 0; j < dim; ++j) sums[assign[i] * dim + j] += point(i)[j];
    }
    for (std::size_t c = 0; c < n_centroids; ++c) {
      if (counts[c] > 0) {
        for (std::size_t j = 0; j < dim; ++j) centroids[c * dim + j] = static_cast<float>(sums[c * dim + j] / counts[c]);
        continue;
      }
      // Empty cluster: move it onto the worst-served point.
      const auto far = static_cast<std::size_t>(std::max_element(dist.begin(), dist.end()) - dist.begin());
      std::copy(point(far).begin(), point(far).end(), centroids.begin() + static_cast<std::ptrdiff_t>(c * dim));
      dist[far] = 0.0f;
      --counts[assign[far]];
      assign[far] = c;
      counts[c] = 1;
    }
  }
  return centroids;
}

IvfIndex::IvfIndex(std::size_t dim, std::vector<float> centroids)
    : dim_(dim), n_lists_(dim ? centroids.size() / dim : 0), centroids_(std::move(centroids)) {
  if (dim_ == 0 || n_lists_ == 0 || centroids_.size() != n_lists_ * dim_) {
    fail(ErrorKind::kParameter, "ivf: need at least one centroid of matching dimension");
  }
  ids_.resize(n_lists_);
  list_keys_.resize(n_lists_);
  list_values_.resize(n_lists_);
}

IvfIndex IvfIndex::train(std::span<const float> keys, std::size_t dim, std::size_t n_centroids,
                         const KMeansOptions& options) {
  return IvfIndex(dim, train_kmeans(keys, dim, n_centroids, options));
}

std::size_t IvfIndex::nearest_centroid(std::span<const float> x) const {
  std::size_t best = 0;
  float best_d = std::numeric_limits<float>::infinity();
  for (std::size_t c = 0; c < n_lists_; ++c) {
    const float d = squared_l2(x, std::span<const float>(centroids_).subspan(c * dim_, dim_));
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

void IvfIndex::add(std::span<const float> keys, std::span<const std::uint32_t> values) {
  if (n_lists_ == 0) fail(ErrorKind::kParameter, "ivf: index is not trained");
  if (keys.size() != values.size() * dim_) fail(ErrorKind::kShape, "ivf: key dimension mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto key = keys.subspan(i * dim_, dim_);
    const std::size_t c = nearest_centroid(key);
    ids_[c].push_back(total_ + i);
    list_keys_[c].insert(list_keys_[c].end(), key.begin(), key.end());
    list_values_[c].push_back(values[i]);
  }
  total_ += values.size();
}

void IvfIndex::add(const store::Datastore& ds) {
  if (ds.dim != dim_) fail(ErrorKind::kDataMismatch, "ivf: datastore key dimension differs from index");
  add(ds.keys, ds.values);
}

NeighborSet IvfIndex::search(std::span<const float> query, std::size_t k, std::size_t nprobe) const {
  check_k(k);
  if (query.size() != dim_) fail(ErrorKind::kShape, "ivf: query dimension mismatch");
  if (nprobe == 0 || nprobe > n_lists_) {
    fail(ErrorKind::kParameter, "ivf: nprobe must be in [1, " + std::to_string(n_lists_) + "]");
  }
  std::vector<std::pair<float, std::size_t>> order(n_lists_);
  for (std::size_t c = 0; c < n_lists_; ++c) {
    order[c] = {squared_l2(query, std::span<const float>(centroids_).subspan(c * dim_, dim_)), c};
  }
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(nprobe), order.end());
  TopK top(k);
  for (std::size_t p = 0; p < nprobe; ++p) {
    const std::size_t c = order[p].second;
    const auto& ids = ids_[c];
    const float* keys = list_keys_[c].data();
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const float d = squared_l2(std::span<const float>(keys + i * dim_, dim_), query);
      if (top.admits(d, ids[i])) top.push({ids[i], list_values_[c][i], d});
    }
  }
  return top.take();
}

void IvfIndex::save(const std::string& path, const Digest& datastore_checksum) const {
  ByteWriter w;
  w.bytes(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(kMagic), 4));
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(dim_));
  w.u32(static_cast<std::uint32_t>(n_lists_));
  w.bytes(datastore_checksum);
  for (float x : centroids_) w.f32(x);
  for (const auto& ids : ids_) w.u64(ids.size());
  for (const auto& ids : ids_) {
    for (std::uint64_t id : ids) w.u64(id);
  }
  write_file_bytes(path, w.buffer());
}

IvfIndex IvfIndex::load(const std::string& path, const store::Datastore& ds) {
  const auto bytes = read_file_bytes(path);
  ByteReader r(bytes, path);
  const auto magic = r.bytes(4);
  if (!std::equal(magic.begin(), magic.end(), kMagic)) fail(ErrorKind::kFormat, path + ": not an index file");
  const std::uint32_t version = r.u32();
  if (version != kVersion) fail(ErrorKind::kFormat, path + ": unsupported version " + std::to_string(version));
  const std::size_t dim = r.u32();
  const std::size_t n_lists = r.u32();
  Digest digest;
  const auto d = r.bytes(32);
  std::copy(d.begin(), d.end(), digest.begin());
  if (digest != ds.checksum()) fail(ErrorKind::kDataMismatch, path + ": index was built from a different datastore");
  if (dim != ds.dim) fail(ErrorKind::kDataMismatch, path + ": key dimension differs from datastore");
  std::vector<float> centroids(dim * n_lists);
  for (auto& x : centroids) x = r.f32();
  IvfIndex index(dim, std::move(centroids));
  std::vector<std::uint64_t> lengths(n_lists);
  for (auto& l : lengths) l = r.u64();
  std::vector<bool> seen(ds.size(), false);
  for (std::size_t c = 0; c < n_lists; ++c) {
    for (std::uint64_t j = 0; j < lengths[c]; ++j) {
      const std::uint64_t id = r.u64();
      if (id >= ds.size() || seen[id]) fail(ErrorKind::kFormat, path + ": inverted lists do not partition the datastore");
      seen[id] = true;
      index.ids_[c].push_back(id);
      const auto key = ds.key(id);
      index.list_keys_[c].insert(index.list_keys_[c].end(), key.begin(), key.end());
      index.list_values_[c].push_back(ds.values[id]);
    }
  }
  if (r.remaining() != 0) fail(ErrorKind::kFormat, path + ": trailing bytes");
  index.total_ = ds.size();
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
    fail(ErrorKind::kFormat, path + ": inverted lists do not cover the datastore");
  }
  return index;
}

}  // namespace kpat::ann
