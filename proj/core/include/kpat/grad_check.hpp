#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "kpat/graph.hpp"

namespace kpat::nn {

struct GradCheckOptions {
  double epsilon = 1e-4;
  /// Coordinates sampled per parameter; parameters smaller than this are checked exhaustively.
  std::size_t samples_per_param = 16;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  std::size_t coordinates_checked = 0;
};

/// Compares reverse-mode gradients of a scalar graph against central finite
/// differences. The relative error of one coordinate is
/// |g_ad - g_fd| / max(1e-8, |g_ad| + |g_fd|); the maximum is reported.
///
/// `loss` must rebuild the graph from the current parameter values each call
/// and must be deterministic (no dropout).
GradCheckResult grad_check(const std::function<Var(Graph<double>&)>& loss,
                           const std::vector<Parameter<double>*>& params, const GradCheckOptions& options = {});

}  // namespace kpat::nn
