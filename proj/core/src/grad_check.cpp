#include "kpat/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "kpat/random.hpp"

namespace kpat::nn {

namespace {
double evaluate(const std::function<Var(Graph<double>&)>& loss) {
  Graph<double> g(false);
  return g.value(loss(g))[0];
}
}  // namespace

GradCheckResult grad_check(const std::function<Var(Graph<double>&)>& loss,
                           const std::vector<Parameter<double>*>& params, const GradCheckOptions& options) {
  for (auto* p : params) p->zero_grad();
  {
    Graph<double> g(true);
    g.backward(loss(g));
  }

  GradCheckResult result;
  Rng rng(options.seed);
  for (auto* p : params) {
    std::vector<std::size_t> coords(p->value.size());
    std::iota(coords.begin(), coords.end(), 0);
    if (coords.size() > options.samples_per_param) {
      rng.shuffle(coords.begin(), coords.end());
      coords.resize(options.samples_per_param);
    }
    for (std::size_t i : coords) {
      const double original = p->value[i];
      p->value[i] = original + options.epsilon;
      const double plus = evaluate(loss);
      p->value[i] = original - options.epsilon;
      const double minus = evaluate(loss);
      p->value[i] = original;

      const double fd = (plus - minus) / (2.0 * options.epsilon);
      const double ad = p->grad[i];
      const double rel = std::abs(ad - fd) / std::max(1e-8, std::abs(ad) + std::abs(fd));
      ++result.coordinates_checked;
      if (rel > result.max_relative_error) {
        result.max_relative_error = rel;
        result.worst_parameter = p->name;
        result.worst_index = i;
      }
    }
  }
  return result;
}

}  // namespace kpat::nn
