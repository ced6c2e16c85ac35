#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "kpat/pat_model.hpp"
#include "kpat/random.hpp"

namespace kpat::model {

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  std::size_t warmup_steps = 400;
  double lr_factor = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double adam_eps = 1e-9;
  double clip_norm = 1.0;  // 0 disables clipping
  std::uint64_t seed = 1;

  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

/// lr = factor * d^-0.5 * min(step^-0.5, step * warmup^-1.5), step counted from 1.
double learning_rate(const TrainConfig& c, std::size_t d_model, std::size_t step);

class Adam {
 public:
  Adam(std::vector<nn::Parameter<float>*> params, double beta1, double beta2, double eps);
  void step(double lr);
  std::size_t steps() const { return t_; }

 private:
  std::vector<nn::Parameter<float>*> params_;
  std::vector<std::vector<float>> m_, v_;
  double beta1_, beta2_, eps_;
  std::size_t t_ = 0;
};

struct EpochStats {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  std::size_t steps = 0;
};

class Trainer {
 public:
  Trainer(PatModel<float>& model, TrainConfig config);

  /// One optimizer update on `examples`, applying clean swap-in, input token
  /// dropout and dropout. Returns the batch loss before the update.
  double train_step(std::span<const Example* const> examples);

  /// Shuffled epoch over all examples.
  EpochStats run_epoch(std::span<const Example> examples);

  const TrainConfig& config() const { return config_; }
  std::size_t steps() const { return adam_.steps(); }

 private:
  PatModel<float>& model_;
  TrainConfig config_;
  Adam adam_;
  Rng rng_;
  std::size_t epoch_ = 0;
};

/// Teacher-forced argmax accuracy over target tokens plus EOS, no dropout.
double token_accuracy(const PatModel<float>& model, std::span<const Example> examples,
                      std::size_t batch_size = 64);

/// Mean teacher-forced loss, no dropout.
double evaluate_loss(const PatModel<float>& model, std::span<const Example> examples,
                     std::size_t batch_size = 64);

}  // namespace kpat::model
