#include "kpat/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <numeric>

#include "kpat/tokenizer.hpp"

namespace kpat::model {

nlohmann::json TrainConfig::to_json() const {
  return {{"epochs", epochs},     {"batch_size", batch_size}, {"warmup_steps", warmup_steps},
          {"lr_factor", lr_factor}, {"beta1", beta1},           {"beta2", beta2},
          {"adam_eps", adam_eps},   {"clip_norm", clip_norm},   {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
    c.lr_factor = j.value("lr_factor", c.lr_factor);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.adam_eps = j.value("adam_eps", c.adam_eps);
    c.clip_norm = j.value("clip_norm", c.clip_norm);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kConfig, std::string("train config: ") + e.what());
  }
  if (c.batch_size == 0) fail(ErrorKind::kConfig, "train config: batch_size must be > 0");
  if (c.warmup_steps == 0) fail(ErrorKind::kConfig, "train config: warmup_steps must be > 0");
  return c;
}

double learning_rate(const TrainConfig& c, std::size_t d_model, std::size_t step) {
  const double s = static_cast<double>(std::max<std::size_t>(step, 1));
  const double w = static_cast<double>(c.warmup_steps);
  return c.lr_factor / std::sqrt(static_cast<double>(d_model)) * std::min(1.0 / std::sqrt(s), s * std::pow(w, -1.5));
}

Adam::Adam(std::vector<nn::Parameter<float>*> params, double beta1, double beta2, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (auto* p : params_) {
    m_.emplace_back(p->value.size(), 0.0f);
    v_.emplace_back(p->value.size(), 0.0f);
  }
}

void Adam::step(double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  const float b1 = static_cast<float>(beta1_), b2 = static_cast<float>(beta2_);
  const float step = static_cast<float>(lr / c1);
  const float inv_c2 = static_cast<float>(1.0 / c2);
  const float eps = static_cast<float>(eps_);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto* p = params_[i];
    if (p->grad.size() != p->value.size()) continue;
    float* w = p->value.data().data();
    const float* g = p->grad.data().data();
    float* m = m_[i].data();
    float* v = v_[i].data();
    for (std::size_t j = 0; j < m_[i].size(); ++j) {
      m[j] = b1 * m[j] + (1.0f - b1) * g[j];
      v[j] = b2 * v[j] + (1.0f - b2) * g[j] * g[j];
      w[j] -= step * m[j] / (std::sqrt(v[j] * inv_c2) + eps);
    }
  }
}

Trainer::Trainer(PatModel<float>& model, TrainConfig config)
    : model_(model),
      config_(config),
      adam_(model.parameters(), config.beta1, config.beta2, config.adam_eps),
      rng_(derive_seed(config.seed, 0x7472)) {}

double Trainer::train_step(std::span<const Example* const> examples) {
  const auto& mc = model_.config();
  // Augmented copies: clean swap-in replaces the whole text input with the
  // reference tokens; input dropout then masks single tokens to UNK.
  std::vector<Example> augmented;
  augmented.reserve(examples.size());
  for (const Example* ex : examples) {
    Example a = *ex;
    if (!a.clean_tokens.empty() && rng_.bernoulli(mc.clean_swap_prob)) a.asr_tokens = a.clean_tokens;
    for (int& t : a.asr_tokens) {
      if (rng_.bernoulli(mc.input_dropout_rate)) t = text::kUnkId;
    }
    augmented.push_back(std::move(a));
  }
  std::vector<const Example*> ptrs;
  for (const auto& a : augmented) ptrs.push_back(&a);
  const Batch batch = make_batch(ptrs, mc.max_len);

  auto params = model_.parameters();
  for (auto* p : params) p->zero_grad();
  nn::Graph<float> g;
  g.enable_dropout(&rng_);
  const nn::Var loss = model_.loss(g, batch);
  const double value = g.value(loss)[0];
  g.backward(loss);

  double sq = 0.0;
  for (auto* p : params) sq += static_cast<double>(p->grad.mat().squaredNorm());
  if (!std::isfinite(sq)) fail(ErrorKind::kNumeric, "non-finite gradient at step " + std::to_string(steps() + 1));
  if (config_.clip_norm > 0.0) {
    const double norm = std::sqrt(sq);
    if (norm > config_.clip_norm) {
      const float s = static_cast<float>(config_.clip_norm / norm);
      for (auto* p : params) p->grad.mat() *= s;
    }
  }
  adam_.step(learning_rate(config_, mc.d_model, adam_.steps() + 1));
  return value;
}

EpochStats Trainer::run_epoch(std::span<const Example> examples) {
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  rng_.shuffle(order.begin(), order.end());
  EpochStats stats;
  stats.epoch = ++epoch_;
  double total = 0.0;
  std::vector<const Example*> batch;
  for (std::size_t start = 0; start < order.size(); start += config_.batch_size) {
    batch.clear();
    for (std::size_t i = start; i < std::min(order.size(), start + config_.batch_size); ++i) {
      batch.push_back(&examples[order[i]]);
    }
    total += train_step(batch);
    ++stats.steps;
  }
  stats.mean_loss = stats.steps ? total / static_cast<double>(stats.steps) : 0.0;
  return stats;
}

namespace {

template <typename F>
void for_batches(std::span<const Example> examples, std::size_t batch_size, F&& f) {
  std::vector<const Example*> ptrs;
  for (std::size_t start = 0; start < examples.size(); start += batch_size) {
    ptrs.clear();
    for (std::size_t i = start; i < std::min(examples.size(), start + batch_size); ++i) ptrs.push_back(&examples[i]);
    f(ptrs);
  }
}

}  // namespace

double token_accuracy(const PatModel<float>& model, std::span<const Example> examples, std::size_t batch_size) {
  std::size_t correct = 0, total = 0;
  for_batches(examples, batch_size, [&](const std::vector<const Example*>& ptrs) {
    const Batch batch = make_batch(ptrs, model.config().max_len);
    nn::Graph<float> g(false);
    const nn::Var th = model.encode_text(g, batch.text);
    const nn::Var ph = model.encode_phones(g, batch.phones);
    const auto& logits = g.value(model.project(g, model.decode(g, th, batch.text, ph, batch.phones, batch.decoder_in)));
    for (std::size_t r = 0; r < batch.targets.size(); ++r) {
      Eigen::Index best;
      logits.mat().row(r).maxCoeff(&best);
      correct += static_cast<int>(best) == batch.targets[r];
      ++total;
    }
  });
  return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

double evaluate_loss(const PatModel<float>& model, std::span<const Example> examples, std::size_t batch_size) {
  double total = 0.0;
  std::size_t tokens = 0;
  for_batches(examples, batch_size, [&](const std::vector<const Example*>& ptrs) {
    const Batch batch = make_batch(ptrs, model.config().max_len);
    nn::Graph<float> g(false);
    total += g.value(model.loss(g, batch))[0] * static_cast<double>(batch.targets.size());
    tokens += batch.targets.size();
  });
  return tokens ? total / static_cast<double>(tokens) : 0.0;
}

}  // namespace kpat::model
