#include "kpat/pat_model.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>

#include "kpat/lexicon.hpp"
#include "kpat/tokenizer.hpp"

namespace kpat::model {

using nn::AttentionLayout;
using nn::Graph;
using nn::Parameter;
using nn::Tensor;
using nn::Var;

PatConfig PatConfig::desk() { return PatConfig{}; }

PatConfig PatConfig::paper() {
  PatConfig c;
  c.n_enc_layers = 4;
  c.n_dec_layers = 4;
  c.d_model = 128;
  c.n_heads = 8;
  c.d_ff = 512;
  c.text_vocab = 32000;
  return c;
}

void PatConfig::validate() const {
  auto bad = [](const std::string& msg) { fail(ErrorKind::kConfig, "model config: " + msg); };
  if (n_enc_layers == 0 || n_dec_layers == 0) bad("layer counts must be > 0");
  if (d_model == 0 || n_heads == 0 || d_ff == 0) bad("dimensions must be > 0");
  if (d_model % n_heads != 0) bad("d_model must be divisible by n_heads");
  if (text_vocab <= static_cast<std::size_t>(text::kNumSpecial)) bad("text_vocab too small");
  if (max_len < 2) bad("max_len must be >= 2");
  for (double r : {dropout_rate, input_dropout_rate, clean_swap_prob}) {
    if (r < 0.0 || r >= 1.0) bad("rates must be in [0, 1)");
  }
  if (!(attn_temperature > 0.0)) bad("attn_temperature must be > 0");
  if (label_smoothing < 0.0 || label_smoothing >= 1.0) bad("label_smoothing must be in [0, 1)");
}

nlohmann::json PatConfig::to_json() const {
  return {{"n_enc_layers", n_enc_layers},
          {"n_dec_layers", n_dec_layers},
          {"d_model", d_model},
          {"n_heads", n_heads},
          {"d_ff", d_ff},
          {"text_vocab", text_vocab},
          {"phone_vocab", phone_vocab},
          {"dropout_rate", dropout_rate},
          {"input_dropout_rate", input_dropout_rate},
          {"clean_swap_prob", clean_swap_prob},
          {"attn_temperature", attn_temperature},
          {"label_smoothing", label_smoothing},
          {"max_len", max_len}};
}

PatConfig PatConfig::from_json(const nlohmann::json& j) {
  PatConfig c;
  if (j.contains("preset")) {
    const auto preset = j.at("preset").get<std::string>();
    if (preset == "paper") {
      c = paper();
    } else if (preset != "desk") {
      fail(ErrorKind::kConfig, "model config: unknown preset '" + preset + "'");
    }
  }
  try {
    c.n_enc_layers = j.value("n_enc_layers", c.n_enc_layers);
    c.n_dec_layers = j.value("n_dec_layers", c.n_dec_layers);
    c.d_model = j.value("d_model", c.d_model);
    c.n_heads = j.value("n_heads", c.n_heads);
    c.d_ff = j.value("d_ff", c.d_ff);
    c.text_vocab = j.value("text_vocab", c.text_vocab);
    c.phone_vocab = j.value("phone_vocab", c.phone_vocab);
    c.dropout_rate = j.value("dropout_rate", c.dropout_rate);
    c.input_dropout_rate = j.value("input_dropout_rate", c.input_dropout_rate);
    c.clean_swap_prob = j.value("clean_swap_prob", c.clean_swap_prob);
    c.attn_temperature = j.value("attn_temperature", c.attn_temperature);
    c.label_smoothing = j.value("label_smoothing", c.label_smoothing);
    c.max_len = j.value("max_len", c.max_len);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kConfig, std::string("model config: ") + e.what());
  }
  return c;
}

namespace {

template <typename T>
Parameter<T> xavier(std::string name, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor<T> w = Tensor<T>::matrix(fan_in, fan_out);
  for (auto& x : w.storage()) x = static_cast<T>(rng.uniform(-limit, limit));
  return {std::move(name), std::move(w), {}};
}

// Uniform with variance 1/d, so rows scaled by sqrt(d) have unit variance.
template <typename T>
Parameter<T> embedding_table(std::string name, std::size_t vocab, std::size_t d, Rng& rng) {
  const double limit = std::sqrt(3.0 / static_cast<double>(d));
  Tensor<T> w = Tensor<T>::matrix(vocab, d);
  for (auto& x : w.storage()) x = static_cast<T>(rng.uniform(-limit, limit));
  return {std::move(name), std::move(w), {}};
}

template <typename T>
Parameter<T> constant(std::string name, std::size_t n, T value) {
  Tensor<T> t({n});
  t.fill(value);
  return {std::move(name), std::move(t), {}};
}

template <typename T>
Tensor<T> sinusoid_table(std::size_t len, std::size_t d) {
  Tensor<T> pe = Tensor<T>::matrix(len, d);
  for (std::size_t pos = 0; pos < len; ++pos) {
    for (std::size_t i = 0; i < d; i += 2) {
      const double angle = static_cast<double>(pos) / std::pow(10000.0, static_cast<double>(i) / d);
      pe(pos, i) = static_cast<T>(std::sin(angle));
      if (i + 1 < d) pe(pos, i + 1) = static_cast<T>(std::cos(angle));
    }
  }
  return pe;
}

// Keeps BOS and EOS when an over-long sequence is cut.
std::vector<int> wrap(std::span<const int> ids, std::size_t max_len, const char* what) {
  std::size_t n = ids.size();
  if (n + 2 > max_len) {
    spdlog::warn("{} of length {} truncated to max_len {}", what, n, max_len);
    n = max_len - 2;
  }
  std::vector<int> out;
  out.reserve(n + 2);
  out.push_back(text::kBosId);
  out.insert(out.end(), ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n));
  out.push_back(text::kEosId);
  return out;
}

}  // namespace

template <typename T>
PatModel<T>::PatModel(PatConfig config, std::uint64_t seed) : config_(std::move(config)) {
  if (config_.phone_vocab == 0) config_.phone_vocab = phon::phone_vocab_size();
  config_.validate();
  Rng rng(seed);
  const std::size_t d = config_.d_model;

  auto make_attention = [&](const std::string& p) {
    return Attention{xavier<T>(p + ".wq", d, d, rng), xavier<T>(p + ".wk", d, d, rng),
                     xavier<T>(p + ".wv", d, d, rng), xavier<T>(p + ".wo", d, d, rng)};
  };
  auto make_norm = [&](const std::string& p) {
    return LayerNorm{constant<T>(p + ".gain", d, T(1)), constant<T>(p + ".bias", d, T(0))};
  };
  auto make_ff = [&](const std::string& p) {
    return FeedForward{xavier<T>(p + ".w1", d, config_.d_ff, rng), constant<T>(p + ".b1", config_.d_ff, T(0)),
                       xavier<T>(p + ".w2", config_.d_ff, d, rng), constant<T>(p + ".b2", d, T(0))};
  };
  auto make_encoder = [&](const std::string& p, std::size_t vocab) {
    Encoder e;
    e.embedding = embedding_table<T>(p + ".embedding", vocab, d, rng);
    for (std::size_t l = 0; l < config_.n_enc_layers; ++l) {
      const std::string lp = p + ".layers." + std::to_string(l);
      EncoderLayer layer{make_norm(lp + ".ln_attn"), make_norm(lp + ".ln_ff"), make_attention(lp + ".attn"),
                         make_ff(lp + ".ff")};
      e.layers.push_back(std::move(layer));
    }
    e.ln_out = make_norm(p + ".ln_out");
    return e;
  };

  text_encoder_ = make_encoder("text_encoder", config_.text_vocab);
  phone_encoder_ = make_encoder("phone_encoder", config_.phone_vocab);
  target_embedding_ = embedding_table<T>("decoder.embedding", config_.text_vocab, d, rng);
  for (std::size_t l = 0; l < config_.n_dec_layers; ++l) {
    const std::string lp = "decoder.layers." + std::to_string(l);
    DecoderLayer layer{make_norm(lp + ".ln_self"),        make_norm(lp + ".ln_text"),
                       make_norm(lp + ".ln_phone"),       make_norm(lp + ".ln_ff"),
                       make_attention(lp + ".self_attn"), make_attention(lp + ".text_attn"),
                       make_attention(lp + ".phone_attn"), make_ff(lp + ".ff")};
    decoder_layers_.push_back(std::move(layer));
  }
  decoder_ln_out_ = make_norm("decoder.ln_out");
  out_weight_ = xavier<T>("output.weight", d, config_.text_vocab, rng);
  out_bias_ = constant<T>("output.bias", config_.text_vocab, T(0));
  positions_ = sinusoid_table<T>(config_.max_len, d);
}

template <typename T>
std::vector<Parameter<T>*> PatModel<T>::collect() {
  std::vector<Parameter<T>*> out;
  auto att = [&](Attention& a) { out.insert(out.end(), {&a.wq, &a.wk, &a.wv, &a.wo}); };
  auto ln = [&](LayerNorm& n) { out.insert(out.end(), {&n.gain, &n.bias}); };
  auto ff = [&](FeedForward& f) { out.insert(out.end(), {&f.w1, &f.b1, &f.w2, &f.b2}); };
  for (Encoder* e : {&text_encoder_, &phone_encoder_}) {
    out.push_back(&e->embedding);
    for (auto& l : e->layers) {
      ln(l.ln_attn);
      att(l.attn);
      ln(l.ln_ff);
      ff(l.ff);
    }
    ln(e->ln_out);
  }
  out.push_back(&target_embedding_);
  for (auto& l : decoder_layers_) {
    ln(l.ln_self);
    att(l.self_attn);
    ln(l.ln_text);
    att(l.text_attn);
    ln(l.ln_phone);
    att(l.phone_attn);
    ln(l.ln_ff);
    ff(l.ff);
  }
  ln(decoder_ln_out_);
  out.push_back(&out_weight_);
  out.push_back(&out_bias_);
  return out;
}

template <typename T>
std::vector<Parameter<T>*> PatModel<T>::parameters() {
  return collect();
}

template <typename T>
std::size_t PatModel<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : const_cast<PatModel*>(this)->collect()) n += p->value.size();
  return n;
}

template <typename T>
Var PatModel<T>::embed(Graph<T>& g, const Parameter<T>& table, const Packed& seq) const {
  Var x = g.scale(g.embedding(g.param(table), seq.ids), static_cast<T>(std::sqrt(double(config_.d_model))));
  Tensor<T> pe = Tensor<T>::matrix(seq.ids.size(), config_.d_model);
  for (std::size_t b = 0; b < seq.items(); ++b) {
    const std::size_t len = seq.length(b);
    if (len > config_.max_len) {
      fail(ErrorKind::kShape, "sequence of length " + std::to_string(len) + " exceeds max_len");
    }
    for (std::size_t i = 0; i < len; ++i) pe.mat().row(seq.offsets[b] + i) = positions_.mat().row(i);
  }
  x = g.add(x, g.input(std::move(pe)));
  return g.dropout(x, static_cast<T>(config_.dropout_rate));
}

template <typename T>
Var PatModel<T>::norm(Graph<T>& g, const LayerNorm& ln, Var x) const {
  return g.layer_norm(x, g.param(ln.gain), g.param(ln.bias));
}

template <typename T>
Var PatModel<T>::attend(Graph<T>& g, const Attention& a, Var queries, Var memory, const AttentionLayout& layout) const {
  Var q = g.matmul(queries, g.param(a.wq));
  Var k = g.matmul(memory, g.param(a.wk));
  Var v = g.matmul(memory, g.param(a.wv));
  Var ctx = g.attention(q, k, v, layout, static_cast<T>(config_.attn_temperature));
  return g.matmul(ctx, g.param(a.wo));
}

template <typename T>
Var PatModel<T>::feed_forward(Graph<T>& g, const FeedForward& ff, Var x) const {
  Var h = g.gelu(g.add_row(g.matmul(x, g.param(ff.w1)), g.param(ff.b1)));
  h = g.dropout(h, static_cast<T>(config_.dropout_rate));
  return g.add_row(g.matmul(h, g.param(ff.w2)), g.param(ff.b2));
}

template <typename T>
Var PatModel<T>::residual(Graph<T>& g, Var x, Var update) const {
  return g.add(x, g.dropout(update, static_cast<T>(config_.dropout_rate)));
}

template <typename T>
Var PatModel<T>::run_encoder(Graph<T>& g, const Encoder& enc, const Packed& seq) const {
  Var x = embed(g, enc.embedding, seq);
  const AttentionLayout layout{seq.offsets, seq.offsets, config_.n_heads, false};
  for (const auto& l : enc.layers) {
    Var h = norm(g, l.ln_attn, x);
    x = residual(g, x, attend(g, l.attn, h, h, layout));
    x = residual(g, x, feed_forward(g, l.ff, norm(g, l.ln_ff, x)));
  }
  return norm(g, enc.ln_out, x);
}

template <typename T>
Var PatModel<T>::encode_text(Graph<T>& g, const Packed& tokens) const {
  return run_encoder(g, text_encoder_, tokens);
}

template <typename T>
Var PatModel<T>::encode_phones(Graph<T>& g, const Packed& phones) const {
  return run_encoder(g, phone_encoder_, phones);
}

template <typename T>
Var PatModel<T>::decode(Graph<T>& g, Var text_hidden, const Packed& text, Var phone_hidden, const Packed& phones,
                        const Packed& decoder_in) const {
  if (decoder_in.items() != text.items() || decoder_in.items() != phones.items()) {
    fail(ErrorKind::kShape, "decode: batch item counts differ");
  }
  for (std::size_t b = 0; b < decoder_in.items(); ++b) {
    if (decoder_in.length(b) == 0) fail(ErrorKind::kParameter, "decode: empty target prefix");
  }
  const std::size_t h = config_.n_heads;
  const AttentionLayout self_layout{decoder_in.offsets, decoder_in.offsets, h, true};
  const AttentionLayout text_layout{decoder_in.offsets, text.offsets, h, false};
  const AttentionLayout phone_layout{decoder_in.offsets, phones.offsets, h, false};

  Var x = embed(g, target_embedding_, decoder_in);
  for (const auto& l : decoder_layers_) {
    Var n = norm(g, l.ln_self, x);
    x = residual(g, x, attend(g, l.self_attn, n, n, self_layout));
    x = residual(g, x, attend(g, l.text_attn, norm(g, l.ln_text, x), text_hidden, text_layout));
    x = residual(g, x, attend(g, l.phone_attn, norm(g, l.ln_phone, x), phone_hidden, phone_layout));
    x = residual(g, x, feed_forward(g, l.ff, norm(g, l.ln_ff, x)));
  }
  return norm(g, decoder_ln_out_, x);
}

template <typename T>
Var PatModel<T>::project(Graph<T>& g, Var states) const {
  return g.add_row(g.matmul(states, g.param(out_weight_)), g.param(out_bias_));
}

template <typename T>
Var PatModel<T>::loss(Graph<T>& g, const Batch& batch) const {
  Var th = encode_text(g, batch.text);
  Var ph = encode_phones(g, batch.phones);
  Var states = decode(g, th, batch.text, ph, batch.phones, batch.decoder_in);
  return g.cross_entropy(project(g, states), batch.targets, text::kPadId, static_cast<T>(config_.label_smoothing));
}

template <typename T>
EncodedInput<T> PatModel<T>::encode(std::span<const int> asr_tokens, std::span<const int> phones) const {
  Packed t, p;
  t.append(wrap(asr_tokens, config_.max_len, "text input"));
  p.append(wrap(phones, config_.max_len, "phoneme input"));
  Graph<T> g(false);
  EncodedInput<T> out;
  out.text = g.value(encode_text(g, t));
  out.phones = g.value(encode_phones(g, p));
  return out;
}

template <typename T>
DecoderResult<T> PatModel<T>::decode_states(const EncodedInput<T>& enc, std::span<const int> prefix,
                                            bool last_only) const {
  if (prefix.empty()) fail(ErrorKind::kParameter, "decode_states: empty prefix");
  if (prefix.front() != text::kBosId) fail(ErrorKind::kParameter, "decode_states: prefix must start with BOS");
  Packed t, p, d;
  t.offsets.push_back(enc.text.rows());
  p.offsets.push_back(enc.phones.rows());
  d.append(prefix);
  Graph<T> g(false);
  Var states = decode(g, g.view(enc.text), t, g.view(enc.phones), p, d);
  DecoderResult<T> out;
  out.states = g.value(states);
  if (last_only) {
    const std::size_t last = prefix.size() - 1;
    out.logits = g.value(project(g, g.select_rows(states, std::span<const std::size_t>(&last, 1))));
  } else {
    out.logits = g.value(project(g, states));
  }
  return out;
}

template <typename T>
std::vector<nn::NamedTensor> PatModel<T>::state_dict() const {
  std::vector<nn::NamedTensor> out;
  for (const auto* p : const_cast<PatModel*>(this)->collect()) {
    out.push_back({p->name, p->value.template cast<float>()});
  }
  return out;
}

template <typename T>
void PatModel<T>::load_state_dict(const std::vector<nn::NamedTensor>& tensors) {
  std::map<std::string, const Tensor<float>*> by_name;
  for (const auto& t : tensors) by_name[t.name] = &t.tensor;
  auto params = collect();
  if (by_name.size() != params.size()) {
    fail(ErrorKind::kFormat, "checkpoint holds " + std::to_string(by_name.size()) + " tensors, model expects " +
                                 std::to_string(params.size()));
  }
  for (auto* p : params) {
    auto it = by_name.find(p->name);
    if (it == by_name.end()) fail(ErrorKind::kFormat, "checkpoint lacks parameter " + p->name);
    if (it->second->shape() != p->value.shape()) {
      fail(ErrorKind::kFormat, "checkpoint parameter " + p->name + " has shape " + nn::shape_string(it->second->shape()) +
                                   ", model expects " + nn::shape_string(p->value.shape()));
    }
    p->value = it->second->template cast<T>();
  }
}

template <typename T>
Digest PatModel<T>::checksum() const {
  return sha256(nn::encode_checkpoint(state_dict()));
}

template class PatModel<float>;
template class PatModel<double>;

Batch make_batch(std::span<const Example* const> examples, std::size_t max_len) {
  Batch b;
  for (const Example* ex : examples) {
    b.text.append(wrap(ex->asr_tokens, max_len, "text input"));
    b.phones.append(wrap(ex->phones, max_len, "phoneme input"));
    const std::size_t n = std::min(ex->target.size(), max_len - 1);
    const auto target = std::span<const int>(ex->target).first(n);
    std::vector<int> in{text::kBosId};
    in.insert(in.end(), target.begin(), target.end());
    b.decoder_in.append(in);
    b.targets.insert(b.targets.end(), target.begin(), target.end());
    b.targets.push_back(text::kEosId);
  }
  return b;
}

std::vector<double> softmax(std::span<const float> logits) {
  std::vector<double> p(logits.size());
  if (logits.empty()) return p;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) z += (p[i] = std::exp(static_cast<double>(logits[i]) - mx));
  for (auto& x : p) x /= z;
  return p;
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

std::vector<int> greedy_decode(const PatModel<float>& model, std::span<const int> asr_tokens,
                               std::span<const int> phones, std::size_t max_len) {
  const auto enc = model.encode(asr_tokens, phones);
  std::vector<int> prefix{text::kBosId};
  const std::size_t limit = std::min(max_len, model.config().max_len - 1);
  std::vector<int> out;
  while (out.size() < limit) {
    const auto step = model.decode_states(enc, prefix, true);
    const int next = static_cast<int>(argmax(softmax(step.logits.data())));
    if (next == text::kEosId) break;
    out.push_back(next);
    prefix.push_back(next);
  }
  return out;
}

void save_model(const PatModel<float>& model, const std::string& path, const nlohmann::json& metadata) {
  nn::save_checkpoint(path, model.state_dict());
  nlohmann::json sidecar = metadata;
  sidecar["model"] = model.config().to_json();
  sidecar["checksum"] = to_hex(model.checksum());
  write_text_file(path + ".json", sidecar.dump(2) + "\n");
}

PatModel<float> load_model(const std::string& path, nlohmann::json* metadata) {
  nlohmann::json sidecar;
  try {
    sidecar = nlohmann::json::parse(read_text_file(path + ".json"));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, path + ".json: " + e.what());
  }
  if (!sidecar.contains("model")) fail(ErrorKind::kFormat, path + ".json: missing model config");
  PatModel<float> model(PatConfig::from_json(sidecar.at("model")), 0);
  model.load_state_dict(nn::load_checkpoint(path));
  if (metadata != nullptr) *metadata = std::move(sidecar);
  return model;
}

}  // namespace kpat::model
