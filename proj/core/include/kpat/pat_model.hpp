#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "kpat/binary_io.hpp"
#include "kpat/checkpoint.hpp"
#include "kpat/graph.hpp"
#include "kpat/random.hpp"

namespace kpat::model {

struct PatConfig {
  std::size_t n_enc_layers = 2;
  std::size_t n_dec_layers = 2;
  std::size_t d_model = 64;  // d_k: hidden size, also the datastore key size
  std::size_t n_heads = 4;
  std::size_t d_ff = 256;
  std::size_t text_vocab = 1000;
  std::size_t phone_vocab = 0;  // 0 = size of the built-in phoneme inventory
  double dropout_rate = 0.1;
  double input_dropout_rate = 0.1;
  double clean_swap_prob = 0.3;
  double attn_temperature = 1.0;
  double label_smoothing = 0.0;
  std::size_t max_len = 128;

  /// 2 layers, d=64, 4 heads, d_ff=256, vocab 1000.
  static PatConfig desk();
  /// 4 layers, d=128, 8 heads, d_ff=512, vocab 32000.
  static PatConfig paper();

  void validate() const;
  nlohmann::json to_json() const;
  static PatConfig from_json(const nlohmann::json& j);
};

/// Sequences packed end to end; item b spans ids[offsets[b], offsets[b+1]).
struct Packed {
  std::vector<int> ids;
  std::vector<std::size_t> offsets{0};

  void append(std::span<const int> seq) {
    ids.insert(ids.end(), seq.begin(), seq.end());
    offsets.push_back(ids.size());
  }
  std::size_t items() const { return offsets.size() - 1; }
  std::size_t length(std::size_t b) const { return offsets[b + 1] - offsets[b]; }
};

/// One teacher-forced training batch. Encoder inputs are wrapped in BOS/EOS;
/// decoder_in is BOS + target and targets is target + EOS.
struct Batch {
  Packed text;
  Packed phones;
  Packed decoder_in;
  std::vector<int> targets;
};

/// Raw training pair before batching: ids without BOS/EOS.
struct Example {
  std::vector<int> asr_tokens;
  std::vector<int> phones;
  std::vector<int> target;
  std::vector<int> clean_tokens;  // reference tokens used for clean swap-in
};

template <typename T>
struct EncodedInput {
  nn::Tensor<T> text;    // N x d
  nn::Tensor<T> phones;  // M x d
};

template <typename T>
struct DecoderResult {
  nn::Tensor<T> states;  // O x d, final-layer decoder outputs D_w
  nn::Tensor<T> logits;  // O x V, or 1 x V when only the last row was projected
};

/// Phone Augmented Transformer: a text encoder and a phoneme encoder feeding a
/// decoder whose layers run causal self-attention, then cross-attention over
/// the text encoding, then cross-attention over the phoneme encoding, then a
/// feed-forward block. Pre-norm residual blocks throughout.
template <typename T>
class PatModel {
 public:
  PatModel(PatConfig config, std::uint64_t seed);

  const PatConfig& config() const { return config_; }
  std::vector<nn::Parameter<T>*> parameters();
  std::size_t parameter_count() const;

  // Graph-level building blocks (batched via packing).
  nn::Var encode_text(nn::Graph<T>& g, const Packed& tokens) const;
  nn::Var encode_phones(nn::Graph<T>& g, const Packed& phones) const;
  /// Returns final decoder states (rows of decoder_in).
  nn::Var decode(nn::Graph<T>& g, nn::Var text_hidden, const Packed& text, nn::Var phone_hidden,
                 const Packed& phones, const Packed& decoder_in) const;
  nn::Var project(nn::Graph<T>& g, nn::Var states) const;
  /// Mean cross-entropy of a teacher-forced batch.
  nn::Var loss(nn::Graph<T>& g, const Batch& batch) const;

  // Single-utterance inference (no gradient recording). Inputs exclude BOS/EOS.
  EncodedInput<T> encode(std::span<const int> asr_tokens, std::span<const int> phones) const;
  /// `prefix` starts with BOS. With `last_only`, logits cover the final row only.
  DecoderResult<T> decode_states(const EncodedInput<T>& enc, std::span<const int> prefix,
                                 bool last_only = false) const;

  std::vector<nn::NamedTensor> state_dict() const;
  void load_state_dict(const std::vector<nn::NamedTensor>& tensors);
  /// SHA-256 of the encoded checkpoint; identifies the key space of datastores.
  Digest checksum() const;

 private:
  struct Attention {
    nn::Parameter<T> wq, wk, wv, wo;
  };
  struct LayerNorm {
    nn::Parameter<T> gain, bias;
  };
  struct FeedForward {
    nn::Parameter<T> w1, b1, w2, b2;
  };
  struct EncoderLayer {
    LayerNorm ln_attn, ln_ff;
    Attention attn;
    FeedForward ff;
  };
  struct DecoderLayer {
    LayerNorm ln_self, ln_text, ln_phone, ln_ff;
    Attention self_attn, text_attn, phone_attn;
    FeedForward ff;
  };
  struct Encoder {
    nn::Parameter<T> embedding;
    std::vector<EncoderLayer> layers;
    LayerNorm ln_out;
  };

  nn::Var embed(nn::Graph<T>& g, const nn::Parameter<T>& table, const Packed& seq) const;
  nn::Var run_encoder(nn::Graph<T>& g, const Encoder& enc, const Packed& seq) const;
  nn::Var attend(nn::Graph<T>& g, const Attention& a, nn::Var queries, nn::Var memory,
                 const nn::AttentionLayout& layout) const;
  nn::Var norm(nn::Graph<T>& g, const LayerNorm& ln, nn::Var x) const;
  nn::Var feed_forward(nn::Graph<T>& g, const FeedForward& ff, nn::Var x) const;
  nn::Var residual(nn::Graph<T>& g, nn::Var x, nn::Var update) const;
  std::vector<nn::Parameter<T>*> collect();

  PatConfig config_;
  Encoder text_encoder_;
  Encoder phone_encoder_;
  nn::Parameter<T> target_embedding_;
  std::vector<DecoderLayer> decoder_layers_;
  LayerNorm decoder_ln_out_;
  nn::Parameter<T> out_weight_, out_bias_;
  nn::Tensor<T> positions_;  // max_len x d sinusoidal table
};

extern template class PatModel<float>;
extern template class PatModel<double>;

/// Wraps encoder inputs in BOS/EOS and truncates everything to `max_len`.
Batch make_batch(std::span<const Example* const> examples, std::size_t max_len);

/// Argmax decoding until EOS or `max_len` tokens; ties go to the lowest id.
/// Output excludes BOS/EOS.
std::vector<int> greedy_decode(const PatModel<float>& model, std::span<const int> asr_tokens,
                               std::span<const int> phones, std::size_t max_len);

/// Softmax of one logits row into a probability vector (double for stable sums).
std::vector<double> softmax(std::span<const float> logits);

/// Lowest index among the maxima.
std::size_t argmax(std::span<const double> values);

/// Checkpoint file plus "<path>.json" sidecar holding the config.
void save_model(const PatModel<float>& model, const std::string& path, const nlohmann::json& metadata);
PatModel<float> load_model(const std::string& path, nlohmann::json* metadata = nullptr);

}  // namespace kpat::model
