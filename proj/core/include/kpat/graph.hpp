#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "kpat/random.hpp"
#include "kpat/tensor.hpp"

namespace kpat::nn {

/// Handle to a node of a Graph. Only meaningful for the graph that made it.
struct Var {
  std::uint32_t id = UINT32_MAX;
  bool valid() const { return id != UINT32_MAX; }
};

/// Describes how packed sequences line up for attention. Item b owns query
/// rows [q_offsets[b], q_offsets[b+1]) and key/value rows
/// [k_offsets[b], k_offsets[b+1]). Rows never attend across items, so a
/// packed batch behaves exactly like the items run one at a time.
struct AttentionLayout {
  std::vector<std::size_t> q_offsets;
  std::vector<std::size_t> k_offsets;
  std::size_t n_heads = 1;
  bool causal = false;  // query i sees keys j <= i within its item

  static AttentionLayout single(std::size_t q_rows, std::size_t k_rows, std::size_t n_heads = 1,
                                bool causal = false) {
    return AttentionLayout{{0, q_rows}, {0, k_rows}, n_heads, causal};
  }
  std::size_t items() const { return q_offsets.empty() ? 0 : q_offsets.size() - 1; }
};

/// Tape-based reverse-mode autodiff over 2-D tensors.
///
/// Nodes are appended in evaluation order, which is already a topological
/// order; backward() walks them once in reverse. A graph is single-threaded
/// and meant to be rebuilt for every forward pass.
template <typename T>
class Graph {
 public:
  /// With `record_backward` false no backward closures are stored (inference).
  explicit Graph(bool record_backward = true) : record_(record_backward) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Enables inverted dropout; without an rng dropout is the identity.
  void enable_dropout(Rng* rng) { dropout_rng_ = rng; }

  Var input(Tensor<T> value);
  Var param(const Parameter<T>& p);
  /// Constant node referencing external storage (no copy, no gradient).
  Var view(const Tensor<T>& value);

  const Tensor<T>& value(Var v) const;
  /// Gradient after backward(); zeros if nothing flowed into `v`.
  const Tensor<T>& grad(Var v);
  std::size_t size() const { return nodes_.size(); }

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var add_row(Var x, Var bias);
  Var scale(Var x, T factor);
  Var gelu(Var x);
  Var layer_norm(Var x, Var gain, Var bias, T epsilon = T(1e-5));
  Var softmax_rows(Var x);
  Var attention(Var q, Var k, Var v, const AttentionLayout& layout, T temperature = T(1));
  Var embedding(Var table, std::span<const int> ids);
  Var select_rows(Var x, std::span<const std::size_t> rows);
  Var dropout(Var x, T rate);
  /// Mean negative log-likelihood over rows whose target differs from pad_id.
  Var cross_entropy(Var logits, std::span<const int> targets, int pad_id, T label_smoothing = T(0));
  Var sum_squares(Var x);
  Var sum(Var x);

  /// Seeds d(loss)/d(loss) = 1 and propagates to every reachable node;
  /// parameter gradients are accumulated into Parameter::grad.
  void backward(Var loss);

 private:
  struct Node {
    Tensor<T> value;
    const Tensor<T>* external = nullptr;
    const Parameter<T>* param = nullptr;
    Tensor<T> grad;
    bool needs_grad = false;
    std::function<void()> backward;
    const char* op = "input";

    const Tensor<T>& val() const { return external ? *external : value; }
  };

  Var push(Tensor<T> value, const char* op, bool needs_grad);
  Node& node(Var v);
  const Node& node(Var v) const;
  bool needs(Var v) const { return record_ && node(v).needs_grad; }
  Tensor<T>& grad_ref(Var v);

  bool record_;
  Rng* dropout_rng_ = nullptr;
  std::vector<Node> nodes_;
  Tensor<T> empty_grad_;
};

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace kpat::nn
