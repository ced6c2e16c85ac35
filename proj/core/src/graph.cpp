#include "kpat/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace kpat::nn {

namespace {

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    fail(ErrorKind::kShape, std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                                shape_string(b.shape()));
  }
}

}  // namespace

template <typename T>
typename Graph<T>::Node& Graph<T>::node(Var v) {
  if (v.id >= nodes_.size()) fail(ErrorKind::kParameter, "graph: invalid variable handle");
  return nodes_[v.id];
}

template <typename T>
const typename Graph<T>::Node& Graph<T>::node(Var v) const {
  if (v.id >= nodes_.size()) fail(ErrorKind::kParameter, "graph: invalid variable handle");
  return nodes_[v.id];
}

template <typename T>
Var Graph<T>::push(Tensor<T> value, const char* op, bool needs_grad) {
  if (!value.all_finite()) {
    fail(ErrorKind::kNumeric, std::string("non-finite value produced by ") + op);
  }
  Node n;
  n.value = std::move(value);
  n.needs_grad = record_ && needs_grad;
  n.op = op;
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
Var Graph<T>::input(Tensor<T> value) {
  return push(std::move(value), "input", false);
}

template <typename T>
Var Graph<T>::view(const Tensor<T>& value) {
  Node n;
  n.external = &value;
  n.op = "view";
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
Var Graph<T>::param(const Parameter<T>& p) {
  Node n;
  n.external = &p.value;
  n.param = &p;
  n.needs_grad = record_;
  n.op = "param";
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
const Tensor<T>& Graph<T>::value(Var v) const {
  return node(v).val();
}

template <typename T>
const Tensor<T>& Graph<T>::grad(Var v) {
  Node& n = node(v);
  if (n.grad.size() != n.val().size()) n.grad = Tensor<T>(n.val().shape());
  return n.grad;
}

template <typename T>
Tensor<T>& Graph<T>::grad_ref(Var v) {
  Node& n = node(v);
  if (n.grad.size() != n.val().size()) n.grad = Tensor<T>(n.val().shape());
  return n.grad;
}

template <typename T>
Var Graph<T>::matmul(Var a, Var b) {
  const auto& A = value(a);
  const auto& B = value(b);
  if (A.cols() != B.rows()) {
    fail(ErrorKind::kShape, "matmul: inner dimensions differ, " + shape_string(A.shape()) + " x " +
                                shape_string(B.shape()));
  }
  auto out = Tensor<T>::matrix(A.rows(), B.cols());
  out.mat().noalias() = A.mat() * B.mat();
  const bool ng = needs(a) || needs(b);
  Var c = push(std::move(out), "matmul", ng);
  if (ng) {
    node(c).backward = [this, a, b, c] {
      const auto& dC = node(c).grad;
      if (needs(a)) grad_ref(a).mat().noalias() += dC.mat() * value(b).mat().transpose();
      if (needs(b)) grad_ref(b).mat().noalias() += value(a).mat().transpose() * dC.mat();
    };
  }
  return c;
}

template <typename T>
Var Graph<T>::add(Var a, Var b) {
  const auto& A = value(a);
  const auto& B = value(b);
  require_same_shape(A, B, "add");
  Tensor<T> out = A;
  out.mat() += B.mat();
  const bool ng = needs(a) || needs(b);
  Var c = push(std::move(out), "add", ng);
  if (ng) {
    node(c).backward = [this, a, b, c] {
      const auto& dC = node(c).grad;
      if (needs(a)) grad_ref(a).mat() += dC.mat();
      if (needs(b)) grad_ref(b).mat() += dC.mat();
    };
  }
  return c;
}

template <typename T>
Var Graph<T>::add_row(Var x, Var bias) {
  const auto& X = value(x);
  const auto& B = value(bias);
  if (B.size() != X.cols()) {
    fail(ErrorKind::kShape, "add_row: bias " + shape_string(B.shape()) + " does not match " + shape_string(X.shape()));
  }
  Tensor<T> out = X;
  const ConstMatrixMap<T> brow(B.data().data(), 1, B.size());
  out.mat().rowwise() += brow.row(0);
  const bool ng = needs(x) || needs(bias);
  Var c = push(std::move(out), "add_row", ng);
  if (ng) {
    node(c).backward = [this, x, bias, c] {
      const auto& dC = node(c).grad;
      if (needs(x)) grad_ref(x).mat() += dC.mat();
      if (needs(bias)) {
        auto& dB = grad_ref(bias);
        MatrixMap<T>(dB.data().data(), 1, dB.size()).row(0) += dC.mat().colwise().sum();
      }
    };
  }
  return c;
}

template <typename T>
Var Graph<T>::scale(Var x, T factor) {
  Tensor<T> out = value(x);
  out.mat() *= factor;
  const bool ng = needs(x);
  Var c = push(std::move(out), "scale", ng);
  if (ng) {
    node(c).backward = [this, x, c, factor] { grad_ref(x).mat() += factor * node(c).grad.mat(); };
  }
  return c;
}

template <typename T>
Var Graph<T>::gelu(Var x) {
  const auto& X = value(x);
  Tensor<T> out(X.shape());
  const T inv_sqrt2 = T(1) / std::sqrt(T(2));
  for (std::size_t i = 0; i < X.size(); ++i) {
    const T v = X[i];
    out[i] = T(0.5) * v * (T(1) + std::erf(v * inv_sqrt2));
  }
  const bool ng = needs(x);
  Var c = push(std::move(out), "gelu", ng);
  if (ng) {
    node(c).backward = [this, x, c, inv_sqrt2] {
      const auto& X = value(x);
      const auto& dC = node(c).grad;
      auto& dX = grad_ref(x);
      const T inv_sqrt_2pi = T(1) / std::sqrt(T(2) * std::numbers::pi_v<T>);
      for (std::size_t i = 0; i < X.size(); ++i) {
        const T v = X[i];
        const T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
        const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * v * v);
        dX[i] += dC[i] * (cdf + v * pdf);
      }
    };
  }
  return c;
}

template <typename T>
Var Graph<T>::layer_norm(Var x, Var gain, Var bias, T epsilon) {
  const auto& X = value(x);
  const std::size_t rows = X.rows();
  const std::size_t n = X.cols();
  if (value(gain).size() != n || value(bias).size() != n) {
    fail(ErrorKind::kShape, "layer_norm: gain/bias size does not match " + shape_string(X.shape()));
  }
  Tensor<T> normalized(X.shape());
  std::vector<T> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto row = X.mat().row(r);
    const T mean = row.mean();
    const T var = (row.array() - mean).square().mean();
    inv_std[r] = T(1) / std::sqrt(var + epsilon);
    normalized.mat().row(r) = (row.array() - mean) * inv_std[r];
  }
  Tensor<T> out = normalized;
  const auto g = ConstMatrixMap<T>(value(gain).data().data(), 1, n).row(0).array();
  const auto b = ConstMatrixMap<T>(value(bias).data().data(), 1, n).row(0).array();
  for (std::size_t r = 0; r < rows; ++r) {
    out.mat().row(r).array() = out.mat().row(r).array() * g + b;
  }
  const bool ng = needs(x) || needs(gain) || needs(bias);
  Var c = push(std::move(out), "layer_norm", ng);
  if (ng) {
    node(c).backward = [this, x, gain, bias, c, n, xhat = std::move(normalized), inv_std = std::move(inv_std)] {
      const auto& dY = node(c).grad;
      const auto g = ConstMatrixMap<T>(value(gain).data().data(), 1, n).row(0).array();
      if (needs(gain)) {
        auto& dG = grad_ref(gain);
        MatrixMap<T>(dG.data().data(), 1, n).row(0) += (dY.mat().array() * xhat.mat().array()).matrix().colwise().sum();
      }
      if (needs(bias)) {
        auto& dB = grad_ref(bias);
        MatrixMap<T>(dB.data().data(), 1, n).row(0) += dY.mat().colwise().sum();
      }
      if (needs(x)) {
        auto& dX = grad_ref(x);
        for (std::size_t r = 0; r < dY.rows(); ++r) {
          const Eigen::Array<T, 1, Eigen::Dynamic> dxhat = dY.mat().row(r).array() * g;
          const auto xh = xhat.mat().row(r).array();
          const T mean_d = dxhat.mean();
          const T mean_dx = (dxhat * xh).mean();
          dX.mat().row(r).array() += inv_std[r] * (dxhat - mean_d - xh * mean_dx);
        }
      }
    };
  }
  return c;
}

template <typename T>
Var Graph<T>::softmax_rows(Var x) {
  const auto& X = value(x);
  Tensor<T> out(X.shape());
  for (std::size_t r = 0; r < X.rows(); ++r) {
    const auto row = X.mat().row(r);
    const T mx = row.maxCoeff();
    auto o = out.mat().row(r);
    o = (row.array() - mx).exp().matrix();
    o /= o.sum();
  }
  const bool ng = needs(x);
  Var c = push(std::move(out), "softmax_rows", ng);
  if (ng) {
    node(c).backward = [this, x, c] {
      const auto& Y = value(c);
      const auto& dY = node(c).grad;
      auto& dX = grad_ref(x);
      for (std::size_t r = 0; r < Y.rows(); ++r) {
        const T dot = Y.mat().row(r).dot(dY.mat().row(r));
        dX.mat().row(r).array() += Y.mat().row(r).array() * (dY.mat().row(r).array() - dot);
      }
    };
  }
  return c;
}

template <typename T>
Var Graph<T>::attention(Var q, Var k, Var v, const AttentionLayout& layout, T temperature) {
  if (!(temperature > T(0))) fail(ErrorKind::kParameter, "attention: temperature must be > 0");
  const auto& Q = value(q);
  const auto& K = value(k);
  const auto& V = value(v);
  const std::size_t d = Q.cols();
  if (K.cols() != d || V.cols() != d || K.rows() != V.rows()) {
    fail(ErrorKind::kShape, "attention: q " + shape_string(Q.shape()) + ", k " + shape_string(K.shape()) + ", v " +
                                shape_string(V.shape()) + " are inconsistent");
  }
  const std::size_t heads = layout.n_heads;
  if (heads == 0 || d % heads != 0) fail(ErrorKind::kShape, "attention: model dim not divisible by head count");
  if (layout.q_offsets.size() != layout.k_offsets.size() || layout.q_offsets.empty() ||
      layout.q_offsets.back() != Q.rows() || layout.k_offsets.back() != K.rows()) {
    fail(ErrorKind::kShape, "attention: layout offsets do not cover the inputs");
  }
  const std::size_t dh = d / heads;
  const T scale = T(1) / (temperature * std::sqrt(static_cast<T>(dh)));
  Tensor<T> out = Tensor<T>::matrix(Q.rows(), d);

  // Attention probabilities for every (item, head), kept for the backward pass.
  std::vector<RowMatrix<T>> probs;
  probs.reserve(layout.items() * heads);
  for (std::size_t b = 0; b < layout.items(); ++b) {
    const std::size_t q0 = layout.q_offsets[b], lq = layout.q_offsets[b + 1] - q0;
    const std::size_t k0 = layout.k_offsets[b], lk = layout.k_offsets[b + 1] - k0;
    for (std::size_t h = 0; h < heads; ++h) {
      RowMatrix<T> p(lq, lk);
      if (lq > 0 && lk > 0) {
        p.noalias() = Q.mat().block(q0, h * dh, lq, dh) * K.mat().block(k0, h * dh, lk, dh).transpose();
        p *= scale;
        for (std::size_t i = 0; i < lq; ++i) {
          const std::size_t visible = layout.causal ? std::min(lk, i + 1) : lk;
          auto row = p.row(i);
          const T mx = row.head(visible).maxCoeff();
          row.head(visible) = (row.head(visible).array() - mx).exp().matrix();
          row.head(visible) /= row.head(visible).sum();
          if (visible < lk) row.tail(lk - visible).setZero();
        }
        out.mat().block(q0, h * dh, lq, dh).noalias() = p * V.mat().block(k0, h * dh, lk, dh);
      }
      probs.push_back(std::move(p));
    }
  }

  const bool ng = needs(q) || needs(k) || needs(v);
  Var c = push(std::move(out), "attention", ng);
  if (ng) {
    node(c).backward = [this, q, k, v, c, layout, heads, dh, scale, probs = std::move(probs)] {
      const auto& dO = node(c).grad;
      const auto& Q = value(q);
      const auto& K = value(k);
      const auto& V = value(v);
      Tensor<T>* dQ = needs(q) ? &grad_ref(q) : nullptr;
      Tensor<T>* dK = needs(k) ? &grad_ref(k) : nullptr;
      Tensor<T>* dV = needs(v) ? &grad_ref(v) : nullptr;
      RowMatrix<T> dp, ds;
      for (std::size_t b = 0; b < layout.items(); ++b) {
        const std::size_t q0 = layout.q_offsets[b], lq = layout.q_offsets[b + 1] - q0;
        const std::size_t k0 = layout.k_offsets[b], lk = layout.k_offsets[b + 1] - k0;
        if (lq == 0 || lk == 0) continue;
        for (std::size_t h = 0; h < heads; ++h) {
          const RowMatrix<T>& p = probs[b * heads + h];
          const auto dOh = dO.mat().block(q0, h * dh, lq, dh);
          if (dV) dV->mat().block(k0, h * dh, lk, dh).noalias() += p.transpose() * dOh;
          if (!dQ && !dK) continue;
          dp.noalias() = dOh * V.mat().block(k0, h * dh, lk, dh).transpose();
          ds = p.array() * (dp.array().colwise() - (dp.array() * p.array()).rowwise().sum());
          if (dQ) dQ->mat().block(q0, h * dh, lq, dh).noalias() += scale * (ds * K.mat().block(k0, h * dh, lk, dh));
          if (dK) {
            dK->mat().block(k0, h * dh, lk, dh).noalias() += scale * (ds.transpose() * Q.mat().block(q0, h * dh, lq, dh));
          }
        }
      }
    };
  }
  return c;
}

template <typename T>
Var Graph<T>::embedding(Var table, std::span<const int> ids) {
  const auto& W = value(table);
  const std::size_t d = W.cols();
  Tensor<T> out = Tensor<T>::matrix(ids.size(), d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= W.rows()) {
      fail(ErrorKind::kParameter, "embedding: id " + std::to_string(ids[i]) + " outside table of " +
                                      std::to_string(W.rows()) + " rows");
    }
    out.mat().row(i) = W.mat().row(ids[i]);
  }
  const bool ng = needs(table);
  Var c = push(std::move(out), "embedding", ng);
  if (ng) {
    node(c).backward = [this, table, c, idx = std::vector<int>(ids.begin(), ids.end())] {
      const auto& dC = node(c).grad;
      auto& dW = grad_ref(table);
      for (std::size_t i = 0; i < idx.size(); ++i) dW.mat().row(idx[i]) += dC.mat().row(i);
    };
  }
  return c;
}

template <typename T>
Var Graph<T>::select_rows(Var x, std::span<const std::size_t> rows) {
  const auto& X = value(x);
  Tensor<T> out = Tensor<T>::matrix(rows.size(), X.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= X.rows()) fail(ErrorKind::kShape, "select_rows: row index out of range");
    out.mat().row(i) = X.mat().row(rows[i]);
  }
  const bool ng = needs(x);
  Var c = push(std::move(out), "select_rows", ng);
  if (ng) {
    node(c).backward = [this, x, c, idx = std::vector<std::size_t>(rows.begin(), rows.end())] {
      const auto& dC = node(c).grad;
      auto& dX = grad_ref(x);
      for (std::size_t i = 0; i < idx.size(); ++i) dX.mat().row(idx[i]) += dC.mat().row(i);
    };
  }
  return c;
}

template <typename T>
Var Graph<T>::dropout(Var x, T rate) {
  if (rate < T(0) || rate >= T(1)) fail(ErrorKind::kParameter, "dropout: rate must be in [0, 1)");
  if (dropout_rng_ == nullptr || rate == T(0)) return x;
  const auto& X = value(x);
  Tensor<T> mask(X.shape());
  const T keep_scale = T(1) / (T(1) - rate);
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = dropout_rng_->bernoulli(rate) ? T(0) : keep_scale;
  Tensor<T> out = X;
  out.mat().array() *= mask.mat().array();
  const bool ng = needs(x);
  Var c = push(std::move(out), "dropout", ng);
  if (ng) {
    node(c).backward = [this, x, c, mask = std::move(mask)] {
      grad_ref(x).mat().array() += node(c).grad.mat().array() * mask.mat().array();
    };
  }
  return c;
}

template <typename T>
Var Graph<T>::cross_entropy(Var logits, std::span<const int> targets, int pad_id, T label_smoothing) {
  const auto& L = value(logits);
  if (targets.size() != L.rows()) {
    fail(ErrorKind::kShape, "cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                                std::to_string(L.rows()) + " logit rows");
  }
  const std::size_t vocab = L.cols();
  std::size_t counted = 0;
  for (int t : targets) {
    if (t == pad_id) continue;
    if (t < 0 || static_cast<std::size_t>(t) >= vocab) {
      fail(ErrorKind::kParameter, "cross_entropy: target " + std::to_string(t) + " outside vocabulary");
    }
    ++counted;
  }
  if (counted == 0) fail(ErrorKind::kParameter, "cross_entropy: every target is padding");

  Tensor<T> probs(L.shape());
  T total = 0;
  for (std::size_t r = 0; r < L.rows(); ++r) {
    if (targets[r] == pad_id) continue;
    const auto row = L.mat().row(r);
    const T mx = row.maxCoeff();
    const T log_z = mx + std::log((row.array() - mx).exp().sum());
    probs.mat().row(r) = (row.array() - log_z).exp().matrix();
    const T nll = log_z - row(targets[r]);
    const T uniform_nll = log_z - row.mean();
    total += (T(1) - label_smoothing) * nll + label_smoothing * uniform_nll;
  }
  Tensor<T> out({1}, {total / static_cast<T>(counted)});
  const bool ng = needs(logits);
  Var c = push(std::move(out), "cross_entropy", ng);
  if (ng) {
    node(c).backward = [this, logits, c, pad_id, label_smoothing, counted, vocab, probs = std::move(probs),
                        tgt = std::vector<int>(targets.begin(), targets.end())] {
      const T upstream = node(c).grad[0] / static_cast<T>(counted);
      auto& dL = grad_ref(logits);
      for (std::size_t r = 0; r < tgt.size(); ++r) {
        if (tgt[r] == pad_id) continue;
        auto row = dL.mat().row(r);
        row.array() += upstream * (probs.mat().row(r).array() - label_smoothing / static_cast<T>(vocab));
        row(tgt[r]) -= upstream * (T(1) - label_smoothing);
      }
    };
  }
  return c;
}

template <typename T>
Var Graph<T>::sum_squares(Var x) {
  const auto& X = value(x);
  Tensor<T> out({1}, {X.mat().squaredNorm()});
  const bool ng = needs(x);
  Var c = push(std::move(out), "sum_squares", ng);
  if (ng) {
    node(c).backward = [this, x, c] { grad_ref(x).mat() += (T(2) * node(c).grad[0]) * value(x).mat(); };
  }
  return c;
}

template <typename T>
Var Graph<T>::sum(Var x) {
  Tensor<T> out({1}, {value(x).mat().sum()});
  const bool ng = needs(x);
  Var c = push(std::move(out), "sum", ng);
  if (ng) {
    node(c).backward = [this, x, c] { grad_ref(x).mat().array() += node(c).grad[0]; };
  }
  return c;
}

template <typename T>
void Graph<T>::backward(Var loss) {
  if (!record_) fail(ErrorKind::kParameter, "backward on a graph built without recording");
  if (value(loss).size() != 1) fail(ErrorKind::kShape, "backward: loss must be a scalar");
  grad_ref(loss)[0] = T(1);
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.needs_grad || n.grad.empty()) continue;
    if (n.backward) n.backward();
    if (n.param != nullptr) {
      auto& pg = n.param->grad;
      if (pg.size() != n.grad.size()) pg = Tensor<T>(n.param->value.shape());
      pg.mat() += n.grad.mat();
    }
  }
}

template class Graph<float>;
template class Graph<double>;

}  // namespace kpat::nn
