#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "contramod/error.hpp"
#include "contramod/nn/params.hpp"
#include "contramod/nn/tensor.hpp"
#include "contramod/rng.hpp"

namespace contramod::nn {

/// Handle to a value recorded on a Tape.
struct Var {
  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::size_t id = kNone;
  bool valid() const noexcept { return id != kNone; }
};

enum class Mode { Train, Inference };

/// Reverse-mode differentiation at layer granularity. Each op records its
/// output and, when any input or parameter needs a gradient, a closure that
/// maps the output gradient back onto its inputs and parameters. Ops whose
/// inputs and parameters are all frozen record no closure and no cache.
///
/// A tape is single-use and owned by one thread; parameters are read-only
/// through it and parameter gradients land in the GradBuffer handed to
/// backward().
template <typename S>
class Tape {
 public:
  /// Train mode with an empty mask makes every parameter trainable.
  explicit Tape(const ParameterTree<S>& params, Mode mode = Mode::Train, TrainableMask trainable = {})
      : params_(params), mode_(mode), trainable_(std::move(trainable)) {
    if (mode_ == Mode::Inference)
      trainable_.assign(params_.size(), false);
    else if (trainable_.empty())
      trainable_.assign(params_.size(), true);
    if (trainable_.size() != params_.size()) throw usage_error("trainable mask does not match parameter count");
  }

  Mode mode() const noexcept { return mode_; }
  bool training() const noexcept { return mode_ == Mode::Train; }
  bool trainable(ParamId id) const { return trainable_.at(id.index); }
  const ParameterTree<S>& params() const noexcept { return params_; }

  /// `batch` is the number of items; for sequences rows = length * batch.
  Var input(Mat<S> value, std::size_t batch, bool requires_grad = false) {
    return push(std::move(value), batch, requires_grad && training());
  }
  Var input(Mat<S> value) {
    const auto b = static_cast<std::size_t>(value.rows());
    return input(std::move(value), b);
  }

  const Mat<S>& value(Var v) const { return node(v).value; }
  std::size_t batch(Var v) const { return node(v).batch; }
  bool requires_grad(Var v) const { return node(v).requires_grad; }
  /// Gradient accumulated into a node by backward(); empty if none reached it.
  const Mat<S>& grad(Var v) const { return node(v).grad; }

  std::size_t size() const noexcept { return nodes_.size(); }

  // --- ops ------------------------------------------------------------------

  Var relu(Var x) {
    Mat<S> y = value(x).cwiseMax(S(0));
    const Var out = push(std::move(y), batch(x), requires_grad(x));
    if (requires_grad(out)) {
      on_backward(out, [x, out](Tape& t, GradBuffer<S>&) {
        const Mat<S>& dy = t.nodes_[out.id].grad;
        t.accumulate(x, (dy.array() * (t.value(out).array() > S(0)).template cast<S>()).matrix());
      });
    }
    return out;
  }

  /// y = x W + b; W is (in x out), b is (1 x out).
  Var dense(Var x, ParamId w, ParamId b) {
    const Mat<S>& W = params_.value(w);
    const Mat<S>& bias = params_.value(b);
    const Mat<S>& X = value(x);
    if (X.cols() != W.rows() || bias.cols() != W.cols())
      throw usage_error("dense: input width " + std::to_string(X.cols()) + " does not match kernel " +
                        std::to_string(W.rows()) + "x" + std::to_string(W.cols()));
    Mat<S> y = X * W;
    y.rowwise() += bias.row(0);
    const Var out = push(std::move(y), batch(x), requires_grad(x) || trainable(w) || trainable(b));
    if (requires_grad(out)) {
      on_backward(out, [x, w, b, out](Tape& t, GradBuffer<S>& g) {
        const Mat<S>& dy = t.nodes_[out.id].grad;
        if (t.trainable(w)) g.accumulate(w, t.value(x).transpose() * dy);
        if (t.trainable(b)) g.accumulate(b, dy.colwise().sum());
        if (t.requires_grad(x)) t.accumulate(x, dy * t.params_.value(w).transpose());
      });
    }
    return out;
  }

  /// Cross-correlation over time with zero "same" padding: left pad
  /// floor((K-1)/2), right pad the rest. Kernel shape (K, C_in, C_out) is
  /// stored as (K*C_in x C_out); bias is (1 x C_out).
  Var conv1d(Var x, ParamId w, ParamId b) {
    const auto& kernel_param = params_[w];
    if (kernel_param.shape.size() != 3) throw usage_error("conv1d: kernel must have shape (K, C_in, C_out)");
    const auto K = static_cast<Eigen::Index>(kernel_param.shape[0]);
    const auto cin = static_cast<Eigen::Index>(kernel_param.shape[1]);
    const Mat<S>& W = kernel_param.value;
    const Mat<S>& X = value(x);
    const auto B = static_cast<Eigen::Index>(batch(x));
    const Eigen::Index L = X.rows() / B;
    if (X.cols() != cin) throw usage_error("conv1d: input has " + std::to_string(X.cols()) + " channels, kernel expects " +
                                           std::to_string(cin));
    if (K > L) throw usage_error("conv1d: kernel longer than the sequence");
    const Eigen::Index pad = (K - 1) / 2;
    Mat<S> y(X.rows(), W.cols());
    y.rowwise() = params_.value(b).row(0);
    for (Eigen::Index k = 0; k < K; ++k) {
      const Eigen::Index s = k - pad;
      const Eigen::Index t0 = std::max<Eigen::Index>(0, -s);
      const Eigen::Index t1 = std::min<Eigen::Index>(L, L - s);
      if (t1 <= t0) continue;
      y.middleRows(t0 * B, (t1 - t0) * B).noalias() +=
          X.middleRows((t0 + s) * B, (t1 - t0) * B) * W.middleRows(k * cin, cin);
    }
    const Var out = push(std::move(y), batch(x), requires_grad(x) || trainable(w) || trainable(b));
    if (requires_grad(out)) {
      on_backward(out, [x, w, b, out, K, cin, B, L, pad](Tape& t, GradBuffer<S>& g) {
        const Mat<S>& dy = t.nodes_[out.id].grad;
        const Mat<S>& X = t.value(x);
        const Mat<S>& W = t.params_.value(w);
        const bool need_x = t.requires_grad(x);
        Mat<S> dW;
        if (t.trainable(w)) dW = Mat<S>::Zero(W.rows(), W.cols());
        Mat<S> dx;
        if (need_x) dx = Mat<S>::Zero(X.rows(), X.cols());
        for (Eigen::Index k = 0; k < K; ++k) {
          const Eigen::Index s = k - pad;
          const Eigen::Index t0 = std::max<Eigen::Index>(0, -s);
          const Eigen::Index t1 = std::min<Eigen::Index>(L, L - s);
          if (t1 <= t0) continue;
          const auto dy_blk = dy.middleRows(t0 * B, (t1 - t0) * B);
          if (dW.size() != 0)
            dW.middleRows(k * cin, cin).noalias() += X.middleRows((t0 + s) * B, (t1 - t0) * B).transpose() * dy_blk;
          if (need_x)
            dx.middleRows((t0 + s) * B, (t1 - t0) * B).noalias() += dy_blk * W.middleRows(k * cin, cin).transpose();
        }
        if (dW.size() != 0) g.accumulate(w, dW);
        if (t.trainable(b)) g.accumulate(b, dy.colwise().sum());
        if (need_x) t.accumulate(x, dx);
      });
    }
    return out;
  }

  /// Sequence-returning LSTM with zero initial state. Gate layout along the
  /// 4U columns is (input, forget, candidate, output); kernel is (F x 4U),
  /// recurrent (U x 4U), bias (1 x 4U).
  Var lstm(Var x, ParamId kernel, ParamId recurrent, ParamId bias) {
    const Mat<S>& Wx = params_.value(kernel);
    const Mat<S>& Wh = params_.value(recurrent);
    const Mat<S>& X = value(x);
    const auto B = static_cast<Eigen::Index>(batch(x));
    const Eigen::Index L = X.rows() / B;
    const Eigen::Index U = Wh.rows();
    if (X.cols() != Wx.rows() || Wx.cols() != 4 * U || Wh.cols() != 4 * U)
      throw usage_error("lstm: input width or weight shapes inconsistent");

    Mat<S> gates = X * Wx;  // pre-activations, then activations in place
    gates.rowwise() += params_.value(bias).row(0);
    Mat<S> h(L * B, U);
    Mat<S> c(L * B, U);
    Mat<S> tanh_c(L * B, U);
    Mat<S> z(B, 4 * U);
    for (Eigen::Index t = 0; t < L; ++t) {
      auto zt = gates.middleRows(t * B, B);
      if (t > 0) zt.noalias() += h.middleRows((t - 1) * B, B) * Wh;
      zt.leftCols(2 * U) = zt.leftCols(2 * U).array().logistic().matrix();
      zt.middleCols(2 * U, U) = zt.middleCols(2 * U, U).array().tanh().matrix();
      zt.rightCols(U) = zt.rightCols(U).array().logistic().matrix();
      auto ct = c.middleRows(t * B, B);
      ct = zt.leftCols(U).cwiseProduct(zt.middleCols(2 * U, U));
      if (t > 0) ct += zt.middleCols(U, U).cwiseProduct(c.middleRows((t - 1) * B, B));
      tanh_c.middleRows(t * B, B) = ct.array().tanh().matrix();
      h.middleRows(t * B, B) = zt.rightCols(U).cwiseProduct(tanh_c.middleRows(t * B, B));
    }
    const bool rg = requires_grad(x) || trainable(kernel) || trainable(recurrent) || trainable(bias);
    const Var out = push(std::move(h), batch(x), rg);
    if (rg) {
      on_backward(out, [x, kernel, recurrent, bias, out, B, L, U, gates = std::move(gates), c = std::move(c),
                        tanh_c = std::move(tanh_c)](Tape& t, GradBuffer<S>& g) {
        const Mat<S>& dY = t.nodes_[out.id].grad;
        const Mat<S>& H = t.value(out);
        const Mat<S>& Wh = t.params_.value(recurrent);
        Mat<S> dZ(L * B, 4 * U);
        Mat<S> dh_next = Mat<S>::Zero(B, U);
        Mat<S> dc_next = Mat<S>::Zero(B, U);
        for (Eigen::Index s = L - 1; s >= 0; --s) {
          const auto G = gates.middleRows(s * B, B);
          const auto ig = G.leftCols(U).array();
          const auto fg = G.middleCols(U, U).array();
          const auto gg = G.middleCols(2 * U, U).array();
          const auto og = G.rightCols(U).array();
          const auto tc = tanh_c.middleRows(s * B, B).array();
          const Mat<S> dh = dY.middleRows(s * B, B) + dh_next;
          const auto dha = dh.array();
          const Mat<S> dc = (dha * og * (S(1) - tc * tc)).matrix() + dc_next;
          const auto dca = dc.array();
          auto dz = dZ.middleRows(s * B, B);
          dz.leftCols(U) = (dca * gg * ig * (S(1) - ig)).matrix();
          if (s > 0)
            dz.middleCols(U, U) = (dca * c.middleRows((s - 1) * B, B).array() * fg * (S(1) - fg)).matrix();
          else
            dz.middleCols(U, U).setZero();
          dz.middleCols(2 * U, U) = (dca * ig * (S(1) - gg * gg)).matrix();
          dz.rightCols(U) = (dha * tc * og * (S(1) - og)).matrix();
          dc_next = (dca * fg).matrix();
          if (s > 0) dh_next.noalias() = dz * Wh.transpose();
        }
        if (t.trainable(kernel)) g.accumulate(kernel, t.value(x).transpose() * dZ);
        if (t.trainable(recurrent) && L > 1)
          g.accumulate(recurrent, H.topRows((L - 1) * B).transpose() * dZ.bottomRows((L - 1) * B));
        else if (t.trainable(recurrent))
          g.accumulate(recurrent, Mat<S>::Zero(Wh.rows(), Wh.cols()));
        if (t.trainable(bias)) g.accumulate(bias, dZ.colwise().sum());
        if (t.requires_grad(x)) t.accumulate(x, dZ * t.params_.value(kernel).transpose());
      });
    }
    return out;
  }

  /// Per-item, per-channel maximum over time: (L*B x C) -> (B x C). Ties go
  /// to the earliest time step.
  Var global_max_pool(Var x) {
    const Mat<S>& X = value(x);
    const auto B = static_cast<Eigen::Index>(batch(x));
    const Eigen::Index L = X.rows() / B;
    if (L < 1) throw usage_error("global_max_pool: empty sequence");
    Mat<S> y = X.topRows(B);
    std::vector<Eigen::Index> argmax(static_cast<std::size_t>(B * X.cols()), 0);
    for (Eigen::Index t = 1; t < L; ++t)
      for (Eigen::Index b = 0; b < B; ++b)
        for (Eigen::Index ch = 0; ch < X.cols(); ++ch) {
          const S v = X(t * B + b, ch);
          if (v > y(b, ch)) {
            y(b, ch) = v;
            argmax[static_cast<std::size_t>(b * X.cols() + ch)] = t;
          }
        }
    const Var out = push(std::move(y), batch(x), requires_grad(x));
    if (requires_grad(out)) {
      on_backward(out, [x, out, B, argmax = std::move(argmax)](Tape& t, GradBuffer<S>&) {
        const Mat<S>& dy = t.nodes_[out.id].grad;
        const Mat<S>& X = t.value(x);
        Mat<S> dx = Mat<S>::Zero(X.rows(), X.cols());
        for (Eigen::Index b = 0; b < B; ++b)
          for (Eigen::Index ch = 0; ch < X.cols(); ++ch)
            dx(argmax[static_cast<std::size_t>(b * X.cols() + ch)] * B + b, ch) = dy(b, ch);
        t.accumulate(x, dx);
      });
    }
    return out;
  }

  /// Inverted dropout; the identity in inference mode or at rate 0.
  Var dropout(Var x, double rate, CounterRng& rng) {
    if (rate < 0.0 || rate >= 1.0) throw usage_error("dropout rate must be in [0, 1)");
    if (!training() || rate == 0.0) return x;
    const Mat<S>& X = value(x);
    const S keep_scale = static_cast<S>(1.0 / (1.0 - rate));
    Mat<S> mask(X.rows(), X.cols());
    for (Eigen::Index k = 0; k < mask.size(); ++k) mask.data()[k] = rng.uniform() >= rate ? keep_scale : S(0);
    Mat<S> y = X.cwiseProduct(mask);
    const Var out = push(std::move(y), batch(x), requires_grad(x));
    if (requires_grad(out)) {
      on_backward(out, [x, out, mask = std::move(mask)](Tape& t, GradBuffer<S>&) {
        t.accumulate(x, t.nodes_[out.id].grad.cwiseProduct(mask));
      });
    }
    return out;
  }

  /// Mean softmax cross-entropy over the batch; output is 1x1.
  Var softmax_cross_entropy(Var logits, std::span<const int> labels) {
    const Mat<S>& Z = value(logits);
    if (static_cast<Eigen::Index>(labels.size()) != Z.rows())
      throw usage_error("softmax_cross_entropy: label count does not match batch");
    for (int l : labels)
      if (l < 0 || l >= Z.cols()) throw data_error("label " + std::to_string(l) + " out of range");
    Mat<S> probs = softmax_rows(Z);
    S loss = 0;
    for (Eigen::Index r = 0; r < Z.rows(); ++r) {
      const S m = Z.row(r).maxCoeff();
      const S lse = m + std::log((Z.row(r).array() - m).exp().sum());
      loss += lse - Z(r, labels[static_cast<std::size_t>(r)]);
    }
    loss /= static_cast<S>(Z.rows());
    Mat<S> y(1, 1);
    y(0, 0) = loss;
    const Var out = push(std::move(y), 1, requires_grad(logits));
    if (requires_grad(out)) {
      on_backward(out, [logits, out, probs = std::move(probs),
                        labels = std::vector<int>(labels.begin(), labels.end())](Tape& t, GradBuffer<S>&) {
        const S seed = t.nodes_[out.id].grad(0, 0);
        Mat<S> d = probs;
        for (std::size_t r = 0; r < labels.size(); ++r) d(static_cast<Eigen::Index>(r), labels[r]) -= S(1);
        d *= seed / static_cast<S>(labels.size());
        t.accumulate(logits, d);
      });
    }
    return out;
  }

  /// lambda * sum of squared entries of the given parameters; 1x1.
  Var l2_penalty(std::span<const ParamId> ids, double lambda) {
    S total = 0;
    bool any_trainable = false;
    for (ParamId id : ids) {
      total += params_.value(id).squaredNorm();
      any_trainable = any_trainable || trainable(id);
    }
    Mat<S> y(1, 1);
    y(0, 0) = static_cast<S>(lambda) * total;
    const Var out = push(std::move(y), 1, any_trainable && lambda != 0.0);
    if (requires_grad(out)) {
      on_backward(out, [out, ids = std::vector<ParamId>(ids.begin(), ids.end()), lambda](Tape& t, GradBuffer<S>& g) {
        const S seed = t.nodes_[out.id].grad(0, 0);
        for (ParamId id : ids)
          if (t.trainable(id)) g.accumulate(id, (S(2) * static_cast<S>(lambda) * seed) * t.params_.value(id));
      });
    }
    return out;
  }

  Var add(Var a, Var b) {
    if (value(a).rows() != value(b).rows() || value(a).cols() != value(b).cols())
      throw usage_error("add: shape mismatch");
    const Var out = push(value(a) + value(b), batch(a), requires_grad(a) || requires_grad(b));
    if (requires_grad(out)) {
      on_backward(out, [a, b, out](Tape& t, GradBuffer<S>&) {
        const Mat<S>& dy = t.nodes_[out.id].grad;
        if (t.requires_grad(a)) t.accumulate(a, dy);
        if (t.requires_grad(b)) t.accumulate(b, dy);
      });
    }
    return out;
  }

  /// sum(x .* weights) as a 1x1 value; a convenient scalar probe.
  Var dot(Var x, const Mat<S>& weights) {
    if (value(x).rows() != weights.rows() || value(x).cols() != weights.cols()) throw usage_error("dot: shape mismatch");
    Mat<S> y(1, 1);
    y(0, 0) = value(x).cwiseProduct(weights).sum();
    const Var out = push(std::move(y), 1, requires_grad(x));
    if (requires_grad(out)) {
      on_backward(out, [x, out, weights](Tape& t, GradBuffer<S>&) {
        t.accumulate(x, t.nodes_[out.id].grad(0, 0) * weights);
      });
    }
    return out;
  }

  // --- reverse pass ---------------------------------------------------------

  /// Backpropagates from a scalar (1x1) node.
  void backward(Var loss, GradBuffer<S>& grads) {
    if (value(loss).size() != 1) throw usage_error("backward: loss must be a scalar; pass a seed gradient otherwise");
    backward(loss, Mat<S>::Ones(1, 1), grads);
  }

  /// Backpropagates `seed` = dL/d(out) through every recorded op that feeds `out`.
  void backward(Var out, const Mat<S>& seed, GradBuffer<S>& grads) {
    if (!out.valid() || out.id >= nodes_.size()) throw usage_error("backward called without a recorded forward pass");
    if (backward_done_) throw usage_error("backward already ran on this tape");
    if (grads.size() != params_.size()) throw usage_error("gradient buffer does not match parameter tree");
    auto& root = nodes_[out.id];
    if (seed.rows() != root.value.rows() || seed.cols() != root.value.cols())
      throw usage_error("backward: seed gradient shape mismatch");
    backward_done_ = true;
    if (!root.requires_grad) return;
    root.grad = seed;
    for (std::size_t k = out.id + 1; k-- > 0;) {
      auto& n = nodes_[k];
      if (n.grad.size() == 0 || !n.backward) continue;
      n.backward(*this, grads);
      n.backward = nullptr;  // releases cached activations
    }
  }

 private:
  struct Node {
    Mat<S> value;
    Mat<S> grad;
    std::size_t batch = 0;
    bool requires_grad = false;
    std::function<void(Tape&, GradBuffer<S>&)> backward;
  };

  const Node& node(Var v) const {
    if (!v.valid() || v.id >= nodes_.size()) throw usage_error("tape variable not recorded on this tape");
    return nodes_[v.id];
  }

  Var push(Mat<S> value, std::size_t batch, bool requires_grad) {
    if (batch == 0 || value.rows() % static_cast<Eigen::Index>(batch) != 0)
      throw usage_error("tape: row count is not a multiple of the batch size");
    nodes_.push_back(Node{std::move(value), {}, batch, requires_grad, {}});
    return Var{nodes_.size() - 1};
  }

  template <typename Fn>
  void on_backward(Var out, Fn&& fn) {
    nodes_[out.id].backward = std::forward<Fn>(fn);
  }

  template <typename Expr>
  void accumulate(Var v, const Expr& g) {
    auto& n = nodes_[v.id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0)
      n.grad = g;
    else
      n.grad += g;
  }

  const ParameterTree<S>& params_;
  Mode mode_;
  TrainableMask trainable_;
  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

}  // namespace contramod::nn
