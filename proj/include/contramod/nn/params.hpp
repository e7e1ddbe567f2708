#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "contramod/error.hpp"
#include "contramod/nn/tensor.hpp"
#include "contramod/rng.hpp"

namespace contramod::nn {

struct ParamId {
  std::size_t index = 0;
  friend bool operator==(ParamId, ParamId) = default;
};

template <typename S>
struct Parameter {
  std::string name;
  /// Logical shape; the value matrix is its row-major flattening onto
  /// (prod(shape[0..n-2]) x shape[n-1]).
  std::vector<std::size_t> shape;
  Mat<S> value;
  Mat<S> grad;
};

/// Named parameters in insertion order. Names are '/'-separated paths
/// ("encoder/conv1/kernel") so sub-networks are addressable by prefix.
template <typename S>
class ParameterTree {
 public:
  ParamId add(std::string name, std::vector<std::size_t> shape, Mat<S> value) {
    if (index_.count(name)) throw usage_error("duplicate parameter '" + name + "'");
    const std::size_t cols = shape.empty() ? 1 : shape.back();
    const std::size_t count = std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
    if (static_cast<std::size_t>(value.size()) != count || static_cast<std::size_t>(value.cols()) != cols)
      throw usage_error("parameter '" + name + "' value does not match its shape");
    const ParamId id{params_.size()};
    index_.emplace(name, id.index);
    Mat<S> grad = Mat<S>::Zero(value.rows(), value.cols());
    params_.push_back({std::move(name), std::move(shape), std::move(value), std::move(grad)});
    return id;
  }

  std::size_t size() const noexcept { return params_.size(); }
  Parameter<S>& operator[](ParamId id) { return params_.at(id.index); }
  const Parameter<S>& operator[](ParamId id) const { return params_.at(id.index); }
  const Mat<S>& value(ParamId id) const { return params_.at(id.index).value; }

  std::optional<ParamId> find(std::string_view name) const {
    const auto it = index_.find(std::string(name));
    if (it == index_.end()) return std::nullopt;
    return ParamId{it->second};
  }

  ParamId at(std::string_view name) const {
    if (auto id = find(name)) return *id;
    throw data_error("missing parameter '" + std::string(name) + "'");
  }

  std::vector<ParamId> with_prefix(std::string_view prefix) const {
    std::vector<ParamId> out;
    for (std::size_t k = 0; k < params_.size(); ++k)
      if (std::string_view(params_[k].name).starts_with(prefix)) out.push_back({k});
    return out;
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.grad.setZero();
  }

  template <typename T>
  ParameterTree<T> cast() const {
    ParameterTree<T> out;
    for (const auto& p : params_) out.add(p.name, p.shape, p.value.template cast<T>());
    return out;
  }

 private:
  std::vector<Parameter<S>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Per-parameter mask selecting what an optimizer may update.
using TrainableMask = std::vector<bool>;

template <typename S>
TrainableMask mask_for_prefixes(const ParameterTree<S>& tree, std::initializer_list<std::string_view> prefixes) {
  TrainableMask mask(tree.size(), false);
  for (auto prefix : prefixes)
    for (ParamId id : tree.with_prefix(prefix)) mask[id.index] = true;
  return mask;
}

/// Gradient accumulators aligned with a ParameterTree. Slots stay empty until
/// first written, so buffers for frozen parameters cost nothing.
template <typename S>
class GradBuffer {
 public:
  explicit GradBuffer(std::size_t n = 0) : slots_(n) {}

  template <typename Expr>
  void accumulate(ParamId id, const Expr& g) {
    auto& slot = slots_.at(id.index);
    if (slot.size() == 0)
      slot = g;
    else
      slot += g;
  }

  bool has(ParamId id) const { return slots_.at(id.index).size() != 0; }
  const Mat<S>& operator[](ParamId id) const { return slots_.at(id.index); }
  std::size_t size() const noexcept { return slots_.size(); }

  /// Adds `other` slot by slot; call in a fixed order for reproducible sums.
  void merge(const GradBuffer& other) {
    for (std::size_t k = 0; k < slots_.size(); ++k)
      if (other.slots_[k].size() != 0) accumulate(ParamId{k}, other.slots_[k]);
  }

  /// Copies accumulated gradients into the tree's gradient slots.
  void store_into(ParameterTree<S>& tree) const {
    for (std::size_t k = 0; k < slots_.size(); ++k) {
      auto& p = tree[ParamId{k}];
      if (slots_[k].size() != 0)
        p.grad = slots_[k];
      else
        p.grad.setZero();
    }
  }

 private:
  std::vector<Mat<S>> slots_;
};

/// Glorot-uniform matrix with the given fan sizes.
template <typename S>
Mat<S> glorot_uniform(Eigen::Index rows, Eigen::Index cols, double fan_in, double fan_out, CounterRng& rng) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  Mat<S> m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = static_cast<S>((2.0 * rng.uniform() - 1.0) * limit);
  return m;
}

}  // namespace contramod::nn
