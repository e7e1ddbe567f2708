#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <vector>

#include "contramod/error.hpp"
#include "contramod/nn/params.hpp"

namespace contramod::nn {

/// lr(t) = base * 0.5 * (1 + cos(pi * t / T)) for t in [0, T], 0 beyond.
/// total_steps == 0 gives a constant rate.
struct CosineSchedule {
  double base_lr = 1e-4;
  std::size_t total_steps = 0;

  double operator()(std::size_t step) const {
    if (total_steps == 0) return base_lr;
    if (step >= total_steps) return 0.0;
    return base_lr * 0.5 *
           (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / static_cast<double>(total_steps)));
  }
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction. Moments are kept for every parameter; only
/// those enabled in the mask are updated.
template <typename S>
class Adam {
 public:
  Adam(const ParameterTree<S>& params, CosineSchedule schedule, AdamConfig config = {})
      : schedule_(schedule), config_(config) {
    for (std::size_t k = 0; k < params.size(); ++k) {
      const auto& v = params[ParamId{k}].value;
      m_.push_back(Mat<S>::Zero(v.rows(), v.cols()));
      v_.push_back(Mat<S>::Zero(v.rows(), v.cols()));
    }
  }

  std::size_t steps() const noexcept { return step_; }
  double current_lr() const { return schedule_(step_); }
  const CosineSchedule& schedule() const noexcept { return schedule_; }

  /// Applies one update using the rate for the current step, then advances.
  void step(ParameterTree<S>& params, const GradBuffer<S>& grads, const TrainableMask& mask = {}) {
    if (params.size() != m_.size()) throw usage_error("optimizer state does not match parameter tree");
    const double lr = schedule_(step_);
    ++step_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
    const S b1 = static_cast<S>(config_.beta1);
    const S b2 = static_cast<S>(config_.beta2);
    const S step_size = static_cast<S>(lr / c1);
    const S inv_c2 = static_cast<S>(1.0 / c2);
    const S eps = static_cast<S>(config_.epsilon);
    for (std::size_t k = 0; k < params.size(); ++k) {
      const ParamId id{k};
      if (!mask.empty() && !mask[k]) continue;
      if (!grads.has(id)) continue;
      const Mat<S>& g = grads[id];
      m_[k] = b1 * m_[k] + (S(1) - b1) * g;
      v_[k] = b2 * v_[k] + (S(1) - b2) * g.cwiseProduct(g);
      params[id].value.array() -= step_size * m_[k].array() / ((v_[k].array() * inv_c2).sqrt() + eps);
    }
  }

 private:
  CosineSchedule schedule_;
  AdamConfig config_;
  std::vector<Mat<S>> m_;
  std::vector<Mat<S>> v_;
  std::size_t step_ = 0;
};

}  // namespace contramod::nn
