#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "contramod/dataio.hpp"
#include "contramod/model.hpp"
#include "contramod/nn/tensor.hpp"

namespace contramod {

/// z_i^T z_j / (|z_i| |z_j|). Throws "zero-norm embedding" for a zero vector.
double cosine_sim(std::span<const double> zi, std::span<const double> zj);

/// 2M embeddings; rows (2k, 2k+1) are the positive pair built from source k.
template <typename S>
struct ContrastiveBatch {
  nn::Mat<S> z;
  double tau = 0.5;

  std::size_t pairs() const noexcept { return static_cast<std::size_t>(z.rows()) / 2; }
};

template <typename S>
struct NtXentResult {
  S loss = 0;
  nn::Mat<S> grad;  // dloss/dz, same shape as z
};

/// Mean over all 2M anchors i of
///   -log( exp(sim(z_i, z_p(i))/tau) / sum_{k != i} exp(sim(z_i, z_k)/tau) )
/// where p(i) is the other member of i's pair. Both orderings of each pair
/// are anchors. Throws for odd or empty batches, tau <= 0, or zero rows.
template <typename S>
NtXentResult<S> nt_xent(const ContrastiveBatch<S>& batch, bool with_grad = true);

template <typename S>
S nt_xent_loss(const ContrastiveBatch<S>& batch) {
  return nt_xent(batch, false).loss;
}

struct PretrainConfig {
  std::size_t epochs = 100;
  std::size_t batch = 512;  // source frames per step (2x views)
  double tau = 0.5;
  double lr = 1e-4;
  std::uint64_t seed = 0;
  std::optional<std::size_t> max_steps;
  unsigned jobs = 1;
  std::size_t chunk = 32;  // views per forward/backward work item
};

struct EpochLog {
  std::size_t epoch = 0;
  double loss = 0.0;
  double lr = 0.0;
};

struct PretrainResult {
  std::vector<EpochLog> history;
  std::size_t steps = 0;
};

/// Optimizer steps the configuration will take for a pool of this size.
std::size_t pretrain_total_steps(std::size_t pool_size, const PretrainConfig& config);

/// Trains encoder + projection head on `pool` with NT-Xent over rotated view
/// pairs, Adam and a cosine-decayed rate. Frames are normalized internally;
/// each epoch reshuffles the pool, draws fresh angles and drops the last
/// incomplete batch. Throws if the batch exceeds the pool, or on a non-finite
/// loss.
PretrainResult pretrain(Model<float>& model, std::span<const IQFrame> pool, const PretrainConfig& config,
                        const std::function<void(const EpochLog&)>& on_epoch = {});

}  // namespace contramod
