#include "contramod/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>

#include "contramod/augment.hpp"
#include "contramod/nn/optim.hpp"

namespace contramod {

double cosine_sim(std::span<const double> zi, std::span<const double> zj) {
  if (zi.size() != zj.size()) throw usage_error("cosine_sim: length mismatch");
  double dot = 0.0, ni = 0.0, nj = 0.0;
  for (std::size_t k = 0; k < zi.size(); ++k) {
    dot += zi[k] * zj[k];
    ni += zi[k] * zi[k];
    nj += zj[k] * zj[k];
  }
  if (ni == 0.0 || nj == 0.0) throw data_error("zero-norm embedding");
  return std::clamp(dot / (std::sqrt(ni) * std::sqrt(nj)), -1.0, 1.0);
}

template <typename S>
NtXentResult<S> nt_xent(const ContrastiveBatch<S>& batch, bool with_grad) {
  if (!(batch.tau > 0.0)) throw usage_error("temperature must be positive");
  const Eigen::Index n = batch.z.rows();
  if (n < 2 || n % 2 != 0) throw usage_error("contrastive batch needs an even, nonzero number of rows");
  Eigen::Matrix<S, Eigen::Dynamic, 1> norms = batch.z.rowwise().norm();
  if ((norms.array() == S(0)).any()) throw data_error("zero-norm embedding");
  const nn::Mat<S> u = norms.cwiseInverse().asDiagonal() * batch.z;
  const S inv_tau = static_cast<S>(1.0 / batch.tau);
  const nn::Mat<S> logits = (u * u.transpose()) * inv_tau;

  NtXentResult<S> out;
  nn::Mat<S> dlogits;
  if (with_grad) dlogits = nn::Mat<S>::Zero(n, n);
  S total = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index pos = i ^ 1;
    S m = -std::numeric_limits<S>::infinity();
    for (Eigen::Index k = 0; k < n; ++k)
      if (k != i) m = std::max(m, logits(i, k));
    S denom = 0;
    for (Eigen::Index k = 0; k < n; ++k)
      if (k != i) denom += std::exp(logits(i, k) - m);
    total += (m + std::log(denom)) - logits(i, pos);
    if (with_grad) {
      for (Eigen::Index k = 0; k < n; ++k)
        if (k != i) dlogits(i, k) = std::exp(logits(i, k) - m) / denom;
      dlogits(i, pos) -= S(1);
    }
  }
  const S scale = S(1) / static_cast<S>(n);
  out.loss = total * scale;
  if (with_grad) {
    // logits = U U^T / tau  =>  dU = (A + A^T) U / tau
    const nn::Mat<S> sym = (dlogits + dlogits.transpose()) * (scale * inv_tau);
    const nn::Mat<S> du = sym * u;
    // u = z/|z|  =>  dz = (du - u (u . du)) / |z|
    const Eigen::Matrix<S, Eigen::Dynamic, 1> radial = u.cwiseProduct(du).rowwise().sum();
    out.grad = norms.cwiseInverse().asDiagonal() * (du - radial.asDiagonal() * u);
  }
  return out;
}

template NtXentResult<float> nt_xent(const ContrastiveBatch<float>&, bool);
template NtXentResult<double> nt_xent(const ContrastiveBatch<double>&, bool);

std::size_t pretrain_total_steps(std::size_t pool_size, const PretrainConfig& config) {
  const std::size_t per_epoch = config.batch == 0 ? 0 : pool_size / config.batch;
  std::size_t total = per_epoch * config.epochs;
  if (config.max_steps) total = std::min(total, *config.max_steps);
  return total;
}

PretrainResult pretrain(Model<float>& model, std::span<const IQFrame> pool, const PretrainConfig& config,
                        const std::function<void(const EpochLog&)>& on_epoch) {
  if (pool.empty()) throw data_error("pretraining pool is empty");
  if (config.batch < 1) throw usage_error("batch size must be at least 1");
  if (config.batch > pool.size())
    throw usage_error("batch size " + std::to_string(config.batch) + " exceeds the " + std::to_string(pool.size()) +
                      "-frame pretraining pool");
  if (!(config.tau > 0.0)) throw usage_error("temperature must be positive");
  if (!model.has_head()) throw usage_error("pretraining needs a projection head");
  const std::size_t chunk = std::max<std::size_t>(2, config.chunk);

  std::vector<IQFrame> frames;
  frames.reserve(pool.size());
  for (const auto& f : pool) frames.push_back(normalize(f));

  auto& params = model.params();
  const nn::TrainableMask mask = nn::mask_for_prefixes(params, {"encoder/", "head/"});
  const std::size_t per_epoch = pool.size() / config.batch;
  const std::size_t total_steps = pretrain_total_steps(pool.size(), config);
  nn::Adam<float> adam(params, nn::CosineSchedule{config.lr, total_steps});

  PretrainResult result;
  std::vector<std::size_t> order(frames.size());
  for (std::size_t epoch = 0; epoch < config.epochs && result.steps < total_steps; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    CounterRng shuffle_rng(derive_seed(config.seed, "pretrain-shuffle", {static_cast<std::int64_t>(epoch)}));
    shuffle(std::span<std::size_t>(order), shuffle_rng);

    double loss_sum = 0.0;
    std::size_t epoch_steps = 0;
    double last_lr = adam.current_lr();
    for (std::size_t s = 0; s < per_epoch && result.steps < total_steps; ++s) {
      CounterRng view_rng(derive_seed(config.seed, "pretrain-views", {static_cast<std::int64_t>(epoch),
                                                                     static_cast<std::int64_t>(s)}));
      std::vector<IQFrame> views;
      views.reserve(2 * config.batch);
      for (std::size_t k = 0; k < config.batch; ++k) {
        const std::size_t src = order[s * config.batch + k];
        auto pair = make_pair(frames[src], view_rng, src);
        views.push_back(std::move(pair.view_i));
        views.push_back(std::move(pair.view_j));
      }

      const std::size_t n_views = views.size();
      const std::size_t n_chunks = (n_views + chunk - 1) / chunk;
      std::vector<std::unique_ptr<nn::Tape<float>>> tapes(n_chunks);
      std::vector<nn::Var> outputs(n_chunks);
      nn::Mat<float> z(static_cast<Eigen::Index>(n_views), 0);
      std::vector<nn::Mat<float>> z_parts(n_chunks);
      parallel_for(n_chunks, config.jobs, [&](std::size_t c) {
        const std::size_t begin = c * chunk;
        const std::size_t len = std::min(chunk, n_views - begin);
        tapes[c] = std::make_unique<nn::Tape<float>>(params, nn::Mode::Train, mask);
        auto& tape = *tapes[c];
        const auto x = tape.input(frames_to_batch<float>(std::span<const IQFrame>(views).subspan(begin, len)), len);
        outputs[c] = model.project(tape, model.encode(tape, x));
        z_parts[c] = tape.value(outputs[c]);
      });
      z.resize(static_cast<Eigen::Index>(n_views), z_parts.front().cols());
      for (std::size_t c = 0; c < n_chunks; ++c)
        z.middleRows(static_cast<Eigen::Index>(c * chunk), z_parts[c].rows()) = z_parts[c];

      // Loss and its embedding gradient in double for a stable reduction.
      const auto loss = nt_xent(ContrastiveBatch<double>{z.cast<double>(), config.tau});
      if (!std::isfinite(loss.loss)) throw numeric_error("non-finite contrastive loss at epoch " + std::to_string(epoch));
      const nn::Mat<float> dz = loss.grad.cast<float>();

      std::vector<nn::GradBuffer<float>> grads(n_chunks, nn::GradBuffer<float>(params.size()));
      parallel_for(n_chunks, config.jobs, [&](std::size_t c) {
        const auto rows = z_parts[c].rows();
        tapes[c]->backward(outputs[c], dz.middleRows(static_cast<Eigen::Index>(c * chunk), rows), grads[c]);
        tapes[c].reset();
      });
      for (std::size_t c = 1; c < n_chunks; ++c) grads[0].merge(grads[c]);
      last_lr = adam.current_lr();
      adam.step(params, grads[0], mask);
      ++result.steps;
      ++epoch_steps;
      loss_sum += loss.loss;
    }
    const EpochLog log{epoch, epoch_steps ? loss_sum / static_cast<double>(epoch_steps) : 0.0, last_lr};
    result.history.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  return result;
}

}  // namespace contramod
