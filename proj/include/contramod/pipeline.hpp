#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "contramod/contrastive.hpp"
#include "contramod/dataio.hpp"
#include "contramod/eval.hpp"
#include "contramod/model.hpp"

namespace contramod {

enum class FinetuneScope { None, LastConv, Full };

FinetuneScope parse_scope(std::string_view name);
std::string_view scope_name(FinetuneScope scope);

struct TrainConfig {
  ModelShape shape;
  double classifier_lr = 1e-3;
  std::size_t classifier_batch = 64;
  std::size_t patience = 30;
  std::size_t max_epochs = 500;
  FinetuneScope finetune_scope = FinetuneScope::LastConv;
  double finetune_lr = 1e-4;
  std::size_t finetune_max_epochs = 500;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  double dropout = 0.5;
  double l2 = 1e-4;
  /// Random quarter-turn rotation of each training frame in the supervised
  /// baseline.
  bool baseline_augment = false;
  unsigned jobs = 1;
  std::size_t chunk = 32;
  PretrainConfig pretrain;

  void validate() const;
};

/// Stops once the validation loss has not decreased for `patience`
/// consecutive epochs; ties do not count as a decrease.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience);

  /// Records one epoch; returns true when training should stop.
  bool update(double val_loss);

  bool improved() const noexcept { return improved_; }
  std::size_t best_epoch() const noexcept { return best_epoch_; }
  double best_loss() const noexcept { return best_loss_; }
  std::size_t epochs() const noexcept { return epochs_; }

 private:
  std::size_t patience_;
  std::size_t epochs_ = 0;
  std::size_t best_epoch_ = 0;
  double best_loss_ = std::numeric_limits<double>::infinity();
  bool improved_ = false;
};

/// Normalized frames with their labels.
struct LabeledSet {
  std::vector<IQFrame> frames;
  std::vector<int> labels;

  std::size_t size() const noexcept { return frames.size(); }
  bool empty() const noexcept { return frames.empty(); }
};

LabeledSet make_labeled_set(const Dataset& dataset, std::span<const std::size_t> indices);

struct TrainHistory {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  std::size_t best_epoch = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  std::size_t epochs_run = 0;
};

/// Linear-probe stage: trains only the classifier (adding one if missing) on
/// top of the frozen encoder, then restores the minimum-validation-loss
/// parameters.
TrainHistory train_classifier(Model<float>& model, const LabeledSet& train, const LabeledSet& val,
                              const TrainConfig& config, std::uint64_t seed);

/// Trains classifier plus the encoder suffix selected by config.finetune_scope
/// (last_conv: conv2 onward; full: everything) at finetune_lr, with the same
/// early stopping. Throws "nothing to fine-tune" for scope none.
TrainHistory finetune(Model<float>& model, const LabeledSet& train, const LabeledSet& val, const TrainConfig& config,
                      std::uint64_t seed);

/// Same architecture trained from scratch on the labeled frames only.
Model<float> supervised_baseline(const LabeledSet& train, const LabeledSet& val, const TrainConfig& config,
                                 std::uint64_t seed, TrainHistory* history = nullptr);

/// Contrastive pretraining of a fresh encoder + head on `pool`. The batch is
/// clamped to the pool size.
Model<float> pretrain_encoder(const Dataset& dataset, std::span<const std::size_t> pool, const TrainConfig& config,
                              std::uint64_t seed, PretrainResult* result = nullptr);

/// Probe, optional fine-tune, then test-set evaluation, starting from a copy
/// of `pretrained`.
MetricsReport run_semiamc(const Model<float>& pretrained, const Dataset& dataset, const Subsets& subsets,
                          const TrainConfig& config, std::uint64_t seed, Model<float>* trained = nullptr);

MetricsReport run_supervised(const Dataset& dataset, const Subsets& subsets, const TrainConfig& config,
                             std::uint64_t seed, Model<float>* trained = nullptr);

/// Seed used for labeled/unlabeled subset selection in run `seed`.
std::uint64_t selection_seed(std::uint64_t seed);

struct RunRecord {
  std::size_t point = 0;  // n or u
  std::uint64_t seed = 0;
  std::string method;     // "semiamc" or "supervised"
  MetricsReport report;
};

struct PointSummary {
  std::size_t point = 0;
  std::string method;
  std::size_t runs = 0;
  double mean_overall = 0.0;
  double std_overall = 0.0;
  double mean_gt0 = 0.0;
  double std_gt0 = 0.0;
};

struct ExperimentResult {
  std::string sweep;  // "labels" or "unlabeled"
  std::vector<RunRecord> runs;
  std::string config_echo;

  /// Arithmetic mean and population std over seeds, per (point, method).
  std::vector<PointSummary> summary() const;
  /// `n_or_u,seed,overall_acc,acc_snr_ge0,method`, one row per run.
  std::string to_csv() const;
};

using ProgressFn = std::function<void(const std::string&)>;

/// For each seed: pretrain once on every train frame, then for each n select
/// n labeled train and ceil(n/2) labeled val frames per cell, run SemiAMC and
/// the supervised baseline on identical subsets, evaluate on the test split.
ExperimentResult run_label_sweep(const Dataset& dataset, std::span<const std::size_t> n_values,
                                 const TrainConfig& config, const ProgressFn& progress = {});

/// For each seed and u: pretrain on the n labeled + u unlabeled frames per
/// cell, then probe/fine-tune with the n labels.
ExperimentResult run_unlabeled_sweep(const Dataset& dataset, std::size_t n, std::span<const std::size_t> u_values,
                                     const TrainConfig& config, const ProgressFn& progress = {});

std::string describe(const TrainConfig& config);

}  // namespace contramod
