#include "contramod/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <numeric>
#include <sstream>

#include "contramod/augment.hpp"
#include "contramod/nn/optim.hpp"

namespace contramod {

FinetuneScope parse_scope(std::string_view name) {
  if (name == "none") return FinetuneScope::None;
  if (name == "last_conv") return FinetuneScope::LastConv;
  if (name == "full") return FinetuneScope::Full;
  throw usage_error("unknown fine-tune scope '" + std::string(name) + "' (none|last_conv|full)");
}

std::string_view scope_name(FinetuneScope scope) {
  switch (scope) {
    case FinetuneScope::None:
      return "none";
    case FinetuneScope::LastConv:
      return "last_conv";
    case FinetuneScope::Full:
      return "full";
  }
  return "none";
}

void TrainConfig::validate() const {
  if (patience < 1) throw usage_error("patience must be at least 1");
  if (seeds.empty()) throw usage_error("at least one seed is required");
  if (classifier_batch < 1) throw usage_error("classifier batch must be at least 1");
  if (dropout < 0.0 || dropout >= 1.0) throw usage_error("dropout must be in [0, 1)");
  if (l2 < 0.0) throw usage_error("l2 coefficient must be non-negative");
  if (chunk < 1) throw usage_error("chunk must be at least 1");
}

EarlyStopping::EarlyStopping(std::size_t patience) : patience_(patience) {
  if (patience < 1) throw usage_error("patience must be at least 1");
}

bool EarlyStopping::update(double val_loss) {
  const std::size_t epoch = epochs_++;
  improved_ = val_loss < best_loss_;
  if (improved_) {
    best_loss_ = val_loss;
    best_epoch_ = epoch;
  }
  return epoch - best_epoch_ >= patience_;
}

LabeledSet make_labeled_set(const Dataset& dataset, std::span<const std::size_t> indices) {
  LabeledSet out;
  out.frames.reserve(indices.size());
  for (std::size_t k : indices) {
    if (k >= dataset.size()) throw data_error("frame index " + std::to_string(k) + " out of range");
    out.frames.push_back(normalize(dataset.frames[k]));
    out.labels.push_back(dataset.labels[k]);
  }
  return out;
}

namespace {

using nn::Mat;

/// Where training inputs enter the network. Frozen prefixes are evaluated
/// once and cached.
enum class InputLevel { Frames, Sequence, Representation };

struct Inputs {
  InputLevel level = InputLevel::Frames;
  const std::vector<IQFrame>* frames = nullptr;  // Frames level
  std::vector<Mat<float>> cached;                 // per item, (steps x features)
  std::size_t steps = 1;
};

Inputs precompute(const Model<float>& model, const LabeledSet& set, InputLevel level, const TrainConfig& cfg) {
  Inputs in;
  in.level = level;
  if (level == InputLevel::Frames) {
    in.frames = &set.frames;
    return in;
  }
  const std::size_t n = set.size();
  in.cached.resize(n);
  in.steps = level == InputLevel::Sequence ? model.encoder_shape().input_len : 1;
  const std::size_t n_chunks = (n + cfg.chunk - 1) / cfg.chunk;
  parallel_for(n_chunks, cfg.jobs, [&](std::size_t c) {
    const std::size_t begin = c * cfg.chunk;
    const std::size_t len = std::min(cfg.chunk, n - begin);
    nn::Tape<float> tape(model.params(), nn::Mode::Inference);
    const auto x = tape.input(frames_to_batch<float>(std::span<const IQFrame>(set.frames).subspan(begin, len)), len);
    const auto out = level == InputLevel::Sequence ? model.encode_prefix(tape, x) : model.encode(tape, x);
    const Mat<float>& v = tape.value(out);
    const auto B = static_cast<Eigen::Index>(len);
    for (Eigen::Index b = 0; b < B; ++b) {
      Mat<float> item(static_cast<Eigen::Index>(in.steps), v.cols());
      for (Eigen::Index t = 0; t < item.rows(); ++t) item.row(t) = v.row(t * B + b);
      in.cached[begin + static_cast<std::size_t>(b)] = std::move(item);
    }
  });
  return in;
}

/// Time-major stack of the selected items; optional rotation per item for
/// Frames-level augmentation.
Mat<float> stack(const Inputs& in, std::span<const std::size_t> items, std::span<const RotationAngle> rotations) {
  if (in.level == InputLevel::Frames) {
    std::vector<IQFrame> picked;
    picked.reserve(items.size());
    for (std::size_t k = 0; k < items.size(); ++k) {
      const IQFrame& f = (*in.frames)[items[k]];
      picked.push_back(rotations.empty() ? f : rotate(f, rotations[k]));
    }
    return frames_to_batch<float>(std::span<const IQFrame>(picked));
  }
  const auto B = static_cast<Eigen::Index>(items.size());
  const Mat<float>& first = in.cached[items.front()];
  Mat<float> x(first.rows() * B, first.cols());
  for (Eigen::Index b = 0; b < B; ++b) {
    const Mat<float>& item = in.cached[items[static_cast<std::size_t>(b)]];
    for (Eigen::Index t = 0; t < item.rows(); ++t) x.row(t * B + b) = item.row(t);
  }
  return x;
}

nn::Var logits_from(const Model<float>& model, nn::Tape<float>& tape, nn::Var x, InputLevel level, double dropout,
                    CounterRng* rng) {
  nn::Var r = x;
  if (level == InputLevel::Frames) r = model.encode(tape, x);
  if (level == InputLevel::Sequence) r = model.encode_suffix(tape, x);
  return model.classify_logits(tape, r, dropout, rng);
}

struct LoopSettings {
  InputLevel level = InputLevel::Representation;
  nn::TrainableMask mask;
  double lr = 1e-3;
  std::size_t max_epochs = 500;
  bool augment = false;
};

double validation_loss(const Model<float>& model, const Inputs& val, const std::vector<int>& labels,
                       const TrainConfig& cfg) {
  const std::size_t n = labels.size();
  const std::size_t n_chunks = (n + cfg.chunk - 1) / cfg.chunk;
  std::vector<double> sums(n_chunks, 0.0);
  parallel_for(n_chunks, cfg.jobs, [&](std::size_t c) {
    const std::size_t begin = c * cfg.chunk;
    const std::size_t len = std::min(cfg.chunk, n - begin);
    std::vector<std::size_t> items(len);
    std::iota(items.begin(), items.end(), begin);
    nn::Tape<float> tape(model.params(), nn::Mode::Inference);
    const auto x = tape.input(stack(val, items, {}), len);
    const auto logits = logits_from(model, tape, x, val.level, 0.0, nullptr);
    const auto ce = tape.softmax_cross_entropy(logits, std::span<const int>(labels).subspan(begin, len));
    sums[c] = static_cast<double>(tape.value(ce)(0, 0)) * static_cast<double>(len);
  });
  return std::accumulate(sums.begin(), sums.end(), 0.0) / static_cast<double>(n);
}

TrainHistory train_loop(Model<float>& model, const LabeledSet& train, const LabeledSet& val, const TrainConfig& cfg,
                        const LoopSettings& settings, std::uint64_t seed) {
  if (train.empty()) throw data_error("labeled training set is empty");
  if (val.empty()) throw data_error("labeled validation set is empty");
  cfg.validate();
  auto& params = model.params();
  const Inputs train_in = precompute(model, train, settings.level, cfg);
  const Inputs val_in = precompute(model, val, settings.level, cfg);
  nn::Adam<float> adam(params, nn::CosineSchedule{settings.lr, 0});
  EarlyStopping stopper(cfg.patience);

  std::vector<nn::ParamId> trainable_ids;
  for (std::size_t k = 0; k < params.size(); ++k)
    if (settings.mask[k]) trainable_ids.push_back({k});
  std::vector<Mat<float>> best;
  auto snapshot = [&] {
    best.clear();
    for (auto id : trainable_ids) best.push_back(params[id].value);
  };
  snapshot();

  TrainHistory history;
  const std::size_t n = train.size();
  const std::size_t batch = std::min(cfg.classifier_batch, n);
  std::vector<std::size_t> order(n);
  for (std::size_t epoch = 0; epoch < settings.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    CounterRng epoch_rng(derive_seed(seed, "classifier-epoch", {static_cast<std::int64_t>(epoch)}));
    shuffle(std::span<std::size_t>(order), epoch_rng);
    std::vector<RotationAngle> rotations;
    if (settings.augment)
      for (std::size_t k = 0; k < n; ++k) rotations.push_back(draw_angle(epoch_rng));

    double loss_sum = 0.0;
    for (std::size_t start = 0, step = 0; start < n; start += batch, ++step) {
      const std::size_t len = std::min(batch, n - start);
      const std::size_t n_chunks = (len + cfg.chunk - 1) / cfg.chunk;
      std::vector<nn::GradBuffer<float>> grads(n_chunks, nn::GradBuffer<float>(params.size()));
      std::vector<double> chunk_loss(n_chunks, 0.0);
      parallel_for(n_chunks, cfg.jobs, [&](std::size_t c) {
        const std::size_t cb = start + c * cfg.chunk;
        const std::size_t cl = std::min(cfg.chunk, start + len - cb);
        std::vector<std::size_t> items(order.begin() + static_cast<std::ptrdiff_t>(cb),
                                       order.begin() + static_cast<std::ptrdiff_t>(cb + cl));
        std::vector<RotationAngle> rot;
        std::vector<int> labels;
        for (std::size_t k : items) {
          labels.push_back(train.labels[k]);
          if (!rotations.empty()) rot.push_back(rotations[k]);
        }
        CounterRng dropout_rng(derive_seed(seed, "dropout", {static_cast<std::int64_t>(epoch),
                                                             static_cast<std::int64_t>(step),
                                                             static_cast<std::int64_t>(c)}));
        nn::Tape<float> tape(params, nn::Mode::Train, settings.mask);
        const auto x = tape.input(stack(train_in, items, rot), cl);
        const auto logits = logits_from(model, tape, x, settings.level, cfg.dropout, &dropout_rng);
        const auto ce = tape.softmax_cross_entropy(logits, labels);
        const double weight = static_cast<double>(cl) / static_cast<double>(len);
        chunk_loss[c] = static_cast<double>(tape.value(ce)(0, 0)) * weight;
        tape.backward(ce, Mat<float>::Constant(1, 1, static_cast<float>(weight)), grads[c]);
      });
      for (std::size_t c = 1; c < n_chunks; ++c) grads[0].merge(grads[c]);
      double batch_loss = std::accumulate(chunk_loss.begin(), chunk_loss.end(), 0.0);
      if (cfg.l2 > 0.0) {
        nn::Tape<float> reg(params, nn::Mode::Train, settings.mask);
        const auto kernels = model.classifier_kernels();
        const auto penalty = reg.l2_penalty(kernels, cfg.l2);
        batch_loss += static_cast<double>(reg.value(penalty)(0, 0));
        reg.backward(penalty, grads[0]);
      }
      if (!std::isfinite(batch_loss)) throw numeric_error("non-finite training loss at epoch " + std::to_string(epoch));
      adam.step(params, grads[0], settings.mask);
      loss_sum += batch_loss * static_cast<double>(len);
    }
    history.train_loss.push_back(loss_sum / static_cast<double>(n));
    const double vloss = validation_loss(model, val_in, val.labels, cfg);
    if (!std::isfinite(vloss)) throw numeric_error("non-finite validation loss at epoch " + std::to_string(epoch));
    history.val_loss.push_back(vloss);
    ++history.epochs_run;
    const bool stop = stopper.update(vloss);
    if (stopper.improved()) snapshot();
    if (stop) break;
  }
  for (std::size_t k = 0; k < trainable_ids.size(); ++k) params[trainable_ids[k]].value = best[k];
  history.best_epoch = stopper.best_epoch();
  history.best_val_loss = stopper.best_loss();
  return history;
}

}  // namespace

TrainHistory train_classifier(Model<float>& model, const LabeledSet& train, const LabeledSet& val,
                              const TrainConfig& config, std::uint64_t seed) {
  if (!model.has_classifier()) model.add_classifier(config.shape.classifier, derive_seed(seed, "init-classifier"));
  LoopSettings s;
  s.level = InputLevel::Representation;
  s.mask = nn::mask_for_prefixes(model.params(), {"classifier/"});
  s.lr = config.classifier_lr;
  s.max_epochs = config.max_epochs;
  return train_loop(model, train, val, config, s, derive_seed(seed, "probe"));
}

TrainHistory finetune(Model<float>& model, const LabeledSet& train, const LabeledSet& val, const TrainConfig& config,
                      std::uint64_t seed) {
  if (config.finetune_scope == FinetuneScope::None) throw usage_error("nothing to fine-tune");
  if (!model.has_classifier()) throw usage_error("fine-tuning needs a trained classifier");
  LoopSettings s;
  if (config.finetune_scope == FinetuneScope::LastConv) {
    s.level = InputLevel::Sequence;
    s.mask = nn::mask_for_prefixes(model.params(), {"classifier/", "encoder/conv2/"});
  } else {
    s.level = InputLevel::Frames;
    s.mask = nn::mask_for_prefixes(model.params(), {"classifier/", "encoder/"});
  }
  s.lr = config.finetune_lr;
  s.max_epochs = config.finetune_max_epochs;
  return train_loop(model, train, val, config, s, derive_seed(seed, "finetune"));
}

Model<float> supervised_baseline(const LabeledSet& train, const LabeledSet& val, const TrainConfig& config,
                                 std::uint64_t seed, TrainHistory* history) {
  if (train.empty()) throw data_error("supervised baseline needs labeled frames");
  auto model = Model<float>::create(config.shape, derive_seed(seed, "supervised-init"));
  LoopSettings s;
  s.level = InputLevel::Frames;
  s.mask = nn::mask_for_prefixes(model.params(), {"classifier/", "encoder/"});
  s.lr = config.classifier_lr;
  s.max_epochs = config.max_epochs;
  s.augment = config.baseline_augment;
  auto h = train_loop(model, train, val, config, s, derive_seed(seed, "supervised"));
  if (history) *history = std::move(h);
  return model;
}

Model<float> pretrain_encoder(const Dataset& dataset, std::span<const std::size_t> pool, const TrainConfig& config,
                              std::uint64_t seed, PretrainResult* result) {
  if (pool.empty()) throw data_error("pretraining pool is empty");
  std::vector<IQFrame> frames;
  frames.reserve(pool.size());
  for (std::size_t k : pool) frames.push_back(dataset.frames.at(k));
  auto model = Model<float>::create(config.shape.encoder, config.shape.head, derive_seed(seed, "pretrain-init"));
  PretrainConfig pc = config.pretrain;
  pc.seed = derive_seed(seed, "pretrain");
  pc.batch = std::min(pc.batch, pool.size());
  pc.jobs = config.jobs;
  auto r = pretrain(model, frames, pc);
  if (result) *result = std::move(r);
  return model;
}

MetricsReport run_semiamc(const Model<float>& pretrained, const Dataset& dataset, const Subsets& subsets,
                          const TrainConfig& config, std::uint64_t seed, Model<float>* trained) {
  Model<float> model = pretrained;
  if (model.has_classifier())
    model.reset_classifier(derive_seed(seed, "init-classifier"));
  else
    model.add_classifier(config.shape.classifier, derive_seed(seed, "init-classifier"));
  const auto train = make_labeled_set(dataset, subsets.labeled_train);
  const auto val = make_labeled_set(dataset, subsets.labeled_val);
  train_classifier(model, train, val, config, seed);
  if (config.finetune_scope != FinetuneScope::None) finetune(model, train, val, config, seed);
  const auto test = dataset.indices_with(SplitTag::Test);
  auto report = evaluate(model, dataset, test, config.jobs);
  if (trained) *trained = std::move(model);
  return report;
}

MetricsReport run_supervised(const Dataset& dataset, const Subsets& subsets, const TrainConfig& config,
                             std::uint64_t seed, Model<float>* trained) {
  const auto train = make_labeled_set(dataset, subsets.labeled_train);
  const auto val = make_labeled_set(dataset, subsets.labeled_val);
  auto model = supervised_baseline(train, val, config, seed);
  const auto test = dataset.indices_with(SplitTag::Test);
  auto report = evaluate(model, dataset, test, config.jobs);
  if (trained) *trained = std::move(model);
  return report;
}

std::uint64_t selection_seed(std::uint64_t seed) { return derive_seed(seed, "select"); }

std::vector<PointSummary> ExperimentResult::summary() const {
  std::map<std::pair<std::size_t, std::string>, std::vector<const RunRecord*>> groups;
  for (const auto& r : runs) groups[{r.point, r.method}].push_back(&r);
  std::vector<PointSummary> out;
  for (const auto& [key, members] : groups) {
    PointSummary s;
    s.point = key.first;
    s.method = key.second;
    s.runs = members.size();
    const double n = static_cast<double>(members.size());
    for (const auto* r : members) {
      s.mean_overall += r->report.overall_accuracy / n;
      s.mean_gt0 += r->report.accuracy_above(0) / n;
    }
    for (const auto* r : members) {
      s.std_overall += std::pow(r->report.overall_accuracy - s.mean_overall, 2) / n;
      s.std_gt0 += std::pow(r->report.accuracy_above(0) - s.mean_gt0, 2) / n;
    }
    s.std_overall = std::sqrt(s.std_overall);
    s.std_gt0 = std::sqrt(s.std_gt0);
    out.push_back(s);
  }
  return out;
}

std::string ExperimentResult::to_csv() const {
  std::ostringstream os;
  os << "n_or_u,seed,overall_acc,acc_snr_ge0,method\n";
  for (const auto& r : runs)
    os << r.point << ',' << r.seed << ',' << format_real(r.report.overall_accuracy) << ','
       << format_real(r.report.accuracy_above(0)) << ',' << r.method << '\n';
  return os.str();
}

std::string describe(const TrainConfig& c) {
  std::ostringstream os;
  os << "encoder=" << c.shape.encoder.conv1_filters << 'x' << c.shape.encoder.conv1_kernel << ','
     << c.shape.encoder.lstm_units << ',' << c.shape.encoder.lstm_units << ',' << c.shape.encoder.conv2_filters << 'x'
     << c.shape.encoder.conv2_kernel << " head=" << c.shape.head.hidden << ',' << c.shape.head.output
     << " classifier=" << c.shape.classifier.hidden << ',' << c.shape.classifier.classes
     << " classifier_lr=" << format_real(c.classifier_lr) << " classifier_batch=" << c.classifier_batch
     << " patience=" << c.patience << " max_epochs=" << c.max_epochs << " finetune_scope=" << scope_name(c.finetune_scope)
     << " finetune_lr=" << format_real(c.finetune_lr) << " finetune_max_epochs=" << c.finetune_max_epochs
     << " dropout=" << format_real(c.dropout) << " l2=" << format_real(c.l2)
     << " baseline_augment=" << (c.baseline_augment ? 1 : 0) << " pretrain_epochs=" << c.pretrain.epochs
     << " pretrain_batch=" << c.pretrain.batch << " tau=" << format_real(c.pretrain.tau)
     << " pretrain_lr=" << format_real(c.pretrain.lr);
  if (c.pretrain.max_steps) os << " pretrain_max_steps=" << *c.pretrain.max_steps;
  os << " seeds=";
  for (std::size_t k = 0; k < c.seeds.size(); ++k) os << (k ? "," : "") << c.seeds[k];
  return os.str();
}

namespace {

void check_split(const Dataset& dataset) {
  if (dataset.indices_with(SplitTag::Train).empty() || dataset.indices_with(SplitTag::Test).empty())
    throw data_error("sweeps need a dataset with train and test split tags");
}

void report_progress(const ProgressFn& progress, const std::string& msg) {
  if (progress) progress(msg);
}

}  // namespace

ExperimentResult run_label_sweep(const Dataset& dataset, std::span<const std::size_t> n_values,
                                 const TrainConfig& config, const ProgressFn& progress) {
  config.validate();
  check_split(dataset);
  if (n_values.empty()) throw usage_error("no n values given");
  ExperimentResult result;
  result.sweep = "labels";
  result.config_echo = describe(config);
  const auto train_pool = dataset.indices_with(SplitTag::Train);
  for (std::uint64_t seed : config.seeds) {
    // Validate every n against the split before spending time on pretraining.
    for (std::size_t n : n_values) select_subsets(dataset, {n, std::nullopt, 0, selection_seed(seed)});
    report_progress(progress, "seed " + std::to_string(seed) + ": pretraining on " +
                                  std::to_string(train_pool.size()) + " frames");
    const auto pretrained = pretrain_encoder(dataset, train_pool, config, seed);
    for (std::size_t n : n_values) {
      const auto subsets = select_subsets(dataset, {n, std::nullopt, 0, selection_seed(seed)});
      const std::uint64_t run_seed = derive_seed(seed, "label-sweep", {static_cast<std::int64_t>(n)});
      result.runs.push_back({n, seed, "semiamc", run_semiamc(pretrained, dataset, subsets, config, run_seed)});
      result.runs.push_back({n, seed, "supervised", run_supervised(dataset, subsets, config, run_seed)});
      report_progress(progress, "seed " + std::to_string(seed) + " n=" + std::to_string(n) + ": semiamc " +
                                    format_real(result.runs[result.runs.size() - 2].report.overall_accuracy) +
                                    " supervised " + format_real(result.runs.back().report.overall_accuracy));
    }
  }
  return result;
}

ExperimentResult run_unlabeled_sweep(const Dataset& dataset, std::size_t n, std::span<const std::size_t> u_values,
                                     const TrainConfig& config, const ProgressFn& progress) {
  config.validate();
  check_split(dataset);
  if (u_values.empty()) throw usage_error("no u values given");
  ExperimentResult result;
  result.sweep = "unlabeled";
  result.config_echo = describe(config) + " n=" + std::to_string(n);
  for (std::uint64_t seed : config.seeds) {
    for (std::size_t u : u_values) select_subsets(dataset, {n, std::nullopt, u, selection_seed(seed)});
    for (std::size_t u : u_values) {
      const auto subsets = select_subsets(dataset, {n, std::nullopt, u, selection_seed(seed)});
      const auto pool = subsets.pretrain_pool();
      report_progress(progress, "seed " + std::to_string(seed) + " u=" + std::to_string(u) + ": pretraining on " +
                                    std::to_string(pool.size()) + " frames");
      const auto pretrained = pretrain_encoder(dataset, pool, config, seed);
      const std::uint64_t run_seed = derive_seed(seed, "unlabeled-sweep", {static_cast<std::int64_t>(n)});
      result.runs.push_back({u, seed, "semiamc", run_semiamc(pretrained, dataset, subsets, config, run_seed)});
      report_progress(progress, "seed " + std::to_string(seed) + " u=" + std::to_string(u) + ": semiamc " +
                                    format_real(result.runs.back().report.overall_accuracy));
    }
  }
  return result;
}

}  // namespace contramod
