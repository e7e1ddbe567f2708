#include "contramod/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>

#include "contramod/contrastive.hpp"
#include "contramod/dataio.hpp"
#include "contramod/eval.hpp"
#include "contramod/model.hpp"
#include "contramod/nn/checkpoint.hpp"
#include "contramod/pipeline.hpp"
#include "contramod/sigsyn.hpp"

namespace contramod {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
std::vector<T> parse_numbers(const std::string& text, const char* what) {
  std::vector<T> out;
  for (const auto& item : split_list(text)) {
    std::istringstream is(item);
    T v{};
    if (!(is >> v) || !is.eof()) throw usage_error(std::string("bad ") + what + " value '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw usage_error(std::string("empty ") + what + " list");
  return out;
}

/// key=value lines ('#' comments) turned into flag tokens.
std::vector<std::string> config_tokens(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw usage_error("cannot open config file " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(is, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line.erase(0, line.find_first_not_of(" \t\r"));
    line.erase(line.find_last_not_of(" \t\r") + 1);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw usage_error("config line without '=': " + line);
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    key.erase(key.find_last_not_of(" \t") + 1);
    value.erase(0, value.find_first_not_of(" \t"));
    std::replace(key.begin(), key.end(), '_', '-');
    if (value == "true") {
      tokens.push_back("--" + key);
    } else if (value != "false") {
      tokens.push_back("--" + key);
      tokens.push_back(value);
    }
  }
  return tokens;
}

struct Manifest {
  std::vector<std::pair<std::string, std::string>> entries;

  void set(const std::string& key, const std::string& value) { entries.emplace_back(key, value); }

  void write(const fs::path& path) const {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw data_error("cannot write manifest " + path.string());
    for (const auto& [k, v] : entries) os << k << '=' << v << '\n';
  }
};

/// Records the resolved value of every option of a subcommand.
Manifest manifest_for(const CLI::App& sub) {
  Manifest m;
  m.set("subcommand", sub.get_name());
  m.set("code_version", kVersion);
  for (const CLI::Option* opt : sub.get_options()) {
    const std::string name = opt->get_lnames().empty() ? opt->get_name() : opt->get_lnames().front();
    if (name == "help" || name == "config") continue;
    std::string value;
    const auto results = opt->results();
    if (!results.empty())
      value = results.back();
    else
      value = opt->get_default_str();
    m.set(name, value);
  }
  return m;
}

std::string hex32(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%08x", v);
  return buf;
}

std::string dataset_checksum(const Dataset& d) { return hex32(iqd_checksum(d)); }

fs::path sidecar(const fs::path& out, const std::string& suffix) { return fs::path(out.string() + suffix); }

struct Common {
  std::uint64_t seed = 0;
  unsigned jobs = 1;
};

struct ClassifierFlags {
  double lr = 1e-3;
  std::size_t batch = 64;
  std::size_t patience = 30;
  std::size_t max_epochs = 500;
  double dropout = 0.5;
  double l2 = 1e-4;
  std::string scope = "last_conv";
  double finetune_lr = 1e-4;
  std::size_t finetune_max_epochs = 500;
  bool baseline_augment = false;

  void add_to(CLI::App* sub, bool with_finetune) {
    sub->add_option("--lr", lr, "Classifier learning rate")->capture_default_str();
    sub->add_option("--cls-batch", batch, "Classifier batch size")->capture_default_str();
    sub->add_option("--patience", patience, "Early-stopping patience (epochs)")->capture_default_str();
    sub->add_option("--max-epochs", max_epochs, "Epoch cap for classifier training")->capture_default_str();
    sub->add_option("--dropout", dropout, "Dropout on the classifier hidden layer")->capture_default_str();
    sub->add_option("--l2", l2, "L2 coefficient on classifier kernels")->capture_default_str();
    if (with_finetune) {
      sub->add_option("--scope", scope, "Fine-tune scope: none|last_conv|full")->capture_default_str();
      sub->add_option("--finetune-lr", finetune_lr, "Fine-tuning learning rate")->capture_default_str();
      sub->add_option("--finetune-max-epochs", finetune_max_epochs, "Epoch cap for fine-tuning")->capture_default_str();
    }
  }

  void apply(TrainConfig& c) const {
    c.classifier_lr = lr;
    c.classifier_batch = batch;
    c.patience = patience;
    c.max_epochs = max_epochs;
    c.dropout = dropout;
    c.l2 = l2;
    c.finetune_scope = parse_scope(scope);
    c.finetune_lr = finetune_lr;
    c.finetune_max_epochs = finetune_max_epochs;
    c.baseline_augment = baseline_augment;
  }
};

struct PretrainFlags {
  std::size_t epochs = 100;
  std::size_t batch = 512;
  double tau = 0.5;
  double lr = 1e-4;
  std::optional<std::size_t> max_steps;

  void add_to(CLI::App* sub, const std::string& lr_flag) {
    sub->add_option("--epochs", epochs, "Pretraining epochs")->capture_default_str();
    sub->add_option("--batch", batch, "Source frames per pretraining step")->capture_default_str();
    sub->add_option("--tau", tau, "NT-Xent temperature")->capture_default_str();
    sub->add_option(lr_flag, lr, "Initial pretraining learning rate (cosine decay)")->capture_default_str();
    sub->add_option("--max-steps", max_steps, "Cap on pretraining optimizer steps");
  }

  void apply(PretrainConfig& p) const {
    p.epochs = epochs;
    p.batch = batch;
    p.tau = tau;
    p.lr = lr;
    p.max_steps = max_steps;
  }
};

/// Labeled subsets for train/finetune: explicit index files, or a per-cell
/// selection of n frames, or every train/val frame.
struct SelectionFlags {
  std::string train_idx, val_idx;
  std::optional<std::size_t> n;

  void add_to(CLI::App* sub) {
    sub->add_option("--train-idx", train_idx, "Index list of labeled train frames");
    sub->add_option("--val-idx", val_idx, "Index list of labeled validation frames");
    sub->add_option("--n", n, "Labeled train frames per (scheme, SNR) cell");
  }

  Subsets resolve(const Dataset& d, std::uint64_t seed) const {
    Subsets s;
    if (!train_idx.empty() || !val_idx.empty()) {
      if (train_idx.empty() || val_idx.empty()) throw usage_error("--train-idx and --val-idx go together");
      s.labeled_train = read_index_list(train_idx);
      s.labeled_val = read_index_list(val_idx);
      return s;
    }
    if (n) return select_subsets(d, {*n, std::nullopt, 0, selection_seed(seed)});
    s.labeled_train = d.indices_with(SplitTag::Train);
    s.labeled_val = d.indices_with(SplitTag::Val);
    if (s.labeled_train.empty()) throw data_error("dataset has no train split; run 'contramod split' first");
    return s;
  }
};

class Cli {
 public:
  Cli(std::ostream& out, std::ostream& err) : out_(out), err_(err) {}

  int run(const std::vector<std::string>& raw) {
    CLI::App app{"Semi-supervised modulation classification with contrastive pretraining", "contramod"};
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);
    build(app);
    current_app_ = &app;

    std::vector<std::string> args;
    try {
      args = expand_config(raw);
    } catch (const Error& e) {
      err_ << "error: " << e.what() << '\n';
      return kExitUsage;
    }
    std::reverse(args.begin(), args.end());
    try {
      app.parse(args);
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e, out_, err_);
      return code == 0 ? kExitOk : kExitUsage;
    }
    try {
      action_();
      return kExitOk;
    } catch (const Error& e) {
      err_ << "error: " << e.what() << '\n';
      switch (e.kind()) {
        case ErrorKind::Usage:
          return kExitUsage;
        case ErrorKind::Data:
          return kExitData;
        case ErrorKind::Numeric:
          return kExitNumeric;
      }
      return kExitData;
    } catch (const std::exception& e) {
      err_ << "error: " << e.what() << '\n';
      return kExitData;
    }
  }

 private:
  // Splices `--config FILE` contents right after the subcommand name so
  // later command-line flags override them.
  static std::vector<std::string> expand_config(const std::vector<std::string>& raw) {
    std::vector<std::string> rest;
    std::optional<std::string> config;
    for (std::size_t k = 0; k < raw.size(); ++k) {
      if (raw[k] == "--config") {
        if (k + 1 >= raw.size()) throw usage_error("--config needs a file");
        config = raw[++k];
      } else if (raw[k].rfind("--config=", 0) == 0) {
        config = raw[k].substr(9);
      } else {
        rest.push_back(raw[k]);
      }
    }
    if (!config || rest.empty()) return rest;
    std::vector<std::string> out{rest.front()};
    const auto tokens = config_tokens(*config);
    out.insert(out.end(), tokens.begin(), tokens.end());
    out.insert(out.end(), rest.begin() + 1, rest.end());
    return out;
  }

  CLI::App* subcommand(CLI::App& app, const std::string& name, const std::string& help) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path_, "key=value settings file (flags override it)");
    return sub;
  }

  void add_common(CLI::App* sub) {
    sub->add_option("--seed", common_.seed, "Master seed for all randomness")->capture_default_str();
    sub->add_option("--jobs", common_.jobs, "Worker threads (0 = all cores)")->capture_default_str();
  }

  void build(CLI::App& app) {
    build_gen(app);
    build_split(app);
    build_select(app);
    build_pretrain(app);
    build_train(app);
    build_finetune(app);
    build_sweep(app, true);
    build_sweep(app, false);
    build_eval(app);
    build_report(app);
  }

  void build_gen(CLI::App& app) {
    auto* sub = subcommand(app, "gen", "Synthesize a labeled I/Q dataset (IQD v1)");
    add_common(sub);
    sub->add_option("--schemes", schemes_, "Comma-separated schemes (default: all 11)");
    sub->add_option("--snrs", snrs_, "Comma-separated SNRs in dB (default: -20..18 step 2)");
    sub->add_option("--per-cell", per_cell_, "Frames per (scheme, SNR) cell")->capture_default_str();
    sub->add_option("--frame-len", frame_len_, "Samples per frame")->capture_default_str();
    sub->add_option("--sps", sps_, "Samples per symbol")->capture_default_str();
    sub->add_option("--pulse", pulse_, "Pulse shape: rect|rrc")->capture_default_str();
    sub->add_option("--gain", gain_, "Channel gain applied before noise")->capture_default_str();
    sub->add_option("--out", out_path_, "Output IQD file")->required();
    sub->callback([this] { action_ = [this] { cmd_gen(); }; });
  }

  void build_split(CLI::App& app) {
    auto* sub = subcommand(app, "split", "Tag a dataset 2:1:1 into train/val/test");
    add_common(sub);
    sub->add_option("--data", data_path_, "Input IQD file")->required();
    sub->add_option("--out", out_path_, "Output IQD file with split tags")->required();
    sub->add_option("--index-dir", dir_path_, "Also write train.idx, val.idx, test.idx here");
    sub->callback([this] { action_ = [this] { cmd_split(); }; });
  }

  void build_select(CLI::App& app) {
    auto* sub = subcommand(app, "select", "Select labeled/unlabeled subsets per cell");
    add_common(sub);
    sub->add_option("--data", data_path_, "Split IQD file")->required();
    sub->add_option("--n", n_value_, "Labeled train frames per cell")->required();
    sub->add_option("--n-val", n_val_, "Labeled validation frames per cell (default ceil(n/2))");
    sub->add_option("--u", u_value_, "Extra unlabeled train frames per cell")->capture_default_str();
    sub->add_option("--out-dir", dir_path_, "Directory for the index lists")->required();
    sub->callback([this] { action_ = [this] { cmd_select(); }; });
  }

  void build_pretrain(CLI::App& app) {
    auto* sub = subcommand(app, "pretrain", "Contrastive pretraining of encoder + projection head");
    add_common(sub);
    pretrain_flags_.add_to(sub, "--lr");
    sub->add_option("--data", data_path_, "IQD file")->required();
    sub->add_option("--indices", indices_path_, "Index list of the pretraining pool (default: train split)");
    sub->add_option("--out", out_path_, "Output checkpoint")->required();
    sub->add_option("--loss-csv", csv_path_, "Per-epoch loss CSV (default: <out>.loss.csv)");
    sub->callback([this] { action_ = [this] { cmd_pretrain(); }; });
  }

  void build_train(CLI::App& app) {
    auto* sub = subcommand(app, "train", "Train the classifier on a frozen pretrained encoder");
    add_common(sub);
    classifier_flags_.add_to(sub, false);
    selection_.add_to(sub);
    sub->add_option("--data", data_path_, "Split IQD file")->required();
    sub->add_option("--encoder", model_path_, "Pretrained encoder checkpoint")->required();
    sub->add_option("--out", out_path_, "Output model checkpoint")->required();
    sub->callback([this] { action_ = [this] { cmd_train(); }; });
  }

  void build_finetune(CLI::App& app) {
    auto* sub = subcommand(app, "finetune", "Fine-tune classifier and encoder suffix");
    add_common(sub);
    classifier_flags_.add_to(sub, true);
    selection_.add_to(sub);
    sub->add_option("--data", data_path_, "Split IQD file")->required();
    sub->add_option("--model", model_path_, "Model checkpoint with classifier")->required();
    sub->add_option("--out", out_path_, "Output model checkpoint")->required();
    sub->callback([this] { action_ = [this] { cmd_finetune(); }; });
  }

  void build_sweep(CLI::App& app, bool labels) {
    auto* sub = subcommand(app, labels ? "sweep-labels" : "sweep-unlabeled",
                           labels ? "Accuracy versus labeled frames per cell, SemiAMC and supervised"
                                  : "Accuracy versus extra unlabeled frames per cell");
    add_common(sub);
    pretrain_flags_.add_to(sub, "--pretrain-lr");
    classifier_flags_.add_to(sub, true);
    sub->add_flag("--baseline-augment", classifier_flags_.baseline_augment, "Rotate frames in the supervised baseline");
    sub->add_option("--data", data_path_, "Split IQD file")->required();
    sub->add_option("--seeds", seeds_, "Comma-separated run seeds (default: seed..seed+num_seeds-1)");
    sub->add_option("--num-seeds", num_seeds_, "Number of run seeds")->capture_default_str();
    sub->add_option("--out-dir", dir_path_, "Output directory")->required();
    if (labels) {
      sub->add_option("--n", points_, "Comma-separated labeled counts per cell")->capture_default_str();
      sub->callback([this] { action_ = [this] { cmd_sweep(true); }; });
    } else {
      points_ = "0,10,20,50,100,200,300,400,490";
      sub->add_option("--u", u_points_, "Comma-separated unlabeled counts per cell")->capture_default_str();
      sub->add_option("--n", n_value_, "Labeled frames per cell")->capture_default_str();
      sub->callback([this] { action_ = [this] { cmd_sweep(false); }; });
    }
  }

  void build_eval(CLI::App& app) {
    auto* sub = subcommand(app, "eval", "Evaluate a trained model");
    sub->add_option("--jobs", common_.jobs, "Worker threads (0 = all cores)")->capture_default_str();
    sub->add_option("--model", model_path_, "Model checkpoint with classifier")->required();
    sub->add_option("--data", data_path_, "IQD file (test-tagged frames, else all)")->required();
    sub->add_option("--out", out_path_, "Report path")->required();
    sub->add_option("--format", format_, "json|csv")->capture_default_str();
    sub->callback([this] { action_ = [this] { cmd_eval(); }; });
  }

  void build_report(CLI::App& app) {
    auto* sub = subcommand(app, "report", "Convert a JSON metrics report");
    sub->add_option("--in", data_path_, "JSON metrics report")->required();
    sub->add_option("--out", out_path_, "Output path")->required();
    sub->add_option("--format", format_, "json|csv")->capture_default_str();
    sub->callback([this] { action_ = [this] { cmd_report(); }; });
  }

  // --- commands --------------------------------------------------------------

  void finish_manifest(const CLI::App* sub, const fs::path& path, const std::vector<std::pair<std::string, std::string>>& extra) {
    Manifest m = manifest_for(*sub);
    for (const auto& [k, v] : extra) m.set(k, v);
    m.write(path);
  }

  const CLI::App* active(const std::string& name) const { return current_app_->get_subcommand(name); }

  void cmd_gen() {
    SynthSpec spec;
    if (!schemes_.empty()) {
      spec.schemes.clear();
      for (const auto& s : split_list(schemes_)) {
        try {
          spec.schemes.push_back(parse_scheme(s));
        } catch (const Error& e) {
          throw usage_error(e.what());
        }
      }
    }
    if (!snrs_.empty()) spec.snrs_db = parse_numbers<int>(snrs_, "SNR");
    spec.frames_per_cell = per_cell_;
    spec.frame_len = frame_len_;
    spec.samples_per_symbol = sps_;
    if (pulse_ == "rect")
      spec.pulse = PulseShape::Rect;
    else if (pulse_ == "rrc")
      spec.pulse = PulseShape::RootRaisedCosine;
    else
      throw usage_error("unknown pulse shape '" + pulse_ + "' (rect|rrc)");
    spec.gain = gain_;
    spec.master_seed = common_.seed;
    spec.jobs = common_.jobs;
    const auto data = generate_dataset(spec);
    save_iqd(data, out_path_);
    finish_manifest(active("gen"), sidecar(out_path_, ".manifest"), {{"dataset_crc32", dataset_checksum(data)}});
    out_ << "frames=" << data.size() << " schemes=" << spec.schemes.size() << " snrs=" << spec.snrs_db.size() << '\n';
  }

  void cmd_split() {
    const auto data = load_iqd(data_path_);
    const auto tagged = split(data, common_.seed);
    save_iqd(tagged, out_path_);
    const auto train = tagged.indices_with(SplitTag::Train);
    const auto val = tagged.indices_with(SplitTag::Val);
    const auto test = tagged.indices_with(SplitTag::Test);
    if (!dir_path_.empty()) {
      fs::create_directories(dir_path_);
      write_index_list(train, fs::path(dir_path_) / "train.idx");
      write_index_list(val, fs::path(dir_path_) / "val.idx");
      write_index_list(test, fs::path(dir_path_) / "test.idx");
    }
    finish_manifest(active("split"), sidecar(out_path_, ".manifest"),
                    {{"dataset_crc32", dataset_checksum(data)}, {"output_crc32", dataset_checksum(tagged)}});
    out_ << "train=" << train.size() << " val=" << val.size() << " test=" << test.size() << '\n';
  }

  void cmd_select() {
    const auto data = load_iqd(data_path_);
    SubsetSelection sel{n_value_, n_val_, u_value_, selection_seed(common_.seed)};
    const auto s = select_subsets(data, sel);
    const fs::path dir(dir_path_);
    fs::create_directories(dir);
    write_index_list(s.labeled_train, dir / "labeled_train.idx");
    write_index_list(s.labeled_val, dir / "labeled_val.idx");
    write_index_list(s.unlabeled_train, dir / "unlabeled_train.idx");
    write_index_list(s.pretrain_pool(), dir / "pretrain_pool.idx");
    finish_manifest(active("select"), dir / "manifest.txt", {{"dataset_crc32", dataset_checksum(data)}});
    out_ << "labeled_train=" << s.labeled_train.size() << " labeled_val=" << s.labeled_val.size()
         << " unlabeled=" << s.unlabeled_train.size() << '\n';
  }

  void cmd_pretrain() {
    const auto data = load_iqd(data_path_);
    std::vector<std::size_t> pool;
    if (!indices_path_.empty())
      pool = read_index_list(indices_path_);
    else
      pool = data.indices_with(SplitTag::Train);
    if (pool.empty()) {
      pool.resize(data.size());
      std::iota(pool.begin(), pool.end(), std::size_t{0});
    }
    std::vector<IQFrame> frames;
    for (std::size_t k : pool) frames.push_back(data.frames.at(k));
    TrainConfig tc;
    tc.shape.encoder.input_len = data.frame_len;
    auto model = Model<float>::create(tc.shape.encoder, tc.shape.head, derive_seed(common_.seed, "pretrain-init"));
    PretrainConfig pc;
    pretrain_flags_.apply(pc);
    pc.seed = derive_seed(common_.seed, "pretrain");
    pc.jobs = common_.jobs;
    const fs::path csv = csv_path_.empty() ? sidecar(out_path_, ".loss.csv") : fs::path(csv_path_);
    std::ofstream loss_csv(csv, std::ios::trunc);
    if (!loss_csv) throw data_error("cannot open " + csv.string());
    loss_csv << "epoch,loss,lr\n";
    pretrain(model, frames, pc, [&](const EpochLog& log) {
      loss_csv << log.epoch << ',' << format_real(log.loss) << ',' << format_real(log.lr) << '\n';
      loss_csv.flush();
      out_ << "epoch " << log.epoch << " loss " << format_real(log.loss) << " lr " << format_real(log.lr) << '\n';
    });
    nn::save_checkpoint(model.params(), out_path_);
    finish_manifest(active("pretrain"), sidecar(out_path_, ".manifest"),
                    {{"dataset_crc32", dataset_checksum(data)}, {"pool_size", std::to_string(pool.size())}});
  }

  TrainConfig train_config(std::size_t frame_len) const {
    TrainConfig tc;
    tc.shape.encoder.input_len = frame_len;
    classifier_flags_.apply(tc);
    pretrain_flags_.apply(tc.pretrain);
    tc.jobs = common_.jobs;
    tc.seeds = {common_.seed};
    return tc;
  }

  void cmd_train() {
    const auto data = load_iqd(data_path_);
    auto model = Model<float>::from_params(nn::load_checkpoint(model_path_), data.frame_len);
    const auto subsets = selection_.resolve(data, common_.seed);
    const auto tc = train_config(data.frame_len);
    if (model.has_classifier()) model.reset_classifier(derive_seed(common_.seed, "init-classifier"));
    const auto history = train_classifier(model, make_labeled_set(data, subsets.labeled_train),
                                          make_labeled_set(data, subsets.labeled_val), tc, common_.seed);
    nn::save_checkpoint(model.params(), out_path_);
    finish_manifest(active("train"), sidecar(out_path_, ".manifest"), {{"dataset_crc32", dataset_checksum(data)}});
    out_ << "epochs=" << history.epochs_run << " best_epoch=" << history.best_epoch
         << " best_val_loss=" << format_real(history.best_val_loss) << '\n';
  }

  void cmd_finetune() {
    const auto data = load_iqd(data_path_);
    auto model = Model<float>::from_params(nn::load_checkpoint(model_path_), data.frame_len);
    const auto subsets = selection_.resolve(data, common_.seed);
    const auto tc = train_config(data.frame_len);
    const auto history = finetune(model, make_labeled_set(data, subsets.labeled_train),
                                  make_labeled_set(data, subsets.labeled_val), tc, common_.seed);
    nn::save_checkpoint(model.params(), out_path_);
    finish_manifest(active("finetune"), sidecar(out_path_, ".manifest"), {{"dataset_crc32", dataset_checksum(data)}});
    out_ << "epochs=" << history.epochs_run << " best_epoch=" << history.best_epoch
         << " best_val_loss=" << format_real(history.best_val_loss) << '\n';
  }

  void cmd_sweep(bool labels) {
    const auto data = load_iqd(data_path_);
    auto tc = train_config(data.frame_len);
    if (!seeds_.empty()) {
      tc.seeds = parse_numbers<std::uint64_t>(seeds_, "seed");
    } else {
      tc.seeds.clear();
      for (std::size_t k = 0; k < num_seeds_; ++k) tc.seeds.push_back(common_.seed + k);
    }
    const auto progress = [this](const std::string& msg) { out_ << msg << std::endl; };
    ExperimentResult result;
    if (labels)
      result = run_label_sweep(data, parse_numbers<std::size_t>(points_, "n"), tc, progress);
    else
      result = run_unlabeled_sweep(data, n_value_, parse_numbers<std::size_t>(u_points_, "u"), tc, progress);

    const fs::path dir(dir_path_);
    fs::create_directories(dir / "runs");
    {
      std::ofstream os(dir / "sweep.csv", std::ios::trunc);
      os << result.to_csv();
    }
    {
      std::ofstream os(dir / "summary.csv", std::ios::trunc);
      os << (labels ? "n" : "u") << ",method,runs,mean_overall,std_overall,mean_snr_gt0,std_snr_gt0\n";
      for (const auto& s : result.summary())
        os << s.point << ',' << s.method << ',' << s.runs << ',' << format_real(s.mean_overall) << ','
           << format_real(s.std_overall) << ',' << format_real(s.mean_gt0) << ',' << format_real(s.std_gt0) << '\n';
    }
    for (const auto& r : result.runs) {
      const std::string name =
          r.method + "_" + (labels ? "n" : "u") + std::to_string(r.point) + "_seed" + std::to_string(r.seed) + ".json";
      write_report(r.report, dir / "runs" / name, ReportFormat::Json);
    }
    finish_manifest(active(labels ? "sweep-labels" : "sweep-unlabeled"), dir / "manifest.txt",
                    {{"dataset_crc32", dataset_checksum(data)}, {"config", result.config_echo}});
    out_ << "runs=" << result.runs.size() << " out=" << dir.string() << '\n';
  }

  void cmd_eval() {
    const auto data = load_iqd(data_path_);
    const auto model = Model<float>::from_params(nn::load_checkpoint(model_path_), data.frame_len);
    auto test = data.indices_with(SplitTag::Test);
    if (test.empty()) {
      test.resize(data.size());
      std::iota(test.begin(), test.end(), std::size_t{0});
    }
    const auto report = evaluate(model, data, test, common_.jobs);
    write_report(report, out_path_, parse_format());
    finish_manifest(active("eval"), sidecar(out_path_, ".manifest"), {{"dataset_crc32", dataset_checksum(data)}});
    out_ << "overall_accuracy=" << format_real(report.overall_accuracy) << " n=" << report.n_test << '\n';
  }

  void cmd_report() {
    const auto report = read_report_json(data_path_);
    write_report(report, out_path_, parse_format());
  }

  ReportFormat parse_format() const {
    if (format_ == "json") return ReportFormat::Json;
    if (format_ == "csv") return ReportFormat::Csv;
    throw usage_error("unknown report format '" + format_ + "' (json|csv)");
  }

  std::ostream& out_;
  std::ostream& err_;
  std::function<void()> action_;
  const CLI::App* current_app_ = nullptr;

  std::string config_path_;
  Common common_;
  PretrainFlags pretrain_flags_;
  ClassifierFlags classifier_flags_;
  SelectionFlags selection_;
  std::string schemes_, snrs_, pulse_ = "rect", format_ = "json";
  double gain_ = 1.0;
  std::size_t per_cell_ = 1000, frame_len_ = 128, sps_ = 8;
  std::string data_path_, out_path_, dir_path_, indices_path_, csv_path_, model_path_;
  std::size_t n_value_ = 10, u_value_ = 0, num_seeds_ = 5;
  std::optional<std::size_t> n_val_;
  std::string seeds_, points_ = "1,2,5,10,20,30,40,50", u_points_ = "0,10,20,50,100,200,300,400,490";
};

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Cli cli(out, err);
  return cli.run(args);
}

}  // namespace contramod
