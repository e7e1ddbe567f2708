#include "contramod/eval.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace contramod {

std::size_t ConfusionMatrix::total() const { return std::accumulate(counts_.begin(), counts_.end(), std::size_t{0}); }

std::size_t ConfusionMatrix::trace() const {
  std::size_t t = 0;
  for (std::size_t k = 0; k < classes_; ++k) t += at(k, k);
  return t;
}

std::size_t ConfusionMatrix::row_sum(std::size_t truth) const {
  std::size_t s = 0;
  for (std::size_t k = 0; k < classes_; ++k) s += at(truth, k);
  return s;
}

double MetricsReport::accuracy_above(int threshold_db) const {
  std::size_t correct = 0, total = 0;
  for (const auto& [snr, cm] : confusion) {
    if (snr <= threshold_db) continue;
    correct += cm.trace();
    total += cm.total();
  }
  return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

MetricsReport evaluate_predictions(std::span<const int> labels, std::span<const int> predictions,
                                   std::span<const int> snrs_db, std::size_t num_classes) {
  if (labels.size() != predictions.size() || labels.size() != snrs_db.size())
    throw usage_error("evaluate: label, prediction and SNR arrays differ in length");
  MetricsReport report;
  report.num_classes = num_classes;
  report.n_test = labels.size();
  std::size_t correct = 0;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    const int truth = labels[k];
    const int pred = predictions[k];
    if (truth < 0 || static_cast<std::size_t>(truth) >= num_classes || pred < 0 ||
        static_cast<std::size_t>(pred) >= num_classes)
      throw data_error("label or prediction out of range at test frame " + std::to_string(k));
    auto [it, inserted] = report.confusion.try_emplace(snrs_db[k], num_classes);
    ++it->second.at(static_cast<std::size_t>(truth), static_cast<std::size_t>(pred));
    correct += truth == pred;
  }
  report.overall_accuracy = labels.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(labels.size());
  for (const auto& [snr, cm] : report.confusion)
    report.per_snr[snr] = {static_cast<double>(cm.trace()) / static_cast<double>(cm.total()), cm.total()};
  return report;
}

std::vector<int> predict(const Model<float>& model, const Dataset& dataset, std::span<const std::size_t> indices,
                         unsigned jobs) {
  std::vector<IQFrame> frames;
  frames.reserve(indices.size());
  for (std::size_t k : indices) frames.push_back(normalize(dataset.frames.at(k)));
  std::vector<const IQFrame*> ptrs;
  for (const auto& f : frames) ptrs.push_back(&f);
  std::vector<int> out;
  if (ptrs.empty()) return out;
  const auto reps = encode_frames(model, std::span<const IQFrame* const>(ptrs), jobs);
  const auto probs = classify_representations(model, reps);
  out.resize(static_cast<std::size_t>(probs.rows()));
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    Eigen::Index arg = 0;
    probs.row(r).maxCoeff(&arg);
    out[static_cast<std::size_t>(r)] = static_cast<int>(arg);
  }
  if (!probs.allFinite()) throw numeric_error("non-finite class probabilities");
  return out;
}

MetricsReport evaluate(const Model<float>& model, const Dataset& dataset, std::span<const std::size_t> test_indices,
                       unsigned jobs) {
  if (test_indices.empty()) throw data_error("test split is empty");
  const auto preds = predict(model, dataset, test_indices, jobs);
  std::vector<int> labels, snrs;
  for (std::size_t k : test_indices) {
    labels.push_back(dataset.labels[k]);
    snrs.push_back(dataset.snrs_db[k]);
  }
  return evaluate_predictions(labels, preds, snrs, model.num_classes());
}

std::string format_real(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", value);
  return buf;
}

std::string report_accuracy_csv(const MetricsReport& report) {
  std::ostringstream os;
  os << "snr_db,accuracy,n\n";
  for (const auto& [snr, acc] : report.per_snr) os << snr << ',' << format_real(acc.accuracy) << ',' << acc.n << '\n';
  return os.str();
}

std::string report_confusion_csv(const MetricsReport& report) {
  std::ostringstream os;
  os << "true_label,pred_label,count,snr_db\n";
  for (const auto& [snr, cm] : report.confusion)
    for (std::size_t t = 0; t < cm.classes(); ++t)
      for (std::size_t p = 0; p < cm.classes(); ++p) os << t << ',' << p << ',' << cm.at(t, p) << ',' << snr << '\n';
  return os.str();
}

namespace {

// Rounds through the 9-significant-digit text form so JSON carries the same
// value as CSV.
double rounded(double v) { return std::stod(format_real(v)); }

}  // namespace

std::string report_to_json(const MetricsReport& report) {
  nlohmann::ordered_json j;
  j["num_classes"] = report.num_classes;
  j["n_test"] = report.n_test;
  j["overall_accuracy"] = rounded(report.overall_accuracy);
  j["accuracy_snr_gt0"] = rounded(report.accuracy_above(0));
  auto& per = j["per_snr"] = nlohmann::ordered_json::array();
  for (const auto& [snr, acc] : report.per_snr)
    per.push_back({{"snr_db", snr}, {"accuracy", rounded(acc.accuracy)}, {"n", acc.n}});
  auto& conf = j["confusion"] = nlohmann::ordered_json::array();
  for (const auto& [snr, cm] : report.confusion) {
    auto rows = nlohmann::ordered_json::array();
    for (std::size_t t = 0; t < cm.classes(); ++t) {
      auto row = nlohmann::ordered_json::array();
      for (std::size_t p = 0; p < cm.classes(); ++p) row.push_back(cm.at(t, p));
      rows.push_back(std::move(row));
    }
    conf.push_back({{"snr_db", snr}, {"matrix", std::move(rows)}});
  }
  return j.dump(2) + "\n";
}

MetricsReport report_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    MetricsReport r;
    r.num_classes = j.at("num_classes").get<std::size_t>();
    r.n_test = j.at("n_test").get<std::size_t>();
    r.overall_accuracy = j.at("overall_accuracy").get<double>();
    for (const auto& e : j.at("per_snr"))
      r.per_snr[e.at("snr_db").get<int>()] = {e.at("accuracy").get<double>(), e.at("n").get<std::size_t>()};
    for (const auto& e : j.at("confusion")) {
      ConfusionMatrix cm(r.num_classes);
      const auto& rows = e.at("matrix");
      if (rows.size() != r.num_classes) throw data_error("confusion matrix has wrong row count");
      for (std::size_t t = 0; t < r.num_classes; ++t) {
        if (rows[t].size() != r.num_classes) throw data_error("confusion matrix has wrong column count");
        for (std::size_t p = 0; p < r.num_classes; ++p) cm.at(t, p) = rows[t][p].get<std::size_t>();
      }
      r.confusion.emplace(e.at("snr_db").get<int>(), std::move(cm));
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw data_error(std::string("malformed metrics report: ") + e.what());
  }
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw data_error("cannot open " + path.string() + " for writing");
  os << text;
  if (!os) throw data_error("write failed: " + path.string());
}

}  // namespace

void write_report(const MetricsReport& report, const std::filesystem::path& path, ReportFormat format) {
  if (format == ReportFormat::Json) {
    write_text(path, report_to_json(report));
    return;
  }
  write_text(path, report_accuracy_csv(report));
  auto confusion_path = path;
  confusion_path.replace_extension(".confusion.csv");
  write_text(confusion_path, report_confusion_csv(report));
}

MetricsReport read_report_json(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw data_error("cannot open " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return report_from_json(ss.str());
}

}  // namespace contramod
