#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "contramod/dataio.hpp"
#include "contramod/model.hpp"

namespace contramod {

/// Square count matrix, rows = true class, cols = predicted class.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t classes = 11) : classes_(classes), counts_(classes * classes, 0) {}

  std::size_t classes() const noexcept { return classes_; }
  std::size_t& at(std::size_t truth, std::size_t pred) { return counts_.at(truth * classes_ + pred); }
  std::size_t at(std::size_t truth, std::size_t pred) const { return counts_.at(truth * classes_ + pred); }
  std::size_t total() const;
  std::size_t trace() const;
  std::size_t row_sum(std::size_t truth) const;

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t classes_;
  std::vector<std::size_t> counts_;
};

struct SnrAccuracy {
  double accuracy = 0.0;
  std::size_t n = 0;
  friend bool operator==(const SnrAccuracy&, const SnrAccuracy&) = default;
};

struct MetricsReport {
  std::size_t num_classes = 11;
  double overall_accuracy = 0.0;
  std::size_t n_test = 0;
  std::map<int, SnrAccuracy> per_snr;
  std::map<int, ConfusionMatrix> confusion;

  /// Accuracy pooled over frames with snr_db > threshold.
  double accuracy_above(int threshold_db) const;
};

/// Builds every metric family from parallel label/prediction/SNR arrays.
MetricsReport evaluate_predictions(std::span<const int> labels, std::span<const int> predictions,
                                   std::span<const int> snrs_db, std::size_t num_classes);

/// Argmax predictions of the model (eval mode) on the given frames.
std::vector<int> predict(const Model<float>& model, const Dataset& dataset, std::span<const std::size_t> indices,
                         unsigned jobs = 1);

MetricsReport evaluate(const Model<float>& model, const Dataset& dataset, std::span<const std::size_t> test_indices,
                       unsigned jobs = 1);

enum class ReportFormat { Csv, Json };

/// Accuracy table `snr_db,accuracy,n`, ascending SNR.
std::string report_accuracy_csv(const MetricsReport& report);
/// Confusion entries `true_label,pred_label,count,snr_db`, ordered by SNR,
/// then true label, then predicted label; zero counts included.
std::string report_confusion_csv(const MetricsReport& report);
std::string report_to_json(const MetricsReport& report);
MetricsReport report_from_json(const std::string& text);

/// CSV writes `path` (accuracy) and `<stem>.confusion.csv` next to it.
void write_report(const MetricsReport& report, const std::filesystem::path& path, ReportFormat format);
MetricsReport read_report_json(const std::filesystem::path& path);

/// Formats with 9 significant digits.
std::string format_real(double value);

}  // namespace contramod
