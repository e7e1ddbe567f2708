#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <sstream>

#include "contramod/eval.hpp"
#include "support.hpp"

using namespace contramod;

TEST_CASE("perfect predictions") {
  const std::vector<int> labels{0, 1, 2, 10, 4, 4};
  const std::vector<int> snrs{-20, -20, 0, 0, 18, 18};
  const auto r = evaluate_predictions(labels, labels, snrs, 11);
  CHECK(r.overall_accuracy == 1.0);
  CHECK(r.n_test == 6);
  CHECK(r.per_snr.size() == 3);
  for (const auto& [snr, cm] : r.confusion) {
    CHECK(cm.trace() == cm.total());
    for (std::size_t a = 0; a < 11; ++a)
      for (std::size_t b = 0; b < 11; ++b)
        if (a != b) CHECK(cm.at(a, b) == 0);
  }
  CHECK(r.accuracy_above(0) == 1.0);
}

TEST_CASE("shuffled labels give chance accuracy") {
  double total = 0;
  const int trials = 20;
  for (int trial = 0; trial < trials; ++trial) {
    std::vector<int> labels;
    for (int c = 0; c < 11; ++c)
      for (int k = 0; k < 100; ++k) labels.push_back(c);
    auto preds = labels;
    CounterRng rng(derive_seed(1, "shuffle", {trial}));
    shuffle(std::span<int>(preds), rng);
    const std::vector<int> snrs(labels.size(), 0);
    total += evaluate_predictions(labels, preds, snrs, 11).overall_accuracy;
  }
  CHECK(std::abs(total / trials - 1.0 / 11) <= 0.02);
}

TEST_CASE("per-SNR accuracies weighted by cell size recover the overall accuracy") {
  CounterRng rng(2);
  std::vector<int> labels, preds, snrs;
  for (int k = 0; k < 997; ++k) {
    labels.push_back(static_cast<int>(rng.below(11)));
    preds.push_back(rng.uniform() < 0.6 ? labels.back() : static_cast<int>(rng.below(11)));
    snrs.push_back(-20 + 2 * static_cast<int>(rng.below(20)));
  }
  const auto r = evaluate_predictions(labels, preds, snrs, 11);
  double weighted = 0;
  std::size_t n = 0;
  for (const auto& [snr, acc] : r.per_snr) {
    weighted += acc.accuracy * acc.n;
    n += acc.n;
  }
  CHECK(n == 997);
  CHECK(std::abs(weighted / n - r.overall_accuracy) < 1e-12);

  // accuracy_above counts strictly positive SNRs only.
  std::size_t correct = 0, count = 0;
  for (std::size_t k = 0; k < labels.size(); ++k)
    if (snrs[k] > 0) {
      ++count;
      correct += labels[k] == preds[k];
    }
  CHECK(r.accuracy_above(0) == doctest::Approx(double(correct) / count).epsilon(1e-15));
}

TEST_CASE("out-of-range labels are data errors") {
  const std::vector<int> labels{0, 12}, preds{0, 0}, snrs{0, 0};
  CHECK_THROWS_AS(evaluate_predictions(labels, preds, snrs, 11), Error);
}

namespace {

MetricsReport twenty_snr_report() {
  CounterRng rng(3);
  std::vector<int> labels, preds, snrs;
  for (int s = -20; s <= 18; s += 2)
    for (int k = 0; k < 30; ++k) {
      labels.push_back(static_cast<int>(rng.below(11)));
      preds.push_back(static_cast<int>(rng.below(11)));
      snrs.push_back(s);
    }
  return evaluate_predictions(labels, preds, snrs, 11);
}

}  // namespace

TEST_CASE("accuracy CSV has one row per SNR in ascending order") {
  const auto r = twenty_snr_report();
  std::istringstream is(report_accuracy_csv(r));
  std::string line;
  std::getline(is, line);
  CHECK(line == "snr_db,accuracy,n");
  int rows = 0, prev = -1000;
  while (std::getline(is, line)) {
    const int snr = std::stoi(line.substr(0, line.find(',')));
    CHECK(snr > prev);
    prev = snr;
    ++rows;
  }
  CHECK(rows == 20);
}

TEST_CASE("confusion CSV lists every cell including zeros") {
  const auto r = twenty_snr_report();
  const auto csv = report_confusion_csv(r);
  CHECK(csv.rfind("true_label,pred_label,count,snr_db\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 20 * 121);
}

TEST_CASE("JSON roundtrip reproduces every count and is canonical") {
  const auto r = twenty_snr_report();
  const auto text = report_to_json(r);
  const auto back = report_from_json(text);
  CHECK(back.confusion == r.confusion);
  CHECK(back.n_test == r.n_test);
  CHECK(back.num_classes == r.num_classes);
  for (const auto& [snr, acc] : r.per_snr) {
    CHECK(back.per_snr.at(snr).n == acc.n);
    CHECK(back.per_snr.at(snr).accuracy == doctest::Approx(acc.accuracy).epsilon(1e-8));
  }
  CHECK(report_to_json(back) == text);
  CHECK(report_to_json(twenty_snr_report()) == text);
  CHECK_THROWS(report_from_json("{not json"));
}

TEST_CASE("reports on disk") {
  testing::TempDir tmp("report");
  const auto r = twenty_snr_report();
  write_report(r, tmp / "r.json", ReportFormat::Json);
  write_report(r, tmp / "r.csv", ReportFormat::Csv);
  CHECK(std::filesystem::exists(tmp / "r.confusion.csv"));
  CHECK(report_to_json(read_report_json(tmp / "r.json")) == report_to_json(r));
  std::ifstream is(tmp / "r.csv");
  std::stringstream ss;
  ss << is.rdbuf();
  CHECK(ss.str() == report_accuracy_csv(r));
}

TEST_CASE("real formatting") {
  CHECK(format_real(0.25) == "0.25");
  CHECK(format_real(1.0 / 3) == "0.333333333");
  CHECK(format_real(1e-4) == "0.0001");
}
