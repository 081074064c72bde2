#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "colornet/network.hpp"

namespace colornet {

/// counts(t, p): samples of true class t predicted as p.
class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::size_t num_classes)
      : k_(num_classes), counts_(num_classes * num_classes, 0) {}

  std::size_t num_classes() const { return k_; }
  std::uint64_t at(std::size_t t, std::size_t p) const { return counts_[t * k_ + p]; }
  std::uint64_t& at(std::size_t t, std::size_t p) { return counts_[t * k_ + p]; }
  std::uint64_t total() const;
  std::uint64_t trace() const;
  std::uint64_t row_sum(std::size_t t) const;
  std::uint64_t col_sum(std::size_t p) const;
  const std::vector<std::uint64_t>& counts() const { return counts_; }

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t k_ = 0;
  std::vector<std::uint64_t> counts_;
};

ConfusionMatrix confusion(std::span<const int> labels, std::span<const int> predictions,
                          std::size_t num_classes);

/// diagonal / row sum, 0 for classes without samples.
std::vector<double> per_class_accuracy(const ConfusionMatrix& cm);

/// One-vs-rest rates in percent, averaged over classes. TP/FN average over
/// classes that have positives, FP/TN over classes that have negatives.
struct RateSummary {
  double tp = 0.0;
  double tn = 0.0;
  double fp = 0.0;
  double fn = 0.0;
};

RateSummary macro_rates(const ConfusionMatrix& cm);

struct EvalReport {
  std::string id;
  double accuracy = 0.0;
  std::vector<double> per_class;
  ConfusionMatrix confusion;
  RateSummary rates;
  double wall_time = 0.0;
  std::size_t param_count = 0;
};

EvalReport make_report(const std::string& id, const ConfusionMatrix& cm,
                       std::size_t param_count = 0, double wall_time = 0.0);
EvalReport evaluate_scores(const std::string& id, const ScoreMatrix& scores,
                           std::span<const int> labels, std::size_t param_count = 0);

/// `include_time` false omits wall_time so the output is reproducible.
nlohmann::json report_to_json(const EvalReport& report, bool include_time = false);
EvalReport report_from_json(const nlohmann::json& j);
std::string report_csv_header();
std::string report_csv_row(const EvalReport& report);
/// Whitespace-aligned integer grid, one row per true class.
std::string confusion_grid(const ConfusionMatrix& cm);

struct ClassDelta {
  std::size_t class_index = 0;
  std::string best;
  std::string worst;
  double best_accuracy = 0.0;
  double worst_accuracy = 0.0;
  double spread = 0.0;
};

/// Per class: best and worst report by per-class accuracy (first report wins
/// ties), sorted by spread descending, then class index ascending.
std::vector<ClassDelta> cross_space_class_deltas(std::span<const EvalReport> reports);

/// Entry (i, j): fraction of samples where branches i and j predict
/// different classes.
std::vector<std::vector<double>> branch_disagreement(
    std::span<const std::vector<int>> predictions);

/// Accuracy over samples whose label is `a` or `b`, deciding between just
/// those two classes by their scores.
double pair_accuracy(const ScoreMatrix& scores, std::span<const int> labels, int a, int b);

}  // namespace colornet
