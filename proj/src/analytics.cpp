#include "colornet/analytics.hpp"

#include <algorithm>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "colornet/error.hpp"

namespace colornet {

using nlohmann::json;

std::uint64_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

std::uint64_t ConfusionMatrix::trace() const {
  std::uint64_t s = 0;
  for (std::size_t i = 0; i < k_; ++i) s += at(i, i);
  return s;
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t t) const {
  std::uint64_t s = 0;
  for (std::size_t p = 0; p < k_; ++p) s += at(t, p);
  return s;
}

std::uint64_t ConfusionMatrix::col_sum(std::size_t p) const {
  std::uint64_t s = 0;
  for (std::size_t t = 0; t < k_; ++t) s += at(t, p);
  return s;
}

ConfusionMatrix confusion(std::span<const int> labels, std::span<const int> predictions,
                          std::size_t num_classes) {
  if (labels.size() != predictions.size()) {
    throw UsageError("confusion: " + std::to_string(labels.size()) + " labels but " +
                     std::to_string(predictions.size()) + " predictions");
  }
  ConfusionMatrix cm(num_classes);
  const auto k = static_cast<int>(num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= k || predictions[i] < 0 || predictions[i] >= k) {
      std::ostringstream os;
      os << "confusion: sample " << i << " has label " << labels[i] << " / prediction "
         << predictions[i] << " outside [0, " << num_classes << ")";
      throw UsageError(os.str());
    }
    ++cm.at(static_cast<std::size_t>(labels[i]), static_cast<std::size_t>(predictions[i]));
  }
  return cm;
}

std::vector<double> per_class_accuracy(const ConfusionMatrix& cm) {
  std::vector<double> out(cm.num_classes(), 0.0);
  for (std::size_t c = 0; c < cm.num_classes(); ++c) {
    const auto row = cm.row_sum(c);
    if (row > 0) out[c] = static_cast<double>(cm.at(c, c)) / static_cast<double>(row);
  }
  return out;
}

RateSummary macro_rates(const ConfusionMatrix& cm) {
  const std::uint64_t total = cm.total();
  double tp = 0.0, fp = 0.0;
  std::size_t n_pos = 0, n_neg = 0;
  for (std::size_t c = 0; c < cm.num_classes(); ++c) {
    const auto positives = cm.row_sum(c);
    const auto negatives = total - positives;
    if (positives > 0) {
      tp += static_cast<double>(cm.at(c, c)) / static_cast<double>(positives);
      ++n_pos;
    }
    if (negatives > 0) {
      fp += static_cast<double>(cm.col_sum(c) - cm.at(c, c)) / static_cast<double>(negatives);
      ++n_neg;
    }
  }
  RateSummary r;
  if (n_pos > 0) {
    r.tp = 100.0 * tp / static_cast<double>(n_pos);
    r.fn = 100.0 - r.tp;
  }
  if (n_neg > 0) {
    r.fp = 100.0 * fp / static_cast<double>(n_neg);
    r.tn = 100.0 - r.fp;
  }
  return r;
}

EvalReport make_report(const std::string& id, const ConfusionMatrix& cm,
                       std::size_t param_count, double wall_time) {
  EvalReport r;
  r.id = id;
  r.confusion = cm;
  const auto total = cm.total();
  r.accuracy = total ? static_cast<double>(cm.trace()) / static_cast<double>(total) : 0.0;
  r.per_class = per_class_accuracy(cm);
  r.rates = macro_rates(cm);
  r.param_count = param_count;
  r.wall_time = wall_time;
  return r;
}

EvalReport evaluate_scores(const std::string& id, const ScoreMatrix& scores,
                           std::span<const int> labels, std::size_t param_count) {
  const auto pred = argmax_rows(scores);
  return make_report(id, confusion(labels, pred, static_cast<std::size_t>(scores.cols())),
                     param_count);
}

json report_to_json(const EvalReport& report, bool include_time) {
  const auto& cm = report.confusion;
  json rows = json::array();
  for (std::size_t t = 0; t < cm.num_classes(); ++t) {
    json row = json::array();
    for (std::size_t p = 0; p < cm.num_classes(); ++p) row.push_back(cm.at(t, p));
    rows.push_back(row);
  }
  json j;
  j["id"] = report.id;
  j["accuracy"] = report.accuracy;
  j["per_class_accuracy"] = report.per_class;
  j["confusion"] = rows;
  j["samples"] = cm.total();
  j["rates"] = {{"tp", report.rates.tp}, {"tn", report.rates.tn},
                {"fp", report.rates.fp}, {"fn", report.rates.fn}};
  j["rates_definition"] = "one-vs-rest per class, macro-averaged, percent";
  j["param_count"] = report.param_count;
  if (include_time) j["wall_time"] = report.wall_time;
  return j;
}

EvalReport report_from_json(const json& j) {
  const auto& rows = j.at("confusion");
  ConfusionMatrix cm(rows.size());
  for (std::size_t t = 0; t < rows.size(); ++t) {
    if (rows[t].size() != rows.size()) throw DataError("report: confusion matrix is not square");
    for (std::size_t p = 0; p < rows.size(); ++p) cm.at(t, p) = rows[t][p].get<std::uint64_t>();
  }
  return make_report(j.at("id").get<std::string>(), cm, j.value("param_count", std::size_t{0}),
                     j.value("wall_time", 0.0));
}

std::string report_csv_header() { return "id,accuracy,tp,tn,fp,fn,samples,param_count"; }

std::string report_csv_row(const EvalReport& r) {
  std::ostringstream os;
  os << std::setprecision(10) << r.id << ',' << r.accuracy << ',' << r.rates.tp << ','
     << r.rates.tn << ',' << r.rates.fp << ',' << r.rates.fn << ',' << r.confusion.total() << ','
     << r.param_count;
  return os.str();
}

std::string confusion_grid(const ConfusionMatrix& cm) {
  std::size_t width = 1;
  for (auto v : cm.counts()) width = std::max(width, std::to_string(v).size());
  std::ostringstream os;
  for (std::size_t t = 0; t < cm.num_classes(); ++t) {
    for (std::size_t p = 0; p < cm.num_classes(); ++p) {
      if (p) os << ' ';
      os << std::setw(static_cast<int>(width)) << cm.at(t, p);
    }
    os << '\n';
  }
  return os.str();
}

std::vector<ClassDelta> cross_space_class_deltas(std::span<const EvalReport> reports) {
  std::vector<ClassDelta> out;
  if (reports.empty()) return out;
  const std::size_t k = reports.front().per_class.size();
  for (const auto& r : reports) {
    if (r.per_class.size() != k) throw UsageError("cross_space_class_deltas: class counts differ");
  }
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t best = 0, worst = 0;
    for (std::size_t i = 1; i < reports.size(); ++i) {
      if (reports[i].per_class[c] > reports[best].per_class[c]) best = i;
      if (reports[i].per_class[c] < reports[worst].per_class[c]) worst = i;
    }
    ClassDelta d;
    d.class_index = c;
    d.best = reports[best].id;
    d.worst = reports[worst].id;
    d.best_accuracy = reports[best].per_class[c];
    d.worst_accuracy = reports[worst].per_class[c];
    d.spread = d.best_accuracy - d.worst_accuracy;
    out.push_back(d);
  }
  std::stable_sort(out.begin(), out.end(), [](const ClassDelta& a, const ClassDelta& b) {
    if (a.spread != b.spread) return a.spread > b.spread;
    return a.class_index < b.class_index;
  });
  return out;
}

std::vector<std::vector<double>> branch_disagreement(
    std::span<const std::vector<int>> predictions) {
  const std::size_t b = predictions.size();
  std::vector<std::vector<double>> out(b, std::vector<double>(b, 0.0));
  if (b == 0) return out;
  const std::size_t n = predictions.front().size();
  for (const auto& p : predictions) {
    if (p.size() != n) throw UsageError("branch_disagreement: prediction lengths differ");
  }
  if (n == 0) return out;
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = i + 1; j < b; ++j) {
      std::size_t diff = 0;
      for (std::size_t s = 0; s < n; ++s) diff += predictions[i][s] != predictions[j][s];
      out[i][j] = out[j][i] = static_cast<double>(diff) / static_cast<double>(n);
    }
  }
  return out;
}

double pair_accuracy(const ScoreMatrix& scores, std::span<const int> labels, int a, int b) {
  if (static_cast<std::size_t>(scores.rows()) != labels.size()) {
    throw UsageError("pair_accuracy: score rows and label count differ");
  }
  if (a < 0 || b < 0 || a >= scores.cols() || b >= scores.cols()) {
    throw UsageError("pair_accuracy: class index out of range");
  }
  std::size_t n = 0, hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != a && labels[i] != b) continue;
    ++n;
    const auto row = static_cast<long>(i);
    const int pred = scores(row, a) >= scores(row, b) ? a : b;
    hit += pred == labels[i];
  }
  return n ? static_cast<double>(hit) / static_cast<double>(n) : 0.0;
}

}  // namespace colornet
