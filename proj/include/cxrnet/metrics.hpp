#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cxrnet/errors.hpp"
#include "cxrnet/labels.hpp"

namespace cxrnet {

struct ConfusionMatrix {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t tn = 0;
  std::int64_t fn = 0;

  std::int64_t total() const { return tp + fp + tn + fn; }
};

/// Tallies predictions against ground truth; covid is the positive class.
inline ConfusionMatrix confusion(const std::vector<Label>& pred, const std::vector<Label>& truth) {
  if (pred.size() != truth.size()) {
    throw ShapeError("confusion: " + std::to_string(pred.size()) + " predictions vs " +
                     std::to_string(truth.size()) + " labels");
  }
  if (pred.empty()) throw DataError("confusion: empty input");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] == Label::covid;
    const bool t = truth[i] == Label::covid;
    if (p && t) ++cm.tp;
    else if (p && !t) ++cm.fp;
    else if (!p && !t) ++cm.tn;
    else ++cm.fn;
  }
  return cm;
}

/// The ten performance measures. A metric whose denominator is zero is left
/// unset rather than coerced to a number.
struct MetricsReport {
  std::optional<double> sensitivity, specificity, precision, npv, fpr, fdr, fnr, accuracy, f1, mcc;
};

inline MetricsReport compute_metrics(const ConfusionMatrix& cm) {
  if (cm.total() < 1) throw DataError("compute_metrics: empty confusion matrix");
  const double tp = static_cast<double>(cm.tp), fp = static_cast<double>(cm.fp);
  const double tn = static_cast<double>(cm.tn), fn = static_cast<double>(cm.fn);
  auto ratio = [](double num, double den) -> std::optional<double> {
    if (den == 0.0) return std::nullopt;
    return num / den;
  };
  MetricsReport r;
  r.sensitivity = ratio(tp, tp + fn);
  r.specificity = ratio(tn, fp + tn);
  r.precision = ratio(tp, tp + fp);
  r.npv = ratio(tn, tn + fn);
  r.fpr = ratio(fp, fp + tn);
  r.fdr = ratio(fp, fp + tp);
  r.fnr = ratio(fn, fn + tp);
  r.accuracy = ratio(tp + tn, tp + fp + tn + fn);
  r.f1 = ratio(2.0 * tp, 2.0 * tp + fp + fn);
  // Product under the radical taken as separate square roots so large
  // counts cannot overflow.
  const double d1 = tp + fp, d2 = tp + fn, d3 = tn + fp, d4 = tn + fn;
  if (d1 > 0.0 && d2 > 0.0 && d3 > 0.0 && d4 > 0.0) {
    r.mcc = (tp * tn - fp * fn) / (std::sqrt(d1) * std::sqrt(d2) * std::sqrt(d3) * std::sqrt(d4));
  }
  return r;
}

enum class ReportFormat { text, csv, json };

namespace detail {

struct MetricEntry {
  const char* display;
  const char* key;
  const std::optional<double> MetricsReport::* field;
};

/// Row order matches the report layout: sensitivity first, MCC last.
inline const std::vector<MetricEntry>& metric_entries() {
  static const std::vector<MetricEntry> entries = {
      {"Sensitivity", "sensitivity", &MetricsReport::sensitivity},
      {"Specificity", "specificity", &MetricsReport::specificity},
      {"Precision", "precision", &MetricsReport::precision},
      {"Negative Predictive Value", "npv", &MetricsReport::npv},
      {"False Positive Rate", "fpr", &MetricsReport::fpr},
      {"False Discovery Rate", "fdr", &MetricsReport::fdr},
      {"False Negative Rate", "fnr", &MetricsReport::fnr},
      {"Accuracy", "accuracy", &MetricsReport::accuracy},
      {"F1 Score", "f1", &MetricsReport::f1},
      {"Matthews Correlation Coefficient", "mcc", &MetricsReport::mcc},
  };
  return entries;
}

/// Shortest decimal string that parses back to the same double.
inline std::string double_round_trip(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace detail

inline std::string report_render(const MetricsReport& r, ReportFormat format) {
  std::ostringstream os;
  switch (format) {
    case ReportFormat::text:
      os << std::left << std::setw(36) << "Measure" << "Value" << "\n";
      os << std::string(44, '-') << "\n";
      for (const auto& e : detail::metric_entries()) {
        const auto& v = r.*(e.field);
        os << std::left << std::setw(36) << e.display;
        if (v.has_value()) {
          os << std::fixed << std::setprecision(4) << *v;
          os.unsetf(std::ios::fixed);
        } else {
          os << "NA";
        }
        os << "\n";
      }
      break;
    case ReportFormat::csv:
      os << "metric,value\n";
      for (const auto& e : detail::metric_entries()) {
        const auto& v = r.*(e.field);
        os << e.key << "," << (v.has_value() ? detail::double_round_trip(*v) : "NA") << "\n";
      }
      break;
    case ReportFormat::json: {
      os << "{";
      bool first = true;
      for (const auto& e : detail::metric_entries()) {
        const auto& v = r.*(e.field);
        if (!first) os << ", ";
        first = false;
        os << "\"" << e.key << "\": " << (v.has_value() ? detail::double_round_trip(*v) : "null");
      }
      os << "}";
      break;
    }
  }
  return os.str();
}

}  // namespace cxrnet
