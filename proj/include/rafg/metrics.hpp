#pragma once

#include "rafg/error.hpp"
#include "rafg/tabular.hpp"
#include "rafg/util.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace rafg::metrics {

enum class MetricId { Accuracy, MacroF1 };

inline MetricId parse_metric_id(const std::string& s) {
  if (s == "accuracy") return MetricId::Accuracy;
  if (s == "macro_f1") return MetricId::MacroF1;
  fail(Errc::InvalidConfig, "unknown metric: " + s);
}

inline std::string metric_name(MetricId m) {
  return m == MetricId::Accuracy ? "accuracy" : "macro_f1";
}

struct ClassStats {
  int class_code = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct MetricsReport {
  double accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  std::vector<ClassStats> per_class;
};

/// Accuracy plus per-class precision/recall/F1 macro-averaged over the
/// classes present in y_true. Undefined 0/0 ratios are taken as 0.
inline MetricsReport classification_report(std::span<const int> y_true,
                                           std::span<const int> y_pred) {
  if (y_true.size() != y_pred.size())
    fail(Errc::LengthMismatch, "label vectors differ in length");
  if (y_true.empty()) fail(Errc::LengthMismatch, "empty label vectors");

  std::vector<int> classes(y_true.begin(), y_true.end());
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());

  MetricsReport rep;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < y_true.size(); ++i)
    if (y_true[i] == y_pred[i]) ++correct;
  rep.accuracy = static_cast<double>(correct) / static_cast<double>(y_true.size());

  for (int cls : classes) {
    std::size_t tp = 0, fp = 0, fn = 0, support = 0;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
      bool t = y_true[i] == cls;
      bool p = y_pred[i] == cls;
      if (t) ++support;
      if (t && p) ++tp;
      if (!t && p) ++fp;
      if (t && !p) ++fn;
    }
    ClassStats s;
    s.class_code = cls;
    s.support = support;
    s.precision = (tp + fp) ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    s.recall = (tp + fn) ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    s.f1 = (s.precision + s.recall > 0.0)
               ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
               : 0.0;
    rep.per_class.push_back(s);
    rep.macro_precision += s.precision;
    rep.macro_recall += s.recall;
    rep.macro_f1 += s.f1;
  }
  double k = static_cast<double>(classes.size());
  rep.macro_precision /= k;
  rep.macro_recall /= k;
  rep.macro_f1 /= k;
  return rep;
}

struct EntropyEstimate {
  double bits = 0.0;
  std::size_t n_cells = 0;
  int binning = 0;
};

namespace detail {

// Equal-frequency cut points: sorted values at positions floor(i*n/B),
// i in 1..B-1, with identical edges merged (fewer than B bins allowed).
inline std::vector<double> quantile_edges(const std::vector<double>& values, int bins) {
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> edges;
  const std::size_t n = sorted.size();
  for (int i = 1; i < bins; ++i) {
    std::size_t pos = static_cast<std::size_t>(i) * n / static_cast<std::size_t>(bins);
    double e = sorted[std::min(pos, n - 1)];
    if (edges.empty() || e != edges.back()) edges.push_back(e);
  }
  return edges;
}

inline int bin_of(double x, const std::vector<double>& edges) {
  int b = 0;
  for (double e : edges)
    if (x >= e) ++b;
  return b;
}

}  // namespace detail

/// Empirical conditional entropy H(Y | F) in bits. Numeric features are
/// discretized into at most B equal-frequency bins (edges from the full
/// dataset); categorical features use their codes. A cell is the joint bin
/// tuple; H(Y|F) = sum over cells of p(cell) * H(Y | cell). With no features
/// this is the marginal entropy H(Y). Shrinking cells drive the estimate
/// toward zero, which n_cells makes visible.
inline EntropyEstimate conditional_entropy(
    const tabular::Dataset& d, const std::vector<std::string>& feature_names,
    int bins) {
  if (bins < 2) fail(Errc::InvalidConfig, "bins must be >= 2");
  const std::size_t n = d.n_rows();
  if (n == 0) fail(Errc::EmptyTable, "empty dataset");

  std::vector<std::vector<int>> cell_keys(n);
  for (const auto& name : feature_names) {
    const tabular::Column& col = d.column(name);
    if (col.meta.kind == tabular::ColumnKind::Categorical) {
      for (std::size_t r = 0; r < n; ++r)
        cell_keys[r].push_back(static_cast<int>(col.values[r]));
    } else {
      auto edges = detail::quantile_edges(col.values, bins);
      for (std::size_t r = 0; r < n; ++r)
        cell_keys[r].push_back(detail::bin_of(col.values[r], edges));
    }
  }

  std::map<std::vector<int>, std::vector<std::size_t>> cells;  // key -> class counts
  for (std::size_t r = 0; r < n; ++r) {
    auto& counts = cells[cell_keys[r]];
    counts.resize(static_cast<std::size_t>(d.n_classes()), 0);
    ++counts[static_cast<std::size_t>(d.target()[r])];
  }

  double h = 0.0;
  for (const auto& [key, counts] : cells) {
    std::size_t cell_n = 0;
    for (std::size_t c : counts) cell_n += c;
    double cell_h = 0.0;
    for (std::size_t c : counts) {
      if (c == 0) continue;
      double p = static_cast<double>(c) / static_cast<double>(cell_n);
      cell_h -= p * std::log2(p);
    }
    h += (static_cast<double>(cell_n) / static_cast<double>(n)) * cell_h;
  }

  EntropyEstimate est;
  est.bits = h;
  est.n_cells = cells.size();
  est.binning = bins;
  return est;
}

/// H(Y|F0) - H(Y|F) under a shared binning. Requires F0 to be a subset of F,
/// which makes the true value non-negative; differences below 1e-12 (pure
/// floating-point noise at feasible row counts) are snapped to zero.
inline double information_gain(const std::vector<std::string>& d0_features,
                               const std::vector<std::string>& d_features,
                               const tabular::Dataset& d, int bins) {
  for (const auto& f0 : d0_features) {
    bool found = false;
    for (const auto& f : d_features)
      if (f == f0) found = true;
    if (!found)
      fail(Errc::InvalidConfig,
           "base feature set is not a subset of the expanded set: " + f0);
  }
  double h0 = conditional_entropy(d, d0_features, bins).bits;
  double h1 = conditional_entropy(d, d_features, bins).bits;
  double ig = h0 - h1;
  if (std::fabs(ig) < 1e-12) ig = 0.0;
  return ig;
}

/// Fixed-order plain-text rendering of a report.
inline std::string render_report_text(const MetricsReport& rep,
                                      const std::vector<std::string>& class_names,
                                      double info_gain_bits) {
  std::string out;
  out += "accuracy        " + format_double(rep.accuracy) + "\n";
  out += "macro_precision " + format_double(rep.macro_precision) + "\n";
  out += "macro_recall    " + format_double(rep.macro_recall) + "\n";
  out += "macro_f1        " + format_double(rep.macro_f1) + "\n";
  out += "info_gain_bits  " + format_double(info_gain_bits) + "\n";
  out += "class                precision    recall       f1           support\n";
  for (const auto& s : rep.per_class) {
    std::string name = static_cast<std::size_t>(s.class_code) < class_names.size()
                           ? class_names[static_cast<std::size_t>(s.class_code)]
                           : std::to_string(s.class_code);
    if (name.size() > 20) name.resize(20);
    auto pad = [](std::string v, std::size_t w) {
      if (v.size() < w) v.append(w - v.size(), ' ');
      return v;
    };
    out += pad(name, 21) + pad(format_double(s.precision), 13) +
           pad(format_double(s.recall), 13) + pad(format_double(s.f1), 13) +
           std::to_string(s.support) + "\n";
  }
  return out;
}

/// Machine-readable key/value block; exactly these keys, in this order.
inline std::string render_report_kv(const MetricsReport& rep,
                                    double info_gain_bits) {
  std::string out;
  out += "accuracy=" + format_double(rep.accuracy) + "\n";
  out += "macro_precision=" + format_double(rep.macro_precision) + "\n";
  out += "macro_recall=" + format_double(rep.macro_recall) + "\n";
  out += "macro_f1=" + format_double(rep.macro_f1) + "\n";
  out += "info_gain_bits=" + format_double(info_gain_bits) + "\n";
  return out;
}

}  // namespace rafg::metrics
