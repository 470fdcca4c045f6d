#include "cgmvae/metrics.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <sstream>

#include "cgmvae/errors.hpp"
#include "json_io.hpp"

namespace cgmvae {

namespace {

constexpr std::array<std::string_view, 5> kMetricNames{"example_f1", "micro_f1", "macro_f1", "ha",
                                                       "precision_at_1"};

void require_same_shape(const LabelMatrix& y, const LabelMatrix& y_hat, const char* op) {
  if (y.rows != y_hat.rows || y.cols != y_hat.cols) {
    throw DimensionError(std::string(op) + ": y is " + std::to_string(y.rows) + "×" + std::to_string(y.cols) +
                         ", prediction is " + std::to_string(y_hat.rows) + "×" + std::to_string(y_hat.cols));
  }
}

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

bool is_metric_name(std::string_view metric) {
  return std::find(kMetricNames.begin(), kMetricNames.end(), metric) != kMetricNames.end();
}

double MetricsReport::get(std::string_view metric) const {
  if (metric == "ha") return ha;
  if (metric == "example_f1") return example_f1;
  if (metric == "micro_f1") return micro_f1;
  if (metric == "macro_f1") return macro_f1;
  if (metric == "precision_at_1") return precision_at_1;
  throw ConfigError("unknown metric '" + std::string(metric) + "'");
}

std::string MetricsReport::to_json() const { return detail::to_json(*this).dump(2); }

std::string MetricsReport::to_table(const std::vector<std::string>& label_names) const {
  std::ostringstream os;
  char buf[128];
  const std::array<std::pair<const char*, double>, 5> rows{{{"example_f1", example_f1},
                                                            {"micro_f1", micro_f1},
                                                            {"macro_f1", macro_f1},
                                                            {"hamming_accuracy", ha},
                                                            {"precision_at_1", precision_at_1}}};
  os << "metric            value\n";
  for (const auto& [name, v] : rows) {
    std::snprintf(buf, sizeof buf, "%-16s  %.4f\n", name, v);
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "%-16s  %zu\n", "samples", samples);
  os << buf;
  if (!per_class.empty()) {
    std::size_t width = 5;
    for (const auto& n : label_names) width = std::max(width, n.size());
    os << '\n';
    std::snprintf(buf, sizeof buf, "%-*s  %8s  %8s  %8s\n", static_cast<int>(width), "class", "tp", "fp", "fn");
    os << buf;
    for (std::size_t j = 0; j < per_class.size(); ++j) {
      const std::string name = j < label_names.size() ? label_names[j] : std::to_string(j);
      std::snprintf(buf, sizeof buf, "%-*s  %8zu  %8zu  %8zu\n", static_cast<int>(width), name.c_str(),
                    per_class[j].tp, per_class[j].fp, per_class[j].fn);
      os << buf;
    }
  }
  return os.str();
}

LabelMatrix threshold(const RealMatrix& probabilities, double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("threshold must lie in [0, 1], got " + std::to_string(t));
  LabelMatrix out(probabilities.rows, probabilities.cols);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = probabilities.data[i] >= t ? 1 : 0;
  return out;
}

std::vector<ClassCounts> class_counts(const LabelMatrix& y, const LabelMatrix& y_hat) {
  require_same_shape(y, y_hat, "class_counts");
  std::vector<ClassCounts> counts(y.cols);
  for (std::size_t r = 0; r < y.rows; ++r)
    for (std::size_t c = 0; c < y.cols; ++c) {
      const bool t = y(r, c) != 0, p = y_hat(r, c) != 0;
      if (t && p) ++counts[c].tp;
      else if (p) ++counts[c].fp;
      else if (t) ++counts[c].fn;
    }
  return counts;
}

double hamming_accuracy(const LabelMatrix& y, const LabelMatrix& y_hat) {
  require_same_shape(y, y_hat, "hamming_accuracy");
  if (y.rows == 0 || y.cols == 0) return 0.0;
  double total = 0.0;
  for (std::size_t r = 0; r < y.rows; ++r) {
    std::size_t match = 0;
    for (std::size_t c = 0; c < y.cols; ++c) match += (y(r, c) != 0) == (y_hat(r, c) != 0) ? 1 : 0;
    total += ratio(match, y.cols);
  }
  return total / static_cast<double>(y.rows);
}

double example_f1(const LabelMatrix& y, const LabelMatrix& y_hat) {
  require_same_shape(y, y_hat, "example_f1");
  if (y.rows == 0) return 0.0;
  double total = 0.0;
  for (std::size_t r = 0; r < y.rows; ++r) {
    std::size_t both = 0, sum = 0;
    for (std::size_t c = 0; c < y.cols; ++c) {
      const bool t = y(r, c) != 0, p = y_hat(r, c) != 0;
      both += t && p ? 1 : 0;
      sum += (t ? 1 : 0) + (p ? 1 : 0);
    }
    total += sum == 0 ? 1.0 : ratio(2 * both, sum);
  }
  return total / static_cast<double>(y.rows);
}

double micro_f1(const LabelMatrix& y, const LabelMatrix& y_hat) {
  std::size_t tp = 0, fp = 0, fn = 0;
  for (const auto& c : class_counts(y, y_hat)) {
    tp += c.tp;
    fp += c.fp;
    fn += c.fn;
  }
  return ratio(2 * tp, 2 * tp + fp + fn);
}

double macro_f1(const LabelMatrix& y, const LabelMatrix& y_hat) {
  const auto counts = class_counts(y, y_hat);
  if (counts.empty()) return 0.0;
  double total = 0.0;
  for (const auto& c : counts) total += ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn);
  return total / static_cast<double>(counts.size());
}

double precision_at_1(const RealMatrix& probabilities, const LabelMatrix& y) {
  if (probabilities.rows != y.rows || probabilities.cols != y.cols) {
    throw DimensionError("precision_at_1: probabilities and labels differ in shape");
  }
  if (y.cols == 0) throw DimensionError("precision_at_1: no label classes");
  if (y.rows == 0) return 0.0;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < y.rows; ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < y.cols; ++c)
      if (probabilities(r, c) > probabilities(r, best)) best = c;
    hits += y(r, best) ? 1 : 0;
  }
  return ratio(hits, y.rows);
}

MetricsReport compute_report(const RealMatrix& probabilities, const LabelMatrix& y, double t) {
  const LabelMatrix y_hat = threshold(probabilities, t);
  MetricsReport r;
  r.samples = y.rows;
  r.ha = hamming_accuracy(y, y_hat);
  r.example_f1 = example_f1(y, y_hat);
  r.micro_f1 = micro_f1(y, y_hat);
  r.macro_f1 = macro_f1(y, y_hat);
  r.precision_at_1 = precision_at_1(probabilities, y);
  r.per_class = class_counts(y, y_hat);
  return r;
}

}  // namespace cgmvae
