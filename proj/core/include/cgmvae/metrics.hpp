#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "cgmvae/matrix.hpp"

namespace cgmvae {

struct ClassCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
};

struct MetricsReport {
  double ha = 0.0;
  double example_f1 = 0.0;
  double micro_f1 = 0.0;
  double macro_f1 = 0.0;
  double precision_at_1 = 0.0;
  std::size_t samples = 0;
  std::vector<ClassCounts> per_class;

  /// Named lookup for model selection: "ha", "example_f1", "micro_f1",
  /// "macro_f1" or "precision_at_1". Throws ConfigError otherwise.
  double get(std::string_view metric) const;

  std::string to_json() const;
  /// Aligned two-column table, metrics first, then per-class counts.
  std::string to_table(const std::vector<std::string>& label_names = {}) const;
};

bool is_metric_name(std::string_view metric);

/// ŷ = 1 where p >= t. Throws ConfigError unless 0 <= t <= 1.
LabelMatrix threshold(const RealMatrix& probabilities, double t = 0.5);

std::vector<ClassCounts> class_counts(const LabelMatrix& y, const LabelMatrix& y_hat);

double hamming_accuracy(const LabelMatrix& y, const LabelMatrix& y_hat);
/// A sample with empty y and empty ŷ scores 1.
double example_f1(const LabelMatrix& y, const LabelMatrix& y_hat);
double micro_f1(const LabelMatrix& y, const LabelMatrix& y_hat);
/// Per-class F1 with 0/0 taken as 0, averaged over classes.
double macro_f1(const LabelMatrix& y, const LabelMatrix& y_hat);
/// Ties in the argmax go to the lowest class index.
double precision_at_1(const RealMatrix& probabilities, const LabelMatrix& y);

MetricsReport compute_report(const RealMatrix& probabilities, const LabelMatrix& y, double t = 0.5);

}  // namespace cgmvae
