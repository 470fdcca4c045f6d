#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cgmvae/matrix.hpp"

namespace cgmvae {

enum class Split : std::uint8_t { Train = 0, Val = 1, Test = 2, Unused = 3 };

std::string_view split_name(Split s);
/// Accepts "train", "val", "test" (and "validation"). Throws ConfigError otherwise.
Split parse_split(std::string_view name);

struct SplitFractions {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct NormStats {
  std::vector<double> mean;
  std::vector<double> stddev;  ///< zero deviations are stored as 1
};

/// Features, binary labels, and per-row split tags. Immutable once built:
/// every pipeline stage returns a new Dataset and leaves labels untouched.
struct Dataset {
  RealMatrix features;  ///< N×D, raw (un-normalized)
  LabelMatrix labels;   ///< N×L, entries 0/1
  std::vector<std::string> label_names;
  std::vector<Split> split;  ///< empty until split() or a manifest is applied
  NormStats norm;            ///< computed from Train rows only

  std::size_t size() const { return features.rows; }
  std::size_t feature_dim() const { return features.cols; }
  std::size_t num_labels() const { return labels.cols; }

  std::size_t count(Split s) const;
  std::vector<std::size_t> rows(Split s) const;
  /// Rows with no positive label. They are kept; the loss decides how to use them.
  std::vector<std::size_t> empty_label_rows() const;

  /// Features of `rows`, normalized with `norm`.
  RealMatrix normalized(const std::vector<std::size_t>& rows) const;
  LabelMatrix label_rows(const std::vector<std::size_t>& rows) const;
};

struct Batch {
  RealMatrix features;  ///< B×D, normalized
  LabelMatrix labels;   ///< B×L
  std::vector<std::size_t> rows;
};

enum class DataFormat { DenseCsv, SparseMultilabel };

/// `X.csv` (N×D floats) and `Y.csv` (N×L 0/1), comma-separated, no header.
Dataset load_dense_csv(const std::filesystem::path& x_path, const std::filesystem::path& y_path);

/// A bare N×D feature table in the X.csv layout.
RealMatrix load_feature_csv(const std::filesystem::path& path);

/// One file: header `#L=<L> D=<D>`, then per row a comma-separated list of
/// positive label indices (may be empty), a space, and `index:value` pairs.
Dataset load_sparse_multilabel(const std::filesystem::path& path);

/// DenseCsv expects a directory holding X.csv and Y.csv.
Dataset load(const std::filesystem::path& path, DataFormat format);

/// Reads one label name per line.
std::vector<std::string> load_label_names(const std::filesystem::path& path);

/// Parses a whitespace-separated list of N split tags in {0,1,2}.
std::vector<Split> load_split_manifest(const std::filesystem::path& path, std::size_t expected_rows);

/// Rows per split for N samples: val/test get ceil(N·f), the train split
/// takes the remainder.
struct SplitSizes {
  std::size_t train = 0, val = 0, test = 0;
};
SplitSizes split_sizes(std::size_t n, const SplitFractions& fractions);

/// Seeded random assignment of train/val/test tags; recomputes norm stats.
Dataset split(const Dataset& ds, const SplitFractions& fractions, std::uint64_t seed);

/// Applies explicit tags instead of a random split; recomputes norm stats.
Dataset apply_split(const Dataset& ds, std::vector<Split> tags);

/// Keeps floor(fraction · n_train) random training rows; dropped rows are
/// tagged Unused. Validation and test rows are untouched.
Dataset subsample_train(const Dataset& ds, double fraction, std::uint64_t seed);

NormStats compute_norm_stats(const RealMatrix& features, const std::vector<std::size_t>& rows);

/// One epoch of shuffled mini-batches over `tag`. The final batch may be short.
std::vector<Batch> batches(const Dataset& ds, Split tag, std::size_t batch_size, std::uint64_t seed,
                           std::uint64_t epoch);

/// Every row of `tag` in dataset order, as a single batch.
Batch full_split(const Dataset& ds, Split tag);

/// FNV-1a 64-bit hash of the given files' bytes, as 16 hex digits.
std::string fingerprint_files(const std::vector<std::filesystem::path>& paths);

}  // namespace cgmvae
