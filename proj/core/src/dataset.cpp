#include "cgmvae/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "cgmvae/errors.hpp"
#include "cgmvae/rng.hpp"

namespace cgmvae {

namespace {

std::ifstream open_or_throw(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return in;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == '\n' || s.back() == ' ' || s.back() == '\t'))
    s.remove_suffix(1);
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  return s;
}

std::vector<std::string_view> split_on(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

double parse_double(std::string_view tok, const std::string& file, std::size_t line) {
  tok = trim(tok);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size() || tok.empty()) {
    throw ParseError(file, line, "invalid number '" + std::string(tok) + "'");
  }
  if (!std::isfinite(v)) throw ParseError(file, line, "non-finite value '" + std::string(tok) + "'");
  return v;
}

std::size_t parse_index(std::string_view tok, const std::string& file, std::size_t line) {
  tok = trim(tok);
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size() || tok.empty()) {
    throw ParseError(file, line, "invalid index '" + std::string(tok) + "'");
  }
  return v;
}

// Reads a comma-separated numeric table; every row must have the same width.
std::vector<std::vector<double>> read_csv_table(const std::filesystem::path& path) {
  auto in = open_or_throw(path);
  const std::string file = path.string();
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = trim(line);
    if (t.empty()) continue;
    std::vector<double> row;
    for (auto tok : split_on(t, ',')) row.push_back(parse_double(tok, file, lineno));
    if (rows.empty()) {
      width = row.size();
    } else if (row.size() != width) {
      throw ParseError(file, lineno,
                       "ragged row: expected " + std::to_string(width) + " columns, got " + std::to_string(row.size()));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError(file, lineno, "no data rows");
  return rows;
}

std::vector<Split> require_split(const Dataset& ds) {
  if (ds.split.size() != ds.size()) throw ConfigError("dataset has not been split");
  return ds.split;
}

}  // namespace

std::string_view split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
    case Split::Unused: return "unused";
  }
  return "unknown";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::Train;
  if (name == "val" || name == "validation") return Split::Val;
  if (name == "test") return Split::Test;
  throw ConfigError("unknown split tag '" + std::string(name) + "'");
}

// Dataset ----------------------------------------------------------------------

std::size_t Dataset::count(Split s) const {
  return static_cast<std::size_t>(std::count(split.begin(), split.end(), s));
}

std::vector<std::size_t> Dataset::rows(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < split.size(); ++i)
    if (split[i] == s) out.push_back(i);
  return out;
}

std::vector<std::size_t> Dataset::empty_label_rows() const {
  std::vector<std::size_t> out;
  for (std::size_t r = 0; r < labels.rows; ++r) {
    const auto row = labels.row(r);
    if (std::none_of(row.begin(), row.end(), [](std::uint8_t v) { return v != 0; })) out.push_back(r);
  }
  return out;
}

RealMatrix Dataset::normalized(const std::vector<std::size_t>& rows) const {
  const std::size_t d = feature_dim();
  if (norm.mean.size() != d || norm.stddev.size() != d) throw ConfigError("normalization statistics missing");
  RealMatrix out(rows.size(), d);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < d; ++j) out(i, j) = (features(rows[i], j) - norm.mean[j]) / norm.stddev[j];
  return out;
}

LabelMatrix Dataset::label_rows(const std::vector<std::size_t>& rows) const {
  LabelMatrix out(rows.size(), num_labels());
  for (std::size_t i = 0; i < rows.size(); ++i) std::copy_n(labels.row(rows[i]).begin(), num_labels(), out.row(i).begin());
  return out;
}

// Loading ----------------------------------------------------------------------

Dataset load_dense_csv(const std::filesystem::path& x_path, const std::filesystem::path& y_path) {
  const auto x = read_csv_table(x_path);
  const auto y = read_csv_table(y_path);
  if (x.size() != y.size()) {
    throw ParseError(y_path.string(), std::min(x.size(), y.size()) + 1,
                     "row count mismatch: X has " + std::to_string(x.size()) + ", Y has " + std::to_string(y.size()));
  }
  Dataset ds;
  const std::size_t n = x.size(), d = x[0].size(), l = y[0].size();
  ds.features = RealMatrix(n, d);
  ds.labels = LabelMatrix(n, l);
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(x[i].begin(), x[i].end(), ds.features.row(i).begin());
    for (std::size_t j = 0; j < l; ++j) {
      const double v = y[i][j];
      if (v != 0.0 && v != 1.0) {
        throw ParseError(y_path.string(), i + 1, "non-binary label value " + std::to_string(v));
      }
      ds.labels(i, j) = static_cast<std::uint8_t>(v);
    }
  }
  return ds;
}

RealMatrix load_feature_csv(const std::filesystem::path& path) {
  const auto x = read_csv_table(path);
  RealMatrix out(x.size(), x[0].size());
  for (std::size_t i = 0; i < x.size(); ++i) std::copy(x[i].begin(), x[i].end(), out.row(i).begin());
  return out;
}

Dataset load_sparse_multilabel(const std::filesystem::path& path) {
  auto in = open_or_throw(path);
  const std::string file = path.string();
  std::string line;
  std::size_t lineno = 0;
  std::size_t num_labels = 0, dim = 0;
  bool have_header = false;
  std::vector<std::vector<std::size_t>> pos;
  std::vector<std::vector<std::pair<std::size_t, double>>> feats;

  while (std::getline(in, line)) {
    ++lineno;
    std::string_view t(line);
    while (!t.empty() && (t.back() == '\r' || t.back() == '\n')) t.remove_suffix(1);
    if (!have_header) {
      const auto h = trim(t);
      if (h.empty()) continue;
      unsigned long long lv = 0, dv = 0;
      char extra = 0;
      if (h.front() != '#' ||
          std::sscanf(std::string(h).c_str(), "#L=%llu D=%llu%c", &lv, &dv, &extra) != 2 || lv == 0 || dv == 0) {
        throw ParseError(file, lineno, "expected header '#L=<L> D=<D>'");
      }
      num_labels = lv;
      dim = dv;
      have_header = true;
      continue;
    }
    if (trim(t).empty()) continue;

    std::vector<std::string_view> tokens;
    for (auto tok : split_on(t, ' ')) tokens.push_back(tok);
    std::size_t first = 0;
    std::vector<std::size_t> labels;
    // The label list is the first token unless it already is a feature pair.
    if (tokens[0].find(':') == std::string_view::npos) {
      const auto lab = trim(tokens[0]);
      if (!lab.empty()) {
        for (auto tok : split_on(lab, ',')) {
          const std::size_t idx = parse_index(tok, file, lineno);
          if (idx >= num_labels) {
            throw ParseError(file, lineno, "label index " + std::to_string(idx) + " >= L=" + std::to_string(num_labels));
          }
          labels.push_back(idx);
        }
      }
      first = 1;
    }
    std::vector<std::pair<std::size_t, double>> row;
    for (std::size_t k = first; k < tokens.size(); ++k) {
      const auto tok = trim(tokens[k]);
      if (tok.empty()) continue;
      const auto colon = tok.find(':');
      if (colon == std::string_view::npos) throw ParseError(file, lineno, "expected index:value, got '" + std::string(tok) + "'");
      const std::size_t idx = parse_index(tok.substr(0, colon), file, lineno);
      if (idx >= dim) {
        throw ParseError(file, lineno, "feature index " + std::to_string(idx) + " >= D=" + std::to_string(dim));
      }
      row.emplace_back(idx, parse_double(tok.substr(colon + 1), file, lineno));
    }
    pos.push_back(std::move(labels));
    feats.push_back(std::move(row));
  }
  if (!have_header) throw ParseError(file, lineno, "missing '#L=<L> D=<D>' header");
  if (pos.empty()) throw ParseError(file, lineno, "no data rows");

  Dataset ds;
  ds.features = RealMatrix(pos.size(), dim);
  ds.labels = LabelMatrix(pos.size(), num_labels);
  for (std::size_t i = 0; i < pos.size(); ++i) {
    for (auto j : pos[i]) ds.labels(i, j) = 1;
    for (auto [j, v] : feats[i]) ds.features(i, j) = v;
  }
  return ds;
}

Dataset load(const std::filesystem::path& path, DataFormat format) {
  switch (format) {
    case DataFormat::DenseCsv: return load_dense_csv(path / "X.csv", path / "Y.csv");
    case DataFormat::SparseMultilabel: return load_sparse_multilabel(path);
  }
  throw ConfigError("unknown data format");
}

std::vector<std::string> load_label_names(const std::filesystem::path& path) {
  auto in = open_or_throw(path);
  std::vector<std::string> names;
  std::string line;
  while (std::getline(in, line)) {
    const auto t = trim(line);
    if (!t.empty()) names.emplace_back(t);
  }
  return names;
}

std::vector<Split> load_split_manifest(const std::filesystem::path& path, std::size_t expected_rows) {
  auto in = open_or_throw(path);
  const std::string file = path.string();
  std::vector<Split> tags;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string tok;
    while (ls >> tok) {
      if (tok == "0") tags.push_back(Split::Train);
      else if (tok == "1") tags.push_back(Split::Val);
      else if (tok == "2") tags.push_back(Split::Test);
      else throw ParseError(file, lineno, "split tag must be 0, 1 or 2, got '" + tok + "'");
    }
  }
  if (tags.size() != expected_rows) {
    throw ParseError(file, lineno,
                     "expected " + std::to_string(expected_rows) + " tags, found " + std::to_string(tags.size()));
  }
  return tags;
}

// Splitting --------------------------------------------------------------------

SplitSizes split_sizes(std::size_t n, const SplitFractions& f) {
  if (f.train < 0 || f.val < 0 || f.test < 0 || std::abs(f.train + f.val + f.test - 1.0) > 1e-9) {
    throw ConfigError("split fractions must be non-negative and sum to 1");
  }
  // A tolerance keeps exact products such as 10 × 0.1 from rounding up.
  auto held_out = [n](double frac) {
    return static_cast<std::size_t>(std::ceil(static_cast<double>(n) * frac - 1e-9));
  };
  SplitSizes s;
  s.val = held_out(f.val);
  s.test = held_out(f.test);
  if (s.val + s.test > n) throw ConfigError("split fractions leave no training rows");
  s.train = n - s.val - s.test;
  if (s.train == 0 || s.val == 0 || s.test == 0) {
    throw ConfigError("split produces an empty partition (train=" + std::to_string(s.train) + ", val=" +
                      std::to_string(s.val) + ", test=" + std::to_string(s.test) + ")");
  }
  return s;
}

NormStats compute_norm_stats(const RealMatrix& features, const std::vector<std::size_t>& rows) {
  const std::size_t d = features.cols;
  NormStats s;
  s.mean.assign(d, 0.0);
  s.stddev.assign(d, 1.0);
  if (rows.empty()) return s;
  const double n = static_cast<double>(rows.size());
  for (auto r : rows)
    for (std::size_t j = 0; j < d; ++j) s.mean[j] += features(r, j);
  for (auto& m : s.mean) m /= n;
  std::vector<double> var(d, 0.0);
  for (auto r : rows)
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = features(r, j) - s.mean[j];
      var[j] += diff * diff;
    }
  for (std::size_t j = 0; j < d; ++j) {
    const double sd = std::sqrt(var[j] / n);
    s.stddev[j] = sd > 0.0 ? sd : 1.0;
  }
  return s;
}

Dataset apply_split(const Dataset& ds, std::vector<Split> tags) {
  if (tags.size() != ds.size()) throw ConfigError("split tags do not cover every row");
  Dataset out = ds;
  out.split = std::move(tags);
  if (out.count(Split::Train) == 0 || out.count(Split::Val) == 0 || out.count(Split::Test) == 0) {
    throw ConfigError("split leaves an empty partition");
  }
  out.norm = compute_norm_stats(out.features, out.rows(Split::Train));
  return out;
}

Dataset split(const Dataset& ds, const SplitFractions& fractions, std::uint64_t seed) {
  const SplitSizes sizes = split_sizes(ds.size(), fractions);
  std::vector<std::size_t> perm(ds.size());
  std::iota(perm.begin(), perm.end(), 0);
  auto rng = make_rng(seed, Stream::Split);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<Split> tags(ds.size(), Split::Train);
  for (std::size_t i = 0; i < sizes.val; ++i) tags[perm[i]] = Split::Val;
  for (std::size_t i = 0; i < sizes.test; ++i) tags[perm[sizes.val + i]] = Split::Test;
  return apply_split(ds, std::move(tags));
}

Dataset subsample_train(const Dataset& ds, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ConfigError("train fraction must lie in (0, 1], got " + std::to_string(fraction));
  }
  require_split(ds);
  if (fraction == 1.0) return ds;
  auto train_rows = ds.rows(Split::Train);
  const auto keep = static_cast<std::size_t>(std::floor(static_cast<double>(train_rows.size()) * fraction));
  if (keep == 0) throw ConfigError("train fraction leaves no training rows");
  auto rng = make_rng(seed, Stream::Subsample);
  std::shuffle(train_rows.begin(), train_rows.end(), rng);
  Dataset out = ds;
  for (std::size_t i = keep; i < train_rows.size(); ++i) out.split[train_rows[i]] = Split::Unused;
  out.norm = compute_norm_stats(out.features, out.rows(Split::Train));
  return out;
}

// Batching ---------------------------------------------------------------------

std::vector<Batch> batches(const Dataset& ds, Split tag, std::size_t batch_size, std::uint64_t seed,
                           std::uint64_t epoch) {
  if (batch_size == 0) throw ConfigError("batch size must be >= 1");
  if (tag == Split::Unused) throw ConfigError("cannot batch the unused split");
  require_split(ds);
  auto order = ds.rows(tag);
  auto rng = make_rng(seed, Stream::Shuffle, epoch);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Batch> out;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    Batch b;
    b.rows.assign(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(end));
    b.features = ds.normalized(b.rows);
    b.labels = ds.label_rows(b.rows);
    out.push_back(std::move(b));
  }
  return out;
}

Batch full_split(const Dataset& ds, Split tag) {
  require_split(ds);
  Batch b;
  b.rows = ds.rows(tag);
  b.features = ds.normalized(b.rows);
  b.labels = ds.label_rows(b.rows);
  return b;
}

std::string fingerprint_files(const std::vector<std::filesystem::path>& paths) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : paths) {
    auto in = open_or_throw(p);
    char buf[1 << 16];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
      for (std::streamsize i = 0; i < in.gcount(); ++i) {
        h ^= static_cast<unsigned char>(buf[i]);
        h *= 0x100000001b3ULL;
      }
    }
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

}  // namespace cgmvae
