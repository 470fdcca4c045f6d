#include "cgmvae/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "cgmvae/errors.hpp"

namespace cgmvae::ad {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

void require_rank2(const Tensor& a, const char* op) {
  if (a.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a rank-2 tensor, got " + shape_string(a.shape()));
  }
}

void require_same_tape(const Tensor& a, const Tensor& b) {
  if (&a.tape() != &b.tape()) throw Error("tensors belong to different tapes");
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_log_sigmoid(double x) {
  // -softplus(-x)
  return -(std::max(-x, 0.0) + std::log1p(std::exp(-std::abs(x))));
}

// Elementwise unary op. `df(x, y)` returns dy/dx given input x and output y.
template <typename F, typename DF>
Tensor unary(const Tensor& a, F f, DF df) {
  auto in = a.values();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  return a.tape().record(a.shape(), std::move(out), {a}, [df](BackwardContext& ctx) {
    if (!ctx.needs_grad(0)) return;
    auto g = ctx.out_grad();
    auto x = ctx.input_value(0);
    auto y = ctx.out_value();
    auto gx = ctx.input_grad(0);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * df(x[i], y[i]);
  });
}

struct AxisSplit {
  std::size_t outer = 1, n = 1, inner = 1;
  Shape reduced;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis, const char* op) {
  if (axis >= shape.size()) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for shape " +
                         shape_string(shape));
  }
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.n = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  if (s.n == 0) throw DimensionError(std::string(op) + ": empty reduction axis");
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i != axis) s.reduced.push_back(shape[i]);
  }
  return s;
}

}  // namespace

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto s : shape) n *= s;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "×" : "") << shape[i];
  os << ']';
  return os.str();
}

// Tensor ---------------------------------------------------------------------

const Shape& Tensor::shape() const { return tape_->node(*this).shape; }
std::size_t Tensor::size() const { return tape_->node(*this).value.size(); }

std::size_t Tensor::rows() const {
  require_rank2(*this, "rows");
  return shape()[0];
}

std::size_t Tensor::cols() const {
  require_rank2(*this, "cols");
  return shape()[1];
}

std::span<const double> Tensor::values() const { return tape_->node(*this).value; }
std::span<const double> Tensor::grad() const { return tape_->node(*this).grad; }
bool Tensor::requires_grad() const { return tape_->node(*this).requires_grad; }

double Tensor::item() const {
  if (size() != 1) throw DimensionError("item() on non-scalar tensor " + shape_string(shape()));
  return values()[0];
}

double Tensor::at(std::size_t r, std::size_t c) const { return values()[r * cols() + c]; }

// BackwardContext ------------------------------------------------------------

std::span<const double> BackwardContext::out_grad() const { return tape_.nodes_[node_].grad; }
std::span<const double> BackwardContext::out_value() const { return tape_.nodes_[node_].value; }

const Shape& BackwardContext::input_shape(std::size_t k) const {
  return tape_.nodes_[tape_.nodes_[node_].inputs[k]].shape;
}

std::span<const double> BackwardContext::input_value(std::size_t k) const {
  return tape_.nodes_[tape_.nodes_[node_].inputs[k]].value;
}

bool BackwardContext::needs_grad(std::size_t k) const {
  return tape_.nodes_[tape_.nodes_[node_].inputs[k]].requires_grad;
}

std::span<double> BackwardContext::input_grad(std::size_t k) {
  auto& in = tape_.nodes_[tape_.nodes_[node_].inputs[k]];
  if (!in.requires_grad) return {};
  if (in.grad.empty()) in.grad.assign(in.value.size(), 0.0);
  return in.grad;
}

// Tape -----------------------------------------------------------------------

const Tape::Node& Tape::node(const Tensor& t) const {
  if (t.tape_ != this || t.id_ >= nodes_.size()) throw Error("tensor does not belong to this tape");
  return nodes_[t.id_];
}

Tensor Tape::leaf(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_size(shape) != values.size()) {
    throw DimensionError("leaf: shape " + shape_string(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
  }
  Node n;
  n.shape = std::move(shape);
  n.value = std::move(values);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Tensor(this, nodes_.size() - 1);
}

Tensor Tape::leaf(Shape shape, std::span<const double> values, bool requires_grad) {
  return leaf(std::move(shape), std::vector<double>(values.begin(), values.end()), requires_grad);
}

Tensor Tape::record(Shape shape, std::vector<double> values, std::vector<Tensor> inputs, BackwardRule rule) {
  if (shape_size(shape) != values.size()) {
    throw DimensionError("record: shape " + shape_string(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
  }
  Node n;
  n.shape = std::move(shape);
  n.value = std::move(values);
  n.inputs.reserve(inputs.size());
  for (const auto& in : inputs) {
    if (in.tape_ != this) throw Error("record: input tensor belongs to another tape");
    n.inputs.push_back(in.id_);
    n.requires_grad = n.requires_grad || nodes_[in.id_].requires_grad;
  }
  if (n.requires_grad) n.rule = std::move(rule);
  nodes_.push_back(std::move(n));
  return Tensor(this, nodes_.size() - 1);
}

void Tape::backward(const Tensor& loss) {
  const Node& l = node(loss);
  if (l.value.size() != 1) throw DimensionError("backward: loss must be scalar, got " + shape_string(l.shape));
  if (backward_done_) throw Error("backward: already called on this tape");
  backward_done_ = true;
  if (!l.requires_grad) return;
  nodes_[loss.id_].grad.assign(1, 1.0);
  // Nodes are recorded after their inputs, so reverse order visits every
  // node after all of its consumers.
  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.rule || n.grad.empty()) continue;
    BackwardContext ctx(*this, i);
    n.rule(ctx);
  }
}

// Linear algebra -------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_same_tape(a, b);
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) {
    throw DimensionError("matmul: incompatible shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  std::vector<double> out(m * n);
  MutMap(out.data(), m, n).noalias() = ConstMap(a.values().data(), m, k) * ConstMap(b.values().data(), k, n);
  return a.tape().record({m, n}, std::move(out), {a, b}, [m, k, n](BackwardContext& ctx) {
    ConstMap g(ctx.out_grad().data(), m, n);
    if (ctx.needs_grad(0)) {
      MutMap ga(ctx.input_grad(0).data(), m, k);
      ga.noalias() += g * ConstMap(ctx.input_value(1).data(), k, n).transpose();
    }
    if (ctx.needs_grad(1)) {
      MutMap gb(ctx.input_grad(1).data(), k, n);
      gb.noalias() += ConstMap(ctx.input_value(0).data(), m, k).transpose() * g;
    }
  });
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  std::vector<double> out(m * n);
  MutMap(out.data(), n, m) = ConstMap(a.values().data(), m, n).transpose();
  return a.tape().record({n, m}, std::move(out), {a}, [m, n](BackwardContext& ctx) {
    if (!ctx.needs_grad(0)) return;
    MutMap(ctx.input_grad(0).data(), m, n) += ConstMap(ctx.out_grad().data(), n, m).transpose();
  });
}

// Elementwise ----------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_tape(a, b);
  require_same_shape(a, b, "add");
  auto x = a.values(), y = b.values();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return a.tape().record(a.shape(), std::move(out), {a, b}, [](BackwardContext& ctx) {
    auto g = ctx.out_grad();
    for (std::size_t k = 0; k < 2; ++k) {
      if (!ctx.needs_grad(k)) continue;
      auto gi = ctx.input_grad(k);
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_tape(a, b);
  require_same_shape(a, b, "sub");
  auto x = a.values(), y = b.values();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return a.tape().record(a.shape(), std::move(out), {a, b}, [](BackwardContext& ctx) {
    auto g = ctx.out_grad();
    if (ctx.needs_grad(0)) {
      auto ga = ctx.input_grad(0);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (ctx.needs_grad(1)) {
      auto gb = ctx.input_grad(1);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_tape(a, b);
  require_same_shape(a, b, "mul");
  auto x = a.values(), y = b.values();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return a.tape().record(a.shape(), std::move(out), {a, b}, [](BackwardContext& ctx) {
    auto g = ctx.out_grad();
    auto x = ctx.input_value(0), y = ctx.input_value(1);
    if (ctx.needs_grad(0)) {
      auto ga = ctx.input_grad(0);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
    }
    if (ctx.needs_grad(1)) {
      auto gb = ctx.input_grad(1);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x[i];
    }
  });
}

Tensor scale(const Tensor& a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor negate(const Tensor& a) { return scale(a, -1.0); }

Tensor exp(const Tensor& a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  for (double v : a.values()) {
    if (!(v > 0.0)) throw NumericDomainError("log: input " + std::to_string(v) + " is not strictly positive");
  }
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor relu(const Tensor& a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(a, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Tensor log_sigmoid(const Tensor& a) {
  return unary(a, stable_log_sigmoid, [](double x, double) { return stable_sigmoid(-x); });
}

Tensor square(const Tensor& a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  if (lo > hi) throw ConfigError("clamp: lo > hi");
  return unary(
      a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Tensor add_row(const Tensor& a, const Tensor& row) {
  require_same_tape(a, row);
  require_rank2(a, "add_row");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  if (row.size() != n) {
    throw DimensionError("add_row: row " + shape_string(row.shape()) + " does not broadcast over " +
                         shape_string(a.shape()));
  }
  auto x = a.values(), r = row.values();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x[i * n + j] + r[j];
  return a.tape().record(a.shape(), std::move(out), {a, row}, [m, n](BackwardContext& ctx) {
    auto g = ctx.out_grad();
    if (ctx.needs_grad(0)) {
      auto ga = ctx.input_grad(0);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (ctx.needs_grad(1)) {
      auto gr = ctx.input_grad(1);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gr[j] += g[i * n + j];
    }
  });
}

// Reductions -----------------------------------------------------------------

Tensor sum(const Tensor& a) {
  if (a.size() == 0) throw DimensionError("sum: empty tensor");
  double s = 0.0;
  for (double v : a.values()) s += v;
  return a.tape().record({}, {s}, {a}, [](BackwardContext& ctx) {
    if (!ctx.needs_grad(0)) return;
    const double g = ctx.out_grad()[0];
    for (double& gi : ctx.input_grad(0)) gi += g;
  });
}

Tensor mean(const Tensor& a) {
  if (a.size() == 0) throw DimensionError("mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor sum(const Tensor& a, std::size_t axis) {
  const AxisSplit s = split_axis(a.shape(), axis, "sum");
  auto x = a.values();
  std::vector<double> out(s.outer * s.inner, 0.0);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t k = 0; k < s.n; ++k)
      for (std::size_t i = 0; i < s.inner; ++i) out[o * s.inner + i] += x[(o * s.n + k) * s.inner + i];
  return a.tape().record(s.reduced, std::move(out), {a}, [s](BackwardContext& ctx) {
    if (!ctx.needs_grad(0)) return;
    auto g = ctx.out_grad();
    auto gx = ctx.input_grad(0);
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t k = 0; k < s.n; ++k)
        for (std::size_t i = 0; i < s.inner; ++i) gx[(o * s.n + k) * s.inner + i] += g[o * s.inner + i];
  });
}

Tensor mean(const Tensor& a, std::size_t axis) {
  const AxisSplit s = split_axis(a.shape(), axis, "mean");
  return scale(sum(a, axis), 1.0 / static_cast<double>(s.n));
}

Tensor logsumexp(const Tensor& a, std::size_t axis) {
  const AxisSplit s = split_axis(a.shape(), axis, "logsumexp");
  auto x = a.values();
  std::vector<double> out(s.outer * s.inner);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      double m = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < s.n; ++k) m = std::max(m, x[(o * s.n + k) * s.inner + i]);
      double acc = 0.0;
      for (std::size_t k = 0; k < s.n; ++k) acc += std::exp(x[(o * s.n + k) * s.inner + i] - m);
      out[o * s.inner + i] = m + std::log(acc);
    }
  }
  return a.tape().record(s.reduced, std::move(out), {a}, [s](BackwardContext& ctx) {
    if (!ctx.needs_grad(0)) return;
    auto g = ctx.out_grad();
    auto y = ctx.out_value();
    auto x = ctx.input_value(0);
    auto gx = ctx.input_grad(0);
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t k = 0; k < s.n; ++k)
        for (std::size_t i = 0; i < s.inner; ++i) {
          const std::size_t idx = (o * s.n + k) * s.inner + i;
          gx[idx] += g[o * s.inner + i] * std::exp(x[idx] - y[o * s.inner + i]);
        }
  });
}

Tensor masked_logsumexp_rows(const Tensor& a, const LabelMatrix& mask) {
  require_rank2(a, "masked_logsumexp_rows");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  if (mask.rows != m || mask.cols != n) {
    throw DimensionError("masked_logsumexp_rows: mask " + std::to_string(mask.rows) + "×" +
                         std::to_string(mask.cols) + " vs input " + shape_string(a.shape()));
  }
  auto x = a.values();
  std::vector<double> out(m);
  for (std::size_t r = 0; r < m; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < n; ++c)
      if (mask(r, c)) mx = std::max(mx, x[r * n + c]);
    if (mx == -std::numeric_limits<double>::infinity()) {
      throw EmptyMixtureError("masked_logsumexp_rows: row " + std::to_string(r) + " selects no entries");
    }
    double acc = 0.0;
    for (std::size_t c = 0; c < n; ++c)
      if (mask(r, c)) acc += std::exp(x[r * n + c] - mx);
    out[r] = mx + std::log(acc);
  }
  return a.tape().record({m}, std::move(out), {a}, [mask, m, n](BackwardContext& ctx) {
    if (!ctx.needs_grad(0)) return;
    auto g = ctx.out_grad();
    auto y = ctx.out_value();
    auto x = ctx.input_value(0);
    auto gx = ctx.input_grad(0);
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < n; ++c)
        if (mask(r, c)) gx[r * n + c] += g[r] * std::exp(x[r * n + c] - y[r]);
  });
}

// Structural -----------------------------------------------------------------

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_size(shape) != a.size()) {
    throw DimensionError("reshape: cannot view " + shape_string(a.shape()) + " as " + shape_string(shape));
  }
  std::vector<double> out(a.values().begin(), a.values().end());
  return a.tape().record(std::move(shape), std::move(out), {a}, [](BackwardContext& ctx) {
    if (!ctx.needs_grad(0)) return;
    auto g = ctx.out_grad();
    auto gx = ctx.input_grad(0);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
  require_rank2(a, "slice_cols");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  if (begin >= end || end > n) {
    throw DimensionError("slice_cols: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") invalid for " + shape_string(a.shape()));
  }
  const std::size_t w = end - begin;
  auto x = a.values();
  std::vector<double> out(m * w);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < w; ++c) out[r * w + c] = x[r * n + begin + c];
  return a.tape().record({m, w}, std::move(out), {a}, [m, n, w, begin](BackwardContext& ctx) {
    if (!ctx.needs_grad(0)) return;
    auto g = ctx.out_grad();
    auto gx = ctx.input_grad(0);
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < w; ++c) gx[r * n + begin + c] += g[r * w + c];
  });
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows) {
  if (a.rank() == 0) throw DimensionError("gather_rows: scalar input");
  const std::size_t m = a.shape()[0];
  const std::size_t width = a.size() / std::max<std::size_t>(m, 1);
  Shape shape = a.shape();
  shape[0] = rows.size();
  auto x = a.values();
  std::vector<double> out(rows.size() * width);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= m) throw DimensionError("gather_rows: row index out of range");
    std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(rows[i] * width), width,
                out.begin() + static_cast<std::ptrdiff_t>(i * width));
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return a.tape().record(std::move(shape), std::move(out), {a}, [idx, width](BackwardContext& ctx) {
    if (!ctx.needs_grad(0)) return;
    auto g = ctx.out_grad();
    auto gx = ctx.input_grad(0);
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < width; ++j) gx[idx[i] * width + j] += g[i * width + j];
  });
}

// Model-specific ---------------------------------------------------------------

Tensor l2_normalize_rows(const Tensor& a) {
  require_rank2(a, "l2_normalize_rows");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  auto x = a.values();
  std::vector<double> out(m * n);
  std::vector<double> norms(m);
  for (std::size_t r = 0; r < m; ++r) {
    double ss = 0.0;
    for (std::size_t c = 0; c < n; ++c) ss += x[r * n + c] * x[r * n + c];
    const double norm = std::sqrt(ss);
    if (!(norm > kNormEpsilon)) {
      throw DegenerateEmbeddingError("l2_normalize_rows: row " + std::to_string(r) + " has norm " +
                                     std::to_string(norm));
    }
    norms[r] = norm;
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] = x[r * n + c] / norm;
  }
  return a.tape().record(a.shape(), std::move(out), {a}, [m, n, norms](BackwardContext& ctx) {
    if (!ctx.needs_grad(0)) return;
    // d v / d w = (I − v vᵀ) / ‖w‖
    auto g = ctx.out_grad();
    auto v = ctx.out_value();
    auto gx = ctx.input_grad(0);
    for (std::size_t r = 0; r < m; ++r) {
      double gv = 0.0;
      for (std::size_t c = 0; c < n; ++c) gv += g[r * n + c] * v[r * n + c];
      for (std::size_t c = 0; c < n; ++c) gx[r * n + c] += (g[r * n + c] - gv * v[r * n + c]) / norms[r];
    }
  });
}

Tensor dropout(const Tensor& a, double rate, std::mt19937_64& rng, bool training) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout: rate must lie in [0, 1), got " + std::to_string(rate));
  if (!training || rate == 0.0) return a;
  const double keep_scale = 1.0 / (1.0 - rate);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::vector<double> mask(a.size());
  for (double& mk : mask) mk = uniform(rng) < rate ? 0.0 : keep_scale;
  auto x = a.values();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * mask[i];
  return a.tape().record(a.shape(), std::move(out), {a}, [mask = std::move(mask)](BackwardContext& ctx) {
    if (!ctx.needs_grad(0)) return;
    auto g = ctx.out_grad();
    auto gx = ctx.input_grad(0);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
  });
}

Tensor gaussian_log_density_pairwise(const Tensor& z, const Tensor& mean, const Tensor& logvar) {
  require_same_tape(z, mean);
  require_same_tape(z, logvar);
  require_rank2(z, "gaussian_log_density_pairwise");
  require_rank2(mean, "gaussian_log_density_pairwise");
  require_same_shape(mean, logvar, "gaussian_log_density_pairwise");
  const std::size_t b = z.shape()[0], d = z.shape()[1], k = mean.shape()[0];
  if (mean.shape()[1] != d) {
    throw DimensionError("gaussian_log_density_pairwise: z " + shape_string(z.shape()) + " vs mean " +
                         shape_string(mean.shape()));
  }
  auto zv = z.values(), mu = mean.values(), lv = logvar.values();
  std::vector<double> precision(k * d);
  std::vector<double> base(k, 0.0);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      precision[i * d + j] = std::exp(-lv[i * d + j]);
      base[i] += kLog2Pi + lv[i * d + j];
    }
  std::vector<double> out(b * k);
  for (std::size_t r = 0; r < b; ++r)
    for (std::size_t i = 0; i < k; ++i) {
      double q = base[i];
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = zv[r * d + j] - mu[i * d + j];
        q += diff * diff * precision[i * d + j];
      }
      out[r * k + i] = -0.5 * q;
    }
  return z.tape().record({b, k}, std::move(out), {z, mean, logvar},
                         [b, d, k, precision = std::move(precision)](BackwardContext& ctx) {
                           auto g = ctx.out_grad();
                           auto zv = ctx.input_value(0), mu = ctx.input_value(1);
                           auto gz = ctx.input_grad(0);
                           auto gm = ctx.input_grad(1);
                           auto gl = ctx.input_grad(2);
                           for (std::size_t r = 0; r < b; ++r)
                             for (std::size_t i = 0; i < k; ++i) {
                               const double gi = g[r * k + i];
                               for (std::size_t j = 0; j < d; ++j) {
                                 const double diff = zv[r * d + j] - mu[i * d + j];
                                 const double scaled = diff * precision[i * d + j];
                                 if (!gz.empty()) gz[r * d + j] -= gi * scaled;
                                 if (!gm.empty()) gm[i * d + j] += gi * scaled;
                                 if (!gl.empty()) gl[i * d + j] -= 0.5 * gi * (1.0 - diff * scaled);
                               }
                             }
                         });
}

Tensor gaussian_log_density_rowwise(const Tensor& z, const Tensor& mean, const Tensor& logvar) {
  require_same_tape(z, mean);
  require_same_tape(z, logvar);
  require_rank2(z, "gaussian_log_density_rowwise");
  require_same_shape(z, mean, "gaussian_log_density_rowwise");
  require_same_shape(z, logvar, "gaussian_log_density_rowwise");
  const std::size_t b = z.shape()[0], d = z.shape()[1];
  auto zv = z.values(), mu = mean.values(), lv = logvar.values();
  std::vector<double> out(b);
  for (std::size_t r = 0; r < b; ++r) {
    double q = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const std::size_t idx = r * d + j;
      const double diff = zv[idx] - mu[idx];
      q += kLog2Pi + lv[idx] + diff * diff * std::exp(-lv[idx]);
    }
    out[r] = -0.5 * q;
  }
  return z.tape().record({b}, std::move(out), {z, mean, logvar}, [b, d](BackwardContext& ctx) {
    auto g = ctx.out_grad();
    auto zv = ctx.input_value(0), mu = ctx.input_value(1), lv = ctx.input_value(2);
    auto gz = ctx.input_grad(0);
    auto gm = ctx.input_grad(1);
    auto gl = ctx.input_grad(2);
    for (std::size_t r = 0; r < b; ++r)
      for (std::size_t j = 0; j < d; ++j) {
        const std::size_t idx = r * d + j;
        const double diff = zv[idx] - mu[idx];
        const double scaled = diff * std::exp(-lv[idx]);
        if (!gz.empty()) gz[idx] -= g[r] * scaled;
        if (!gm.empty()) gm[idx] += g[r] * scaled;
        if (!gl.empty()) gl[idx] -= 0.5 * g[r] * (1.0 - diff * scaled);
      }
  });
}

}  // namespace cgmvae::ad
