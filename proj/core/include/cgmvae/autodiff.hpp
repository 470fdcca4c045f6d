#pragma once

// Define-by-run reverse-mode automatic differentiation over dense float64
// arrays. A Tape owns every node created during one forward pass; Tensor is
// a lightweight handle (tape, node id). Parameters live outside the tape and
// are copied in as leaves for each pass.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cgmvae/matrix.hpp"

namespace cgmvae::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

class Tape;

class Tensor {
 public:
  Tensor() = default;

  bool valid() const noexcept { return tape_ != nullptr; }
  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;
  std::size_t rows() const;  ///< rank-2 only
  std::size_t cols() const;  ///< rank-2 only

  std::span<const double> values() const;
  /// Empty when the tensor does not require gradients or backward() has not reached it.
  std::span<const double> grad() const;
  bool requires_grad() const;

  double item() const;
  double at(std::size_t r, std::size_t c) const;

 private:
  friend class Tape;
  Tensor(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Handed to a backward rule. Input gradients are only writable for inputs
/// that require gradients; check needs_grad(k) first.
class BackwardContext {
 public:
  std::span<const double> out_grad() const;
  std::span<const double> out_value() const;
  const Shape& input_shape(std::size_t k) const;
  std::span<const double> input_value(std::size_t k) const;
  bool needs_grad(std::size_t k) const;
  std::span<double> input_grad(std::size_t k);

 private:
  friend class Tape;
  BackwardContext(Tape& tape, std::size_t node) : tape_(tape), node_(node) {}
  Tape& tape_;
  std::size_t node_;
};

using BackwardRule = std::function<void(BackwardContext&)>;

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor leaf(Shape shape, std::vector<double> values, bool requires_grad);
  Tensor leaf(Shape shape, std::span<const double> values, bool requires_grad);
  Tensor constant(Shape shape, std::vector<double> values) {
    return leaf(std::move(shape), std::move(values), false);
  }
  Tensor constant(const RealMatrix& m) { return leaf({m.rows, m.cols}, m.data, false); }
  Tensor variable(const RealMatrix& m) { return leaf({m.rows, m.cols}, m.data, true); }
  Tensor scalar(double v, bool requires_grad = false) { return leaf({}, std::vector<double>{v}, requires_grad); }

  /// Records a new node computed from `inputs`. The rule runs during
  /// backward() only if the node is on a gradient path.
  Tensor record(Shape shape, std::vector<double> values, std::vector<Tensor> inputs, BackwardRule rule);

  /// Fills dLoss/dNode for every node on a gradient path. A node used by
  /// several consumers receives the sum of their contributions. May be
  /// called once per tape.
  void backward(const Tensor& loss);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  friend class Tensor;
  friend class BackwardContext;

  struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    std::vector<std::size_t> inputs;
    BackwardRule rule;
    bool requires_grad = false;
  };

  const Node& node(const Tensor& t) const;
  std::deque<Node> nodes_;
  bool backward_done_ = false;
};

// Linear algebra ------------------------------------------------------------

/// (m×k)·(k×n). Throws DimensionError naming both shapes on mismatch.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Elementwise ----------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor negate(const Tensor& a);
Tensor exp(const Tensor& a);
/// Throws NumericDomainError unless every input is strictly positive.
Tensor log(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
/// log(sigmoid(x)) = -softplus(-x), finite for all finite x.
Tensor log_sigmoid(const Tensor& a);
Tensor square(const Tensor& a);
/// Gradient is zero where the input lies outside [lo, hi].
Tensor clamp(const Tensor& a, double lo, double hi);

/// a (m×n) + row broadcast over the m rows; `row` has n elements.
Tensor add_row(const Tensor& a, const Tensor& row);

// Reductions -----------------------------------------------------------------

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor sum(const Tensor& a, std::size_t axis);
Tensor mean(const Tensor& a, std::size_t axis);
/// max + log Σ exp(x − max) along `axis`.
Tensor logsumexp(const Tensor& a, std::size_t axis);
/// Row-wise logsumexp over the entries with mask(r, c) != 0. Every row needs
/// at least one selected entry.
Tensor masked_logsumexp_rows(const Tensor& a, const LabelMatrix& mask);

// Structural -----------------------------------------------------------------

Tensor reshape(const Tensor& a, Shape shape);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end);
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows);

// Model-specific primitives --------------------------------------------------

inline constexpr double kNormEpsilon = 1e-12;

/// Divides every row by its Euclidean norm. Throws DegenerateEmbeddingError
/// when a row norm is <= kNormEpsilon.
Tensor l2_normalize_rows(const Tensor& a);

/// Inverted dropout. In training mode each element is zeroed with
/// probability `rate` and survivors are scaled by 1/(1−rate); otherwise the
/// identity. Throws ConfigError unless 0 <= rate < 1.
Tensor dropout(const Tensor& a, double rate, std::mt19937_64& rng, bool training);

/// out(b, i) = log N(z_b | mean_i, diag(exp(logvar_i))) for z (B×d) and
/// mean/logvar (K×d); result is B×K.
Tensor gaussian_log_density_pairwise(const Tensor& z, const Tensor& mean, const Tensor& logvar);

/// out(b) = log N(z_b | mean_b, diag(exp(logvar_b))); all inputs B×d, result has B elements.
Tensor gaussian_log_density_rowwise(const Tensor& z, const Tensor& mean, const Tensor& logvar);

}  // namespace cgmvae::ad
