#pragma once

// Reference implementations used to check the library against itself:
// finite differences, a closed-form contrastive gradient, direct density
// sums, brute-force metrics. None of them calls into the code it checks
// except through the function under test.

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cgmvae/losses.hpp"
#include "cgmvae/matrix.hpp"
#include "cgmvae/model.hpp"

namespace cgmvae::verify {

inline constexpr double kRelErrFloor = 1e-8;

/// |a − n| / max(|a|, |n|, 1e-8)
double relative_error(double analytic, double numeric);

// Finite differences ----------------------------------------------------------

using ScalarFunction = std::function<double(std::span<const double>)>;

/// Central differences (f(θ + h·e_i) − f(θ − h·e_i)) / 2h. Evaluates f(θ)
/// twice first and throws OracleInvalidError if the two results differ.
std::vector<double> finite_diff_grad(const ScalarFunction& f, std::vector<double> theta, double h = 1e-5);

/// Errors bucketed by decade: [0,1e-12), [1e-12,1e-10), ... , [1e-2,∞).
inline constexpr std::size_t kHistogramBins = 7;
using ErrorHistogram = std::array<std::size_t, kHistogramBins>;
std::size_t histogram_bin(double rel_err);

struct CheckResult {
  std::string name;
  double max_rel_err = 0.0;
  double tolerance = 0.0;
  std::size_t count = 0;
  ErrorHistogram histogram{};
  std::vector<std::pair<std::string, double>> per_parameter;  ///< gradient checks only
  bool pass = false;
};

/// Elementwise comparison of two gradient vectors.
CheckResult compare(const std::string& name, std::span<const double> analytic, std::span<const double> numeric,
                    double tolerance);

struct GradCheckReport {
  std::vector<CheckResult> checks;
  bool pass = false;
  double seconds = 0.0;

  std::vector<std::string> failures() const;
  std::string to_json() const;
  std::string summary() const;
};

// Contrastive loss -------------------------------------------------------------

/// L_CL of one sample from the raw embeddings, straight from the definition.
double reference_contrastive_loss(std::span<const double> w_x, const RealMatrix& w_labels,
                                  std::span<const std::uint8_t> y, double tau);

/// ∂L_CL/∂w_x for one sample in closed form:
///   ∂L/∂v = (1/τ)(Σ_t p_t v_t − (1/|P|) Σ_{p∈P} v_p),  p_t = softmax(v·v_t/τ)
///   ∂L/∂w = (I − v vᵀ) ∂L/∂v / ‖w‖
/// Throws DegenerateEmbeddingError on a zero-norm embedding and
/// PreconditionError when y has no positive.
std::vector<double> analytic_cl_gradient(std::span<const double> w_x, const RealMatrix& w_labels,
                                         std::span<const std::uint8_t> y, double tau);

struct TripletCheck {
  double lhs = 0.0;          ///< contrastive_loss on {v+, v−} with τ = ½
  double rhs = 0.0;          ///< log(1 + exp(2 v·v− − 2 v·v+))
  double abs_diff = 0.0;
  double first_order = 0.0;  ///< ‖v − v+‖² + ‖v − v−‖² + 1, as usually quoted
  double first_order_gap = 0.0;
  /// 1 + ‖v − v+‖² − ‖v − v−‖², which equals 1 + 2v·v− − 2v·v+ for unit inputs
  double linearized = 0.0;
  double linearized_gap = 0.0;
};

/// Throws PreconditionError unless all three inputs have unit norm (±1e-9)
/// and the same length.
TripletCheck triplet_identity_check(std::span<const double> v_x, std::span<const double> v_pos,
                                    std::span<const double> v_neg);

// KL estimator ----------------------------------------------------------------

/// ½ Σ [σq²/σp² + (μp − μq)²/σp² − 1 + log(σp²/σq²)]
double analytic_gaussian_kl(const GaussianParams& q, const GaussianParams& p);

/// log N(z | μ, diag exp(logvar)) evaluated directly.
double reference_log_density(std::span<const double> z, const GaussianParams& g);

/// log((1/K) Σ_k N(z | μ_k, σ_k²)) by summing densities, for small K.
double reference_mixture_log_density(std::span<const double> z, const std::vector<GaussianParams>& components);

struct KlConvergence {
  double empirical = 0.0;  ///< mean of kl_loss's single-sample estimates
  double analytic = 0.0;
  double stderr_ = 0.0;
  double rel_err = 0.0;    ///< |empirical − analytic| / |analytic|, or |empirical| when analytic is 0
};

KlConvergence mc_kl_convergence(const GaussianParams& posterior, const GaussianParams& prior, std::size_t n_samples,
                                std::uint64_t seed);

// Metrics ---------------------------------------------------------------------

double brute_hamming_accuracy(const LabelMatrix& y, const LabelMatrix& y_hat);
double brute_example_f1(const LabelMatrix& y, const LabelMatrix& y_hat);
double brute_micro_f1(const LabelMatrix& y, const LabelMatrix& y_hat);
double brute_macro_f1(const LabelMatrix& y, const LabelMatrix& y_hat);
double brute_precision_at_1(const RealMatrix& probabilities, const LabelMatrix& y);

// Full suite ------------------------------------------------------------------

struct GradCheckOptions {
  std::size_t input_dim = 3;
  std::size_t num_labels = 3;
  std::size_t latent_dim = 4;
  std::size_t embedding_dim = 8;
  std::size_t batch_size = 4;
  std::vector<std::size_t> feature_hidden{6, 5, 6};
  std::vector<std::size_t> label_hidden{6, 5};
  std::vector<std::size_t> decoder_hidden{6, 5};
  double tolerance = 1e-4;
  double h = 1e-5;
  std::uint64_t seed = 7;
  std::size_t cl_instances = 100;
  std::size_t triplet_instances = 1000;
  std::size_t kl_samples = 100000;
  std::size_t metric_instances = 1000;
  bool include_statistical = true;  ///< CL oracle, triplet, KL and metric checks
  LossTerms terms;                  ///< implementations under test
};

/// Model parameters flattened in parameter order, and back.
std::vector<double> flatten(const ModelParams& params);
void unflatten(ModelParams& params, std::span<const double> theta);

/// Parameter gradients of the kl, recon, contrastive, ce and total terms
/// against finite differences on a random toy problem, followed by the
/// statistical oracles.
GradCheckReport run_gradcheck_suite(const GradCheckOptions& options = {});

/// Individual statistical oracles, each as one CheckResult.
CheckResult check_cl_gradient_oracle(std::size_t instances, std::uint64_t seed, double tolerance = 1e-6);
CheckResult check_triplet_identity(std::size_t instances, std::uint64_t seed);
CheckResult check_cl_monotonicity(std::size_t instances, std::uint64_t seed);
std::vector<CheckResult> check_kl_estimator(std::size_t samples, std::uint64_t seed);
CheckResult check_metrics_oracle(std::size_t instances, std::uint64_t seed);

}  // namespace cgmvae::verify
