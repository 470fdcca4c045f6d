#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "cgmvae/autodiff.hpp"
#include "cgmvae/matrix.hpp"

namespace cgmvae {

enum class PriorKind {
  Mixture,         ///< per-sample mixture of the positive labels' Gaussians
  StandardNormal,  ///< single N(0, I); used for the uni-Gaussian ablation
};

std::string_view prior_name(PriorKind p);
PriorKind parse_prior(std::string_view name);

struct ModelConfig {
  std::size_t input_dim = 0;   ///< D
  std::size_t num_labels = 0;  ///< L
  std::size_t embedding_dim = 2048;
  std::size_t latent_dim = 64;
  std::vector<std::size_t> feature_hidden{256, 512, 256};
  std::vector<std::size_t> label_hidden{512, 256};
  std::vector<std::size_t> decoder_hidden{512, 512};
  double dropout = 0.5;
  double temperature = 0.5;
  double alpha = 1.0;
  double beta = 0.5;
  PriorKind prior = PriorKind::Mixture;

  /// Throws ConfigError on non-positive dims, τ <= 0, α or β < 0, or a dropout rate outside [0, 1).
  void validate() const;
};

inline constexpr double kLogvarMin = -10.0;
inline constexpr double kLogvarMax = 10.0;

/// One learnable array plus its Adam moment buffers.
struct Parameter {
  std::string name;
  ad::Shape shape;
  std::vector<double> value;
  std::vector<double> adam_m;
  std::vector<double> adam_v;
};

/// Every learnable array of the model, in a fixed order:
/// label_embedding, label_encoder.*, feature_encoder.*, decoder.*, reconstruction.*
class ModelParams {
 public:
  ModelParams() = default;
  explicit ModelParams(ModelConfig config);

  /// He-normal weights, zero biases, label embeddings ~ N(0, 1/√E).
  static ModelParams initialize(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }

  Parameter& get(std::string_view name);
  const Parameter& get(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;

  std::size_t total_size() const;
  bool all_finite() const;

  /// Label embedding table W^l as an L×E matrix.
  RealMatrix label_embeddings() const;

 private:
  ModelConfig config_;
  std::vector<Parameter> params_;
};

/// Mean and diagonal log-variance of one Gaussian.
struct GaussianParams {
  std::vector<double> mean;
  std::vector<double> logvar;
};

/// Tape-side Gaussians: K×d means and log-variances.
struct GaussianTensors {
  ad::Tensor mean;
  ad::Tensor logvar;
};

/// Forward-pass switches. Dropout is active only when `training` is true and
/// a dropout generator is supplied.
struct ForwardMode {
  bool training = false;
  std::mt19937_64* dropout_rng = nullptr;
};

/// Parameters copied onto a tape for one forward pass.
class BoundModel {
 public:
  BoundModel(ad::Tape& tape, const ModelParams& params, bool requires_grad);

  ad::Tape& tape() const { return *tape_; }
  const ModelConfig& config() const { return params_->config(); }
  const ad::Tensor& operator[](std::size_t i) const { return tensors_[i]; }
  const ad::Tensor& get(std::string_view name) const;
  const std::vector<ad::Tensor>& tensors() const { return tensors_; }

  /// Gradients of every parameter after backward(); unreached parameters get zeros.
  std::vector<std::vector<double>> gradients() const;

 private:
  ad::Tape* tape_;
  const ModelParams* params_;
  std::vector<ad::Tensor> tensors_;
};

/// One (μ_i, logvar_i) per label class from the label-embedding table.
GaussianTensors encode_labels(const BoundModel& model);
std::vector<GaussianParams> encode_labels(const ModelParams& params);

/// Posterior q(z|x) for a normalized B×D batch.
GaussianTensors encode_features(const BoundModel& model, const ad::Tensor& x, ForwardMode& mode);

/// z0 = μ + exp(logvar/2) ⊙ ε with ε ~ N(0, I) drawn from `rng`.
ad::Tensor sample_posterior(const GaussianTensors& g, std::mt19937_64& rng);
std::vector<double> sample_posterior(const GaussianParams& g, std::mt19937_64& rng);

/// Feature embedding w_x^f (B×E) from latent codes (B×d).
ad::Tensor decode(const BoundModel& model, const ad::Tensor& z, ForwardMode& mode);

/// Linear head E → D giving the mean of a unit-variance Gaussian over x.
ad::Tensor reconstruct(const BoundModel& model, const ad::Tensor& feature_embedding);

/// Deterministic B×E feature embeddings: decode(posterior mean), dropout off.
RealMatrix feature_embeddings(const ModelParams& params, const RealMatrix& x);

/// sigmoid(w_x^f · w_i^l) on unnormalized embeddings; B×L in (0, 1).
RealMatrix predict(const ModelParams& params, const RealMatrix& x);

/// M_ij = v_i · v_j for L2-normalized label embeddings, zero diagonal.
RealMatrix export_label_similarity(const ModelParams& params);

}  // namespace cgmvae
