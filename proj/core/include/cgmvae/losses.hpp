#pragma once

// Loss terms of the joint objective
//   L = L_KL + L_recon + α·L_CL − β·L_CE
// All terms are per-sample means over the rows they apply to. Rows with an
// empty label set contribute to recon and CE only.

#include <functional>
#include <random>

#include "cgmvae/autodiff.hpp"
#include "cgmvae/dataset.hpp"
#include "cgmvae/matrix.hpp"
#include "cgmvae/model.hpp"

namespace cgmvae {

struct LossBreakdown {
  double kl = 0.0;
  double recon = 0.0;
  double contrastive = 0.0;
  double ce = 0.0;  ///< log-likelihood (<= 0); enters the total with weight −β
  double total = 0.0;
};

/// total = kl + recon + α·contrastive − β·ce
double combine_losses(double kl, double recon, double contrastive, double ce, double alpha, double beta);

/// Rows of `y` with at least one positive label.
std::vector<std::size_t> nonempty_rows(const LabelMatrix& y);

/// log p(z0|y): logsumexp over the positive components of
/// log N(z0 | μ_i, diag σ_i²), minus log Σ y_i. Returns one value per row.
/// Throws EmptyMixtureError when a row has no positive label.
ad::Tensor mixture_log_prior(const ad::Tensor& z0, const LabelMatrix& y, const GaussianTensors& labels);

/// Single-sample estimate log q(z0|x) − log p(z0|y), averaged over rows with a
/// non-empty label set (scalar 0 when there are none).
ad::Tensor kl_loss(const GaussianTensors& posterior, const ad::Tensor& z0, const LabelMatrix& y,
                   const GaussianTensors& labels, PriorKind prior = PriorKind::Mixture);

/// ½ · mean over rows of ‖x − x̂‖².
ad::Tensor recon_loss(const ad::Tensor& x, const ad::Tensor& x_hat);

/// Supervised contrastive loss with the feature embedding as anchor and label
/// embeddings as positives/negatives. Both sides are L2-normalized; the
/// softmax runs over all L classes with temperature τ.
ad::Tensor contrastive_loss(const ad::Tensor& feature_embedding, const ad::Tensor& label_embedding,
                            const LabelMatrix& y, double temperature);

/// Mean over rows of Σ_i [y_i log s(w_x·w_i) + (1−y_i) log(1 − s(w_x·w_i))]
/// on unnormalized embeddings.
ad::Tensor ce_loglik(const ad::Tensor& feature_embedding, const ad::Tensor& label_embedding, const LabelMatrix& y);

/// The four term implementations used by total_objective(); replaceable so
/// the gradient checker can exercise a deliberately broken term.
struct LossTerms {
  std::function<ad::Tensor(const GaussianTensors&, const ad::Tensor&, const LabelMatrix&, const GaussianTensors&,
                           PriorKind)>
      kl = kl_loss;
  std::function<ad::Tensor(const ad::Tensor&, const ad::Tensor&)> recon = recon_loss;
  std::function<ad::Tensor(const ad::Tensor&, const ad::Tensor&, const LabelMatrix&, double)> contrastive =
      contrastive_loss;
  std::function<ad::Tensor(const ad::Tensor&, const ad::Tensor&, const LabelMatrix&)> ce = ce_loglik;
};

struct ObjectiveTensors {
  ad::Tensor kl, recon, contrastive, ce, total;
  LossBreakdown breakdown;
};

/// Full forward pass (label encoder, feature encoder, reparameterized
/// sample, decoder, reconstruction) and the weighted objective.
ObjectiveTensors total_objective(const BoundModel& model, const Batch& batch, ForwardMode& mode,
                                 std::mt19937_64& sampling_rng, const LossTerms& terms = {});

/// Tape-free convenience wrapper returning only the values.
LossBreakdown total_objective(const Batch& batch, const ModelParams& params, ForwardMode& mode,
                              std::mt19937_64& sampling_rng);

}  // namespace cgmvae
