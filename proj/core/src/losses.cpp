#include "cgmvae/losses.hpp"

#include <cmath>

#include "cgmvae/errors.hpp"

namespace cgmvae {

namespace {

LabelMatrix select_rows(const LabelMatrix& y, const std::vector<std::size_t>& rows) {
  LabelMatrix out(rows.size(), y.cols);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t c = 0; c < y.cols; ++c) out(i, c) = y(rows[i], c);
  return out;
}

// Restricts `t` to `rows` unless they already cover every row.
ad::Tensor maybe_gather(const ad::Tensor& t, const std::vector<std::size_t>& rows) {
  return rows.size() == t.shape()[0] ? t : ad::gather_rows(t, rows);
}

void require_batch(const ad::Tensor& t, const LabelMatrix& y, const char* op) {
  if (t.rank() != 2 || t.rows() != y.rows) {
    throw DimensionError(std::string(op) + ": " + ad::shape_string(t.shape()) + " input vs " +
                         std::to_string(y.rows) + " label rows");
  }
}

std::vector<double> label_values(const LabelMatrix& y) { return {y.data.begin(), y.data.end()}; }

}  // namespace

double combine_losses(double kl, double recon, double contrastive, double ce, double alpha, double beta) {
  return kl + recon + alpha * contrastive - beta * ce;
}

std::vector<std::size_t> nonempty_rows(const LabelMatrix& y) {
  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < y.rows; ++r) {
    for (std::size_t c = 0; c < y.cols; ++c) {
      if (y(r, c)) {
        rows.push_back(r);
        break;
      }
    }
  }
  return rows;
}

ad::Tensor mixture_log_prior(const ad::Tensor& z0, const LabelMatrix& y, const GaussianTensors& labels) {
  require_batch(z0, y, "mixture_log_prior");
  if (labels.mean.rank() != 2 || labels.mean.rows() != y.cols) {
    throw DimensionError("mixture_log_prior: " + std::to_string(y.cols) + " label columns vs component means " +
                         ad::shape_string(labels.mean.shape()));
  }
  const auto log_density = ad::gaussian_log_density_pairwise(z0, labels.mean, labels.logvar);
  const auto lse = ad::masked_logsumexp_rows(log_density, y);
  std::vector<double> log_count(y.rows);
  for (std::size_t r = 0; r < y.rows; ++r) {
    std::size_t k = 0;
    for (std::size_t c = 0; c < y.cols; ++c) k += y(r, c) ? 1 : 0;
    log_count[r] = std::log(static_cast<double>(k));
  }
  return ad::sub(lse, z0.tape().constant({y.rows}, std::move(log_count)));
}

ad::Tensor kl_loss(const GaussianTensors& posterior, const ad::Tensor& z0, const LabelMatrix& y,
                   const GaussianTensors& labels, PriorKind prior) {
  require_batch(z0, y, "kl_loss");
  auto& tape = z0.tape();
  if (prior == PriorKind::StandardNormal) {
    const auto log_q = ad::gaussian_log_density_rowwise(z0, posterior.mean, posterior.logvar);
    const auto zeros = tape.constant(z0.shape(), std::vector<double>(z0.size(), 0.0));
    const auto log_p = ad::gaussian_log_density_rowwise(z0, zeros, zeros);
    return ad::mean(ad::sub(log_q, log_p));
  }
  const auto rows = nonempty_rows(y);
  if (rows.empty()) return tape.scalar(0.0);
  const auto z = maybe_gather(z0, rows);
  const auto log_q =
      ad::gaussian_log_density_rowwise(z, maybe_gather(posterior.mean, rows), maybe_gather(posterior.logvar, rows));
  const auto log_p = mixture_log_prior(z, rows.size() == y.rows ? y : select_rows(y, rows), labels);
  return ad::mean(ad::sub(log_q, log_p));
}

ad::Tensor recon_loss(const ad::Tensor& x, const ad::Tensor& x_hat) {
  if (x.shape() != x_hat.shape() || x.rank() != 2) {
    throw DimensionError("recon_loss: " + ad::shape_string(x.shape()) + " vs " + ad::shape_string(x_hat.shape()));
  }
  return ad::scale(ad::sum(ad::square(ad::sub(x_hat, x))), 0.5 / static_cast<double>(x.rows()));
}

ad::Tensor contrastive_loss(const ad::Tensor& feature_embedding, const ad::Tensor& label_embedding,
                            const LabelMatrix& y, double temperature) {
  require_batch(feature_embedding, y, "contrastive_loss");
  if (!(temperature > 0.0)) throw ConfigError("contrastive_loss: temperature must be positive");
  const auto rows = nonempty_rows(y);
  if (rows.empty()) return feature_embedding.tape().scalar(0.0);
  const auto v = ad::l2_normalize_rows(maybe_gather(feature_embedding, rows));
  const auto u = ad::l2_normalize_rows(label_embedding);
  const auto logits = ad::scale(ad::matmul(v, ad::transpose(u)), 1.0 / temperature);

  // Row weights 1/|P| on the positives give the mean positive logit.
  std::vector<double> weights(rows.size() * y.cols, 0.0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::size_t k = 0;
    for (std::size_t c = 0; c < y.cols; ++c) k += y(rows[i], c) ? 1 : 0;
    for (std::size_t c = 0; c < y.cols; ++c)
      if (y(rows[i], c)) weights[i * y.cols + c] = 1.0 / static_cast<double>(k);
  }
  const auto w = feature_embedding.tape().constant({rows.size(), y.cols}, std::move(weights));
  const auto positive = ad::sum(ad::mul(logits, w), 1);
  return ad::mean(ad::sub(ad::logsumexp(logits, 1), positive));
}

ad::Tensor ce_loglik(const ad::Tensor& feature_embedding, const ad::Tensor& label_embedding, const LabelMatrix& y) {
  require_batch(feature_embedding, y, "ce_loglik");
  auto& tape = feature_embedding.tape();
  const auto logits = ad::matmul(feature_embedding, ad::transpose(label_embedding));
  if (logits.cols() != y.cols) {
    throw DimensionError("ce_loglik: " + std::to_string(logits.cols()) + " label embeddings vs " +
                         std::to_string(y.cols) + " label columns");
  }
  std::vector<double> neg(y.data.size());
  for (std::size_t i = 0; i < neg.size(); ++i) neg[i] = y.data[i] ? 0.0 : 1.0;
  const auto pos_mask = tape.constant(logits.shape(), label_values(y));
  const auto neg_mask = tape.constant(logits.shape(), std::move(neg));
  const auto ll = ad::add(ad::mul(pos_mask, ad::log_sigmoid(logits)),
                          ad::mul(neg_mask, ad::log_sigmoid(ad::negate(logits))));
  return ad::scale(ad::sum(ll), 1.0 / static_cast<double>(y.rows));
}

ObjectiveTensors total_objective(const BoundModel& model, const Batch& batch, ForwardMode& mode,
                                 std::mt19937_64& sampling_rng, const LossTerms& terms) {
  const auto& config = model.config();
  auto& tape = model.tape();
  if (batch.labels.rows != batch.features.rows || batch.labels.cols != config.num_labels) {
    throw DimensionError("total_objective: batch labels " + std::to_string(batch.labels.rows) + "×" +
                         std::to_string(batch.labels.cols) + " do not fit the model");
  }
  const auto x = tape.constant(batch.features);
  const auto labels = encode_labels(model);
  const auto posterior = encode_features(model, x, mode);
  const auto z0 = sample_posterior(posterior, sampling_rng);
  const auto w_x = decode(model, z0, mode);
  const auto x_hat = reconstruct(model, w_x);
  const auto& w_l = model.get("label_embedding");

  ObjectiveTensors out;
  out.kl = terms.kl(posterior, z0, batch.labels, labels, config.prior);
  out.recon = terms.recon(x, x_hat);
  out.contrastive = terms.contrastive(w_x, w_l, batch.labels, config.temperature);
  out.ce = terms.ce(w_x, w_l, batch.labels);
  out.total = ad::sub(ad::add(ad::add(out.kl, out.recon), ad::scale(out.contrastive, config.alpha)),
                      ad::scale(out.ce, config.beta));

  auto& b = out.breakdown;
  b.kl = out.kl.item();
  b.recon = out.recon.item();
  b.contrastive = out.contrastive.item();
  b.ce = out.ce.item();
  b.total = combine_losses(b.kl, b.recon, b.contrastive, b.ce, config.alpha, config.beta);
  return out;
}

LossBreakdown total_objective(const Batch& batch, const ModelParams& params, ForwardMode& mode,
                              std::mt19937_64& sampling_rng) {
  ad::Tape tape;
  BoundModel model(tape, params, false);
  return total_objective(model, batch, mode, sampling_rng).breakdown;
}

}  // namespace cgmvae
