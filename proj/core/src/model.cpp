#include "cgmvae/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cgmvae/errors.hpp"
#include "cgmvae/rng.hpp"

namespace cgmvae {

namespace {

struct LayerSpec {
  std::string prefix;
  std::size_t in;
  std::size_t out;
};

std::vector<LayerSpec> mlp_layers(const std::string& prefix, std::size_t in, const std::vector<std::size_t>& hidden,
                                  std::size_t out) {
  std::vector<LayerSpec> layers;
  std::size_t prev = in;
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    layers.push_back({prefix + "." + std::to_string(i), prev, hidden[i]});
    prev = hidden[i];
  }
  layers.push_back({prefix + "." + std::to_string(hidden.size()), prev, out});
  return layers;
}

std::vector<LayerSpec> label_encoder_layers(const ModelConfig& c) {
  return mlp_layers("label_encoder", c.embedding_dim, c.label_hidden, 2 * c.latent_dim);
}
std::vector<LayerSpec> feature_encoder_layers(const ModelConfig& c) {
  return mlp_layers("feature_encoder", c.input_dim, c.feature_hidden, 2 * c.latent_dim);
}
std::vector<LayerSpec> decoder_layers(const ModelConfig& c) {
  return mlp_layers("decoder", c.latent_dim, c.decoder_hidden, c.embedding_dim);
}

void check_finite(const ad::Tensor& t, const std::string& where) {
  for (double v : t.values()) {
    if (!std::isfinite(v)) throw NumericError("non-finite output in " + where);
  }
}

// ReLU MLP; dropout after every hidden activation when `mode` is given.
ad::Tensor run_mlp(const BoundModel& model, const std::vector<LayerSpec>& layers, ad::Tensor h, ForwardMode* mode) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& spec = layers[i];
    h = ad::add_row(ad::matmul(h, model.get(spec.prefix + ".weight")), model.get(spec.prefix + ".bias"));
    if (i + 1 < layers.size()) {
      h = ad::relu(h);
      if (mode != nullptr && mode->training && mode->dropout_rng != nullptr) {
        h = ad::dropout(h, model.config().dropout, *mode->dropout_rng, true);
      }
    }
    check_finite(h, spec.prefix);
  }
  return h;
}

GaussianTensors split_gaussian(const ad::Tensor& out, std::size_t d) {
  return {ad::slice_cols(out, 0, d), ad::clamp(ad::slice_cols(out, d, 2 * d), kLogvarMin, kLogvarMax)};
}

}  // namespace

std::string_view prior_name(PriorKind p) {
  return p == PriorKind::Mixture ? "mixture" : "standard_normal";
}

PriorKind parse_prior(std::string_view name) {
  if (name == "mixture") return PriorKind::Mixture;
  if (name == "standard_normal") return PriorKind::StandardNormal;
  throw ConfigError("unknown prior '" + std::string(name) + "'");
}

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* what) {
    if (v == 0) throw ConfigError(std::string(what) + " must be positive");
  };
  positive(input_dim, "input_dim");
  positive(num_labels, "num_labels");
  positive(embedding_dim, "embedding_dim");
  positive(latent_dim, "latent_dim");
  for (auto h : feature_hidden) positive(h, "feature_hidden entry");
  for (auto h : label_hidden) positive(h, "label_hidden entry");
  for (auto h : decoder_hidden) positive(h, "decoder_hidden entry");
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
  if (!(alpha >= 0.0) || !(beta >= 0.0)) throw ConfigError("alpha and beta must be non-negative");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
}

// ModelParams ------------------------------------------------------------------

ModelParams::ModelParams(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  auto add = [this](std::string name, ad::Shape shape) {
    Parameter p;
    p.name = std::move(name);
    p.shape = std::move(shape);
    p.value.assign(ad::shape_size(p.shape), 0.0);
    p.adam_m.assign(p.value.size(), 0.0);
    p.adam_v.assign(p.value.size(), 0.0);
    params_.push_back(std::move(p));
  };
  add("label_embedding", {config_.num_labels, config_.embedding_dim});
  auto add_layers = [&](const std::vector<LayerSpec>& layers) {
    for (const auto& l : layers) {
      add(l.prefix + ".weight", {l.in, l.out});
      add(l.prefix + ".bias", {l.out});
    }
  };
  add_layers(label_encoder_layers(config_));
  add_layers(feature_encoder_layers(config_));
  add_layers(decoder_layers(config_));
  add("reconstruction.weight", {config_.embedding_dim, config_.input_dim});
  add("reconstruction.bias", {config_.input_dim});
}

ModelParams ModelParams::initialize(const ModelConfig& config, std::uint64_t seed) {
  ModelParams params(config);
  auto rng = make_rng(seed, Stream::Init);
  for (auto& p : params.params_) {
    double stddev = 0.0;
    if (p.name == "label_embedding") {
      stddev = std::pow(static_cast<double>(config.embedding_dim), -0.25);
    } else if (p.shape.size() == 2) {
      stddev = std::sqrt(2.0 / static_cast<double>(p.shape[0]));
    }
    if (stddev == 0.0) continue;  // biases start at zero
    std::normal_distribution<double> normal(0.0, stddev);
    for (double& v : p.value) v = normal(rng);
  }
  return params;
}

std::size_t ModelParams::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (params_[i].name == name) return i;
  throw Error("unknown parameter '" + std::string(name) + "'");
}

Parameter& ModelParams::get(std::string_view name) { return params_[index_of(name)]; }
const Parameter& ModelParams::get(std::string_view name) const { return params_[index_of(name)]; }

std::size_t ModelParams::total_size() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

bool ModelParams::all_finite() const {
  for (const auto& p : params_)
    for (double v : p.value)
      if (!std::isfinite(v)) return false;
  return true;
}

RealMatrix ModelParams::label_embeddings() const {
  const auto& p = get("label_embedding");
  return RealMatrix(p.shape[0], p.shape[1], p.value);
}

// BoundModel -------------------------------------------------------------------

BoundModel::BoundModel(ad::Tape& tape, const ModelParams& params, bool requires_grad)
    : tape_(&tape), params_(&params) {
  tensors_.reserve(params.parameters().size());
  for (const auto& p : params.parameters()) tensors_.push_back(tape.leaf(p.shape, std::span<const double>(p.value), requires_grad));
}

const ad::Tensor& BoundModel::get(std::string_view name) const { return tensors_[params_->index_of(name)]; }

std::vector<std::vector<double>> BoundModel::gradients() const {
  std::vector<std::vector<double>> out;
  out.reserve(tensors_.size());
  for (const auto& t : tensors_) {
    auto g = t.grad();
    if (g.empty()) {
      out.emplace_back(t.size(), 0.0);
    } else {
      out.emplace_back(g.begin(), g.end());
    }
  }
  return out;
}

// Forward pieces -----------------------------------------------------------------

GaussianTensors encode_labels(const BoundModel& model) {
  const auto out = run_mlp(model, label_encoder_layers(model.config()), model.get("label_embedding"), nullptr);
  return split_gaussian(out, model.config().latent_dim);
}

std::vector<GaussianParams> encode_labels(const ModelParams& params) {
  ad::Tape tape;
  BoundModel model(tape, params, false);
  const auto g = encode_labels(model);
  const std::size_t l = params.config().num_labels, d = params.config().latent_dim;
  std::vector<GaussianParams> out(l);
  for (std::size_t i = 0; i < l; ++i) {
    out[i].mean.assign(g.mean.values().begin() + static_cast<std::ptrdiff_t>(i * d),
                       g.mean.values().begin() + static_cast<std::ptrdiff_t>((i + 1) * d));
    out[i].logvar.assign(g.logvar.values().begin() + static_cast<std::ptrdiff_t>(i * d),
                         g.logvar.values().begin() + static_cast<std::ptrdiff_t>((i + 1) * d));
  }
  return out;
}

GaussianTensors encode_features(const BoundModel& model, const ad::Tensor& x, ForwardMode& mode) {
  if (x.rank() != 2 || x.cols() != model.config().input_dim) {
    throw DimensionError("encode_features: expected B×" + std::to_string(model.config().input_dim) + " input, got " +
                         ad::shape_string(x.shape()));
  }
  const auto out = run_mlp(model, feature_encoder_layers(model.config()), x, &mode);
  return split_gaussian(out, model.config().latent_dim);
}

ad::Tensor sample_posterior(const GaussianTensors& g, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> eps(g.mean.size());
  for (double& e : eps) e = normal(rng);
  auto& tape = g.mean.tape();
  const auto noise = tape.constant(g.mean.shape(), std::move(eps));
  return ad::add(g.mean, ad::mul(ad::exp(ad::scale(g.logvar, 0.5)), noise));
}

std::vector<double> sample_posterior(const GaussianParams& g, std::mt19937_64& rng) {
  if (g.mean.size() != g.logvar.size()) throw DimensionError("sample_posterior: mean/logvar size mismatch");
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> z(g.mean.size());
  for (std::size_t j = 0; j < z.size(); ++j) {
    const double lv = std::clamp(g.logvar[j], kLogvarMin, kLogvarMax);
    z[j] = g.mean[j] + std::exp(0.5 * lv) * normal(rng);
  }
  return z;
}

ad::Tensor decode(const BoundModel& model, const ad::Tensor& z, ForwardMode& mode) {
  if (z.rank() != 2 || z.cols() != model.config().latent_dim) {
    throw DimensionError("decode: expected B×" + std::to_string(model.config().latent_dim) + " latent codes, got " +
                         ad::shape_string(z.shape()));
  }
  return run_mlp(model, decoder_layers(model.config()), z, &mode);
}

ad::Tensor reconstruct(const BoundModel& model, const ad::Tensor& feature_embedding) {
  return ad::add_row(ad::matmul(feature_embedding, model.get("reconstruction.weight")),
                     model.get("reconstruction.bias"));
}

RealMatrix feature_embeddings(const ModelParams& params, const RealMatrix& x) {
  ad::Tape tape;
  BoundModel model(tape, params, false);
  ForwardMode eval;
  const auto posterior = encode_features(model, tape.constant(x), eval);
  const auto w = decode(model, posterior.mean, eval);
  return RealMatrix(w.rows(), w.cols(), std::vector<double>(w.values().begin(), w.values().end()));
}

RealMatrix predict(const ModelParams& params, const RealMatrix& x) {
  const RealMatrix w = feature_embeddings(params, x);
  const RealMatrix labels = params.label_embeddings();
  const std::size_t b = w.rows, l = labels.rows, e = w.cols;
  constexpr double lo = std::numeric_limits<double>::min();
  const double hi = std::nextafter(1.0, 0.0);
  RealMatrix probs(b, l);
  for (std::size_t r = 0; r < b; ++r)
    for (std::size_t i = 0; i < l; ++i) {
      double dot = 0.0;
      for (std::size_t k = 0; k < e; ++k) dot += w(r, k) * labels(i, k);
      const double p = dot >= 0 ? 1.0 / (1.0 + std::exp(-dot)) : std::exp(dot) / (1.0 + std::exp(dot));
      probs(r, i) = std::clamp(p, lo, hi);
    }
  return probs;
}

RealMatrix export_label_similarity(const ModelParams& params) {
  ad::Tape tape;
  const auto v = ad::l2_normalize_rows(tape.constant(params.label_embeddings()));
  const auto sim = ad::matmul(v, ad::transpose(v));
  const std::size_t l = sim.rows();
  RealMatrix m(l, l);
  for (std::size_t i = 0; i < l; ++i)
    for (std::size_t j = 0; j < l; ++j) {
      // Symmetrize explicitly so M == Mᵀ bit for bit.
      m(i, j) = i == j ? 0.0 : std::clamp(0.5 * (sim.at(i, j) + sim.at(j, i)), -1.0, 1.0);
    }
  return m;
}

}  // namespace cgmvae
