#include "json_io.hpp"

#include "cgmvae/errors.hpp"

namespace cgmvae::detail {

namespace {

template <typename T>
void read_if(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

}  // namespace

json to_json(const ModelConfig& c) {
  return json{{"input_dim", c.input_dim},
              {"num_labels", c.num_labels},
              {"embedding_dim", c.embedding_dim},
              {"latent_dim", c.latent_dim},
              {"feature_hidden", c.feature_hidden},
              {"label_hidden", c.label_hidden},
              {"decoder_hidden", c.decoder_hidden},
              {"dropout", c.dropout},
              {"temperature", c.temperature},
              {"alpha", c.alpha},
              {"beta", c.beta},
              {"prior", std::string(prior_name(c.prior))}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  read_if(j, "input_dim", c.input_dim);
  read_if(j, "num_labels", c.num_labels);
  read_if(j, "embedding_dim", c.embedding_dim);
  read_if(j, "latent_dim", c.latent_dim);
  read_if(j, "feature_hidden", c.feature_hidden);
  read_if(j, "label_hidden", c.label_hidden);
  read_if(j, "decoder_hidden", c.decoder_hidden);
  read_if(j, "dropout", c.dropout);
  read_if(j, "temperature", c.temperature);
  read_if(j, "alpha", c.alpha);
  read_if(j, "beta", c.beta);
  std::string prior(prior_name(c.prior));
  read_if(j, "prior", prior);
  c.prior = parse_prior(prior);
  return c;
}

json to_json(const TrainConfig& c) {
  return json{{"learning_rate", c.learning_rate},
              {"batch_size", c.batch_size},
              {"epochs", c.epochs},
              {"weight_decay", c.weight_decay},
              {"seed", c.seed},
              {"train_fraction", c.train_fraction},
              {"selection_metric", c.selection_metric},
              {"threshold", c.threshold},
              {"split_fractions", {c.fractions.train, c.fractions.val, c.fractions.test}}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  read_if(j, "learning_rate", c.learning_rate);
  read_if(j, "batch_size", c.batch_size);
  read_if(j, "epochs", c.epochs);
  read_if(j, "weight_decay", c.weight_decay);
  read_if(j, "seed", c.seed);
  read_if(j, "train_fraction", c.train_fraction);
  read_if(j, "selection_metric", c.selection_metric);
  read_if(j, "threshold", c.threshold);
  if (j.contains("split_fractions")) {
    std::vector<double> f;
    read_if(j, "split_fractions", f);
    if (f.size() != 3) throw ConfigError("split_fractions needs three values");
    c.fractions = {f[0], f[1], f[2]};
  }
  return c;
}

json to_json(const LossBreakdown& b) {
  return json{{"kl", b.kl}, {"recon", b.recon}, {"contrastive", b.contrastive}, {"ce", b.ce}, {"total", b.total}};
}

json to_json(const MetricsReport& r) {
  json per_class = json::array();
  for (const auto& c : r.per_class) per_class.push_back({{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}});
  return json{{"example_f1", r.example_f1},
              {"micro_f1", r.micro_f1},
              {"macro_f1", r.macro_f1},
              {"ha", r.ha},
              {"precision_at_1", r.precision_at_1},
              {"samples", r.samples},
              {"per_class", per_class}};
}

json to_json(const DataProvenance& d) {
  return json{{"split_seed", d.split_seed},
              {"split_fractions", {d.fractions.train, d.fractions.val, d.fractions.test}},
              {"train_fraction", d.train_fraction},
              {"split_manifest", d.split_manifest},
              {"norm_mean", d.norm.mean},
              {"norm_std", d.norm.stddev},
              {"label_names", d.label_names}};
}

DataProvenance data_provenance_from_json(const json& j) {
  DataProvenance d;
  read_if(j, "split_seed", d.split_seed);
  if (j.contains("split_fractions")) {
    std::vector<double> f;
    read_if(j, "split_fractions", f);
    if (f.size() != 3) throw ConfigError("split_fractions needs three values");
    d.fractions = {f[0], f[1], f[2]};
  }
  read_if(j, "train_fraction", d.train_fraction);
  read_if(j, "split_manifest", d.split_manifest);
  read_if(j, "norm_mean", d.norm.mean);
  read_if(j, "norm_std", d.norm.stddev);
  read_if(j, "label_names", d.label_names);
  return d;
}

}  // namespace cgmvae::detail
