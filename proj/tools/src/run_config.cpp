#include "run_config.hpp"

#include <fstream>

#include "cgmvae/errors.hpp"

namespace cgmvae::cli {

using nlohmann::json;

const std::vector<Preset>& presets() {
  static const std::vector<Preset> table{
      {"ebird", 0.001, 1.0, 0.5, 2048, 0.5, 128, {512, 512}},
      {"bookmarks", 0.002, 1.0, 1.0, 2048, 0.5, 128, {512, 512, 512}},
      {"nus-vec", 0.004, 1.0, 0.5, 1024, 0.5, 256, {512, 512}},
      {"mirflickr", 0.001, 2.0, 0.5, 2048, 0.5, 128, {512, 512}},
      {"reuters", 0.005, 2.0, 1.0, 2048, 0.5, 128, {512, 512, 512}},
      {"scene", 0.003, 1.0, 0.5, 512, 0.3, 128, {512, 512}},
      {"sider", 0.002, 1.0, 0.5, 512, 0.5, 128, {512, 512}},
      {"yeast", 0.002, 1.0, 0.5, 512, 0.5, 128, {512, 512}},
      {"delicious", 0.001, 1.0, 0.5, 2048, 0.5, 128, {512, 512}},
  };
  return table;
}

const Preset& find_preset(std::string_view name) {
  std::string lower(name);
  for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  for (const auto& p : presets())
    if (p.name == lower) return p;
  std::string known;
  for (const auto& p : presets()) known += (known.empty() ? "" : ", ") + p.name;
  throw ConfigError("unknown preset '" + std::string(name) + "' (known: " + known + ")");
}

void apply_preset(RunConfig& config, std::string_view name) {
  const Preset& p = find_preset(name);
  config.preset = p.name;
  config.train.learning_rate = p.learning_rate;
  config.train.batch_size = p.batch_size;
  config.model.alpha = p.alpha;
  config.model.beta = p.beta;
  config.model.embedding_dim = p.embedding_dim;
  config.model.dropout = p.dropout;
  config.model.decoder_hidden = p.decoder_hidden;
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys{
      "preset",         "learning_rate",  "batch_size",     "epochs",      "weight_decay", "seed",
      "train_fraction", "selection_metric", "threshold",    "split_fractions", "embedding_dim", "latent_dim",
      "feature_hidden", "label_hidden",   "decoder_hidden", "dropout",     "temperature",  "alpha",
      "beta",           "prior"};
  return keys;
}

namespace {

template <typename T>
T get_as(const json& object, const std::string& key) {
  try {
    return object.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type: " + object.at(key).dump());
  }
}

std::size_t get_count(const json& object, const std::string& key) {
  const auto& v = object.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ConfigError("config key '" + key + "' must be a non-negative integer, got " + v.dump());
  }
  return v.get<std::size_t>();
}

}  // namespace

void apply_flat_json(RunConfig& config, const json& object) {
  if (!object.is_object()) throw ConfigError("config must be a JSON object");
  if (object.contains("preset")) apply_preset(config, get_as<std::string>(object, "preset"));
  auto& m = config.model;
  auto& t = config.train;
  for (const auto& [key, value] : object.items()) {
    if (key == "preset") continue;
    if (key == "learning_rate") t.learning_rate = get_as<double>(object, key);
    else if (key == "batch_size") t.batch_size = get_count(object, key);
    else if (key == "epochs") t.epochs = get_count(object, key);
    else if (key == "weight_decay") t.weight_decay = get_as<double>(object, key);
    else if (key == "seed") t.seed = get_as<std::uint64_t>(object, key);
    else if (key == "train_fraction") t.train_fraction = get_as<double>(object, key);
    else if (key == "selection_metric") t.selection_metric = get_as<std::string>(object, key);
    else if (key == "threshold") t.threshold = get_as<double>(object, key);
    else if (key == "split_fractions") {
      const auto f = get_as<std::vector<double>>(object, key);
      if (f.size() != 3) throw ConfigError("split_fractions needs three values");
      t.fractions = {f[0], f[1], f[2]};
    } else if (key == "embedding_dim") m.embedding_dim = get_count(object, key);
    else if (key == "latent_dim") m.latent_dim = get_count(object, key);
    else if (key == "feature_hidden") m.feature_hidden = get_as<std::vector<std::size_t>>(object, key);
    else if (key == "label_hidden") m.label_hidden = get_as<std::vector<std::size_t>>(object, key);
    else if (key == "decoder_hidden") m.decoder_hidden = get_as<std::vector<std::size_t>>(object, key);
    else if (key == "dropout") m.dropout = get_as<double>(object, key);
    else if (key == "temperature") m.temperature = get_as<double>(object, key);
    else if (key == "alpha") m.alpha = get_as<double>(object, key);
    else if (key == "beta") m.beta = get_as<double>(object, key);
    else if (key == "prior") m.prior = parse_prior(get_as<std::string>(object, key));
    else if (key == "input_dim" || key == "num_labels")
      throw ConfigError("config key '" + key + "' is taken from the dataset and cannot be set");
    else
      throw ConfigError("unknown config key '" + key + "'");
  }
}

json read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
}

json to_flat_json(const RunConfig& config) {
  const auto& m = config.model;
  const auto& t = config.train;
  json j{{"learning_rate", t.learning_rate},
         {"batch_size", t.batch_size},
         {"epochs", t.epochs},
         {"weight_decay", t.weight_decay},
         {"seed", t.seed},
         {"train_fraction", t.train_fraction},
         {"selection_metric", t.selection_metric},
         {"threshold", t.threshold},
         {"split_fractions", {t.fractions.train, t.fractions.val, t.fractions.test}},
         {"embedding_dim", m.embedding_dim},
         {"latent_dim", m.latent_dim},
         {"feature_hidden", m.feature_hidden},
         {"label_hidden", m.label_hidden},
         {"decoder_hidden", m.decoder_hidden},
         {"dropout", m.dropout},
         {"temperature", m.temperature},
         {"alpha", m.alpha},
         {"beta", m.beta},
         {"prior", std::string(prior_name(m.prior))}};
  return j;
}

}  // namespace cgmvae::cli
