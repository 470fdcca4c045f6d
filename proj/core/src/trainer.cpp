#include "cgmvae/trainer.hpp"

#include <chrono>
#include <cmath>

#include "cgmvae/checkpoint.hpp"
#include "cgmvae/rng.hpp"
#include "json_io.hpp"

namespace cgmvae {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (epochs == 0) throw ConfigError("epochs must be at least 1");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
  if (!(train_fraction > 0.0 && train_fraction <= 1.0)) throw ConfigError("train_fraction must lie in (0, 1]");
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw ConfigError("threshold must lie in [0, 1]");
  if (!is_metric_name(selection_metric)) throw ConfigError("unknown selection metric '" + selection_metric + "'");
}

void adam_step(ModelParams& params, const std::vector<std::vector<double>>& grads, double lr, double weight_decay,
               std::uint64_t t, const AdamOptions& opt) {
  auto& ps = params.parameters();
  if (grads.size() != ps.size()) throw DimensionError("adam_step: gradient count does not match parameters");
  if (t == 0) throw ConfigError("adam_step: step count starts at 1");
  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (grads[i].size() != ps[i].value.size()) throw DimensionError("adam_step: gradient size mismatch for " + ps[i].name);
    for (double g : grads[i])
      if (!std::isfinite(g)) throw NumericError("non-finite gradient for parameter " + ps[i].name);
  }
  const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < ps.size(); ++i) {
    auto& p = ps[i];
    const auto& g = grads[i];
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      p.adam_m[k] = opt.beta1 * p.adam_m[k] + (1.0 - opt.beta1) * g[k];
      p.adam_v[k] = opt.beta2 * p.adam_v[k] + (1.0 - opt.beta2) * g[k] * g[k];
      const double m_hat = p.adam_m[k] / bc1;
      const double v_hat = p.adam_v[k] / bc2;
      p.value[k] -= lr * weight_decay * p.value[k];
      p.value[k] -= lr * m_hat / (std::sqrt(v_hat) + opt.eps);
    }
  }
}

// RunLog -----------------------------------------------------------------------

std::string RunLog::header_line() const {
  using detail::json;
  json j{{"type", "run"},
         {"seed", seed},
         {"model", model_config.empty() ? json::object() : json::parse(model_config)},
         {"train", train_config.empty() ? json::object() : json::parse(train_config)},
         {"train_rows", train_rows},
         {"val_rows", val_rows},
         {"test_rows", test_rows}};
  return j.dump();
}

std::string RunLog::epoch_line(const EpochRecord& r) {
  detail::json j{{"type", "epoch"},
                 {"epoch", r.epoch},
                 {"steps", r.steps},
                 {"train_rows", r.train_rows},
                 {"loss", detail::to_json(r.train_loss)},
                 {"validation", detail::to_json(r.validation)},
                 {"selection_value", r.selection_value},
                 {"improved", r.improved},
                 {"best_epoch", r.best_epoch}};
  return j.dump();
}

std::string RunLog::result_line() const {
  detail::json j{{"type", "result"}, {"finished", finished}, {"best_epoch", best_epoch}};
  j["test"] = has_test ? detail::to_json(test) : detail::json(nullptr);
  return j.dump();
}

std::string RunLog::to_jsonl() const {
  std::string out = header_line() + "\n";
  for (const auto& e : epochs) out += epoch_line(e) + "\n";
  if (finished) out += result_line() + "\n";
  return out;
}

// Training -----------------------------------------------------------------------

Dataset prepare_dataset(const Dataset& ds, const TrainConfig& config) {
  Dataset out = ds.split.empty() ? split(ds, config.fractions, config.seed) : ds;
  if (config.train_fraction < 1.0) out = subsample_train(out, config.train_fraction, config.seed);
  return out;
}

MetricsReport evaluate(const ModelParams& params, const Dataset& ds, Split tag, double threshold) {
  require_compatible(params.config(), ds);
  const auto rows = ds.rows(tag);
  if (rows.empty()) throw ConfigError("split '" + std::string(split_name(tag)) + "' has no rows");
  const RealMatrix probs = predict(params, ds.normalized(rows));
  return compute_report(probs, ds.label_rows(rows), threshold);
}

TrainResult train(const Dataset& raw, const ModelConfig& model_config, const TrainConfig& config,
                  const TrainHooks& hooks) {
  config.validate();
  model_config.validate();
  const Dataset ds = prepare_dataset(raw, config);
  require_compatible(model_config, ds);
  if (ds.count(Split::Train) == 0 || ds.count(Split::Val) == 0) {
    throw ConfigError("training needs non-empty train and validation splits");
  }

  ModelParams params = ModelParams::initialize(model_config, config.seed);
  ModelParams best = params;

  RunLog log;
  log.seed = config.seed;
  log.model_config = detail::to_json(model_config).dump();
  log.train_config = detail::to_json(config).dump();
  log.train_rows = ds.count(Split::Train);
  log.val_rows = ds.count(Split::Val);
  log.test_rows = ds.count(Split::Test);

  if (hooks.on_start) hooks.on_start(log);

  auto abort = [&](const std::string& why) -> TrainingAborted { return TrainingAborted(why, best, log); };

  std::uint64_t step = 0;
  double best_value = 0.0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    EpochRecord rec;
    rec.epoch = epoch;
    LossBreakdown acc;
    for (const Batch& batch : batches(ds, Split::Train, config.batch_size, config.seed, epoch)) {
      ++step;
      auto dropout_rng = make_rng(config.seed, Stream::Dropout, step);
      auto sampling_rng = make_rng(config.seed, Stream::Sampling, step);
      ForwardMode mode{true, &dropout_rng};

      ad::Tape tape;
      BoundModel model(tape, params, true);
      ObjectiveTensors obj;
      try {
        obj = total_objective(model, batch, mode, sampling_rng);
      } catch (const NumericError& e) {
        throw abort("epoch " + std::to_string(epoch) + ", step " + std::to_string(step) + ": " + e.what());
      }
      if (!std::isfinite(obj.breakdown.total)) {
        throw abort("epoch " + std::to_string(epoch) + ", step " + std::to_string(step) + ": loss is not finite");
      }
      tape.backward(obj.total);
      try {
        adam_step(params, model.gradients(), config.learning_rate, config.weight_decay, step);
      } catch (const NumericError& e) {
        throw abort("epoch " + std::to_string(epoch) + ", step " + std::to_string(step) + ": " + e.what());
      }

      const double w = static_cast<double>(batch.rows.size());
      acc.kl += w * obj.breakdown.kl;
      acc.recon += w * obj.breakdown.recon;
      acc.contrastive += w * obj.breakdown.contrastive;
      acc.ce += w * obj.breakdown.ce;
      rec.train_rows += batch.rows.size();
    }
    if (!params.all_finite()) throw abort("epoch " + std::to_string(epoch) + ": parameters became non-finite");

    const double n = static_cast<double>(rec.train_rows);
    rec.train_loss.kl = acc.kl / n;
    rec.train_loss.recon = acc.recon / n;
    rec.train_loss.contrastive = acc.contrastive / n;
    rec.train_loss.ce = acc.ce / n;
    rec.train_loss.total = combine_losses(rec.train_loss.kl, rec.train_loss.recon, rec.train_loss.contrastive,
                                          rec.train_loss.ce, model_config.alpha, model_config.beta);
    rec.steps = step;
    rec.validation = evaluate(params, ds, Split::Val, config.threshold);
    rec.selection_value = rec.validation.get(config.selection_metric);
    rec.improved = epoch == 1 || rec.selection_value > best_value;
    if (rec.improved) {
      best = params;
      best_value = rec.selection_value;
      log.best_epoch = epoch;
    }
    rec.best_epoch = log.best_epoch;
    log.epochs.push_back(rec);

    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (hooks.on_epoch) hooks.on_epoch(rec, params, best, seconds);
  }

  log.finished = true;
  if (log.test_rows > 0) {
    log.has_test = true;
    log.test = evaluate(round_to_checkpoint_precision(best), ds, Split::Test, config.threshold);
  }
  return TrainResult{std::move(best), std::move(params), std::move(log)};
}

}  // namespace cgmvae
