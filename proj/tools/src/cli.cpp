#include "cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "cgmvae/checkpoint.hpp"
#include "cgmvae/dataset.hpp"
#include "cgmvae/errors.hpp"
#include "cgmvae/metrics.hpp"
#include "cgmvae/model.hpp"
#include "cgmvae/trainer.hpp"
#include "cgmvae/verification.hpp"
#include "run_config.hpp"

namespace cgmvae::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class UsageError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

// Files -------------------------------------------------------------------------

fs::path existing_file(const std::string& path, const std::string& what) {
  if (!fs::is_regular_file(path)) throw UsageError(what + " not found: " + path);
  return fs::absolute(path).lexically_normal();
}

void ensure_directory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error("cannot create output directory " + dir.string());
}

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

std::string matrix_csv(const RealMatrix& m, const std::vector<std::string>& header,
                       const std::vector<std::string>& row_names = {}) {
  std::string out;
  if (!header.empty()) {
    for (std::size_t i = 0; i < header.size(); ++i) out += (i ? "," : "") + csv_escape(header[i]);
    out += '\n';
  }
  for (std::size_t r = 0; r < m.rows; ++r) {
    bool first = true;
    if (!row_names.empty()) {
      out += csv_escape(row_names[r]);
      first = false;
    }
    for (std::size_t c = 0; c < m.cols; ++c) {
      if (!first) out += ',';
      out += format_double(m(r, c));
      first = false;
    }
    out += '\n';
  }
  return out;
}

// Similarity in [-1, 1] as 8-bit gray, `cell` pixels per entry.
std::string similarity_pgm(const RealMatrix& m, std::size_t cell) {
  const std::size_t side = m.rows * cell;
  std::string out = "P5\n" + std::to_string(side) + " " + std::to_string(side) + "\n255\n";
  for (std::size_t y = 0; y < side; ++y)
    for (std::size_t x = 0; x < side; ++x) {
      const double v = std::clamp(m(y / cell, x / cell), -1.0, 1.0);
      out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround((v + 1.0) * 127.5))));
    }
  return out;
}

// Data sources -------------------------------------------------------------------

struct DataFlags {
  std::string x, y, sparse, dataset, label_names, split_manifest;
  bool any() const { return !x.empty() || !y.empty() || !sparse.empty() || !dataset.empty(); }
};

void add_data_flags(CLI::App* cmd, DataFlags& f) {
  cmd->add_option("--dataset-x", f.x, "Dense feature file (X.csv)");
  cmd->add_option("--dataset-y", f.y, "Dense label file (Y.csv)");
  cmd->add_option("--sparse", f.sparse, "Sparse multi-label file");
  cmd->add_option("--dataset", f.dataset, "Directory with X.csv/Y.csv (or data.txt), or a name under $CGMVAE_DATA_DIR");
  cmd->add_option("--label-names", f.label_names, "One label name per line");
  cmd->add_option("--split-manifest", f.split_manifest, "N split tags in {0,1,2} instead of a random split");
}

struct DataSource {
  DataFormat format = DataFormat::DenseCsv;
  fs::path x, y, sparse, label_names, split_manifest;

  std::vector<fs::path> files() const {
    std::vector<fs::path> out;
    if (format == DataFormat::DenseCsv) {
      out = {x, y};
    } else {
      out = {sparse};
    }
    if (!label_names.empty()) out.push_back(label_names);
    if (!split_manifest.empty()) out.push_back(split_manifest);
    return out;
  }

  json to_json() const {
    json j{{"format", format == DataFormat::DenseCsv ? "dense-csv" : "sparse-multilabel"}};
    if (format == DataFormat::DenseCsv) {
      j["x"] = x.string();
      j["y"] = y.string();
    } else {
      j["sparse"] = sparse.string();
    }
    j["label_names"] = label_names.string();
    j["split_manifest"] = split_manifest.string();
    return j;
  }

  static DataSource from_json(const json& j) {
    DataSource s;
    try {
      const auto format = j.at("format").get<std::string>();
      if (format == "dense-csv") {
        s.format = DataFormat::DenseCsv;
        s.x = existing_file(j.at("x").get<std::string>(), "feature file");
        s.y = existing_file(j.at("y").get<std::string>(), "label file");
      } else if (format == "sparse-multilabel") {
        s.format = DataFormat::SparseMultilabel;
        s.sparse = existing_file(j.at("sparse").get<std::string>(), "sparse dataset");
      } else {
        throw UsageError("manifest names unknown dataset format '" + format + "'");
      }
      const auto names = j.value("label_names", std::string());
      if (!names.empty()) s.label_names = existing_file(names, "label names file");
      const auto manifest = j.value("split_manifest", std::string());
      if (!manifest.empty()) s.split_manifest = existing_file(manifest, "split manifest");
    } catch (const json::exception& e) {
      throw UsageError(std::string("manifest dataset entry is malformed: ") + e.what());
    }
    return s;
  }
};

fs::path resolve_dataset_dir(const std::string& name) {
  if (fs::is_directory(name)) return fs::absolute(name).lexically_normal();
  std::string looked = name;
  if (const char* root = std::getenv("CGMVAE_DATA_DIR")) {
    const fs::path candidate = fs::path(root) / name;
    if (fs::is_directory(candidate)) return fs::absolute(candidate).lexically_normal();
    looked += ", " + candidate.string();
  }
  throw UsageError("dataset not found: " + looked);
}

DataSource resolve_data(const DataFlags& f) {
  const int sources = (!f.x.empty() || !f.y.empty() ? 1 : 0) + (f.sparse.empty() ? 0 : 1) + (f.dataset.empty() ? 0 : 1);
  if (sources == 0) throw UsageError("no dataset given; use --dataset-x and --dataset-y, --sparse, or --dataset");
  if (sources > 1) throw UsageError("give exactly one of --dataset-x/--dataset-y, --sparse, --dataset");
  DataSource s;
  if (!f.x.empty() || !f.y.empty()) {
    if (f.x.empty() || f.y.empty()) throw UsageError("--dataset-x and --dataset-y must be given together");
    s.format = DataFormat::DenseCsv;
    s.x = existing_file(f.x, "feature file");
    s.y = existing_file(f.y, "label file");
  } else if (!f.sparse.empty()) {
    s.format = DataFormat::SparseMultilabel;
    s.sparse = existing_file(f.sparse, "sparse dataset");
  } else {
    const fs::path dir = resolve_dataset_dir(f.dataset);
    if (fs::is_regular_file(dir / "X.csv") && fs::is_regular_file(dir / "Y.csv")) {
      s.format = DataFormat::DenseCsv;
      s.x = dir / "X.csv";
      s.y = dir / "Y.csv";
    } else if (fs::is_regular_file(dir / "data.txt")) {
      s.format = DataFormat::SparseMultilabel;
      s.sparse = dir / "data.txt";
    } else {
      throw UsageError("dataset directory " + dir.string() + " has neither X.csv/Y.csv nor data.txt");
    }
    if (f.label_names.empty() && fs::is_regular_file(dir / "labels.txt")) s.label_names = dir / "labels.txt";
  }
  if (!f.label_names.empty()) s.label_names = existing_file(f.label_names, "label names file");
  if (!f.split_manifest.empty()) s.split_manifest = existing_file(f.split_manifest, "split manifest");
  return s;
}

Dataset load_source(const DataSource& s) {
  Dataset ds = s.format == DataFormat::DenseCsv ? load_dense_csv(s.x, s.y) : load_sparse_multilabel(s.sparse);
  if (!s.label_names.empty()) {
    auto names = load_label_names(s.label_names);
    if (names.size() != ds.num_labels()) {
      throw UsageError(s.label_names.string() + " lists " + std::to_string(names.size()) + " names for " +
                       std::to_string(ds.num_labels()) + " labels");
    }
    ds.label_names = std::move(names);
  }
  if (!s.split_manifest.empty()) ds = apply_split(ds, load_split_manifest(s.split_manifest, ds.size()));
  return ds;
}

// Rebuilds the split, subsample and normalization a checkpoint was trained with.
Dataset restore_partition(Dataset ds, const DataProvenance& prov) {
  if (ds.split.empty() && !prov.split_manifest.empty()) {
    ds = apply_split(ds, load_split_manifest(existing_file(prov.split_manifest, "split manifest"), ds.size()));
  }
  TrainConfig tc;
  tc.seed = prov.split_seed;
  tc.fractions = prov.fractions;
  tc.train_fraction = prov.train_fraction;
  ds = prepare_dataset(ds, tc);
  if (prov.norm.mean.size() == ds.feature_dim() && prov.norm.stddev.size() == ds.feature_dim()) ds.norm = prov.norm;
  return ds;
}

// train --------------------------------------------------------------------------

struct TrainFlags {
  DataFlags data;
  std::string config, preset, out, replay, prior, selection_metric;
  std::uint64_t seed = 0;
  double train_fraction = 1.0, threshold = 0.5, lr = 0.0, weight_decay = 0.0, alpha = 0.0, beta = 0.0,
         temperature = 0.0, dropout = 0.0;
  std::size_t epochs = 0, batch_size = 0, embedding_dim = 0, latent_dim = 0;
  bool quiet = false;
  std::map<std::string, CLI::Option*> opts;

  bool given(const std::string& name) const {
    const auto it = opts.find(name);
    return it != opts.end() && it->second->count() > 0;
  }
};

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
  add_data_flags(cmd, f.data);
  cmd->add_option("--config", f.config, "Flat JSON config file");
  cmd->add_option("--preset", f.preset, "Named hyperparameter preset");
  cmd->add_option("--out", f.out, "Output directory")->required();
  cmd->add_option("--replay", f.replay, "Re-run the configuration and dataset recorded in a manifest.json");
  cmd->add_flag("--quiet", f.quiet, "No per-epoch progress");
  f.opts["seed"] = cmd->add_option("--seed", f.seed, "Run seed");
  f.opts["train_fraction"] = cmd->add_option("--train-fraction", f.train_fraction, "Fraction of training rows kept");
  f.opts["threshold"] = cmd->add_option("--threshold", f.threshold, "Decision threshold for metrics");
  f.opts["learning_rate"] = cmd->add_option("--lr", f.lr, "Learning rate");
  f.opts["epochs"] = cmd->add_option("--epochs", f.epochs, "Number of epochs");
  f.opts["batch_size"] = cmd->add_option("--batch-size", f.batch_size, "Mini-batch size");
  f.opts["weight_decay"] = cmd->add_option("--weight-decay", f.weight_decay, "Decoupled weight decay");
  f.opts["alpha"] = cmd->add_option("--alpha", f.alpha, "Contrastive loss weight");
  f.opts["beta"] = cmd->add_option("--beta", f.beta, "Cross-entropy weight");
  f.opts["temperature"] = cmd->add_option("--temperature", f.temperature, "Contrastive temperature");
  f.opts["dropout"] = cmd->add_option("--dropout", f.dropout, "Dropout rate");
  f.opts["embedding_dim"] = cmd->add_option("--embedding-dim", f.embedding_dim, "Embedding size E");
  f.opts["latent_dim"] = cmd->add_option("--latent-dim", f.latent_dim, "Latent size d");
  f.opts["prior"] = cmd->add_option("--prior", f.prior, "mixture or standard_normal");
  f.opts["selection_metric"] = cmd->add_option("--selection-metric", f.selection_metric, "Validation metric for model selection");
}

void apply_flag_overrides(RunConfig& rc, const TrainFlags& f) {
  auto& m = rc.model;
  auto& t = rc.train;
  if (f.given("seed")) t.seed = f.seed;
  if (f.given("train_fraction")) t.train_fraction = f.train_fraction;
  if (f.given("threshold")) t.threshold = f.threshold;
  if (f.given("learning_rate")) t.learning_rate = f.lr;
  if (f.given("epochs")) t.epochs = f.epochs;
  if (f.given("batch_size")) t.batch_size = f.batch_size;
  if (f.given("weight_decay")) t.weight_decay = f.weight_decay;
  if (f.given("selection_metric")) t.selection_metric = f.selection_metric;
  if (f.given("alpha")) m.alpha = f.alpha;
  if (f.given("beta")) m.beta = f.beta;
  if (f.given("temperature")) m.temperature = f.temperature;
  if (f.given("dropout")) m.dropout = f.dropout;
  if (f.given("embedding_dim")) m.embedding_dim = f.embedding_dim;
  if (f.given("latent_dim")) m.latent_dim = f.latent_dim;
  if (f.given("prior")) m.prior = parse_prior(f.prior);
}

json read_json_file(const fs::path& path, const std::string& what) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open " + what + " " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw UsageError(what + " " + path.string() + " is not valid JSON: " + e.what());
  }
}

int cmd_train(const TrainFlags& f, std::ostream& out, std::ostream& err) {
  RunConfig rc;
  DataSource src;
  json replayed;
  std::string config_file;
  if (!f.replay.empty()) {
    if (f.data.any() || !f.config.empty() || !f.preset.empty()) {
      throw UsageError("--replay takes the dataset and configuration from the manifest");
    }
    replayed = read_json_file(existing_file(f.replay, "manifest"), "manifest");
    if (!replayed.contains("resolved_config") || !replayed.contains("dataset")) {
      throw UsageError("manifest " + f.replay + " lacks resolved_config or dataset");
    }
    apply_flat_json(rc, replayed.at("resolved_config"));
    rc.preset = replayed.value("preset", std::string());
    config_file = replayed.value("config_file", std::string());
    src = DataSource::from_json(replayed.at("dataset"));
    if (!f.data.label_names.empty()) src.label_names = existing_file(f.data.label_names, "label names file");
  } else {
    if (!f.preset.empty()) apply_preset(rc, f.preset);
    if (!f.config.empty()) {
      const auto path = existing_file(f.config, "config file");
      apply_flat_json(rc, read_config_file(path));
      config_file = path.string();
    }
    src = resolve_data(f.data);
  }
  apply_flag_overrides(rc, f);

  const Dataset ds = load_source(src);
  rc.model.input_dim = ds.feature_dim();
  rc.model.num_labels = ds.num_labels();
  rc.model.validate();
  rc.train.validate();

  const std::string fingerprint = fingerprint_files(src.files());
  if (!replayed.is_null()) {
    const auto recorded = replayed.at("dataset").value("fingerprint", std::string());
    if (recorded != fingerprint) {
      throw Error("dataset files changed since the manifest was written (fingerprint " + fingerprint + ", manifest " +
                  recorded + ")");
    }
  }

  const fs::path dir = f.out;
  ensure_directory(dir);
  json data = src.to_json();
  data["fingerprint"] = fingerprint;
  data["rows"] = ds.size();
  data["features"] = ds.feature_dim();
  data["labels"] = ds.num_labels();
  const json manifest{{"command", "train"},
                      {"config_file", config_file},
                      {"preset", rc.preset},
                      {"resolved_config", to_flat_json(rc)},
                      {"dataset", data},
                      {"seed", rc.train.seed},
                      {"train_fraction", rc.train.train_fraction},
                      {"artifacts",
                       {{"manifest", "manifest.json"},
                        {"runlog", "runlog.jsonl"},
                        {"timing", "timing.jsonl"},
                        {"checkpoint_best", "checkpoint_best.bin"},
                        {"checkpoint_last", "checkpoint_last.bin"},
                        {"test_report", "test_report.json"},
                        {"test_table", "test_report.txt"}}}};
  write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");

  const Dataset prepared = prepare_dataset(ds, rc.train);
  CheckpointMeta meta;
  meta.seed = rc.train.seed;
  meta.data.split_seed = rc.train.seed;
  meta.data.fractions = rc.train.fractions;
  meta.data.train_fraction = rc.train.train_fraction;
  meta.data.split_manifest = src.split_manifest.string();
  meta.data.norm = prepared.norm;
  meta.data.label_names = ds.label_names;

  std::string runlog, timing;
  TrainHooks hooks;
  hooks.on_start = [&](const RunLog& log) {
    runlog = log.header_line() + "\n";
    write_file_atomic(dir / "runlog.jsonl", runlog);
    if (!f.quiet) {
      out << "training on " << log.train_rows << " rows, validating on " << log.val_rows << ", testing on "
          << log.test_rows << "\n";
    }
  };
  hooks.on_epoch = [&](const EpochRecord& rec, const ModelParams&, const ModelParams& best, double seconds) {
    runlog += RunLog::epoch_line(rec) + "\n";
    write_file_atomic(dir / "runlog.jsonl", runlog);
    timing += json{{"epoch", rec.epoch}, {"seconds", seconds}}.dump() + "\n";
    write_file_atomic(dir / "timing.jsonl", timing);
    if (rec.improved) {
      CheckpointMeta m = meta;
      m.epoch = rec.epoch;
      m.tag = "best";
      save_checkpoint(dir / "checkpoint_best.bin", m, best);
    }
    if (!f.quiet) {
      char buf[200];
      std::snprintf(buf, sizeof buf, "epoch %3zu/%zu  loss %.4f  val %s %.4f%s  (%.1fs)\n", rec.epoch,
                    rc.train.epochs, rec.train_loss.total, rc.train.selection_metric.c_str(), rec.selection_value,
                    rec.improved ? " *" : "", seconds);
      out << buf << std::flush;
    }
  };

  TrainResult result;
  try {
    result = train(ds, rc.model, rc.train, hooks);
  } catch (const TrainingAborted& e) {
    write_file_atomic(dir / "runlog.jsonl", e.log().to_jsonl());
    err << "error: training aborted: " << e.what() << "\n";
    if (fs::exists(dir / "checkpoint_best.bin")) {
      err << "best checkpoint so far kept at " << (dir / "checkpoint_best.bin").string() << "\n";
    }
    return kExitFailure;
  }

  CheckpointMeta last = meta;
  last.epoch = rc.train.epochs;
  last.tag = "last";
  save_checkpoint(dir / "checkpoint_last.bin", last, result.last);
  write_file_atomic(dir / "runlog.jsonl", result.log.to_jsonl());
  if (result.log.has_test) {
    write_file_atomic(dir / "test_report.json", result.log.test.to_json() + "\n");
    write_file_atomic(dir / "test_report.txt", result.log.test.to_table(ds.label_names));
    out << "best epoch " << result.log.best_epoch << ", test split:\n" << result.log.test.to_table(ds.label_names);
  }
  return kExitOk;
}

// eval / predict / export-embeddings -----------------------------------------------

struct EvalFlags {
  DataFlags data;
  std::string checkpoint, split = "test", out;
  double threshold = 0.5;
  bool as_json = false;
};

int cmd_eval(const EvalFlags& f, std::ostream& out) {
  const Checkpoint ck = load_checkpoint(existing_file(f.checkpoint, "checkpoint"));
  const Split tag = parse_split(f.split);
  if (!(f.threshold >= 0.0 && f.threshold <= 1.0)) throw ConfigError("--threshold must lie in [0, 1]");
  Dataset ds = load_source(resolve_data(f.data));
  require_compatible(ck.params.config(), ds);
  if (ds.label_names.empty()) ds.label_names = ck.meta.data.label_names;
  ds = restore_partition(std::move(ds), ck.meta.data);
  const MetricsReport report = evaluate(ck.params, ds, tag, f.threshold);
  if (!f.out.empty()) {
    ensure_directory(f.out);
    const std::string stem = "eval_" + std::string(split_name(tag));
    write_file_atomic(fs::path(f.out) / (stem + ".json"), report.to_json() + "\n");
    write_file_atomic(fs::path(f.out) / (stem + ".txt"), report.to_table(ds.label_names));
  }
  out << (f.as_json ? report.to_json() + "\n" : report.to_table(ds.label_names));
  return kExitOk;
}

struct PredictFlags {
  std::string checkpoint, features, dataset_x, sparse, out;
};

int cmd_predict(const PredictFlags& f, std::ostream& out) {
  const int sources = (f.features.empty() ? 0 : 1) + (f.dataset_x.empty() ? 0 : 1) + (f.sparse.empty() ? 0 : 1);
  if (sources != 1) throw UsageError("give exactly one of --features, --dataset-x, --sparse");
  const Checkpoint ck = load_checkpoint(existing_file(f.checkpoint, "checkpoint"));
  Dataset ds;
  if (!f.sparse.empty()) {
    ds = load_sparse_multilabel(existing_file(f.sparse, "sparse dataset"));
  } else {
    ds.features = load_feature_csv(existing_file(f.features.empty() ? f.dataset_x : f.features, "feature file"));
  }
  const auto& config = ck.params.config();
  if (ds.feature_dim() != config.input_dim) {
    throw CheckpointError("checkpoint expects D=" + std::to_string(config.input_dim) + " features, input has " +
                          std::to_string(ds.feature_dim()));
  }
  ds.norm = ck.meta.data.norm;
  if (ds.norm.mean.size() != ds.feature_dim()) {
    ds.norm.mean.assign(ds.feature_dim(), 0.0);
    ds.norm.stddev.assign(ds.feature_dim(), 1.0);
  }
  std::vector<std::size_t> rows(ds.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  const RealMatrix probs = predict(ck.params, ds.normalized(rows));
  const fs::path dest = f.out;
  if (dest.has_parent_path()) ensure_directory(dest.parent_path());
  write_file_atomic(dest, matrix_csv(probs, {}));
  out << "wrote " << probs.rows << "x" << probs.cols << " probabilities to " << dest.string() << "\n";
  return kExitOk;
}

struct ExportFlags {
  std::string checkpoint, out, label_names;
  bool no_pgm = false;
  std::size_t cell = 16;
};

int cmd_export(const ExportFlags& f, std::ostream& out) {
  const Checkpoint ck = load_checkpoint(existing_file(f.checkpoint, "checkpoint"));
  std::vector<std::string> names = ck.meta.data.label_names;
  const std::size_t l = ck.params.config().num_labels;
  if (!f.label_names.empty()) names = load_label_names(existing_file(f.label_names, "label names file"));
  if (!names.empty() && names.size() != l) {
    throw UsageError("label names list " + std::to_string(names.size()) + " entries for " + std::to_string(l) +
                     " labels");
  }
  if (f.cell == 0) throw UsageError("--pgm-cell must be at least 1");

  const fs::path dir = f.out;
  ensure_directory(dir);
  const RealMatrix w = ck.params.label_embeddings();
  std::vector<std::string> emb_header;
  if (!names.empty()) {
    emb_header.push_back("label");
    for (std::size_t k = 0; k < w.cols; ++k) emb_header.push_back("e" + std::to_string(k));
  }
  write_file_atomic(dir / "label_embeddings.csv", matrix_csv(w, emb_header, names));

  const RealMatrix sim = export_label_similarity(ck.params);
  write_file_atomic(dir / "label_similarity.csv", matrix_csv(sim, names));
  out << "wrote " << (dir / "label_embeddings.csv").string() << " and " << (dir / "label_similarity.csv").string();
  if (!f.no_pgm) {
    write_file_atomic(dir / "label_similarity.pgm", similarity_pgm(sim, f.cell));
    out << " and " << (dir / "label_similarity.pgm").string();
  }
  out << "\n";
  return kExitOk;
}

// gradcheck -------------------------------------------------------------------

struct GradcheckFlags {
  verify::GradCheckOptions options;
  std::string out;
  bool as_json = false, quick = false;
};

int cmd_gradcheck(GradcheckFlags& f, std::ostream& out) {
  if (f.quick) f.options.include_statistical = false;
  const auto report = verify::run_gradcheck_suite(f.options);
  if (!f.out.empty()) {
    const fs::path dest = f.out;
    if (dest.has_parent_path()) ensure_directory(dest.parent_path());
    write_file_atomic(dest, report.to_json() + "\n");
  }
  out << (f.as_json ? report.to_json() + "\n" : report.summary());
  return report.pass ? kExitOk : kExitFailure;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"C-GMVAE multi-label classifier", "cgmvae"};
  app.require_subcommand(1);

  TrainFlags train_flags;
  auto* train_cmd = app.add_subcommand("train", "Train a model and write checkpoints, run log and test report");
  add_train_flags(train_cmd, train_flags);

  EvalFlags eval_flags;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on one split of a dataset");
  add_data_flags(eval_cmd, eval_flags.data);
  eval_cmd->add_option("--checkpoint", eval_flags.checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--split", eval_flags.split, "train, val or test")->capture_default_str();
  eval_cmd->add_option("--threshold", eval_flags.threshold, "Decision threshold")->capture_default_str();
  eval_cmd->add_option("--out", eval_flags.out, "Directory for eval_<split>.json/.txt");
  eval_cmd->add_flag("--json", eval_flags.as_json, "Print JSON instead of a table");

  PredictFlags predict_flags;
  auto* predict_cmd = app.add_subcommand("predict", "Write label probabilities for a feature file");
  predict_cmd->add_option("--checkpoint", predict_flags.checkpoint, "Checkpoint file")->required();
  predict_cmd->add_option("--features", predict_flags.features, "Feature CSV (N×D)");
  predict_cmd->add_option("--dataset-x", predict_flags.dataset_x, "Same as --features");
  predict_cmd->add_option("--sparse", predict_flags.sparse, "Sparse multi-label file (labels ignored)");
  predict_cmd->add_option("--out", predict_flags.out, "Output CSV (N×L)")->required();

  ExportFlags export_flags;
  auto* export_cmd = app.add_subcommand("export-embeddings", "Write label embeddings and their similarity matrix");
  export_cmd->add_option("--checkpoint", export_flags.checkpoint, "Checkpoint file")->required();
  export_cmd->add_option("--out", export_flags.out, "Output directory")->required();
  export_cmd->add_option("--label-names", export_flags.label_names, "One label name per line");
  export_cmd->add_flag("--no-pgm", export_flags.no_pgm, "Skip the PGM heatmap");
  export_cmd->add_option("--pgm-cell", export_flags.cell, "Pixels per matrix entry")->capture_default_str();

  GradcheckFlags gc;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Check gradients and the reference oracles on a toy problem");
  auto& o = gc.options;
  gc_cmd->add_option("--features", o.input_dim, "D")->capture_default_str();
  gc_cmd->add_option("--labels", o.num_labels, "L")->capture_default_str();
  gc_cmd->add_option("--latent-dim", o.latent_dim, "d")->capture_default_str();
  gc_cmd->add_option("--embedding-dim", o.embedding_dim, "E")->capture_default_str();
  gc_cmd->add_option("--batch-size", o.batch_size, "B")->capture_default_str();
  gc_cmd->add_option("--tolerance", o.tolerance, "Max relative error")->capture_default_str();
  gc_cmd->add_option("--seed", o.seed, "Seed")->capture_default_str();
  gc_cmd->add_option("--out", gc.out, "Write the JSON report here");
  gc_cmd->add_flag("--json", gc.as_json, "Print JSON instead of a summary");
  gc_cmd->add_flag("--quick", gc.quick, "Gradient checks only");

  std::vector<const char*> argv{"cgmvae"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train_cmd) return cmd_train(train_flags, out, err);
    if (*eval_cmd) return cmd_eval(eval_flags, out);
    if (*predict_cmd) return cmd_predict(predict_flags, out);
    if (*export_cmd) return cmd_export(export_flags, out);
    if (*gc_cmd) {
      if (o.input_dim == 0 || o.num_labels == 0 || o.latent_dim == 0 || o.embedding_dim == 0 || o.batch_size == 0) {
        throw UsageError("gradcheck sizes must be positive");
      }
      return cmd_gradcheck(gc, out);
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace cgmvae::cli
