#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "cgmvae/errors.hpp"
#include "cli.hpp"
#include "run_config.hpp"
#include "synthetic.hpp"

using namespace cgmvae;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli_run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

// A trained run shared by the tests below; built once.
struct Trained {
  fs::path root, data, run;
};

const Trained& trained() {
  static const Trained t = [] {
    Trained r;
    r.root = fixtures::scratch_dir("cli_shared");
    r.data = r.root / "data";
    r.run = r.root / "run";
    fixtures::write_dense_csv(fixtures::make_separable(11, 120), r.data);
    std::ofstream(r.data / "labels.txt") << "alpha\nbeta\ngamma\n";
    std::ofstream(r.root / "config.json")
        << R"({"embedding_dim":16,"latent_dim":4,"feature_hidden":[16,16,16],"label_hidden":[16,16],)"
        << R"("decoder_hidden":[16,16],"dropout":0.0,"learning_rate":0.01,"batch_size":16,"epochs":3})";
    const auto res = cli_run({"train", "--dataset", r.data.string(), "--config", (r.root / "config.json").string(),
                              "--seed", "4", "--out", r.run.string(), "--quiet"});
    EXPECT_EQ(res.code, 0) << res.err;
    return r;
  }();
  return t;
}

json read_json(const fs::path& p) { return json::parse(fixtures::read_file(p)); }

std::vector<std::vector<double>> read_csv(const fs::path& p, bool skip_header = false, bool name_column = false) {
  std::ifstream in(p);
  std::vector<std::vector<double>> rows;
  std::string line;
  if (skip_header) std::getline(in, line);
  while (std::getline(in, line)) {
    std::vector<double> row;
    std::stringstream s(line);
    std::string cell;
    bool first = true;
    while (std::getline(s, cell, ',')) {
      if (first && name_column) {
        first = false;
        continue;
      }
      first = false;
      row.push_back(std::stod(cell));
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

TEST(CliTrain, WritesArtifacts) {
  const auto& t = trained();
  for (const char* f : {"manifest.json", "runlog.jsonl", "timing.jsonl", "checkpoint_best.bin", "checkpoint_last.bin",
                        "test_report.json", "test_report.txt"})
    EXPECT_TRUE(fs::is_regular_file(t.run / f)) << f;
  const auto m = read_json(t.run / "manifest.json");
  EXPECT_EQ(m.at("seed"), 4);
  EXPECT_EQ(m.at("dataset").at("rows"), 120);
  EXPECT_EQ(m.at("resolved_config").at("epochs"), 3);
  std::ifstream log(t.run / "runlog.jsonl");
  std::size_t lines = 0;
  for (std::string l; std::getline(log, l);) ++lines;
  EXPECT_EQ(lines, 5u);  // header, 3 epochs, result
}

TEST(CliTrain, RecordsTrainFraction) {
  const auto& t = trained();
  const auto out = t.root / "half";
  const auto r = cli_run({"train", "--dataset", t.data.string(), "--config", (t.root / "config.json").string(),
                          "--epochs", "1", "--train-fraction", "0.5", "--out", out.string(), "--quiet"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_json(out / "manifest.json").at("train_fraction"), 0.5);
}

TEST(CliTrain, MissingFileIsUsageError) {
  const auto dir = fixtures::scratch_dir("cli_missing");
  const auto x = (dir / "nope_X.csv").string();
  const auto r = cli_run({"train", "--dataset-x", x, "--dataset-y", (dir / "nope_Y.csv").string(), "--out",
                          (dir / "o").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("nope_X.csv"), std::string::npos) << r.err;
}

TEST(CliTrain, ConfigErrors) {
  const auto& t = trained();
  const auto dir = fixtures::scratch_dir("cli_config");
  std::ofstream(dir / "bad.json") << R"({"learnin_rate":0.1})";
  auto r = cli_run({"train", "--dataset", t.data.string(), "--config", (dir / "bad.json").string(), "--out",
                    (dir / "o").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("learnin_rate"), std::string::npos) << r.err;
  r = cli_run({"train", "--dataset", t.data.string(), "--preset", "nosuch", "--out", (dir / "o").string()});
  EXPECT_EQ(r.code, 2);
  r = cli_run({"train", "--dataset", t.data.string(), "--lr", "-1", "--out", (dir / "o").string()});
  EXPECT_EQ(r.code, 2);
  r = cli_run({"train", "--dataset", t.data.string()});  // no --out
  EXPECT_EQ(r.code, 2);
}

TEST(CliTrain, ReplayRejectsChangedData) {
  const auto& t = trained();
  const auto dir = fixtures::scratch_dir("cli_replay");
  fs::copy(t.data, dir / "data");
  const auto r1 = cli_run({"train", "--dataset", (dir / "data").string(), "--config",
                           (t.root / "config.json").string(), "--epochs", "1", "--out", (dir / "a").string(),
                           "--quiet"});
  ASSERT_EQ(r1.code, 0) << r1.err;
  std::ofstream(dir / "data" / "X.csv", std::ios::app) << "";
  {
    auto x = fixtures::read_file(dir / "data" / "X.csv");
    x[0] = x[0] == '1' ? '2' : '1';
    std::ofstream(dir / "data" / "X.csv", std::ios::trunc) << x;
  }
  const auto r2 = cli_run({"train", "--replay", (dir / "a" / "manifest.json").string(), "--out",
                           (dir / "b").string(), "--quiet"});
  EXPECT_EQ(r2.code, 1);
  EXPECT_NE(r2.err.find("fingerprint"), std::string::npos) << r2.err;
}

TEST(CliEval, ReproducesTestReport) {
  const auto& t = trained();
  const auto out = t.root / "eval";
  const auto r = cli_run({"eval", "--checkpoint", (t.run / "checkpoint_best.bin").string(), "--dataset",
                          t.data.string(), "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_json(out / "eval_test.json"), read_json(t.run / "test_report.json"));
  EXPECT_EQ(fixtures::read_file(out / "eval_test.txt"), fixtures::read_file(t.run / "test_report.txt"));
  const auto j = cli_run({"eval", "--checkpoint", (t.run / "checkpoint_best.bin").string(), "--dataset",
                          t.data.string(), "--split", "val", "--json"});
  ASSERT_EQ(j.code, 0) << j.err;
  EXPECT_TRUE(json::accept(j.out));
}

TEST(CliEval, WrongDatasetShape) {
  const auto& t = trained();
  const auto dir = fixtures::scratch_dir("cli_eval_shape");
  fixtures::write_dense_csv(fixtures::make_separable(1, 40, 7, 3), dir);
  const auto r =
      cli_run({"eval", "--checkpoint", (t.run / "checkpoint_best.bin").string(), "--dataset", dir.string()});
  EXPECT_EQ(r.code, 1);
}

TEST(CliPredict, OneRowPerSampleInOpenUnitInterval) {
  const auto& t = trained();
  const auto out = t.root / "pred.csv";
  const auto r = cli_run({"predict", "--checkpoint", (t.run / "checkpoint_best.bin").string(), "--features",
                          (t.data / "X.csv").string(), "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = read_csv(out);
  ASSERT_EQ(rows.size(), 120u);
  for (const auto& row : rows) {
    ASSERT_EQ(row.size(), 3u);
    for (double p : row) {
      EXPECT_GT(p, 0.0);
      EXPECT_LT(p, 1.0);
    }
  }
}

TEST(CliPredict, FeatureCountMismatch) {
  const auto& t = trained();
  const auto dir = fixtures::scratch_dir("cli_pred_bad");
  std::ofstream(dir / "X.csv") << "1,2\n3,4\n";
  const auto r = cli_run({"predict", "--checkpoint", (t.run / "checkpoint_best.bin").string(), "--features",
                          (dir / "X.csv").string(), "--out", (dir / "p.csv").string()});
  EXPECT_EQ(r.code, 1);
}

TEST(CliExport, SymmetricSimilarityWithNames) {
  const auto& t = trained();
  const auto out = t.root / "emb";
  const auto r = cli_run({"export-embeddings", "--checkpoint", (t.run / "checkpoint_best.bin").string(), "--out",
                          out.string(), "--label-names", (t.data / "labels.txt").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto header = fixtures::read_file(out / "label_similarity.csv");
  EXPECT_EQ(header.substr(0, header.find('\n')), "alpha,beta,gamma");
  const auto m = read_csv(out / "label_similarity.csv", true);
  ASSERT_EQ(m.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    ASSERT_EQ(m[i].size(), 3u);
    EXPECT_EQ(m[i][i], 0.0);
    for (std::size_t j = 0; j < 3; ++j) {
      EXPECT_EQ(m[i][j], m[j][i]);
      EXPECT_LE(std::abs(m[i][j]), 1.0);
    }
  }
  const auto emb = fixtures::read_file(out / "label_embeddings.csv");
  EXPECT_EQ(emb.rfind("label,e0,", 0), 0u);
  const auto pgm = fixtures::read_file(out / "label_similarity.pgm");
  EXPECT_EQ(pgm.rfind("P5", 0), 0u);
}

TEST(CliGradcheck, PassesAndWritesReport) {
  const auto dir = fixtures::scratch_dir("cli_gradcheck");
  const auto r = cli_run({"gradcheck", "--quick", "--out", (dir / "g.json").string()});
  EXPECT_EQ(r.code, 0) << r.out << r.err;
  const auto j = read_json(dir / "g.json");
  EXPECT_TRUE(j.at("pass").get<bool>());
  for (const auto& c : j.at("checks")) EXPECT_TRUE(c.contains("max_rel_err"));
}

TEST(CliGradcheck, ImpossibleToleranceFails) {
  const auto r = cli_run({"gradcheck", "--quick", "--tolerance", "1e-30"});
  EXPECT_EQ(r.code, 1);
}

TEST(Cli, HelpAndUnknownCommands) {
  EXPECT_EQ(cli_run({"--help"}).code, 0);
  EXPECT_EQ(cli_run({"train", "--help"}).code, 0);
  EXPECT_EQ(cli_run({"frobnicate"}).code, 2);
  EXPECT_EQ(cli_run({}).code, 2);
  EXPECT_EQ(cli_run({"predict", "--bogus-flag"}).code, 2);
}

TEST(RunConfig, PresetsAndFlatJson) {
  cli::RunConfig rc;
  cli::apply_preset(rc, "scene");
  EXPECT_EQ(rc.preset, "scene");
  EXPECT_EQ(rc.model.embedding_dim, 512u);
  EXPECT_DOUBLE_EQ(rc.train.learning_rate, 0.003);
  EXPECT_THROW(cli::apply_preset(rc, "imagenet"), ConfigError);

  // a file's preset applies before its other keys
  cli::RunConfig b;
  cli::apply_flat_json(b, json{{"batch_size", 7}, {"preset", "yeast"}});
  EXPECT_EQ(b.train.batch_size, 7u);
  EXPECT_DOUBLE_EQ(b.model.dropout, 0.5);
  EXPECT_THROW(cli::apply_flat_json(b, json{{"input_dim", 3}}), ConfigError);
  EXPECT_THROW(cli::apply_flat_json(b, json{{"epochs", "many"}}), ConfigError);

  // the flat form round-trips
  cli::RunConfig c;
  cli::apply_flat_json(c, cli::to_flat_json(b));
  EXPECT_EQ(cli::to_flat_json(c), cli::to_flat_json(b));
}
