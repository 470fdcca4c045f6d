#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <limits>
#include <json.hpp>
#include <sstream>

#include "cgmvae/checkpoint.hpp"
#include "cgmvae/errors.hpp"
#include "cgmvae/trainer.hpp"
#include "synthetic.hpp"

using namespace cgmvae;

namespace {

ModelParams tiny_params() {
  ModelConfig c;
  c.input_dim = 2;
  c.num_labels = 2;
  c.embedding_dim = 3;
  c.latent_dim = 2;
  c.feature_hidden = {3, 3, 3};
  c.label_hidden = {3, 3};
  c.decoder_hidden = {3, 3};
  return ModelParams::initialize(c, 1);
}

std::vector<std::vector<double>> filled_grads(const ModelParams& p, double v) {
  std::vector<std::vector<double>> g;
  for (const auto& q : p.parameters()) g.emplace_back(q.value.size(), v);
  return g;
}

std::vector<double> flat(const ModelParams& p) {
  std::vector<double> out;
  for (const auto& q : p.parameters()) out.insert(out.end(), q.value.begin(), q.value.end());
  return out;
}

}  // namespace

TEST(Adam, ZeroGradientLeavesParameters) {
  auto p = tiny_params();
  const auto before = flat(p);
  adam_step(p, filled_grads(p, 0.0), 0.01, 0.0, 1);
  EXPECT_EQ(flat(p), before);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  for (double g : {1e-3, 0.5, -7.0}) {
    auto p = tiny_params();
    const auto before = flat(p);
    adam_step(p, filled_grads(p, g), 0.01, 0.0, 1);
    const auto after = flat(p);
    for (std::size_t i = 0; i < before.size(); ++i) EXPECT_NEAR(before[i] - after[i], 0.01 * (g > 0 ? 1 : -1), 1e-7);
  }
}

TEST(Adam, DecoupledWeightDecay) {
  auto p = tiny_params();
  const auto before = flat(p);
  adam_step(p, filled_grads(p, 0.0), 0.1, 0.5, 1);
  const auto after = flat(p);
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_NEAR(after[i], before[i] * 0.95, 1e-15);
}

TEST(Adam, NonFiniteGradientRejectedWithoutChanges) {
  auto p = tiny_params();
  const auto before = flat(p);
  auto g = filled_grads(p, 0.1);
  g.back()[0] = std::numeric_limits<double>::quiet_NaN();
  try {
    adam_step(p, g, 0.01, 0.0, 1);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find(p.parameters().back().name), std::string::npos);
  }
  EXPECT_EQ(flat(p), before);
  g.back()[0] = std::numeric_limits<double>::infinity();
  EXPECT_THROW(adam_step(p, g, 0.01, 0.0, 1), NumericError);
}

TEST(TrainConfig, Validation) {
  auto bad = [](auto mutate) {
    TrainConfig c;
    mutate(c);
    EXPECT_THROW(c.validate(), ConfigError);
  };
  EXPECT_NO_THROW(TrainConfig{}.validate());
  bad([](TrainConfig& c) { c.learning_rate = 0.0; });
  bad([](TrainConfig& c) { c.batch_size = 0; });
  bad([](TrainConfig& c) { c.epochs = 0; });
  bad([](TrainConfig& c) { c.weight_decay = -1.0; });
  bad([](TrainConfig& c) { c.train_fraction = 0.0; });
  bad([](TrainConfig& c) { c.train_fraction = 1.5; });
  bad([](TrainConfig& c) { c.threshold = 2.0; });
  bad([](TrainConfig& c) { c.selection_metric = "loss"; });
}

TEST(Train, DeterministicForSameSeed) {
  const auto ds = fixtures::make_separable(2, 120);
  const auto mc = fixtures::small_model_config(ds);
  auto tc = fixtures::small_train_config(9);
  tc.epochs = 3;
  const auto a = train(ds, mc, tc);
  const auto b = train(ds, mc, tc);
  EXPECT_EQ(flat(a.last), flat(b.last));
  EXPECT_EQ(flat(a.best), flat(b.best));
  EXPECT_EQ(a.log.to_jsonl(), b.log.to_jsonl());
  tc.seed = 10;
  EXPECT_NE(flat(train(ds, mc, tc).last), flat(a.last));
}

TEST(Train, LearnsSeparableData) {
  const auto ds = fixtures::make_separable(0, 400);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto result = train(ds, fixtures::small_model_config(ds), fixtures::small_train_config(seed));
    const auto& log = result.log;
    ASSERT_EQ(log.epochs.size(), 50u);
    EXPECT_GE(log.epochs[log.best_epoch - 1].selection_value, 0.95) << "seed " << seed;
    EXPECT_TRUE(log.finished);
    EXPECT_TRUE(log.has_test);
    EXPECT_LT(log.epochs.back().train_loss.total, log.epochs.front().train_loss.total);
  }

  // the data really is that easy for a linear model
  const auto prepared = prepare_dataset(ds, fixtures::small_train_config(1));
  const auto val = prepared.rows(Split::Val);
  const auto probs = fixtures::logistic_regression_probs(prepared, val);
  EXPECT_GE(compute_report(probs, prepared.label_rows(val)).example_f1, 0.95);
}

TEST(Train, BestEpochBookkeeping) {
  const auto ds = fixtures::make_separable(4, 120);
  auto tc = fixtures::small_train_config(3);
  tc.epochs = 6;
  std::size_t calls = 0;
  bool started = false;
  const auto result = train(ds, fixtures::small_model_config(ds), tc,
                            {[&](const RunLog& log) {
                               started = true;
                               EXPECT_TRUE(log.epochs.empty());
                             },
                             [&](const EpochRecord& r, const ModelParams&, const ModelParams&, double secs) {
                               ++calls;
                               EXPECT_EQ(r.epoch, calls);
                               EXPECT_GE(secs, 0.0);
                             }});
  EXPECT_TRUE(started);
  EXPECT_EQ(calls, 6u);
  double best = -1.0;
  std::size_t best_epoch = 0;
  for (const auto& r : result.log.epochs) {
    if (r.selection_value > best) {
      best = r.selection_value;
      best_epoch = r.epoch;
      EXPECT_TRUE(r.improved);
    } else {
      EXPECT_FALSE(r.improved);
    }
    EXPECT_EQ(r.best_epoch, best_epoch);
  }
  EXPECT_EQ(result.log.best_epoch, best_epoch);
  // the test report comes from the best params at checkpoint precision
  const auto prepared = prepare_dataset(ds, tc);
  const auto again = evaluate(round_to_checkpoint_precision(result.best), prepared, Split::Test, tc.threshold);
  EXPECT_EQ(again.to_json(), result.log.test.to_json());
}

TEST(Train, TrainFractionHalvesTrainingRows) {
  const auto ds = fixtures::make_separable(5, 200);
  auto tc = fixtures::small_train_config(1);
  tc.epochs = 1;
  const auto full = train(ds, fixtures::small_model_config(ds), tc);
  tc.train_fraction = 0.5;
  const auto half = train(ds, fixtures::small_model_config(ds), tc);
  EXPECT_EQ(half.log.train_rows, full.log.train_rows / 2);
  EXPECT_EQ(half.log.val_rows, full.log.val_rows);
  EXPECT_EQ(half.log.test_rows, full.log.test_rows);
}

TEST(Train, RunLogLines) {
  const auto ds = fixtures::make_separable(6, 100);
  auto tc = fixtures::small_train_config(2);
  tc.epochs = 2;
  const auto result = train(ds, fixtures::small_model_config(ds), tc);
  std::istringstream in(result.log.to_jsonl());
  std::vector<nlohmann::json> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(nlohmann::json::parse(line));
  ASSERT_EQ(lines.size(), 4u);
  EXPECT_EQ(lines[0].at("type"), "run");
  EXPECT_EQ(lines[1].at("type"), "epoch");
  EXPECT_EQ(lines[3].at("type"), "result");
}

TEST(Train, DivergenceAborts) {
  const auto ds = fixtures::make_separable(7, 100);
  auto tc = fixtures::small_train_config(1);
  tc.learning_rate = 1e30;
  tc.epochs = 5;
  try {
    train(ds, fixtures::small_model_config(ds), tc);
    FAIL() << "expected TrainingAborted";
  } catch (const TrainingAborted& e) {
    EXPECT_FALSE(e.log().finished);
    EXPECT_TRUE(e.best().all_finite());
  }
}

TEST(Train, RejectsMismatchedModel) {
  const auto ds = fixtures::make_separable(8, 60);
  auto mc = fixtures::small_model_config(ds);
  mc.num_labels += 1;
  EXPECT_THROW(train(ds, mc, fixtures::small_train_config(1)), CheckpointError);
}

TEST(Evaluate, DeterministicAndShapeChecked) {
  const auto ds = prepare_dataset(fixtures::make_separable(9, 80), fixtures::small_train_config(1));
  const auto params = ModelParams::initialize(fixtures::small_model_config(ds), 3);
  EXPECT_EQ(evaluate(params, ds, Split::Test).to_json(), evaluate(params, ds, Split::Test).to_json());
  EXPECT_EQ(evaluate(params, ds, Split::Val).samples, ds.count(Split::Val));
  const auto other = ModelParams::initialize(fixtures::small_model_config(fixtures::make_separable(1, 20, 4, 3)), 3);
  EXPECT_THROW(evaluate(other, ds, Split::Test), CheckpointError);
}

TEST(Train, SceneLossDecreases) {
  const char* root = std::getenv("CGMVAE_DATA_DIR");
  const auto dir = root ? std::filesystem::path(root) / "scene" : std::filesystem::path();
  if (!root || !std::filesystem::exists(dir / "X.csv")) GTEST_SKIP() << "scene data not available";
  const auto ds = load_dense_csv(dir / "X.csv", dir / "Y.csv");
  ModelConfig mc;
  mc.input_dim = ds.feature_dim();
  mc.num_labels = ds.num_labels();
  TrainConfig tc;
  tc.epochs = 3;
  const auto r = train(ds, mc, tc);
  EXPECT_LT(r.log.epochs.back().train_loss.total, r.log.epochs.front().train_loss.total);
}

