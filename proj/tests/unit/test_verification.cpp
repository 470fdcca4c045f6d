#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <random>

#include "cgmvae/errors.hpp"
#include "cgmvae/losses.hpp"
#include "cgmvae/verification.hpp"

using namespace cgmvae;
using namespace cgmvae::verify;

namespace {

std::vector<double> unit_random(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> d;
  std::vector<double> v(n);
  double s = 0.0;
  for (auto& x : v) s += (x = d(rng)) * x;
  for (auto& x : v) x /= std::sqrt(s);
  return v;
}

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

TEST(RelativeError, Floor) {
  EXPECT_EQ(relative_error(1.0, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(relative_error(2.0, 1.0), 0.5);
  EXPECT_DOUBLE_EQ(relative_error(1e-12, 0.0), 1e-12 / 1e-8);
}

TEST(FiniteDiff, Polynomials) {
  const auto g = finite_diff_grad([](std::span<const double> t) { return t[0] * t[0]; }, {3.0});
  EXPECT_NEAR(g[0], 6.0, 1e-8);
  const auto ones = finite_diff_grad(
      [](std::span<const double> t) {
        double s = 0.0;
        for (double v : t) s += v;
        return s;
      },
      {0.1, -2.0, 5.0});
  for (double v : ones) EXPECT_NEAR(v, 1.0, 1e-9);
}

TEST(FiniteDiff, NonDeterministicFunctionRejected) {
  int calls = 0;
  EXPECT_THROW(finite_diff_grad([&](std::span<const double> t) { return t[0] + (++calls); }, {1.0}),
               OracleInvalidError);
}

TEST(Compare, HistogramAndVerdict) {
  const std::vector<double> a{1.0, 2.0, 3.0}, n{1.0, 2.0 + 2e-9, 3.3};
  const auto r = compare("x", a, n, 1e-4);
  EXPECT_FALSE(r.pass);
  EXPECT_EQ(r.count, 3u);
  EXPECT_NEAR(r.max_rel_err, 0.3 / 3.3, 1e-12);
  std::size_t total = 0;
  for (auto c : r.histogram) total += c;
  EXPECT_EQ(total, 3u);
  EXPECT_EQ(r.histogram[0], 1u);
  EXPECT_EQ(histogram_bin(0.0), 0u);
  EXPECT_EQ(histogram_bin(1.0), kHistogramBins - 1);
  EXPECT_TRUE(compare("y", a, a, 1e-4).pass);
}

TEST(ClOracle, AgreesWithReferenceLossByFiniteDifferences) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> d;
  const RealMatrix labels(4, 5, [&] {
    std::vector<double> v(20);
    for (auto& x : v) x = d(rng);
    return v;
  }());
  const std::vector<std::uint8_t> y{0, 1, 1, 0};
  std::vector<double> w(5);
  for (auto& x : w) x = d(rng);
  const auto closed = analytic_cl_gradient(w, labels, y, 0.5);
  const auto numeric = finite_diff_grad(
      [&](std::span<const double> t) { return reference_contrastive_loss(t, labels, y, 0.5); }, w);
  EXPECT_LT(compare("cl", closed, numeric, 1e-6).max_rel_err, 1e-6);
}

TEST(ClOracle, OrthogonalAnchorFeelsWeakerPullThanAligned) {
  // label vectors e1 (positive) and e2 (negative)
  const RealMatrix labels(2, 3, {0, 1, 0, 0, 0, 1});
  const std::vector<std::uint8_t> y{1, 0};
  const auto aligned = analytic_cl_gradient(std::vector<double>{0.0, 1.0, 0.0}, labels, y, 0.5);
  const auto ortho = analytic_cl_gradient(std::vector<double>{1.0, 0.0, 0.0}, labels, y, 0.5);
  // aligned with the positive: the gradient is tangent and small, orthogonal anchor is pulled harder
  EXPECT_LT(norm(aligned), norm(ortho));
  // the orthogonal anchor is pushed toward the positive
  EXPECT_LT(ortho[1], 0.0);
}

TEST(ClOracle, GradientScalesInverselyWithNorm) {
  std::mt19937_64 rng(4);
  const auto v = unit_random(6, rng);
  RealMatrix labels(3, 6);
  for (std::size_t r = 0; r < 3; ++r) {
    const auto u = unit_random(6, rng);
    std::copy(u.begin(), u.end(), labels.data.begin() + static_cast<std::ptrdiff_t>(r * 6));
  }
  const std::vector<std::uint8_t> y{1, 0, 1};
  const auto g1 = analytic_cl_gradient(v, labels, y, 0.5);
  std::vector<double> scaled(v);
  for (auto& x : scaled) x *= 4.0;
  const auto g4 = analytic_cl_gradient(scaled, labels, y, 0.5);
  for (std::size_t j = 0; j < 6; ++j) EXPECT_NEAR(g4[j], g1[j] / 4.0, 1e-14);
}

TEST(ClOracle, Preconditions) {
  const RealMatrix labels(2, 2, {1, 0, 0, 1});
  EXPECT_THROW(analytic_cl_gradient(std::vector<double>{0.0, 0.0}, labels, std::vector<std::uint8_t>{1, 0}, 0.5),
               DegenerateEmbeddingError);
  EXPECT_THROW(analytic_cl_gradient(std::vector<double>{1.0, 0.0}, labels, std::vector<std::uint8_t>{0, 0}, 0.5),
               PreconditionError);
}

TEST(Triplet, IdentityCases) {
  const std::vector<double> e0{1.0, 0.0, 0.0}, e1{0.0, 1.0, 0.0}, neg{-1.0, 0.0, 0.0};
  const auto same = triplet_identity_check(e1, e0, e0);
  EXPECT_NEAR(same.lhs, std::log(2.0), 1e-14);
  EXPECT_NEAR(same.rhs, std::log(2.0), 1e-14);
  const auto best = triplet_identity_check(e0, e0, neg);
  EXPECT_NEAR(best.lhs, std::log1p(std::exp(-4.0)), 1e-14);
  EXPECT_LT(best.abs_diff, 1e-14);
  // the linearized form is exact for unit vectors; the quoted sum of squares is not
  EXPECT_NEAR(best.linearized, 1.0 - 4.0, 1e-14);
  EXPECT_GT(best.first_order_gap, 1.0);
}

TEST(Triplet, RejectsNonUnitInputs) {
  const std::vector<double> e0{1.0, 0.0}, half{0.5, 0.0};
  EXPECT_THROW(triplet_identity_check(half, e0, e0), PreconditionError);
  EXPECT_THROW(triplet_identity_check(e0, std::vector<double>{1.0, 0.0, 0.0}, e0), PreconditionError);
}

TEST(Triplet, RandomInstances) {
  EXPECT_TRUE(check_triplet_identity(300, 5).pass);
  EXPECT_TRUE(check_cl_monotonicity(300, 6).pass);
}

TEST(Kl, AnalyticCases) {
  const GaussianParams std_normal{{0.0, 0.0}, {0.0, 0.0}};
  EXPECT_EQ(analytic_gaussian_kl(std_normal, std_normal), 0.0);
  EXPECT_NEAR(analytic_gaussian_kl({{1.0}, {0.0}}, {{0.0}, {0.0}}), 0.5, 1e-15);
  // q = N(0, e), p = N(0, 1): ½(e − 1 − 1)
  EXPECT_NEAR(analytic_gaussian_kl({{0.0}, {1.0}}, {{0.0}, {0.0}}), 0.5 * (std::exp(1.0) - 2.0), 1e-15);
}

TEST(Kl, MonteCarloConverges) {
  const auto r = mc_kl_convergence({{0.3, -0.2}, {-0.5, 0.4}}, {{0.0, 0.1}, {0.2, -0.3}}, 100000, 9);
  EXPECT_LT(std::abs(r.empirical - r.analytic), 4.0 * r.stderr_);
  EXPECT_LT(r.rel_err, 0.02);
  const auto same = mc_kl_convergence({{0.5}, {0.1}}, {{0.5}, {0.1}}, 1000, 2);
  EXPECT_EQ(same.analytic, 0.0);
  EXPECT_NEAR(same.empirical, 0.0, 1e-12);
}

TEST(Kl, ReferenceDensity) {
  const GaussianParams g{{1.0, -1.0}, {0.0, std::log(4.0)}};
  const std::vector<double> z{1.0, -1.0};
  EXPECT_NEAR(reference_log_density(z, g), -std::log(2.0 * M_PI) - 0.5 * std::log(4.0), 1e-14);
  EXPECT_NEAR(reference_mixture_log_density(z, {g, g}), reference_log_density(z, g), 1e-14);
}

TEST(Suite, DefaultPasses) {
  GradCheckOptions o;
  o.cl_instances = 20;
  o.triplet_instances = 100;
  o.kl_samples = 20000;
  o.metric_instances = 100;
  const auto report = run_gradcheck_suite(o);
  EXPECT_TRUE(report.pass) << report.summary();
  EXPECT_TRUE(report.failures().empty());

  const auto j = nlohmann::json::parse(report.to_json());
  ASSERT_FALSE(j.at("checks").empty());
  std::vector<std::string> names;
  for (const auto& c : j.at("checks")) {
    EXPECT_TRUE(c.contains("max_rel_err"));
    EXPECT_TRUE(c.at("pass").get<bool>());
    names.push_back(c.at("name"));
  }
  for (const char* want : {"loss:kl", "loss:recon", "loss:contrastive", "loss:ce", "loss:total"})
    EXPECT_NE(std::find(names.begin(), names.end(), want), names.end()) << want;
}

TEST(Suite, DetectsSignFlippedBackward) {
  GradCheckOptions o;
  o.include_statistical = false;
  // same forward value, negated gradient
  o.terms.ce = [](const ad::Tensor& w, const ad::Tensor& l, const LabelMatrix& y) {
    const auto c = ce_loglik(w, l, y);
    return ad::sub(c.tape().scalar(2.0 * c.item()), c);
  };
  const auto report = run_gradcheck_suite(o);
  EXPECT_FALSE(report.pass);
  const auto failed = report.failures();
  EXPECT_NE(std::find(failed.begin(), failed.end(), "loss:ce"), failed.end());
  EXPECT_EQ(std::find(failed.begin(), failed.end(), "loss:kl"), failed.end());
  EXPECT_EQ(std::find(failed.begin(), failed.end(), "loss:recon"), failed.end());
}

TEST(Flatten, RoundTrip) {
  ModelConfig c;
  c.input_dim = 2;
  c.num_labels = 2;
  c.embedding_dim = 3;
  c.latent_dim = 2;
  c.feature_hidden = {3, 3, 3};
  c.label_hidden = {3, 3};
  c.decoder_hidden = {3, 3};
  const auto p = ModelParams::initialize(c, 1);
  auto q = ModelParams::initialize(c, 2);
  const auto theta = flatten(p);
  EXPECT_EQ(theta.size(), p.total_size());
  unflatten(q, theta);
  EXPECT_EQ(flatten(q), theta);
  EXPECT_THROW(unflatten(q, std::vector<double>(3)), DimensionError);
}
