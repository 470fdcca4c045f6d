#include "cgmvae/verification.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <sstream>

#include "cgmvae/errors.hpp"
#include "cgmvae/rng.hpp"
#include "json_io.hpp"

namespace cgmvae::verify {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

std::vector<double> normal_vector(std::mt19937_64& rng, std::size_t n, double stddev = 1.0) {
  std::normal_distribution<double> normal(0.0, stddev);
  std::vector<double> v(n);
  for (double& x : v) x = normal(rng);
  return v;
}

std::vector<double> unit_vector(std::mt19937_64& rng, std::size_t n) {
  auto v = normal_vector(rng, n);
  const double len = norm(v);
  for (double& x : v) x /= len;
  return v;
}

std::size_t uniform_int(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

std::vector<double> tensor_values(const ad::Tensor& t) { return {t.values().begin(), t.values().end()}; }

// Two-class contrastive loss through the library, anchor v_x, classes {v_pos, v_neg}.
double library_two_class_loss(std::span<const double> v_x, std::span<const double> v_pos,
                              std::span<const double> v_neg, double tau) {
  const std::size_t e = v_x.size();
  ad::Tape tape;
  std::vector<double> labels(v_pos.begin(), v_pos.end());
  labels.insert(labels.end(), v_neg.begin(), v_neg.end());
  const auto wx = tape.constant({1, e}, std::vector<double>(v_x.begin(), v_x.end()));
  const auto wl = tape.constant({2, e}, std::move(labels));
  LabelMatrix y(1, 2);
  y(0, 0) = 1;
  return contrastive_loss(wx, wl, y, tau).item();
}

CheckResult single_value_check(std::string name, double error, double tolerance, bool pass) {
  CheckResult r;
  r.name = std::move(name);
  r.max_rel_err = error;
  r.tolerance = tolerance;
  r.count = 1;
  r.histogram[histogram_bin(error)] = 1;
  r.pass = pass;
  return r;
}

}  // namespace

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), kRelErrFloor});
  return std::abs(analytic - numeric) / denom;
}

std::vector<double> finite_diff_grad(const ScalarFunction& f, std::vector<double> theta, double h) {
  const double first = f(theta);
  const double second = f(theta);
  if (!(first == second) && !(std::isnan(first) && std::isnan(second))) {
    throw OracleInvalidError("finite_diff_grad: function is not deterministic (" + std::to_string(first) + " vs " +
                             std::to_string(second) + ")");
  }
  std::vector<double> grad(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double saved = theta[i];
    theta[i] = saved + h;
    const double plus = f(theta);
    theta[i] = saved - h;
    const double minus = f(theta);
    theta[i] = saved;
    grad[i] = (plus - minus) / (2.0 * h);
  }
  return grad;
}

std::size_t histogram_bin(double rel_err) {
  if (!(rel_err < 1e-2)) return kHistogramBins - 1;
  double edge = 1e-12;
  for (std::size_t b = 0; b + 1 < kHistogramBins; ++b, edge *= 100.0) {
    if (rel_err < edge) return b;
  }
  return kHistogramBins - 1;
}

CheckResult compare(const std::string& name, std::span<const double> analytic, std::span<const double> numeric,
                    double tolerance) {
  if (analytic.size() != numeric.size()) throw DimensionError("compare: gradient sizes differ for " + name);
  CheckResult r;
  r.name = name;
  r.tolerance = tolerance;
  r.count = analytic.size();
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double e = relative_error(analytic[i], numeric[i]);
    r.max_rel_err = std::max(r.max_rel_err, std::isnan(e) ? INFINITY : e);
    ++r.histogram[histogram_bin(e)];
  }
  r.pass = r.max_rel_err < tolerance;
  return r;
}

std::vector<std::string> GradCheckReport::failures() const {
  std::vector<std::string> out;
  for (const auto& c : checks)
    if (!c.pass) out.push_back(c.name);
  return out;
}

std::string GradCheckReport::to_json() const {
  using detail::json;
  json list = json::array();
  for (const auto& c : checks) {
    json per = json::object();
    for (const auto& [name, err] : c.per_parameter) per[name] = err;
    list.push_back({{"name", c.name},
                    {"max_rel_err", c.max_rel_err},
                    {"tolerance", c.tolerance},
                    {"count", c.count},
                    {"histogram", c.histogram},
                    {"per_parameter", per},
                    {"pass", c.pass}});
  }
  return json{{"pass", pass}, {"seconds", seconds}, {"failures", failures()}, {"checks", list}}.dump(2);
}

std::string GradCheckReport::summary() const {
  std::ostringstream os;
  char buf[256];
  for (const auto& c : checks) {
    std::snprintf(buf, sizeof buf, "%-4s %-28s max_err=%.3e tol=%.1e n=%zu\n", c.pass ? "ok" : "FAIL", c.name.c_str(),
                  c.max_rel_err, c.tolerance, c.count);
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "%s: %zu checks, %zu failed, %.2fs\n", pass ? "PASS" : "FAIL", checks.size(),
                failures().size(), seconds);
  os << buf;
  return os.str();
}

// Contrastive loss -------------------------------------------------------------

double reference_contrastive_loss(std::span<const double> w_x, const RealMatrix& w_labels,
                                  std::span<const std::uint8_t> y, double tau) {
  const double nx = norm(w_x);
  std::vector<double> logits(w_labels.rows);
  for (std::size_t t = 0; t < w_labels.rows; ++t) logits[t] = dot(w_x, w_labels.row(t)) / (nx * norm(w_labels.row(t)) * tau);
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double l : logits) z += std::exp(l - mx);
  const double log_z = mx + std::log(z);
  double loss = 0.0;
  std::size_t k = 0;
  for (std::size_t t = 0; t < y.size(); ++t)
    if (y[t]) {
      loss += log_z - logits[t];
      ++k;
    }
  if (k == 0) throw PreconditionError("reference_contrastive_loss: no positive label");
  return loss / static_cast<double>(k);
}

std::vector<double> analytic_cl_gradient(std::span<const double> w_x, const RealMatrix& w_labels,
                                         std::span<const std::uint8_t> y, double tau) {
  const std::size_t e = w_x.size(), l = w_labels.rows;
  if (w_labels.cols != e || y.size() != l) throw DimensionError("analytic_cl_gradient: inconsistent sizes");
  const double nx = norm(w_x);
  if (!(nx > ad::kNormEpsilon)) throw DegenerateEmbeddingError("analytic_cl_gradient: zero feature embedding");

  std::vector<double> v(e);
  for (std::size_t k = 0; k < e; ++k) v[k] = w_x[k] / nx;
  std::vector<std::vector<double>> u(l, std::vector<double>(e));
  for (std::size_t t = 0; t < l; ++t) {
    const double nt = norm(w_labels.row(t));
    if (!(nt > ad::kNormEpsilon)) throw DegenerateEmbeddingError("analytic_cl_gradient: zero label embedding");
    for (std::size_t k = 0; k < e; ++k) u[t][k] = w_labels(t, k) / nt;
  }

  // softmax over all classes
  std::vector<double> p(l);
  double mx = -INFINITY;
  for (std::size_t t = 0; t < l; ++t) {
    p[t] = dot(v, u[t]) / tau;
    mx = std::max(mx, p[t]);
  }
  double z = 0.0;
  for (double& pt : p) z += (pt = std::exp(pt - mx));
  for (double& pt : p) pt /= z;

  std::size_t n_pos = 0;
  for (auto b : y) n_pos += b ? 1 : 0;
  if (n_pos == 0) throw PreconditionError("analytic_cl_gradient: no positive label");

  // dL/dv = (1/τ)(Σ_t p_t u_t − mean_{p∈P} u_p)
  std::vector<double> dv(e, 0.0);
  for (std::size_t t = 0; t < l; ++t) {
    const double coef = p[t] - (y[t] ? 1.0 / static_cast<double>(n_pos) : 0.0);
    for (std::size_t k = 0; k < e; ++k) dv[k] += coef * u[t][k] / tau;
  }
  // dL/dw = (I − v vᵀ) dL/dv / ‖w‖
  const double proj = dot(v, dv);
  std::vector<double> dw(e);
  for (std::size_t k = 0; k < e; ++k) dw[k] = (dv[k] - proj * v[k]) / nx;
  return dw;
}

TripletCheck triplet_identity_check(std::span<const double> v_x, std::span<const double> v_pos,
                                    std::span<const double> v_neg) {
  if (v_x.size() != v_pos.size() || v_x.size() != v_neg.size() || v_x.empty()) {
    throw PreconditionError("triplet_identity_check: inputs must share one non-zero length");
  }
  for (auto v : {v_x, v_pos, v_neg}) {
    if (std::abs(norm(v) - 1.0) > 1e-9) throw PreconditionError("triplet_identity_check: inputs must be unit vectors");
  }
  TripletCheck r;
  r.lhs = library_two_class_loss(v_x, v_pos, v_neg, 0.5);
  const double x = 2.0 * dot(v_x, v_neg) - 2.0 * dot(v_x, v_pos);
  r.rhs = x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  r.abs_diff = std::abs(r.lhs - r.rhs);
  double d_pos = 0.0, d_neg = 0.0;
  for (std::size_t k = 0; k < v_x.size(); ++k) {
    d_pos += (v_x[k] - v_pos[k]) * (v_x[k] - v_pos[k]);
    d_neg += (v_x[k] - v_neg[k]) * (v_x[k] - v_neg[k]);
  }
  r.first_order = d_pos + d_neg + 1.0;
  r.first_order_gap = std::abs(r.lhs - r.first_order);
  r.linearized = 1.0 + d_pos - d_neg;
  r.linearized_gap = std::abs(r.lhs - r.linearized);
  return r;
}

// KL estimator ----------------------------------------------------------------

double analytic_gaussian_kl(const GaussianParams& q, const GaussianParams& p) {
  if (q.mean.size() != p.mean.size()) throw DimensionError("analytic_gaussian_kl: dimension mismatch");
  double kl = 0.0;
  for (std::size_t j = 0; j < q.mean.size(); ++j) {
    const double vq = std::exp(q.logvar[j]), vp = std::exp(p.logvar[j]);
    const double dm = p.mean[j] - q.mean[j];
    kl += vq / vp + dm * dm / vp - 1.0 + std::log(vp / vq);
  }
  return 0.5 * kl;
}

double reference_log_density(std::span<const double> z, const GaussianParams& g) {
  double s = 0.0;
  for (std::size_t j = 0; j < z.size(); ++j) {
    const double diff = z[j] - g.mean[j];
    s += std::log(2.0 * std::numbers::pi) + g.logvar[j] + diff * diff / std::exp(g.logvar[j]);
  }
  return -0.5 * s;
}

double reference_mixture_log_density(std::span<const double> z, const std::vector<GaussianParams>& components) {
  if (components.empty()) throw EmptyMixtureError("reference_mixture_log_density: no components");
  double density = 0.0;
  for (const auto& c : components) {
    double pdf = 1.0;
    for (std::size_t j = 0; j < z.size(); ++j) {
      const double var = std::exp(c.logvar[j]);
      const double diff = z[j] - c.mean[j];
      pdf *= std::exp(-diff * diff / (2.0 * var)) / std::sqrt(2.0 * std::numbers::pi * var);
    }
    density += pdf;
  }
  return std::log(density / static_cast<double>(components.size()));
}

KlConvergence mc_kl_convergence(const GaussianParams& posterior, const GaussianParams& prior, std::size_t n_samples,
                                std::uint64_t seed) {
  const std::size_t d = posterior.mean.size();
  if (prior.mean.size() != d || n_samples < 2) throw PreconditionError("mc_kl_convergence: bad arguments");
  ad::Tape tape;
  std::vector<double> mean(n_samples * d), logvar(n_samples * d);
  for (std::size_t b = 0; b < n_samples; ++b)
    for (std::size_t j = 0; j < d; ++j) {
      mean[b * d + j] = posterior.mean[j];
      logvar[b * d + j] = posterior.logvar[j];
    }
  const GaussianTensors q{tape.constant({n_samples, d}, std::move(mean)), tape.constant({n_samples, d}, std::move(logvar))};
  const GaussianTensors p{tape.constant({1, d}, prior.mean), tape.constant({1, d}, prior.logvar)};
  auto rng = make_rng(seed, Stream::Sampling);
  const auto z0 = sample_posterior(q, rng);
  const LabelMatrix y(n_samples, 1, std::uint8_t{1});

  KlConvergence r;
  r.empirical = kl_loss(q, z0, y, p, PriorKind::Mixture).item();
  r.analytic = analytic_gaussian_kl(posterior, prior);

  // Sample spread from a direct per-sample evaluation.
  const auto z = tensor_values(z0);
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t b = 0; b < n_samples; ++b) {
    std::span<const double> zb(z.data() + b * d, d);
    const double v = reference_log_density(zb, posterior) - reference_log_density(zb, prior);
    sum += v;
    sum_sq += v * v;
  }
  const double n = static_cast<double>(n_samples);
  const double var = std::max(0.0, (sum_sq - sum * sum / n) / (n - 1.0));
  r.stderr_ = std::sqrt(var / n);
  r.rel_err = r.analytic == 0.0 ? std::abs(r.empirical) : std::abs(r.empirical - r.analytic) / std::abs(r.analytic);
  return r;
}

// Metrics ---------------------------------------------------------------------

double brute_hamming_accuracy(const LabelMatrix& y, const LabelMatrix& y_hat) {
  double total = 0.0;
  for (std::size_t r = 0; r < y.rows; ++r) {
    std::size_t same = 0;
    for (std::size_t c = 0; c < y.cols; ++c)
      if (y(r, c) == y_hat(r, c)) ++same;
    total += static_cast<double>(same) / static_cast<double>(y.cols);
  }
  return total / static_cast<double>(y.rows);
}

double brute_example_f1(const LabelMatrix& y, const LabelMatrix& y_hat) {
  double total = 0.0;
  for (std::size_t r = 0; r < y.rows; ++r) {
    std::vector<std::size_t> truth, pred;
    for (std::size_t c = 0; c < y.cols; ++c) {
      if (y(r, c)) truth.push_back(c);
      if (y_hat(r, c)) pred.push_back(c);
    }
    std::vector<std::size_t> common;
    std::set_intersection(truth.begin(), truth.end(), pred.begin(), pred.end(), std::back_inserter(common));
    const std::size_t denom = truth.size() + pred.size();
    total += denom == 0 ? 1.0 : static_cast<double>(2 * common.size()) / static_cast<double>(denom);
  }
  return total / static_cast<double>(y.rows);
}

double brute_micro_f1(const LabelMatrix& y, const LabelMatrix& y_hat) {
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < y.data.size(); ++i) {
    tp += (y.data[i] == 1 && y_hat.data[i] == 1) ? 1 : 0;
    fp += (y.data[i] == 0 && y_hat.data[i] == 1) ? 1 : 0;
    fn += (y.data[i] == 1 && y_hat.data[i] == 0) ? 1 : 0;
  }
  const std::size_t denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : static_cast<double>(2 * tp) / static_cast<double>(denom);
}

double brute_macro_f1(const LabelMatrix& y, const LabelMatrix& y_hat) {
  double total = 0.0;
  for (std::size_t c = 0; c < y.cols; ++c) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t r = 0; r < y.rows; ++r) {
      tp += (y(r, c) == 1 && y_hat(r, c) == 1) ? 1 : 0;
      fp += (y(r, c) == 0 && y_hat(r, c) == 1) ? 1 : 0;
      fn += (y(r, c) == 1 && y_hat(r, c) == 0) ? 1 : 0;
    }
    const std::size_t denom = 2 * tp + fp + fn;
    total += denom == 0 ? 0.0 : static_cast<double>(2 * tp) / static_cast<double>(denom);
  }
  return total / static_cast<double>(y.cols);
}

double brute_precision_at_1(const RealMatrix& probabilities, const LabelMatrix& y) {
  std::size_t hits = 0;
  for (std::size_t r = 0; r < y.rows; ++r) {
    const auto row = probabilities.row(r);
    const auto top = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    if (y(r, top)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(y.rows);
}

// Statistical oracles ----------------------------------------------------------

CheckResult check_cl_gradient_oracle(std::size_t instances, std::uint64_t seed, double tolerance) {
  std::mt19937_64 rng(seed);
  CheckResult total;
  total.name = "cl_closed_form_gradient";
  total.tolerance = tolerance;
  for (std::size_t n = 0; n < instances; ++n) {
    const std::size_t e = uniform_int(rng, 2, 16), l = uniform_int(rng, 2, 8);
    const double tau = std::uniform_real_distribution<double>(0.1, 2.0)(rng);
    auto w_x = normal_vector(rng, e);
    RealMatrix w_l(l, e, normal_vector(rng, l * e));
    std::vector<std::uint8_t> y(l, 0);
    std::bernoulli_distribution coin(0.4);
    for (auto& b : y) b = coin(rng) ? 1 : 0;
    y[uniform_int(rng, 0, l - 1)] = 1;

    ad::Tape tape;
    const auto wx = tape.leaf({1, e}, w_x, true);
    LabelMatrix ym(1, l, y);
    tape.backward(contrastive_loss(wx, tape.constant(w_l), ym, tau));
    const auto expected = analytic_cl_gradient(w_x, w_l, y, tau);
    const auto r = compare(total.name, wx.grad(), expected, tolerance);
    total.max_rel_err = std::max(total.max_rel_err, r.max_rel_err);
    total.count += r.count;
    for (std::size_t b = 0; b < kHistogramBins; ++b) total.histogram[b] += r.histogram[b];
  }
  total.pass = total.max_rel_err < tolerance;
  return total;
}

CheckResult check_triplet_identity(std::size_t instances, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  CheckResult r;
  r.name = "triplet_identity";
  r.tolerance = 1e-12;
  for (std::size_t n = 0; n < instances; ++n) {
    const std::size_t e = uniform_int(rng, 2, 16);
    const auto vx = unit_vector(rng, e), vp = unit_vector(rng, e), vn = unit_vector(rng, e);
    const auto t = triplet_identity_check(vx, vp, vn);
    r.max_rel_err = std::max(r.max_rel_err, t.abs_diff);
    ++r.histogram[histogram_bin(t.abs_diff)];
    ++r.count;
  }
  r.pass = r.max_rel_err < r.tolerance;
  return r;
}

CheckResult check_cl_monotonicity(std::size_t instances, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::pair<double, double>> gap_loss;
  for (std::size_t n = 0; n < instances; ++n) {
    const std::size_t e = uniform_int(rng, 2, 16);
    const auto vx = unit_vector(rng, e), vp = unit_vector(rng, e), vn = unit_vector(rng, e);
    gap_loss.emplace_back(dot(vx, vn) - dot(vx, vp), library_two_class_loss(vx, vp, vn, 0.5));
  }
  std::sort(gap_loss.begin(), gap_loss.end());
  CheckResult r;
  r.name = "cl_monotone_in_margin";
  r.count = gap_loss.size();
  std::size_t violations = 0;
  for (std::size_t i = 1; i < gap_loss.size(); ++i) {
    if (gap_loss[i].first > gap_loss[i - 1].first && !(gap_loss[i].second > gap_loss[i - 1].second)) {
      ++violations;
      r.max_rel_err = std::max(r.max_rel_err, gap_loss[i - 1].second - gap_loss[i].second);
    }
  }
  r.histogram[histogram_bin(r.max_rel_err)] = r.count;
  r.pass = violations == 0;
  return r;
}

std::vector<CheckResult> check_kl_estimator(std::size_t samples, std::uint64_t seed) {
  struct Case {
    const char* name;
    GaussianParams q, p;
  };
  const std::vector<Case> cases{
      {"kl_mc_identical", {{0.3, -0.2}, {0.1, -0.4}}, {{0.3, -0.2}, {0.1, -0.4}}},
      {"kl_mc_shifted_mean", {{0.0}, {0.0}}, {{1.0}, {0.0}}},
      {"kl_mc_wider_prior", {{0.0}, {0.0}}, {{0.0}, {std::log(4.0)}}},
  };
  std::vector<CheckResult> out;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto r = mc_kl_convergence(cases[i].q, cases[i].p, samples, seed + i);
    if (r.analytic == 0.0) {
      const double bound = 3.0 * r.stderr_ + 1e-12;
      out.push_back(single_value_check(cases[i].name, std::abs(r.empirical), bound, std::abs(r.empirical) <= bound));
    } else {
      out.push_back(single_value_check(cases[i].name, r.rel_err, 0.02, r.rel_err < 0.02));
    }
  }
  return out;
}

CheckResult check_metrics_oracle(std::size_t instances, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  CheckResult r;
  r.name = "metrics_brute_force";
  r.tolerance = 0.0;
  bool all_equal = true;
  for (std::size_t n = 0; n < instances; ++n) {
    const std::size_t b = uniform_int(rng, 1, 60), l = uniform_int(rng, 1, 10);
    const double density = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    std::bernoulli_distribution coin(density);
    LabelMatrix y(b, l), y_hat(b, l);
    RealMatrix probs(b, l);
    for (auto& v : y.data) v = coin(rng) ? 1 : 0;
    for (auto& v : y_hat.data) v = coin(rng) ? 1 : 0;
    // Coarse probabilities so argmax ties are common.
    for (auto& v : probs.data) v = static_cast<double>(uniform_int(rng, 0, 10)) / 10.0;

    const std::array<std::pair<double, double>, 6> pairs{{
        {hamming_accuracy(y, y_hat), brute_hamming_accuracy(y, y_hat)},
        {example_f1(y, y_hat), brute_example_f1(y, y_hat)},
        {micro_f1(y, y_hat), brute_micro_f1(y, y_hat)},
        {macro_f1(y, y_hat), brute_macro_f1(y, y_hat)},
        {precision_at_1(probs, y), brute_precision_at_1(probs, y)},
        {example_f1(y, threshold(probs)), brute_example_f1(y, threshold(probs))},
    }};
    for (const auto& [got, want] : pairs) {
      const double diff = std::abs(got - want);
      all_equal = all_equal && got == want;
      r.max_rel_err = std::max(r.max_rel_err, diff);
      ++r.histogram[histogram_bin(diff)];
      ++r.count;
    }
  }
  r.pass = all_equal;
  return r;
}

// Full suite ------------------------------------------------------------------

std::vector<double> flatten(const ModelParams& params) {
  std::vector<double> theta;
  theta.reserve(params.total_size());
  for (const auto& p : params.parameters()) theta.insert(theta.end(), p.value.begin(), p.value.end());
  return theta;
}

void unflatten(ModelParams& params, std::span<const double> theta) {
  if (theta.size() != params.total_size()) throw DimensionError("unflatten: size mismatch");
  std::size_t k = 0;
  for (auto& p : params.parameters())
    for (double& v : p.value) v = theta[k++];
}

namespace {

enum class Term { Kl, Recon, Contrastive, Ce, Total };

const ad::Tensor& pick(const ObjectiveTensors& o, Term t) {
  switch (t) {
    case Term::Kl: return o.kl;
    case Term::Recon: return o.recon;
    case Term::Contrastive: return o.contrastive;
    case Term::Ce: return o.ce;
    case Term::Total: break;
  }
  return o.total;
}

// Weighted sum of a primitive's output, so every output element matters.
using Primitive = std::function<ad::Tensor(ad::Tape&, const std::vector<ad::Tensor>&)>;

CheckResult check_primitive(const std::string& name, const std::vector<ad::Shape>& shapes, const Primitive& op,
                            std::mt19937_64& rng, double tolerance, double h, bool positive = false) {
  std::vector<std::vector<double>> inputs;
  for (const auto& s : shapes) {
    auto v = normal_vector(rng, ad::shape_size(s));
    if (positive)
      for (double& x : v) x = 0.5 + std::abs(x);
    inputs.push_back(std::move(v));
  }
  std::vector<double> weights;
  auto eval = [&](const std::vector<std::vector<double>>& in, std::vector<ad::Tensor>* leaves, ad::Tape& tape) {
    std::vector<ad::Tensor> ts;
    for (std::size_t i = 0; i < in.size(); ++i) ts.push_back(tape.leaf(shapes[i], in[i], leaves != nullptr));
    const auto out = op(tape, ts);
    if (weights.empty()) {
      std::mt19937_64 wrng(out.size());
      weights = normal_vector(wrng, out.size());
    }
    if (leaves) *leaves = ts;
    return ad::sum(ad::mul(out, tape.constant(out.shape(), weights)));
  };

  std::vector<double> theta;
  for (const auto& v : inputs) theta.insert(theta.end(), v.begin(), v.end());
  auto unpack = [&](std::span<const double> th) {
    std::vector<std::vector<double>> in;
    std::size_t k = 0;
    for (const auto& s : shapes) {
      in.emplace_back(th.begin() + static_cast<std::ptrdiff_t>(k),
                      th.begin() + static_cast<std::ptrdiff_t>(k + ad::shape_size(s)));
      k += ad::shape_size(s);
    }
    return in;
  };

  ad::Tape tape;
  std::vector<ad::Tensor> leaves;
  tape.backward(eval(inputs, &leaves, tape));
  std::vector<double> analytic;
  for (const auto& t : leaves) analytic.insert(analytic.end(), t.grad().begin(), t.grad().end());
  const auto numeric = finite_diff_grad(
      [&](std::span<const double> th) {
        ad::Tape t2;
        return eval(unpack(th), nullptr, t2).item();
      },
      theta, h);
  return compare("primitive:" + name, analytic, numeric, tolerance);
}

std::vector<CheckResult> primitive_checks(std::uint64_t seed, double h) {
  std::mt19937_64 rng(seed);
  constexpr double tol = 1e-5;
  LabelMatrix mask(3, 4);
  mask.data = {1, 0, 1, 0, 0, 1, 0, 0, 1, 1, 1, 1};
  std::vector<CheckResult> out;
  using T = std::vector<ad::Tensor>;
  out.push_back(check_primitive("matmul", {{3, 4}, {4, 2}}, [](ad::Tape&, const T& a) { return ad::matmul(a[0], a[1]); },
                                rng, tol, h));
  out.push_back(check_primitive("transpose", {{3, 2}}, [](ad::Tape&, const T& a) { return ad::transpose(a[0]); }, rng,
                                tol, h));
  out.push_back(check_primitive("mul_sub_add", {{2, 3}, {2, 3}},
                                [](ad::Tape&, const T& a) { return ad::add(ad::mul(a[0], a[1]), ad::sub(a[0], a[1])); },
                                rng, tol, h));
  out.push_back(check_primitive("exp_log", {{5}}, [](ad::Tape&, const T& a) { return ad::log(ad::exp(a[0])); }, rng,
                                tol, h, true));
  out.push_back(check_primitive("log", {{5}}, [](ad::Tape&, const T& a) { return ad::log(a[0]); }, rng, tol, h, true));
  out.push_back(check_primitive("sigmoid", {{6}}, [](ad::Tape&, const T& a) { return ad::sigmoid(a[0]); }, rng, tol, h));
  out.push_back(
      check_primitive("log_sigmoid", {{6}}, [](ad::Tape&, const T& a) { return ad::log_sigmoid(a[0]); }, rng, tol, h));
  out.push_back(check_primitive("relu", {{6}}, [](ad::Tape&, const T& a) { return ad::relu(a[0]); }, rng, tol, h));
  out.push_back(check_primitive("add_row", {{3, 2}, {2}}, [](ad::Tape&, const T& a) { return ad::add_row(a[0], a[1]); },
                                rng, tol, h));
  out.push_back(check_primitive("mean_axis0", {{3, 4}}, [](ad::Tape&, const T& a) { return ad::mean(a[0], 0); }, rng,
                                tol, h));
  out.push_back(check_primitive("logsumexp_axis1", {{3, 4}},
                                [](ad::Tape&, const T& a) { return ad::logsumexp(a[0], 1); }, rng, tol, h));
  out.push_back(check_primitive("masked_logsumexp", {{3, 4}},
                                [mask](ad::Tape&, const T& a) { return ad::masked_logsumexp_rows(a[0], mask); }, rng,
                                tol, h));
  out.push_back(check_primitive("l2_normalize_rows", {{3, 4}},
                                [](ad::Tape&, const T& a) { return ad::l2_normalize_rows(a[0]); }, rng, tol, h));
  out.push_back(check_primitive("gaussian_pairwise", {{3, 2}, {4, 2}, {4, 2}},
                                [](ad::Tape&, const T& a) { return ad::gaussian_log_density_pairwise(a[0], a[1], a[2]); },
                                rng, tol, h));
  out.push_back(check_primitive("gaussian_rowwise", {{3, 2}, {3, 2}, {3, 2}},
                                [](ad::Tape&, const T& a) { return ad::gaussian_log_density_rowwise(a[0], a[1], a[2]); },
                                rng, tol, h));
  out.push_back(check_primitive("gather_slice", {{4, 3}},
                                [](ad::Tape&, const T& a) {
                                  const std::vector<std::size_t> rows{2, 0, 2};
                                  return ad::slice_cols(ad::gather_rows(a[0], rows), 1, 3);
                                },
                                rng, tol, h));
  return out;
}

}  // namespace

GradCheckReport run_gradcheck_suite(const GradCheckOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  GradCheckReport report;

  ModelConfig config;
  config.input_dim = options.input_dim;
  config.num_labels = options.num_labels;
  config.latent_dim = options.latent_dim;
  config.embedding_dim = options.embedding_dim;
  config.feature_hidden = options.feature_hidden;
  config.label_hidden = options.label_hidden;
  config.decoder_hidden = options.decoder_hidden;
  config.alpha = 1.0;
  config.beta = 0.5;
  const ModelParams params = ModelParams::initialize(config, options.seed);

  std::mt19937_64 rng(options.seed);
  Batch batch;
  batch.features = RealMatrix(options.batch_size, options.input_dim, normal_vector(rng, options.batch_size * options.input_dim));
  batch.labels = LabelMatrix(options.batch_size, options.num_labels);
  std::bernoulli_distribution coin(0.5);
  for (std::size_t r = 0; r < options.batch_size; ++r) {
    for (std::size_t c = 0; c < options.num_labels; ++c) batch.labels(r, c) = coin(rng) ? 1 : 0;
    batch.labels(r, r % options.num_labels) = 1;
    batch.rows.push_back(r);
  }

  auto objective = [&](const ModelParams& p, ad::Tape& tape, bool grad) {
    BoundModel model(tape, p, grad);
    ForwardMode eval;
    auto sampling = make_rng(options.seed, Stream::Sampling);
    return std::make_pair(model, total_objective(model, batch, eval, sampling, options.terms));
  };

  const std::vector<std::pair<const char*, Term>> terms{{"loss:kl", Term::Kl},
                                                        {"loss:recon", Term::Recon},
                                                        {"loss:contrastive", Term::Contrastive},
                                                        {"loss:ce", Term::Ce},
                                                        {"loss:total", Term::Total}};
  const auto theta = flatten(params);
  for (const auto& [name, term] : terms) {
    ad::Tape tape;
    auto [model, obj] = objective(params, tape, true);
    tape.backward(pick(obj, term));
    const auto grads = model.gradients();

    ModelParams scratch = params;
    const auto numeric = finite_diff_grad(
        [&](std::span<const double> th) {
          unflatten(scratch, th);
          ad::Tape t;
          return pick(objective(scratch, t, false).second, term).item();
        },
        theta, options.h);

    std::vector<double> analytic;
    analytic.reserve(theta.size());
    for (const auto& g : grads) analytic.insert(analytic.end(), g.begin(), g.end());
    auto result = compare(name, analytic, numeric, options.tolerance);
    std::size_t offset = 0;
    for (const auto& p : params.parameters()) {
      const auto n = p.value.size();
      const auto part = compare(p.name, std::span(analytic).subspan(offset, n), std::span(numeric).subspan(offset, n),
                                options.tolerance);
      result.per_parameter.emplace_back(p.name, part.max_rel_err);
      offset += n;
    }
    report.checks.push_back(std::move(result));
  }

  for (auto& c : primitive_checks(options.seed + 1, options.h)) report.checks.push_back(std::move(c));

  if (options.include_statistical) {
    report.checks.push_back(check_cl_gradient_oracle(options.cl_instances, options.seed + 2));
    report.checks.push_back(check_triplet_identity(options.triplet_instances, options.seed + 3));
    report.checks.push_back(check_cl_monotonicity(options.triplet_instances, options.seed + 4));
    for (auto& c : check_kl_estimator(options.kl_samples, options.seed + 5)) report.checks.push_back(std::move(c));
    report.checks.push_back(check_metrics_oracle(options.metric_instances, options.seed + 6));
  }

  report.pass = std::all_of(report.checks.begin(), report.checks.end(), [](const CheckResult& c) { return c.pass; });
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace cgmvae::verify
