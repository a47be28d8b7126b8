#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "../support/oracles.hpp"
#include "lattice/error.hpp"
#include "lattice/parametric.hpp"
#include "lattice/simulation.hpp"

using namespace lattice;

namespace {

ParamVector design1_truth() {
  ParamVector p;
  p.beta = {Eigen::VectorXd::Constant(1, 3.0), Eigen::VectorXd::Constant(1, 2.5)};
  p.thresholds = {{1.0}, {1.25}};
  p.rho = 0.33;
  return p;
}

ParamVector design2_truth() {
  ParamVector p;
  p.beta = {Eigen::Vector2d(2.0, -3.0), Eigen::VectorXd::Constant(1, 3.0)};
  p.thresholds = {{-1.5, 0.6, 4.0}, {-2.5, 2.0}};
  p.rho = 0.25;
  return p;
}

Dataset design1(std::size_t n, std::uint64_t seed, double rho = 0.33) {
  DgpSpec s = builtin_spec("param-design-1", seed);
  std::get<GaussianErrors>(s.errors).rho = rho;
  return generate(s, n);
}

/// Expected log-likelihood per observation for Design 1, by Simpson's rule
/// over x ~ U[-4, 4] with cell masses from Owen's T.
double design1_expected_loglik() {
  const int m = 3998;
  const double a = -4.0, b = 4.0, h = (b - a) / m;
  auto integrand = [](double x) {
    const double u = 1.0 - 3.0 * x, v = 1.25 - 2.5 * x;
    const double both = oracle::bvn_owen(u, v, 0.33);
    const double pu = oracle::normal_cdf(u), pv = oracle::normal_cdf(v);
    const double cells[4] = {both, pu - both, pv - both, 1.0 - pu - pv + both};
    double s = 0.0;
    for (double p : cells)
      if (p > 0.0) s += p * std::log(p);
    return s;
  };
  double sum = integrand(a) + integrand(b);
  for (int i = 1; i < m; ++i) sum += (i % 2 ? 4.0 : 2.0) * integrand(a + i * h);
  return sum * h / 3.0 / (b - a);
}

}  // namespace

TEST_CASE("transform examples and round trips") {
  const ParamVector d2 = design2_truth();
  const Eigen::VectorXd z = transform(d2);
  // beta1 (2), beta2 (1), thresholds1 (3), thresholds2 (2), rho
  REQUIRE(z.size() == 9);
  CHECK(z[3] == -1.5);
  CHECK(z[4] == doctest::Approx(std::sqrt(2.1)).epsilon(1e-14));
  CHECK(z[5] == doctest::Approx(std::sqrt(3.4)).epsilon(1e-14));
  CHECK(z[8] == doctest::Approx(std::atanh(0.25)).epsilon(1e-14));
  ParamVector zero = d2;
  zero.rho = 0.0;
  CHECK(transform(zero)[8] == 0.0);

  const ParamVector back = untransform(z, d2);
  CHECK((back.to_vector() - d2.to_vector()).cwiseAbs().maxCoeff() <= 1e-12);

  ParamVector shape;
  shape.beta = {Eigen::VectorXd::Zero(5), Eigen::VectorXd::Zero(5)};
  shape.thresholds = {{0, 1, 2, 3, 4}, {0, 1, 2, 3}};
  REQUIRE(shape.size() == 20);
  std::mt19937_64 gen(3);
  std::normal_distribution<double> nd(0.0, 2.0);
  for (int rep = 0; rep < 100; ++rep) {
    Eigen::VectorXd r(20);
    for (auto& v : r) v = nd(gen);
    const ParamVector p = untransform(r, shape);
    p.validate();
    // Gaps are squares, so only |u| survives the round trip.
    Eigen::VectorXd canonical = r;
    for (int k : {11, 12, 13, 14, 16, 17, 18}) canonical[k] = std::abs(r[k]);
    CHECK((transform(p) - canonical).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK((untransform(transform(p), shape).to_vector() - p.to_vector()).cwiseAbs().maxCoeff() <= 1e-10);
  }
  Eigen::VectorXd extreme = Eigen::VectorXd::Zero(20);
  extreme[19] = 50.0;
  const ParamVector pe = untransform(extreme, shape);
  CHECK_NOTHROW(pe.validate());
  CHECK(std::abs(pe.rho) < 1.0);
}

TEST_CASE("transform jacobian matches finite differences") {
  const ParamVector d2 = design2_truth();
  const Eigen::VectorXd z = transform(d2);
  const Eigen::MatrixXd J = transform_jacobian(z, d2);
  for (Eigen::Index k = 0; k < z.size(); ++k) {
    Eigen::VectorXd zp = z, zm = z;
    zp[k] += 1e-6;
    zm[k] -= 1e-6;
    const Eigen::VectorXd col = (untransform(zp, d2).to_vector() - untransform(zm, d2).to_vector()) / 2e-6;
    CHECK((col - J.col(k)).cwiseAbs().maxCoeff() <= 1e-6);
  }
}

TEST_CASE("single observation with independent errors factorizes") {
  Dataset d;
  d.covariates = {Eigen::MatrixXd::Constant(1, 1, 0.4), Eigen::MatrixXd::Constant(1, 1, -0.2)};
  d.outcomes.resize(1, 2);
  d.outcomes << 2, 1;
  ParamVector p = design2_truth();
  p.beta = {Eigen::VectorXd::Constant(1, 1.5), Eigen::VectorXd::Constant(1, 2.0)};
  p.rho = 0.0;
  const double m1 = oracle::normal_cdf(0.6 - 0.6) - oracle::normal_cdf(-1.5 - 0.6);
  const double m2 = oracle::normal_cdf(-2.5 + 0.4);
  CHECK(log_likelihood(d, p) == doctest::Approx(std::log(m1 * m2)).epsilon(1e-12));

  std::vector<std::size_t> twice{0, 0};
  const Dataset dd = d.rows(twice);
  CHECK(log_likelihood(dd, p) == doctest::Approx(log_likelihood(d, p)).epsilon(1e-14));
}

TEST_CASE("expected log-likelihood at the truth matches quadrature") {
  const Dataset d = design1(100000, 31);
  const double oracle_value = design1_expected_loglik();
  const double sample_value = log_likelihood(d, design1_truth());
  CAPTURE(oracle_value);
  CHECK(std::abs(sample_value - oracle_value) <= 2e-3);
}

TEST_CASE("zero-mass observed cell is an error") {
  Dataset d;
  d.covariates = {Eigen::MatrixXd::Constant(1, 1, 40.0), Eigen::MatrixXd::Constant(1, 1, 0.0)};
  d.outcomes.resize(1, 2);
  d.outcomes << 1, 1;
  try {
    (void)log_likelihood(d, design1_truth());
    FAIL("expected DataError");
  } catch (const DataError& e) {
    const std::string what = e.what();
    CHECK(what.find("observation") != std::string::npos);
  }
  Eigen::VectorXd g;
  CHECK(std::isinf(log_likelihood(d, design1_truth(), &g)));
}

TEST_CASE("analytic gradient matches central differences in transformed coordinates") {
  const Dataset d = generate(builtin_spec("param-design-2", 5), 300);
  const ParamVector truth = design2_truth();
  const Eigen::VectorXd z0 = transform(truth);
  std::mt19937_64 gen(8);
  std::normal_distribution<double> nd(0.0, 0.15);
  for (int rep = 0; rep < 20; ++rep) {
    Eigen::VectorXd z = z0;
    for (auto& v : z) v += nd(gen);
    const ParamVector p = untransform(z, truth);
    Eigen::VectorXd g;
    (void)log_likelihood(d, p, &g);
    const Eigen::VectorXd gz = transform_jacobian(z, truth).transpose() * g;
    const Eigen::VectorXd fd =
        numeric_gradient([&](const Eigen::VectorXd& x) { return log_likelihood(d, untransform(x, truth)); }, z, 1e-5);
    for (Eigen::Index k = 0; k < z.size(); ++k) {
      CAPTURE(rep);
      CAPTURE(k);
      CHECK(std::abs(gz[k] - fd[k]) <= 1e-4 * std::max(1.0, std::abs(fd[k])));
    }
  }
}

TEST_CASE("observation scores average to the gradient") {
  const Dataset d = generate(builtin_spec("param-design-2", 6), 200);
  const ParamVector p = design2_truth();
  Eigen::VectorXd g;
  (void)log_likelihood(d, p, &g);
  const Eigen::MatrixXd S = observation_scores(d, p);
  CHECK(S.rows() == 200);
  CHECK((S.colwise().mean().transpose() - g).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("likelihood is permutation invariant and predictions sum to one") {
  const Dataset d = generate(builtin_spec("param-design-2", 7), 500);
  std::vector<std::size_t> order(d.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), std::mt19937_64(1));
  const ParamVector p = design2_truth();
  CHECK(log_likelihood(d.rows(order), p) == doctest::Approx(log_likelihood(d, p)).epsilon(1e-12));
  for (std::size_t i = 0; i < d.size(); i += 7) {
    const auto cells = predicted_cells(d, i, p);
    CHECK(cells.size() == 12);
    CHECK(std::accumulate(cells.begin(), cells.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
    for (double c : cells) CHECK(c >= 0.0);
  }
}

TEST_CASE("design 1 fit recovers the truth") {
  const Dataset d = design1(1000, 2024);
  const FitResult r = fit(d);
  REQUIRE(r.converged);
  CHECK(r.gradient_norm <= 1e-6);
  CHECK(r.loglik >= r.initial_loglik);
  for (std::size_t k = 1; k < r.history.size(); ++k) CHECK(r.history[k] >= r.history[k - 1]);
  const Eigen::VectorXd est = r.estimate.to_vector();
  const Eigen::VectorXd truth = design1_truth().to_vector();
  // natural order: beta1, beta2, alpha1, alpha2, rho
  const double sds[5] = {0.35, 0.23, 0.16, 0.15, 0.14};
  for (int k = 0; k < 5; ++k) {
    CAPTURE(k);
    CHECK(std::abs(est[k] - truth[k]) <= 4.0 * sds[k]);
  }
  REQUIRE(r.se.size() == 5);
  for (int k = 0; k < 5; ++k) CHECK(r.se[k] > 0.0);
  CHECK(r.se[0] >= 0.35 * 0.5);
  CHECK(r.se[0] <= 0.35 * 1.5);
  CHECK(r.names == std::vector<std::string>{"beta1[x]", "beta2[x]", "alpha1[1]", "alpha2[1]", "rho"});
}

TEST_CASE("fit from the truth does not lose likelihood") {
  const Dataset d = design1(1000, 77);
  const FitResult r = fit(d, design1_truth());
  CHECK(r.initial_loglik == doctest::Approx(log_likelihood(d, design1_truth())).epsilon(1e-14));
  CHECK(r.loglik >= r.initial_loglik);
}

TEST_CASE("zero correlation is recovered") {
  const Dataset d = design1(2000, 55, 0.0);
  const FitResult r = fit(d);
  REQUIRE(r.converged);
  CHECK(std::abs(r.estimate.rho) <= 4.0 * r.se[4]);
}

TEST_CASE("standard errors scale with the square root of n") {
  const auto se = [](std::size_t n) {
    const Dataset d = design1(n, 404);
    return fit(d).se;
  };
  const Eigen::VectorXd a = se(4000), b = se(8000);
  for (Eigen::Index k = 0; k < a.size(); ++k) {
    CAPTURE(k);
    const double ratio = b[k] / a[k];
    CHECK(ratio >= std::sqrt(0.5) * 0.85);
    CHECK(ratio <= std::sqrt(0.5) * 1.15);
  }
}

TEST_CASE("outer product and sandwich agree under correct specification") {
  const Dataset d = design1(10000, 91);
  const FitResult r = fit(d);
  REQUIRE(r.converged);
  const Eigen::VectorXd opg = standard_errors(d, r.estimate, SeKind::outer_product);
  const Eigen::VectorXd sw = standard_errors(d, r.estimate, SeKind::sandwich);
  CHECK((opg - r.se).cwiseAbs().maxCoeff() <= 1e-12);
  for (Eigen::Index k = 0; k < opg.size(); ++k) {
    CAPTURE(k);
    CHECK(std::abs(sw[k] / opg[k] - 1.0) <= 0.2);
  }
}

TEST_CASE("degenerate data is rejected") {
  Dataset d = design1(300, 3);
  for (Eigen::Index i = 0; i < d.outcomes.rows(); ++i) d.outcomes(i, 1) = 1;
  try {
    (void)fit(d, std::nullopt, {}, {2, 2});
    FAIL("expected DataError");
  } catch (const DataError& e) {
    const std::string what = e.what();
    CHECK(what.find('2') != std::string::npos);
  }
}

TEST_CASE("iteration cap is reported") {
  const Dataset d = design1(1000, 12);
  FitOptions opt;
  opt.bfgs.max_iterations = 1;
  const FitResult r = fit(d, std::nullopt, opt);
  CHECK_FALSE(r.converged);
  CHECK(r.iterations <= 1);
  CHECK_FALSE(r.message.empty());
}

TEST_CASE("params json round trip") {
  const ParamVector p = design2_truth();
  const ParamVector back = params_from_json(params_to_json(p));
  CHECK((back.to_vector() - p.to_vector()).cwiseAbs().maxCoeff() == 0.0);
  const Dataset d = design1(500, 1);
  const FitResult r = fit(d);
  const ParamVector from_fit = params_from_json(fit_to_json(r));
  CHECK((from_fit.to_vector() - r.estimate.to_vector()).cwiseAbs().maxCoeff() == 0.0);
  const std::string csv = fit_coefficients_csv(r);
  CHECK(csv.rfind("parameter,estimate,se\n", 0) == 0);
}
