#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "../support/oracles.hpp"
#include "lattice/cdf_grid.hpp"
#include "lattice/error.hpp"
#include "lattice/metrics.hpp"
#include "lattice/semiparametric.hpp"
#include "lattice/simulation.hpp"

using namespace lattice;

namespace {

const DgpSpec& twostep_spec() {
  static const DgpSpec s = builtin_spec("twostep-5.1", 0);
  return s;
}

Dataset twostep(std::size_t n, std::uint64_t seed) { return generate(builtin_spec("twostep-5.1", seed), n); }

CdfGrid true_grid(const std::vector<double>& a1, const std::vector<double>& a2) {
  CdfGrid g{a1, a2, Eigen::MatrixXd(a1.size(), a2.size())};
  for (std::size_t k = 0; k < a1.size(); ++k)
    for (std::size_t l = 0; l < a2.size(); ++l) g.values(k, l) = oracle::bvn_owen(a1[k], a2[l], 0.6);
  return g;
}

double grid_rmse(const CdfGrid& est) {
  const CdfGrid truth = true_grid(est.axis1, est.axis2);
  return std::sqrt((est.values - truth.values).array().square().mean());
}

std::vector<double> hull_axis(const std::vector<double>& bounds, std::size_t k) {
  return linspace(bounds.front(), bounds.back(), k);
}

Dataset single(double x1, double x2, int y1, int y2) {
  Dataset d;
  d.covariates = {Eigen::MatrixXd::Constant(1, 1, x1), Eigen::MatrixXd::Constant(1, 1, x2)};
  d.outcomes.resize(1, 2);
  d.outcomes << y1, y2;
  return d;
}

}  // namespace

TEST_CASE("design rows carry inclusion-exclusion signs") {
  const DgpSpec& s = twostep_spec();
  const Dataset mid = single(0.2, -0.4, 2, 2);
  auto [a1, a2] = implied_bound_axes(mid, s.lattice, s.model, DesignRows::observed_cell);
  CHECK(a1.size() == 2);
  CHECK(a2.size() == 2);
  DesignSystem sys = build_design_system(mid, s.lattice, s.model, a1, a2, DesignRows::observed_cell);
  REQUIRE(sys.A.rows() == 1);
  std::vector<double> entries;
  for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(sys.A, 0); it; ++it)
    if (it.value() != 0.0) entries.push_back(it.value());
  std::sort(entries.begin(), entries.end());
  CHECK(entries == std::vector<double>{-1.0, -1.0, 1.0, 1.0});
  CHECK(sys.A.coeff(0, sys.unknown(1, 1)) == 1.0);
  CHECK(sys.A.coeff(0, sys.unknown(0, 0)) == 1.0);
  CHECK(sys.A.coeff(0, sys.unknown(0, 1)) == -1.0);

  const Dataset low = single(0.2, -0.4, 1, 1);
  std::tie(a1, a2) = implied_bound_axes(low, s.lattice, s.model, DesignRows::observed_cell);
  sys = build_design_system(low, s.lattice, s.model, a1, a2, DesignRows::observed_cell);
  REQUIRE(sys.A.rows() == 1);
  CHECK(sys.A.nonZeros() == 1);
  CHECK(sys.A.coeff(0, sys.unknown(0, 0)) == 1.0);
  CHECK(sys.target[0] == 1.0);

  // The top-right cell reaches the constant corner F(+inf, +inf) = 1.
  const Dataset high = single(0.2, -0.4, 3, 3);
  std::tie(a1, a2) = implied_bound_axes(high, s.lattice, s.model, DesignRows::observed_cell);
  sys = build_design_system(high, s.lattice, s.model, a1, a2, DesignRows::observed_cell);
  CHECK(sys.target[0] == 0.0);
  CHECK(sys.indicator[0] == 1.0);
}

TEST_CASE("design system reproduces cell probabilities from the true cdf") {
  const DgpSpec& s = twostep_spec();
  const Dataset d = twostep(300, 12);
  const auto bounds = implied_bound_axes(d, s.lattice, s.model, DesignRows::observed_cell);
  const auto a1 = hull_axis(bounds.first, 80), a2 = hull_axis(bounds.second, 80);
  const DesignSystem sys = build_design_system(d, s.lattice, s.model, a1, a2, DesignRows::observed_cell);
  Eigen::MatrixXd phi(sys.rows1(), sys.rows2());
  for (std::size_t k = 0; k <= a1.size(); ++k)
    for (std::size_t l = 0; l <= a2.size(); ++l) {
      const double e1 = k < a1.size() ? a1[k] : kInf, e2 = l < a2.size() ? a2[l] : kInf;
      if (std::isinf(e1) && std::isinf(e2)) phi(k, l) = 1.0;
      else if (std::isinf(e1)) phi(k, l) = oracle::normal_cdf(e2);
      else if (std::isinf(e2)) phi(k, l) = oracle::normal_cdf(e1);
      else phi(k, l) = oracle::bvn_owen(e1, e2, 0.6);
    }
  const Eigen::VectorXd fitted =
      sys.A * Eigen::Map<const Eigen::VectorXd>(phi.data(), phi.size()) + (sys.indicator - sys.target);
  const JointCdf F = error_cdf(s.errors);
  double worst = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double p = cell_probability(d.outcome(i), d, i, s.lattice, s.model, F);
    worst = std::max(worst, std::abs(fitted[static_cast<Eigen::Index>(i)] - p));
  }
  CHECK(worst <= 5e-3);
}

TEST_CASE("corners outside the grid hull are rejected") {
  const DgpSpec& s = twostep_spec();
  const Dataset d = twostep(50, 2);
  const std::vector<double> narrow{-0.1, 0.0, 0.1};
  try {
    (void)build_design_system(d, s.lattice, s.model, narrow, narrow);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("bound") != std::string::npos);
  }
}

TEST_CASE("grid inversion recovers a step cdf from noiseless targets") {
  const DgpSpec& s = twostep_spec();
  const Dataset d = twostep(400, 21);
  const auto bounds = implied_bound_axes(d, s.lattice, s.model);
  const auto a1 = hull_axis(bounds.first, 5), a2 = hull_axis(bounds.second, 5);
  DesignSystem sys = build_design_system(d, s.lattice, s.model, a1, a2);

  // Proper CDF on the augmented 6 x 6 array from random cell masses.
  std::mt19937_64 gen(4);
  std::uniform_real_distribution<double> u(0.1, 1.0);
  Eigen::MatrixXd mass(6, 6);
  for (auto& m : mass.reshaped()) m = u(gen);
  mass /= mass.sum();
  Eigen::MatrixXd phi(6, 6);
  for (int k = 0; k < 6; ++k)
    for (int l = 0; l < 6; ++l) phi(k, l) = mass.topLeftCorner(k + 1, l + 1).sum();
  phi(5, 5) = 1.0;
  sys.target = sys.A * Eigen::Map<const Eigen::VectorXd>(phi.data(), phi.size());

  GridInversionConfig cfg;
  cfg.tolerance = 1e-14;
  cfg.max_iterations = 20000;
  const GridInversionResult r = solve_design_system(sys, cfg);
  CHECK(r.residual < 1e-8);
  CHECK(r.grid.max_violation() <= 1e-9);
}

TEST_CASE("grid inversion objective never increases and penalty flattens") {
  const DgpSpec& s = twostep_spec();
  const Dataset d = twostep(500, 3);
  GridInversionConfig cfg;
  cfg.nodes = 15;
  const GridInversionResult base = grid_inversion_fit(d, s.lattice, s.model, cfg);
  CHECK(base.objective <= base.initial_objective);
  for (std::size_t k = 1; k < base.history.size(); ++k) CHECK(base.history[k] <= base.history[k - 1] + 1e-15);
  CHECK(base.grid.max_violation() <= 1e-9);
  CHECK(base.margin1.minCoeff() >= 0.0);
  CHECK(base.margin1.maxCoeff() <= 1.0);

  double previous = base.roughness;
  for (double lambda : {1e-3, 1e-2, 1e-1, 1.0, 10.0}) {
    cfg.smoothness_lambda = lambda;
    const GridInversionResult r = grid_inversion_fit(d, s.lattice, s.model, cfg);
    CAPTURE(lambda);
    CHECK(r.roughness <= previous + 1e-9);
    CHECK(r.grid.max_violation() <= 1e-9);
    previous = r.roughness;
  }
  cfg.smoothness_lambda = -1.0;
  CHECK_THROWS_AS((void)grid_inversion_fit(d, s.lattice, s.model, cfg), UsageError);
}

TEST_CASE("proper cdf feasible set gives nonnegative rectangle masses") {
  const DgpSpec& s = twostep_spec();
  const Dataset d = twostep(400, 8);
  GridInversionConfig cfg;
  cfg.nodes = 12;
  cfg.feasible_set = FeasibleSet::proper_cdf;
  const GridInversionResult r = grid_inversion_fit(d, s.lattice, s.model, cfg);
  CHECK(r.grid.max_violation() <= 1e-9);
  const Eigen::MatrixXd& v = r.grid.values;
  for (Eigen::Index k = 1; k < v.rows(); ++k)
    for (Eigen::Index l = 1; l < v.cols(); ++l)
      CHECK(v(k, l) - v(k - 1, l) - v(k, l - 1) + v(k - 1, l - 1) >= -1e-9);
}

TEST_CASE("kernel cdf with a vanishing bandwidth is the empirical cdf") {
  std::mt19937_64 gen(6);
  std::normal_distribution<double> nd;
  Eigen::MatrixXd pts(200, 2);
  for (auto& v : pts.reshaped()) v = nd(gen);
  const auto axis = linspace(-2.5, 2.5, 41);
  const CdfGrid g = kernel_cdf(pts, 1e-6, 1e-6, axis, axis);
  double worst = 0.0;
  for (std::size_t k = 0; k < axis.size(); ++k)
    for (std::size_t l = 0; l < axis.size(); ++l) {
      const double ecdf = ((pts.col(0).array() <= axis[k]) && (pts.col(1).array() <= axis[l])).cast<double>().mean();
      worst = std::max(worst, std::abs(g.values(k, l) - ecdf));
    }
  CHECK(worst <= 1e-6);

  const DgpSpec& s = twostep_spec();
  KernelConfig cfg;
  cfg.draws_per_obs = 1;
  cfg.bandwidth = std::make_pair(1e-6, 1e-6);
  const KernelResult r = kernel_smoothing_fit(twostep(300, 5), s.lattice, s.model, cfg, axis, axis);
  CHECK(r.points.rows() == 300);
  worst = 0.0;
  for (std::size_t k = 0; k < axis.size(); ++k)
    for (std::size_t l = 0; l < axis.size(); ++l) {
      const double ecdf =
          ((r.points.col(0).array() <= axis[k]) && (r.points.col(1).array() <= axis[l])).cast<double>().mean();
      worst = std::max(worst, std::abs(r.grid.values(k, l) - ecdf));
    }
  CHECK(worst <= 1e-6);
}

TEST_CASE("kernel cdf matches numerical integration of the density") {
  std::mt19937_64 gen(10);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  Eigen::MatrixXd pts(15, 2);
  for (auto& v : pts.reshaped()) v = u(gen);
  const double h1 = 0.4, h2 = 0.3;
  const std::vector<double> a1{-1.0, 0.3, 2.0}, a2{-0.5, 1.1};
  const CdfGrid g = kernel_cdf(pts, h1, h2, a1, a2);

  // The density is a sum of separable bumps, so each bump is integrated on
  // its own trapezoid mesh in each coordinate.
  const auto bump_integral = [](double centre, double h, double upper) {
    const double lo = centre - 12.0 * h;
    if (upper <= lo) return 0.0;
    const int m = 20000;
    const double step = (upper - lo) / m;
    double s = 0.0;
    for (int i = 0; i <= m; ++i) {
      const double z = (lo + i * step - centre) / h;
      const double w = (i == 0 || i == m) ? 0.5 : 1.0;
      s += w * std::exp(-0.5 * z * z) / (h * std::sqrt(2.0 * M_PI));
    }
    return s * step;
  };
  for (std::size_t k = 0; k < a1.size(); ++k)
    for (std::size_t l = 0; l < a2.size(); ++l) {
      double total = 0.0;
      for (Eigen::Index i = 0; i < pts.rows(); ++i)
        total += bump_integral(pts(i, 0), h1, a1[k]) * bump_integral(pts(i, 1), h2, a2[l]);
      total /= double(pts.rows());
      CHECK(std::abs(g.values(k, l) - total) <= 1e-6);
    }
}

TEST_CASE("kernel estimator is invariant to observation order") {
  const DgpSpec& s = twostep_spec();
  const Dataset d = twostep(300, 15);
  std::vector<std::size_t> order(d.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), std::mt19937_64(2));
  KernelConfig cfg;
  cfg.seed = 99;
  const auto axis = linspace(-2.5, 2.5, 20);
  const KernelResult a = kernel_smoothing_fit(d, s.lattice, s.model, cfg, axis, axis);
  const KernelResult b = kernel_smoothing_fit(d.rows(order), s.lattice, s.model, cfg, axis, axis);
  CHECK(a.h1 == b.h1);
  CHECK((a.grid.values - b.grid.values).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.grid.max_violation() <= 1e-9);
  CHECK(a.points.rows() == 3000);

  Dataset empty = d.rows(std::vector<std::size_t>{});
  CHECK_THROWS_AS((void)kernel_smoothing_fit(empty, s.lattice, s.model, cfg, axis, axis), DataError);
  cfg.draws_per_obs = 0;
  CHECK_THROWS_AS((void)kernel_smoothing_fit(d, s.lattice, s.model, cfg, axis, axis), UsageError);
}

TEST_CASE("both two-step estimators improve with sample size") {
  const DgpSpec& s = twostep_spec();
  const auto axis = linspace(-2.5, 2.5, 80);
  const auto errors = [&](std::size_t n) {
    const Dataset d = twostep(n, 700);
    GridInversionResult gi = grid_inversion_fit(d, s.lattice, s.model);
    const CdfGrid gi_grid = sample_cdf(
        [&](std::span<const double> e) { return interpolate(gi.grid, e[0], e[1]); }, axis, axis);
    KernelConfig kc;
    kc.seed = 1;
    const KernelResult k = kernel_smoothing_fit(d, s.lattice, s.model, kc, axis, axis);
    return std::make_pair(grid_rmse(gi_grid), grid_rmse(k.grid));
  };
  const auto small = errors(500), large = errors(10000);
  CAPTURE(small.first);
  CAPTURE(large.first);
  CAPTURE(small.second);
  CAPTURE(large.second);
  CHECK(large.first < small.first);
  CHECK(large.second < small.second);
}

TEST_CASE("bilinear interpolation") {
  CdfGrid g{{0.0, 1.0}, {0.0, 1.0}, Eigen::MatrixXd::Zero(2, 2)};
  g.values(1, 1) = 1.0;
  CHECK(interpolate(g, 0.5, 0.5) == doctest::Approx(0.25));
  CHECK(interpolate(g, 1.0, 1.0) == 1.0);
  CHECK(interpolate(g, 0.0, 1.0) == 0.0);
  CHECK(interpolate(g, -0.1, 5.0) == 0.0);
  CHECK(interpolate(g, 5.0, 5.0) == 1.0);
  CHECK(interpolate(g, 5.0, 0.5) == doctest::Approx(0.5));

  const auto axis = linspace(-2.5, 2.5, 80);
  const CdfGrid t = true_grid(axis, axis);
  for (std::size_t k = 0; k < axis.size(); k += 9)
    for (std::size_t l = 0; l < axis.size(); l += 7) CHECK(interpolate(t, axis[k], axis[l]) == t.values(k, l));
  std::mt19937_64 gen(12);
  std::uniform_real_distribution<double> u(-2.5, 2.5);
  double worst = 0.0;
  double prev = -1.0;
  for (int i = 0; i < 1000; ++i) {
    const double x = u(gen), y = u(gen);
    worst = std::max(worst, std::abs(interpolate(t, x, y) - oracle::bvn_owen(x, y, 0.6)));
  }
  CHECK(worst <= 5e-3);
  for (double x = -2.5; x <= 2.5; x += 0.013) {
    const double v = interpolate(t, x, 0.37);
    CHECK(v >= prev);
    prev = v;
  }
}

TEST_CASE("cdf grid validation and serialization") {
  const auto axis = linspace(-1.0, 1.0, 6);
  CdfGrid g = true_grid(axis, axis);
  CHECK(g.max_violation() == 0.0);
  CHECK_NOTHROW(g.validate());
  const CdfGrid back = cdf_grid_from_json(cdf_grid_to_json(g));
  CHECK(back.axis1 == g.axis1);
  CHECK((back.values - g.values).cwiseAbs().maxCoeff() == 0.0);
  const std::string csv = cdf_grid_to_csv(g);
  CHECK(csv.rfind("e1,e2,value\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 37);

  CdfGrid bad = g;
  bad.values(2, 2) = bad.values(2, 3) + 0.1;
  CHECK(bad.max_violation() > 0.0);
  CHECK_THROWS_AS(bad.validate(), UsageError);
  bad = g;
  bad.values(4, 4) = 1.5;
  CHECK_THROWS_AS(bad.validate(), UsageError);
  bad = g;
  bad.axis1[1] = bad.axis1[0];
  CHECK_THROWS_AS(bad.validate(), UsageError);
}

TEST_CASE("b-spline basis") {
  const BSplineBasis b(2, 3, -4.0, 4.0);
  CHECK(b.size() == 6);
  for (double x = -3.99; x < 4.0; x += 0.173) {
    const Eigen::VectorXd v = b.values(x);
    CHECK(v.sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(v.minCoeff() >= 0.0);
    CHECK(b.derivatives(x).sum() == doctest::Approx(0.0).scale(1.0));
    const double h = 1e-6;
    const Eigen::VectorXd fd = (b.values(x + h) - b.values(x - h)) / (2 * h);
    CHECK((fd - b.derivatives(x)).cwiseAbs().maxCoeff() <= 1e-5);
  }
  CHECK(b.values(-10.0)[0] == 1.0);
  CHECK(b.values(10.0)[5] == 1.0);
  CHECK_THROWS_AS(BSplineBasis(0, 3, -1.0, 1.0), UsageError);
  CHECK_THROWS_AS(BSplineBasis(2, 3, 1.0, -1.0), UsageError);
}

TEST_CASE("sieve fit satisfies its constraints and improves the likelihood") {
  const DgpSpec& s = twostep_spec();
  const Dataset d = twostep(1000, 33);
  SieveConfig cfg;
  cfg.fix_index = true;
  const SieveResult r = sieve_mle_fit(d, s.lattice, s.model, cfg);
  CHECK(r.min_slack >= -1e-9);
  const Eigen::MatrixXd& h = r.coefficients;
  CHECK(h.minCoeff() >= -1e-9);
  CHECK(h.maxCoeff() <= 1.0 + 1e-9);
  for (Eigen::Index a = 0; a < h.rows(); ++a)
    for (Eigen::Index b = 0; b < h.cols(); ++b) {
      if (a + 1 < h.rows()) CHECK(h(a, b) <= h(a + 1, b) + 1e-9);
      if (b + 1 < h.cols()) CHECK(h(a, b) <= h(a, b + 1) + 1e-9);
    }
  CHECK(h.row(0).cwiseAbs().maxCoeff() == 0.0);
  CHECK(h.col(0).cwiseAbs().maxCoeff() == 0.0);
  CHECK(h(h.rows() - 1, h.cols() - 1) == 1.0);
  CHECK(r.loglik >= r.initial_loglik);
  for (std::size_t k = 1; k < r.history.size(); ++k) CHECK(r.history[k] >= r.history[k - 1] - 1e-12);
  CHECK(r.grid.max_violation() <= 1e-9);

  const JointCdf independent = [](std::span<const double> e) {
    return oracle::normal_cdf(e[0]) * oracle::normal_cdf(e[1]);
  };
  const double misspecified = log_likelihood_cdf(d, s.lattice, s.model, independent);
  CHECK(r.loglik >= misspecified);
  const SplineCdf F(BSplineBasis(cfg.degree, cfg.interior_knots, cfg.knot_lo, cfg.knot_hi),
                    BSplineBasis(cfg.degree, cfg.interior_knots, cfg.knot_lo, cfg.knot_hi), r.coefficients);
  CHECK(log_likelihood_cdf(d, s.lattice, s.model, F.as_joint_cdf()) == doctest::Approx(r.loglik).epsilon(1e-10));
  CHECK(F(kInf, kInf) == 1.0);
  CHECK(F(-kInf, 0.3) == 0.0);
}

TEST_CASE("sieve with free index keeps its normalizations") {
  const DgpSpec& s = twostep_spec();
  const Dataset d = twostep(800, 34);
  IndexModel start{{Eigen::VectorXd::Constant(1, 1.0), Eigen::VectorXd::Constant(1, -1.0)}};
  SieveConfig cfg;
  cfg.max_outer = 30;
  const SieveResult r = sieve_mle_fit(d, s.lattice, start, cfg);
  CHECK(r.model.beta[0][0] == 1.0);
  CHECK(r.model.beta[1][0] == -1.0);
  CHECK(r.lattice.threshold(0, 1) == s.lattice.threshold(0, 1));
  CHECK(r.lattice.threshold(1, 1) == s.lattice.threshold(1, 1));
  CHECK(r.loglik >= r.initial_loglik);
  CHECK(r.min_slack >= -1e-9);

  IndexModel zero{{Eigen::VectorXd::Zero(1), Eigen::VectorXd::Constant(1, -1.0)}};
  CHECK_THROWS_AS((void)sieve_mle_fit(d, s.lattice, zero, cfg), UsageError);
  const LatticeSpec no_threshold({{}, {-0.8, 0.8}});
  Dataset collapsed = d;
  collapsed.outcomes.col(0).setOnes();
  CHECK_THROWS_AS((void)sieve_mle_fit(collapsed, no_threshold, s.model, cfg), UsageError);
}
