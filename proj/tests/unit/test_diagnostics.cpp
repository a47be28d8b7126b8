#include <doctest.h>

#include <random>

#include "lattice/diagnostics.hpp"
#include "lattice/simulation.hpp"

using namespace lattice;

namespace {

IdentificationLevel data_level(const std::string& id, std::size_t n = 10000) {
  const auto [spec, data] = builtin_dgp(id, n, 2718);
  return classify(data, spec.lattice, spec.model, std::get<GaussianErrors>(spec.errors).rho).level;
}

DgpSpec shared_probit(double beta, double alpha) {
  DgpSpec s;
  s.id = "shared";
  s.lattice = LatticeSpec({{alpha}, {alpha}});
  s.variables = {{"x", UniformLaw{-1.0, 1.0}, {}}};
  s.regressors = {{"x"}, {"x"}};
  s.model.beta = {Eigen::VectorXd::Constant(1, beta), Eigen::VectorXd::Constant(1, beta)};
  s.errors = GaussianErrors{0.3};
  return s;
}

}  // namespace

TEST_CASE("interval sets") {
  IntervalSet a{{{3.0, 4.0}, {0.0, 1.0}, {0.5, 2.0}}};
  a.normalize();
  CHECK(a.parts == std::vector<std::pair<double, double>>{{0.0, 2.0}, {3.0, 4.0}});
  CHECK(a.lo() == 0.0);
  CHECK(a.hi() == 4.0);
  const IntervalSet b = a.scaled(-2.0);
  CHECK(b.lo() == -8.0);
  CHECK(b.hi() == 0.0);
  IntervalSet pts{{{0.0, 0.0}, {10.0, 10.0}}};
  IntervalSet sum = pts.plus(IntervalSet::interval(-1.0, 1.0));
  sum.normalize();
  CHECK(sum.parts == std::vector<std::pair<double, double>>{{-1.0, 1.0}, {9.0, 11.0}});
  IntervalSet many;
  for (int i = 0; i < 100; ++i) many.parts.emplace_back(i * 10.0, i * 10.0);
  IntervalSet capped = many.plus(many, 50);
  capped.normalize();
  CHECK(capped.parts.size() == 1);
  CHECK(capped.lo() == 0.0);
  CHECK(capped.hi() == 1980.0);
}

TEST_CASE("rank check") {
  std::mt19937_64 gen(1);
  std::normal_distribution<double> nd;
  Eigen::MatrixXd X(200, 3);
  for (auto& v : X.reshaped()) v = nd(gen);
  CHECK(check_rank(X));
  Eigen::MatrixXd collinear = X;
  collinear.col(2) = 2.0 * X.col(0) - X.col(1);
  CHECK_FALSE(check_rank(collinear));
  Eigen::MatrixXd constant = X;
  constant.col(1).setConstant(3.0);
  CHECK_FALSE(check_rank(constant));
  Eigen::MatrixXd scaled = X;
  scaled.col(0) *= 1e8;
  scaled.col(1) *= 1e-6;
  CHECK(check_rank(scaled));
  Eigen::MatrixXd scaled_collinear = collinear;
  scaled_collinear.col(2) *= 1e-7;
  CHECK_FALSE(check_rank(scaled_collinear));
  Eigen::MatrixXd minimal(4, 3);
  for (auto& v : minimal.reshaped()) v = nd(gen);
  CHECK(check_rank(minimal));
  CHECK_FALSE(check_rank(minimal.topRows(3)));
}

TEST_CASE("semiparametric designs reach their nested levels") {
  CHECK(classify(builtin_spec("semiparam-1")).level == IdentificationLevel::params_only);
  CHECK(classify(builtin_spec("semiparam-2")).level == IdentificationLevel::plus_threshold_gaps);
  CHECK(classify(builtin_spec("semiparam-3")).level == IdentificationLevel::plus_marginals);
  CHECK(classify(builtin_spec("semiparam-4")).level == IdentificationLevel::plus_joint_cdf);
}

TEST_CASE("sample-based levels agree with the analytic ones") {
  CHECK(data_level("semiparam-1") == IdentificationLevel::params_only);
  CHECK(data_level("semiparam-2") == IdentificationLevel::plus_threshold_gaps);
  CHECK(data_level("semiparam-3") == IdentificationLevel::plus_marginals);
  CHECK(data_level("semiparam-4") == IdentificationLevel::plus_joint_cdf);
}

TEST_CASE("individual checks on the semiparametric designs") {
  const IdentificationInput d1 = analytic_input(builtin_spec("semiparam-1"));
  CHECK(d1.index_set[0].lo() == doctest::Approx(-0.75));
  CHECK(d1.index_set[0].hi() == doctest::Approx(0.75));
  for (const GapOverlap& g : check_threshold_gap_overlap(d1, 0)) CHECK_FALSE(g.overlaps);
  CHECK(check_index_variation(d1, 0));

  const IdentificationInput d2 = analytic_input(builtin_spec("semiparam-2"));
  const auto overlaps = check_threshold_gap_overlap(d2, 0);
  REQUIRE(overlaps.size() == 1);
  CHECK(overlaps[0].overlaps);
  CHECK(overlaps[0].lo < overlaps[0].hi);
  const double cov2 = check_coverage(d2, 0);
  CHECK(cov2 < 1.0 - kCoverageTolerance);
  CHECK(cov2 > 0.9);

  const IdentificationInput d3 = analytic_input(builtin_spec("semiparam-3"));
  CHECK(check_coverage(d3, 0) >= 1.0 - kCoverageTolerance);
  const auto shift3 = check_exclusive_shift(d3);
  CHECK_FALSE(shift3[0]);
  CHECK_FALSE(shift3[1]);

  const auto shift4 = check_exclusive_shift(analytic_input(builtin_spec("semiparam-4")));
  CHECK(shift4[0]);
  CHECK(shift4[1]);
}

TEST_CASE("reports are nested") {
  for (const auto& id : builtin_ids()) {
    CAPTURE(id);
    const IdentificationReport r = classify(builtin_spec(id));
    const int level = static_cast<int>(r.level);
    bool all_rank = true, all_var = true, all_gaps = true, all_cov = true;
    for (std::size_t d = 0; d < r.rank.size(); ++d) {
      all_rank = all_rank && r.rank[d];
      all_var = all_var && r.index_variation[d];
      all_gaps = all_gaps && r.gaps[d];
      all_cov = all_cov && r.coverage_ok[d];
    }
    if (level >= 1) CHECK((all_rank && all_var));
    if (level >= 2) CHECK(all_gaps);
    if (level >= 3) CHECK(all_cov);
    if (level >= 4) CHECK(r.joint);
    CHECK_FALSE(report_to_json(r).empty());
    CHECK(report_to_text(r).find(level_name(r.level)) != std::string::npos);
  }
}

TEST_CASE("a point-mass regressor covers almost nothing") {
  DgpSpec s = shared_probit(1.0, 0.0);
  s.variables[0].law = DiscreteLaw{{0.5}, {}};
  const IdentificationInput in = analytic_input(s);
  CHECK(check_coverage(in, 0) <= 1e-9);
  CHECK_FALSE(check_index_variation(in, 0));
  CHECK(classify(in).level == IdentificationLevel::unidentified);
}

TEST_CASE("exclusive regressor with zero coefficient does not shift") {
  DgpSpec s = builtin_spec("semiparam-4");
  s.model.beta[1][0] = 0.0;
  const auto shift = check_exclusive_shift(analytic_input(s));
  CHECK(shift[0]);
  CHECK_FALSE(shift[1]);
  s.model.beta[0][0] = 0.0;
  CHECK_FALSE(classify(s).joint);
}

TEST_CASE("correlation conditions") {
  const IdentificationInput pivot = analytic_input(shared_probit(0.0, 0.0));
  CHECK(check_rho_conditions(pivot).a);

  const IdentificationInput far = analytic_input(shared_probit(0.5, 3.0));
  const RhoConditions far_rc = check_rho_conditions(far);
  CHECK_FALSE(far_rc.a);
  CHECK_FALSE(far_rc.c);

  CHECK(check_rho_conditions(analytic_input(builtin_spec("param-design-2"))).c);
  CHECK(check_rho_conditions(analytic_input(builtin_spec("param-design-3"))).c);

  DgpSpec no_effect = builtin_spec("param-design-2");
  no_effect.model.beta[0][1] = 0.0;
  CHECK_FALSE(check_rho_conditions(analytic_input(no_effect)).c);

  const RhoConditions d1 = check_rho_conditions(analytic_input(builtin_spec("param-design-1")));
  CHECK(d1.a);
  CHECK(d1.b);
  CHECK_FALSE(d1.c);
}

TEST_CASE("sample-based correlation conditions on design 2") {
  const auto [spec, data] = builtin_dgp("param-design-2", 10000, 5);
  const IdentificationReport r = classify(data, spec.lattice, spec.model, 0.25);
  CHECK(r.source == "data");
  CHECK(r.rho.a);
  CHECK(r.rho.c);
  CHECK(r.rank[0]);
  CHECK(r.rank[1]);
}
