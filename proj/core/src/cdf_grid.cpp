#include "lattice/cdf_grid.hpp"

#include <algorithm>
#include <cmath>

#include "json_util.hpp"
#include "lattice/error.hpp"
#include "lattice/io.hpp"

namespace lattice {

double CdfGrid::max_violation() const {
  double worst = 0.0;
  const Eigen::Index K1 = values.rows();
  const Eigen::Index K2 = values.cols();
  for (Eigen::Index k = 0; k < K1; ++k)
    for (Eigen::Index l = 0; l < K2; ++l) {
      const double v = values(k, l);
      if (!std::isfinite(v)) return kInf;
      worst = std::max({worst, -v, v - 1.0});
      if (k > 0) worst = std::max(worst, values(k - 1, l) - v);
      if (l > 0) worst = std::max(worst, values(k, l - 1) - v);
    }
  return worst;
}

void CdfGrid::validate(double tol) const {
  if (axis1.empty() || axis2.empty()) throw UsageError("CDF grid has an empty axis");
  if (values.rows() != static_cast<Eigen::Index>(axis1.size()) || values.cols() != static_cast<Eigen::Index>(axis2.size()))
    throw UsageError("CDF grid values do not match the axes");
  for (const auto* axis : {&axis1, &axis2})
    for (std::size_t k = 0; k < axis->size(); ++k)
      if (!std::isfinite((*axis)[k]) || (k > 0 && !((*axis)[k] > (*axis)[k - 1])))
        throw UsageError("CDF grid axis is not finite and strictly increasing");
  const double v = max_violation();
  if (v > tol) throw UsageError("CDF grid violates monotonicity or [0,1] bounds by " + std::to_string(v));
}

namespace {

// Index k and weight w such that x = (1-w) axis[k] + w axis[k+1]; assumes
// axis.front() <= x <= axis.back().
std::pair<std::size_t, double> bracket(const std::vector<double>& axis, double x) {
  if (axis.size() == 1) return {0, 0.0};
  auto it = std::upper_bound(axis.begin(), axis.end(), x);
  std::size_t k = it == axis.begin() ? 0 : static_cast<std::size_t>(it - axis.begin()) - 1;
  k = std::min(k, axis.size() - 2);
  const double w = (x - axis[k]) / (axis[k + 1] - axis[k]);
  return {k, std::clamp(w, 0.0, 1.0)};
}

}  // namespace

double interpolate(const CdfGrid& grid, double e1, double e2) {
  if (std::isnan(e1) || std::isnan(e2)) throw UsageError("interpolate: NaN coordinate");
  if (e1 < grid.axis1.front() || e2 < grid.axis2.front()) return 0.0;
  e1 = std::min(e1, grid.axis1.back());
  e2 = std::min(e2, grid.axis2.back());
  const auto [k, u] = bracket(grid.axis1, e1);
  const auto [l, v] = bracket(grid.axis2, e2);
  const auto K = static_cast<Eigen::Index>(k);
  const auto L = static_cast<Eigen::Index>(l);
  const Eigen::Index K1 = std::min<Eigen::Index>(K + 1, grid.values.rows() - 1);
  const Eigen::Index L1 = std::min<Eigen::Index>(L + 1, grid.values.cols() - 1);
  return (1 - u) * (1 - v) * grid.values(K, L) + u * (1 - v) * grid.values(K1, L) + (1 - u) * v * grid.values(K, L1) +
         u * v * grid.values(K1, L1);
}

std::vector<double> linspace(double lo, double hi, std::size_t k) {
  if (k == 0) return {};
  if (k == 1) return {lo};
  std::vector<double> out(k);
  for (std::size_t i = 0; i < k; ++i) out[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(k - 1);
  out.back() = hi;
  return out;
}

CdfGrid sample_cdf(const JointCdf& F, const std::vector<double>& axis1, const std::vector<double>& axis2) {
  CdfGrid g{axis1, axis2, Eigen::MatrixXd(static_cast<Eigen::Index>(axis1.size()), static_cast<Eigen::Index>(axis2.size()))};
  double p[2];
  for (std::size_t k = 0; k < axis1.size(); ++k)
    for (std::size_t l = 0; l < axis2.size(); ++l) {
      p[0] = axis1[k];
      p[1] = axis2[l];
      g.values(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(l)) = F(p);
    }
  return g;
}

std::string cdf_grid_to_csv(const CdfGrid& grid) {
  std::string out = "e1,e2,value\n";
  for (std::size_t k = 0; k < grid.axis1.size(); ++k)
    for (std::size_t l = 0; l < grid.axis2.size(); ++l)
      out += format_double(grid.axis1[k]) + "," + format_double(grid.axis2[l]) + "," +
             format_double(grid.values(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(l))) + "\n";
  return out;
}

std::string cdf_grid_to_json(const CdfGrid& grid) {
  detail::json j;
  j["axis1"] = grid.axis1;
  j["axis2"] = grid.axis2;
  std::vector<double> v;
  v.reserve(static_cast<std::size_t>(grid.values.size()));
  for (Eigen::Index k = 0; k < grid.values.rows(); ++k)
    for (Eigen::Index l = 0; l < grid.values.cols(); ++l) v.push_back(grid.values(k, l));
  j["values"] = v;
  return j.dump();
}

CdfGrid cdf_grid_from_json(std::string_view text) {
  const auto j = detail::parse_json(text, "CDF grid");
  CdfGrid g;
  g.axis1 = detail::get_field<std::vector<double>>(j, "axis1", "CDF grid");
  g.axis2 = detail::get_field<std::vector<double>>(j, "axis2", "CDF grid");
  const auto v = detail::get_field<std::vector<double>>(j, "values", "CDF grid");
  if (v.size() != g.axis1.size() * g.axis2.size()) throw UsageError("CDF grid: values length does not match axes");
  g.values.resize(static_cast<Eigen::Index>(g.axis1.size()), static_cast<Eigen::Index>(g.axis2.size()));
  std::size_t at = 0;
  for (Eigen::Index k = 0; k < g.values.rows(); ++k)
    for (Eigen::Index l = 0; l < g.values.cols(); ++l) g.values(k, l) = v[at++];
  g.validate(1e-9);
  return g;
}

}  // namespace lattice
