#include <algorithm>
#include <cmath>
#include <sstream>

#include "lattice/error.hpp"
#include "lattice/projection.hpp"
#include "lattice/semiparametric.hpp"

namespace lattice {

namespace {

struct Weight {
  Eigen::Index index;
  double w;
};

// Expresses a corner coordinate as a combination of unknown indices along one
// axis. +inf maps to the marginal slot K. Returns false for -inf.
bool axis_weights(const std::vector<double>& axis, double c, int dim, std::size_t obs, Weight out[2], int& count) {
  count = 0;
  if (c == -kInf) return false;
  if (c == kInf) {
    out[count++] = {static_cast<Eigen::Index>(axis.size()), 1.0};
    return true;
  }
  const double span = axis.back() - axis.front();
  const double slack = 1e-12 * std::max(1.0, std::abs(span));
  if (c < axis.front() - slack || c > axis.back() + slack) {
    std::ostringstream msg;
    msg << "observation " << (obs + 1) << ": implied bound " << c << " in dimension " << dim
        << " lies outside the grid hull [" << axis.front() << ", " << axis.back() << "]";
    throw DataError(msg.str());
  }
  const auto it = std::lower_bound(axis.begin(), axis.end(), c);
  if (it != axis.end() && *it == c) {
    out[count++] = {static_cast<Eigen::Index>(it - axis.begin()), 1.0};
    return true;
  }
  if (it == axis.begin()) {
    out[count++] = {0, 1.0};
    return true;
  }
  if (it == axis.end()) {
    out[count++] = {static_cast<Eigen::Index>(axis.size()) - 1, 1.0};
    return true;
  }
  const auto k = static_cast<Eigen::Index>(it - axis.begin()) - 1;
  const double w = (c - axis[static_cast<std::size_t>(k)]) / (*it - axis[static_cast<std::size_t>(k)]);
  if (w > 0.0) out[count++] = {k + 1, w};
  if (w < 1.0) out[count++] = {k, 1.0 - w};
  return true;
}

std::vector<double> unique_sorted(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

}  // namespace

std::pair<std::vector<double>, std::vector<double>> implied_bound_axes(const Dataset& data, const LatticeSpec& spec,
                                                                       const IndexModel& model, DesignRows rows) {
  std::vector<double> b[2];
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (rows == DesignRows::all_cells) {
      for (std::size_t d = 0; d < 2; ++d) {
        const double idx = data.index(i, d, model);
        for (double a : spec.finite_thresholds(d)) b[d].push_back(a - idx);
      }
      continue;
    }
    const Rectangle r = implied_rectangle(data, i, spec, model);
    for (std::size_t d = 0; d < 2; ++d) {
      if (std::isfinite(r.lower[d])) b[d].push_back(r.lower[d]);
      if (std::isfinite(r.upper[d])) b[d].push_back(r.upper[d]);
    }
  }
  return {unique_sorted(std::move(b[0])), unique_sorted(std::move(b[1]))};
}

DesignSystem build_design_system(const Dataset& data, const LatticeSpec& spec, const IndexModel& model,
                                 const std::vector<double>& axis1, const std::vector<double>& axis2, DesignRows rows) {
  if (spec.dims() != 2 || data.dims() != 2) throw UsageError("grid inversion is implemented for two dimensions");
  if (axis1.empty() || axis2.empty()) throw UsageError("grid inversion needs non-empty axes");
  data.validate(spec);
  data.validate(model);
  DesignSystem sys;
  sys.axis1 = axis1;
  sys.axis2 = axis2;
  sys.observations = data.size();
  const std::vector<CellIndex> cells = rows == DesignRows::all_cells ? all_cells(spec) : std::vector<CellIndex>{};

  std::vector<Eigen::Triplet<double>> trip;
  std::vector<double> target;
  std::vector<double> indicator;
  Eigen::Index row = 0;
  Weight w1[2];
  Weight w2[2];
  int n1 = 0;
  int n2 = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double idx[2] = {data.index(i, 0, model), data.index(i, 1, model)};
    const CellIndex observed = data.outcome(i);
    const auto emit = [&](const CellIndex& cell) {
      const double y = cell == observed ? 1.0 : 0.0;
      double constant = 0.0;
      for (int l1 = 0; l1 < 2; ++l1) {
        const double c1 = spec.threshold(0, cell[0] - l1) - idx[0];
        if (!axis_weights(axis1, c1, 1, i, w1, n1)) continue;
        for (int l2 = 0; l2 < 2; ++l2) {
          const double c2 = spec.threshold(1, cell[1] - l2) - idx[1];
          if (!axis_weights(axis2, c2, 2, i, w2, n2)) continue;
          const double sign = (l1 + l2) % 2 == 0 ? 1.0 : -1.0;
          for (int a = 0; a < n1; ++a)
            for (int b = 0; b < n2; ++b) {
              if (w1[a].index == sys.rows1() - 1 && w2[b].index == sys.rows2() - 1) {
                constant += sign * w1[a].w * w2[b].w;
              } else {
                trip.emplace_back(row, sys.unknown(w1[a].index, w2[b].index), sign * w1[a].w * w2[b].w);
              }
            }
        }
      }
      target.push_back(y - constant);
      indicator.push_back(y);
      sys.observation.push_back(i);
      ++row;
    };
    if (rows == DesignRows::all_cells) {
      for (const auto& c : cells) emit(c);
    } else {
      emit(observed);
    }
  }
  sys.A.resize(row, sys.rows1() * sys.rows2());
  sys.A.setFromTriplets(trip.begin(), trip.end());
  sys.A.prune(0.0);
  sys.target = Eigen::Map<Eigen::VectorXd>(target.data(), row);
  sys.indicator = Eigen::Map<Eigen::VectorXd>(indicator.data(), row);
  return sys;
}

namespace {

using Mat = Eigen::MatrixXd;
using Mask = Eigen::Matrix<unsigned char, Eigen::Dynamic, Eigen::Dynamic>;

// First differences of the finite block along both axes.
struct Roughness {
  Eigen::Index K1;
  Eigen::Index K2;

  [[nodiscard]] double squared(const Mat& phi) const {
    const auto B = phi.topLeftCorner(K1, K2);
    double s = 0.0;
    if (K1 > 1) s += (B.bottomRows(K1 - 1) - B.topRows(K1 - 1)).squaredNorm();
    if (K2 > 1) s += (B.rightCols(K2 - 1) - B.leftCols(K2 - 1)).squaredNorm();
    return s;
  }
  // D'D phi on the full augmented array.
  [[nodiscard]] Mat gram(const Mat& phi) const {
    Mat g = Mat::Zero(phi.rows(), phi.cols());
    const auto B = phi.topLeftCorner(K1, K2);
    if (K1 > 1) {
      const Mat d = B.bottomRows(K1 - 1) - B.topRows(K1 - 1);
      g.block(1, 0, K1 - 1, K2) += d;
      g.block(0, 0, K1 - 1, K2) -= d;
    }
    if (K2 > 1) {
      const Mat d = B.rightCols(K2 - 1) - B.leftCols(K2 - 1);
      g.block(0, 1, K1, K2 - 1) += d;
      g.block(0, 0, K1, K2 - 1) -= d;
    }
    return g;
  }
};

Eigen::Map<const Eigen::VectorXd> flat(const Mat& m) { return {m.data(), m.size()}; }

Mat cumulate(const Mat& m) {
  Mat c = m;
  for (Eigen::Index k = 1; k < c.rows(); ++k) c.row(k) += c.row(k - 1);
  for (Eigen::Index l = 1; l < c.cols(); ++l) c.col(l) += c.col(l - 1);
  return c;
}

// Adjoint of cumulate: reverse cumulative sums.
Mat cumulate_adjoint(const Mat& g) {
  Mat c = g;
  for (Eigen::Index k = c.rows() - 2; k >= 0; --k) c.row(k) += c.row(k + 1);
  for (Eigen::Index l = c.cols() - 2; l >= 0; --l) c.col(l) += c.col(l + 1);
  return c;
}

}  // namespace

GridInversionResult solve_design_system(const DesignSystem& sys, const GridInversionConfig& config) {
  if (!(config.smoothness_lambda >= 0.0)) throw UsageError("smoothness_lambda must be nonnegative");
  const Eigen::Index R1 = sys.rows1();
  const Eigen::Index R2 = sys.rows2();
  const Roughness rough{R1 - 1, R2 - 1};
  const double inv_n = 1.0 / static_cast<double>(std::max<std::size_t>(sys.observations, 1));
  const double lambda = config.smoothness_lambda;
  const bool proper = config.feasible_set == FeasibleSet::proper_cdf;

  Mask fixed = Mask::Zero(R1, R2);
  fixed(R1 - 1, R2 - 1) = 1;

  const auto objective_of = [&](const Mat& phi, double* residual) {
    const Eigen::VectorXd r = sys.A * flat(phi) - sys.target;
    const double res = inv_n * r.squaredNorm();
    if (residual) *residual = res;
    return res + lambda * rough.squared(phi);
  };
  const auto gradient_of = [&](const Mat& phi) {
    const Eigen::VectorXd r = sys.A * flat(phi) - sys.target;
    const Eigen::VectorXd ga = (2.0 * inv_n) * (sys.A.transpose() * r);
    Mat g = Eigen::Map<const Mat>(ga.data(), R1, R2);
    if (lambda > 0.0) g += 2.0 * lambda * rough.gram(phi);
    return g;
  };
  const auto curvature = [&](const Mat& d) {
    return inv_n * (sys.A * flat(d)).squaredNorm() + lambda * rough.squared(d);
  };

  // Variable x: phi itself, or cell masses m with phi = cumulate(m).
  const auto to_phi = [&](const Mat& x) { return proper ? cumulate(x) : x; };
  const auto project = [&](Mat& x) {
    if (proper) {
      Eigen::Map<Eigen::VectorXd> v(x.data(), x.size());
      project_simplex(v, 1.0);
    } else {
      DykstraOptions opt;
      opt.max_iterations = 200;
      opt.tolerance = 1e-12;
      project_monotone_box(x, 0.0, 1.0, &fixed, opt);
      x(R1 - 1, R2 - 1) = 1.0;
    }
  };

  Mat x(R1, R2);
  if (proper) {
    x.setConstant(1.0 / static_cast<double>(R1 * R2));
  } else {
    for (Eigen::Index k = 0; k < R1; ++k)
      for (Eigen::Index l = 0; l < R2; ++l)
        x(k, l) = static_cast<double>(k + 1) / static_cast<double>(R1) * static_cast<double>(l + 1) /
                  static_cast<double>(R2);
  }

  GridInversionResult res;
  Mat phi = to_phi(x);
  double f = objective_of(phi, nullptr);
  res.initial_objective = f;
  res.history.push_back(f);

  Mat g_phi = gradient_of(phi);
  Mat g = proper ? cumulate_adjoint(g_phi) : g_phi;
  double step = 1.0;
  {
    // Initial step from the curvature along the gradient.
    const Mat gp = to_phi(g);
    const double c = curvature(gp);
    if (c > 0.0) step = g.squaredNorm() / (2.0 * c);
  }
  Mat x_prev;
  Mat g_prev;
  int quiet = 0;
  for (int it = 0; it < config.max_iterations; ++it) {
    Mat z = x - step * g;
    project(z);
    const Mat d = z - x;
    const double dd = d.cwiseAbs().maxCoeff();
    if (dd <= 1e-14) {
      res.converged = true;
      break;
    }
    const Mat dphi = to_phi(d);
    const double slope = (g.array() * d.array()).sum();
    const double curv = curvature(dphi);
    double t = 1.0;
    if (curv > 0.0) t = std::clamp(-slope / (2.0 * curv), 0.0, 1.0);
    if (!(slope < 0.0) || t <= 0.0) {
      res.converged = true;
      break;
    }
    x_prev = x;
    g_prev = g;
    x += t * d;
    phi = to_phi(x);
    const double f_new = objective_of(phi, nullptr);
    g_phi = gradient_of(phi);
    g = proper ? cumulate_adjoint(g_phi) : g_phi;
    res.iterations = it + 1;
    res.history.push_back(f_new);
    const double decrease = f - f_new;
    f = f_new;
    quiet = decrease <= config.tolerance * std::max(1e-12, std::abs(f)) ? quiet + 1 : 0;
    if (quiet >= 5) {
      res.converged = true;
      break;
    }
    // Barzilai-Borwein step for the next trial point.
    const Mat s = x - x_prev;
    const Mat y = g - g_prev;
    const double sy = (s.array() * y.array()).sum();
    if (sy > 0.0) step = s.squaredNorm() / sy;
  }

  if (!proper) {
    // The iterate is already feasible; re-project to clean rounding.
    Mat clean = phi;
    project_monotone_box(clean, 0.0, 1.0, &fixed);
    clean(R1 - 1, R2 - 1) = 1.0;
    phi = clean;
  } else {
    phi = phi.cwiseMax(0.0).cwiseMin(1.0);
  }
  res.objective = objective_of(phi, &res.residual);
  res.roughness = std::sqrt(rough.squared(phi));
  res.grid.axis1 = sys.axis1;
  res.grid.axis2 = sys.axis2;
  res.grid.values = phi.topLeftCorner(R1 - 1, R2 - 1);
  res.margin1 = phi.col(R2 - 1).head(R1 - 1);
  res.margin2 = phi.row(R1 - 1).head(R2 - 1).transpose();
  return res;
}

GridInversionResult grid_inversion_fit(const Dataset& data, const LatticeSpec& spec, const IndexModel& model,
                                       const GridInversionConfig& config) {
  if (data.size() == 0) throw DataError("grid inversion: empty dataset");
  std::vector<double> a1;
  std::vector<double> a2;
  if (config.grid_source == GridSource::implied_bounds) {
    std::tie(a1, a2) = implied_bound_axes(data, spec, model, config.rows);
  } else if (!config.axis1.empty() && !config.axis2.empty()) {
    a1 = config.axis1;
    a2 = config.axis2;
  } else {
    const auto [b1, b2] = implied_bound_axes(data, spec, model, config.rows);
    if (b1.empty() || b2.empty()) throw DataError("grid inversion: no finite implied bounds");
    const std::size_t K = std::max<std::size_t>(config.nodes, 2);
    const auto span = [K](const std::vector<double>& b) {
      const double pad = b.front() == b.back() ? 0.5 : 0.0;
      return linspace(b.front() - pad, b.back() + pad, K);
    };
    a1 = config.axis1.empty() ? span(b1) : config.axis1;
    a2 = config.axis2.empty() ? span(b2) : config.axis2;
  }
  const DesignSystem sys = build_design_system(data, spec, model, a1, a2, config.rows);
  return solve_design_system(sys, config);
}

}  // namespace lattice
