#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <map>
#include <numeric>

#include "lattice/distributions.hpp"
#include "lattice/error.hpp"
#include "lattice/semiparametric.hpp"

namespace lattice {

namespace {

std::uint64_t hash_double(std::uint64_t h, double x) {
  std::uint64_t bits = 0;
  std::memcpy(&bits, &x, sizeof bits);
  return splitmix64(h ^ bits);
}

double sample_sd(const Eigen::VectorXd& v) {
  if (v.size() < 2) return 0.0;
  const double m = v.mean();
  return std::sqrt((v.array() - m).square().sum() / static_cast<double>(v.size() - 1));
}

Eigen::MatrixXd kernel_weights(const Eigen::VectorXd& p, double h, const std::vector<double>& axis) {
  Eigen::MatrixXd W(static_cast<Eigen::Index>(axis.size()), p.size());
  for (Eigen::Index j = 0; j < p.size(); ++j)
    for (std::size_t k = 0; k < axis.size(); ++k)
      W(static_cast<Eigen::Index>(k), j) = std_normal_cdf((axis[k] - p[j]) / h);
  return W;
}

}  // namespace

CdfGrid kernel_cdf(const Eigen::MatrixXd& points, double h1, double h2, const std::vector<double>& axis1,
                   const std::vector<double>& axis2) {
  if (points.rows() == 0) throw DataError("kernel CDF of an empty point set");
  if (!(h1 > 0.0) || !(h2 > 0.0)) throw UsageError("kernel bandwidths must be positive");
  const Eigen::MatrixXd W1 = kernel_weights(points.col(0), h1, axis1);
  const Eigen::MatrixXd W2 = kernel_weights(points.col(1), h2, axis2);
  CdfGrid g{axis1, axis2, (W1 * W2.transpose()) / static_cast<double>(points.rows())};
  // Rounding in the product can leave ulp-level dips; the exact values are monotone.
  for (Eigen::Index k = 0; k < g.values.rows(); ++k)
    for (Eigen::Index l = 0; l < g.values.cols(); ++l) {
      double v = std::clamp(g.values(k, l), 0.0, 1.0);
      if (k > 0) v = std::max(v, g.values(k - 1, l));
      if (l > 0) v = std::max(v, g.values(k, l - 1));
      g.values(k, l) = v;
    }
  return g;
}

KernelResult kernel_smoothing_fit(const Dataset& data, const LatticeSpec& spec, const IndexModel& model,
                                  const KernelConfig& config, const std::vector<double>& axis1,
                                  const std::vector<double>& axis2) {
  if (data.size() == 0) throw DataError("kernel smoothing: empty dataset");
  if (config.draws_per_obs < 1) throw UsageError("kernel smoothing needs at least one draw per observation");
  if (spec.dims() != 2) throw UsageError("kernel smoothing is implemented for two dimensions");
  if (!(config.truncation > 0.0) || !(config.scale1 > 0.0) || !(config.scale2 > 0.0))
    throw UsageError("kernel truncation and scales must be positive");
  data.validate(spec);
  data.validate(model);

  const std::size_t n = data.size();
  std::vector<Rectangle> rects;
  rects.reserve(n);
  for (std::size_t i = 0; i < n; ++i) rects.push_back(implied_rectangle(data, i, spec, model));

  // Truncation box: +-truncation scale units, widened to every finite bound.
  double box_lo[2] = {-config.truncation * config.scale1, -config.truncation * config.scale2};
  double box_hi[2] = {config.truncation * config.scale1, config.truncation * config.scale2};
  for (const auto& r : rects)
    for (std::size_t d = 0; d < 2; ++d) {
      if (std::isfinite(r.lower[d])) box_lo[d] = std::min(box_lo[d], r.lower[d]), box_hi[d] = std::max(box_hi[d], r.lower[d]);
      if (std::isfinite(r.upper[d])) box_lo[d] = std::min(box_lo[d], r.upper[d]), box_hi[d] = std::max(box_hi[d], r.upper[d]);
    }

  // Canonical order of rectangles so seeds and the pool are order independent.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const auto key = [&](std::size_t i) {
    return std::array<double, 4>{rects[i].lower[0], rects[i].upper[0], rects[i].lower[1], rects[i].upper[1]};
  };
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return key(a) < key(b); });

  const std::size_t S = config.draws_per_obs;
  KernelResult out;
  out.points.resize(static_cast<Eigen::Index>(n * S), 2);
  Eigen::Index at = 0;
  std::uint64_t dup = 0;
  for (std::size_t pos = 0; pos < n; ++pos) {
    const std::size_t i = order[pos];
    dup = pos > 0 && key(order[pos - 1]) == key(i) ? dup + 1 : 0;
    std::uint64_t h = config.seed;
    for (double v : key(i)) h = hash_double(h, v);
    Rng rng(derive_seed(h, dup));
    double lo[2];
    double hi[2];
    for (std::size_t d = 0; d < 2; ++d) {
      lo[d] = std::isfinite(rects[i].lower[d]) ? rects[i].lower[d] : box_lo[d];
      hi[d] = std::isfinite(rects[i].upper[d]) ? rects[i].upper[d] : box_hi[d];
    }
    for (std::size_t s = 0; s < S; ++s, ++at)
      for (std::size_t d = 0; d < 2; ++d) out.points(at, static_cast<Eigen::Index>(d)) = lo[d] + (hi[d] - lo[d]) * rng.uniform();
  }

  if (config.bandwidth) {
    out.h1 = config.bandwidth->first;
    out.h2 = config.bandwidth->second;
  } else {
    const double m = static_cast<double>(out.points.rows());
    const double factor = std::pow(m, -1.0 / 6.0);
    out.h1 = sample_sd(out.points.col(0)) * factor;
    out.h2 = sample_sd(out.points.col(1)) * factor;
    if (!(out.h1 > 0.0) || !(out.h2 > 0.0)) throw DataError("kernel smoothing: pooled draws have zero spread");
  }
  out.grid = kernel_cdf(out.points, out.h1, out.h2, axis1, axis2);
  return out;
}

}  // namespace lattice
