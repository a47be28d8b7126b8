#include "lattice/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lattice/error.hpp"

namespace lattice {

LatticeSpec::LatticeSpec(std::vector<std::vector<double>> thresholds) : thresholds_(std::move(thresholds)) {
  if (thresholds_.size() < 2) throw UsageError("lattice needs at least two dimensions");
  for (std::size_t d = 0; d < thresholds_.size(); ++d) {
    const auto& t = thresholds_[d];
    for (std::size_t j = 0; j < t.size(); ++j) {
      if (!std::isfinite(t[j]))
        throw UsageError("threshold " + std::to_string(j + 1) + " of dimension " + std::to_string(d + 1) +
                         " is not finite");
      if (j > 0 && !(t[j] > t[j - 1]))
        throw UsageError("thresholds of dimension " + std::to_string(d + 1) + " must be strictly increasing");
    }
  }
}

double LatticeSpec::threshold(std::size_t d, int j) const {
  const auto& t = thresholds_.at(d);
  if (j <= 0) return -kInf;
  if (j > static_cast<int>(t.size())) return kInf;
  return t[static_cast<std::size_t>(j - 1)];
}

std::size_t LatticeSpec::cell_count() const {
  std::size_t n = 1;
  for (std::size_t d = 0; d < dims(); ++d) n *= static_cast<std::size_t>(categories(d));
  return n;
}

void IndexModel::validate() const {
  for (std::size_t d = 0; d < beta.size(); ++d) {
    if (beta[d].size() < 1) throw UsageError("dimension " + std::to_string(d + 1) + " has no coefficients");
    if (!beta[d].allFinite()) throw UsageError("dimension " + std::to_string(d + 1) + " has non-finite coefficients");
  }
}

CellIndex Dataset::outcome(std::size_t i) const {
  CellIndex c;
  c.j.resize(dims());
  for (std::size_t d = 0; d < dims(); ++d) c.j[d] = outcomes(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d));
  return c;
}

double Dataset::index(std::size_t i, std::size_t d, const IndexModel& model) const {
  return covariates[d].row(static_cast<Eigen::Index>(i)).dot(model.beta[d]);
}

void Dataset::validate(const LatticeSpec& spec) const {
  if (dims() != spec.dims())
    throw DataError("dataset has " + std::to_string(dims()) + " dimensions, lattice has " +
                    std::to_string(spec.dims()));
  if (static_cast<std::size_t>(outcomes.cols()) != dims()) throw DataError("outcome matrix has wrong column count");
  for (std::size_t d = 0; d < dims(); ++d) {
    if (covariates[d].rows() != outcomes.rows())
      throw DataError("covariates of dimension " + std::to_string(d + 1) + " have " +
                      std::to_string(covariates[d].rows()) + " rows, outcomes have " + std::to_string(outcomes.rows()));
    const int m = spec.categories(d);
    for (Eigen::Index i = 0; i < outcomes.rows(); ++i) {
      const int j = outcomes(i, static_cast<Eigen::Index>(d));
      if (j < 1 || j > m)
        throw DataError("observation " + std::to_string(i + 1) + ": category " + std::to_string(j) +
                        " out of range 1.." + std::to_string(m) + " in dimension " + std::to_string(d + 1));
    }
  }
}

void Dataset::validate(const IndexModel& model) const {
  if (model.dims() != dims())
    throw DataError("model has " + std::to_string(model.dims()) + " dimensions, dataset has " +
                    std::to_string(dims()));
  for (std::size_t d = 0; d < dims(); ++d) {
    if (covariates[d].cols() != model.beta[d].size())
      throw DataError("dimension " + std::to_string(d + 1) + ": " + std::to_string(covariates[d].cols()) +
                      " covariates but " + std::to_string(model.beta[d].size()) + " coefficients");
  }
}

Dataset Dataset::rows(std::span<const std::size_t> which) const {
  Dataset out;
  out.names = names;
  out.covariates.resize(dims());
  out.outcomes.resize(static_cast<Eigen::Index>(which.size()), outcomes.cols());
  for (std::size_t d = 0; d < dims(); ++d) out.covariates[d].resize(static_cast<Eigen::Index>(which.size()), covariates[d].cols());
  for (std::size_t r = 0; r < which.size(); ++r) {
    const auto src = static_cast<Eigen::Index>(which[r]);
    const auto dst = static_cast<Eigen::Index>(r);
    out.outcomes.row(dst) = outcomes.row(src);
    for (std::size_t d = 0; d < dims(); ++d) out.covariates[d].row(dst) = covariates[d].row(src);
  }
  return out;
}

bool Rectangle::contains(std::span<const double> point) const {
  for (std::size_t d = 0; d < lower.size(); ++d)
    if (!(point[d] > lower[d] && point[d] <= upper[d])) return false;
  return true;
}

JointCdf gaussian_cdf(double rho) {
  const Correlation r(rho);
  return [rho = r.value()](std::span<const double> e) {
    if (e.size() != 2) throw UsageError("gaussian_cdf is bivariate");
    return bvn_cdf(e[0], e[1], rho);
  };
}

JointCdf independent_cdf(std::vector<Law> margins) {
  for (const Law& l : margins) validate(l);
  return [margins = std::move(margins)](std::span<const double> e) {
    if (e.size() != margins.size()) throw UsageError("independent_cdf: dimension mismatch");
    double p = 1.0;
    for (std::size_t d = 0; d < e.size(); ++d) p *= law_cdf(margins[d], e[d]);
    return p;
  };
}

CellIndex categorize(std::span<const double> latent, const LatticeSpec& spec) {
  if (latent.size() != spec.dims()) throw UsageError("categorize: latent vector has wrong length");
  CellIndex cell;
  cell.j.resize(spec.dims());
  for (std::size_t d = 0; d < spec.dims(); ++d) {
    const auto& t = spec.finite_thresholds(d);
    // first threshold >= latent; equality keeps the value in the lower category.
    const auto it = std::lower_bound(t.begin(), t.end(), latent[d]);
    cell.j[d] = static_cast<int>(it - t.begin()) + 1;
  }
  return cell;
}

Rectangle implied_rectangle(const Dataset& data, std::size_t i, const LatticeSpec& spec, const IndexModel& model) {
  if (data.dims() != spec.dims() || model.dims() != spec.dims())
    throw UsageError("implied_rectangle: dimension mismatch between data, lattice and model");
  Rectangle r;
  r.lower.resize(spec.dims());
  r.upper.resize(spec.dims());
  for (std::size_t d = 0; d < spec.dims(); ++d) {
    if (data.covariates[d].cols() != model.beta[d].size())
      throw UsageError("implied_rectangle: covariate count mismatch in dimension " + std::to_string(d + 1));
    const double v = data.index(i, d, model);
    const int j = data.outcomes(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d));
    r.lower[d] = spec.threshold(d, j - 1) - v;
    r.upper[d] = spec.threshold(d, j) - v;
  }
  return r;
}

double cell_probability(const CellIndex& cell, std::span<const double> indices, const LatticeSpec& spec,
                        const JointCdf& F) {
  const std::size_t D = spec.dims();
  if (cell.dims() != D || indices.size() != D) throw UsageError("cell_probability: dimension mismatch");
  std::vector<double> point(D);
  double total = 0.0;
  for (std::size_t mask = 0; mask < (std::size_t{1} << D); ++mask) {
    bool zero = false;
    int parity = 0;
    for (std::size_t d = 0; d < D; ++d) {
      const bool lower = ((mask >> d) & 1U) != 0;
      parity += lower ? 1 : 0;
      const double alpha = spec.threshold(d, cell[d] - (lower ? 1 : 0));
      if (alpha == -kInf) {
        zero = true;
        break;
      }
      point[d] = alpha - indices[d];
    }
    if (zero) continue;
    const double f = F(point);
    if (!(f >= 0.0 && f <= 1.0)) throw DataError("joint CDF returned " + std::to_string(f) + ", outside [0, 1]");
    total += (parity % 2 == 0) ? f : -f;
  }
  return std::clamp(total, 0.0, 1.0);
}

double cell_probability(const CellIndex& cell, const Dataset& data, std::size_t i, const LatticeSpec& spec,
                        const IndexModel& model, const JointCdf& F) {
  std::vector<double> idx(spec.dims());
  for (std::size_t d = 0; d < spec.dims(); ++d) idx[d] = data.index(i, d, model);
  return cell_probability(cell, idx, spec, F);
}

std::vector<CellIndex> all_cells(const LatticeSpec& spec) {
  std::vector<CellIndex> out;
  CellIndex c;
  c.j.assign(spec.dims(), 1);
  for (;;) {
    out.push_back(c);
    std::size_t d = spec.dims();
    while (d > 0) {
      --d;
      if (c.j[d] < spec.categories(d)) {
        ++c.j[d];
        for (std::size_t e = d + 1; e < spec.dims(); ++e) c.j[e] = 1;
        break;
      }
      if (d == 0) return out;
    }
  }
}

}  // namespace lattice
