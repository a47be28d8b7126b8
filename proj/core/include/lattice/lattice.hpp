#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lattice/distributions.hpp"

namespace lattice {

/// Per-dimension ordered thresholds. Category j of dimension d (1-based)
/// is the interval (alpha_{j-1}, alpha_j] with alpha_0 = -inf and
/// alpha_{M_d} = +inf implied, never stored.
class LatticeSpec {
 public:
  LatticeSpec() = default;
  explicit LatticeSpec(std::vector<std::vector<double>> thresholds);

  [[nodiscard]] std::size_t dims() const noexcept { return thresholds_.size(); }
  /// M_d, the number of categories in dimension d.
  [[nodiscard]] int categories(std::size_t d) const { return static_cast<int>(thresholds_.at(d).size()) + 1; }
  /// alpha_j^(d) for j in 0..M_d, returning the infinite sentinels at the ends.
  [[nodiscard]] double threshold(std::size_t d, int j) const;
  [[nodiscard]] const std::vector<double>& finite_thresholds(std::size_t d) const { return thresholds_.at(d); }
  [[nodiscard]] const std::vector<std::vector<double>>& thresholds() const noexcept { return thresholds_; }
  [[nodiscard]] std::size_t cell_count() const;

  friend bool operator==(const LatticeSpec&, const LatticeSpec&) = default;

 private:
  std::vector<std::vector<double>> thresholds_;
};

/// Index coefficients beta_d (length k_d >= 1) per dimension.
struct IndexModel {
  std::vector<Eigen::VectorXd> beta;

  [[nodiscard]] std::size_t dims() const noexcept { return beta.size(); }
  void validate() const;
};

/// 1-based category index per dimension.
struct CellIndex {
  std::vector<int> j;

  [[nodiscard]] std::size_t dims() const noexcept { return j.size(); }
  int operator[](std::size_t d) const { return j[d]; }
  friend bool operator==(const CellIndex&, const CellIndex&) = default;
};

/// Observations: covariate matrix per dimension (n x k_d) and the observed
/// cell of each row (n x D, 1-based).
struct Dataset {
  std::vector<Eigen::MatrixXd> covariates;
  Eigen::MatrixXi outcomes;
  std::vector<std::vector<std::string>> names;  ///< optional, per dimension

  [[nodiscard]] std::size_t size() const noexcept { return static_cast<std::size_t>(outcomes.rows()); }
  [[nodiscard]] std::size_t dims() const noexcept { return covariates.size(); }
  [[nodiscard]] CellIndex outcome(std::size_t i) const;
  /// x_{d,i} beta_d
  [[nodiscard]] double index(std::size_t i, std::size_t d, const IndexModel& model) const;

  /// Checks shapes and that every outcome is a valid cell of spec.
  void validate(const LatticeSpec& spec) const;
  /// Checks shapes against the model's coefficient lengths.
  void validate(const IndexModel& model) const;

  /// Rows [begin, end) or an explicit row subset, in the given order.
  [[nodiscard]] Dataset rows(std::span<const std::size_t> which) const;
};

/// Half-open box (lower, upper] per dimension; bounds may be infinite.
struct Rectangle {
  std::vector<double> lower;
  std::vector<double> upper;

  [[nodiscard]] bool contains(std::span<const double> point) const;
};

/// Joint CDF evaluated at a D-vector whose entries may be +-infinity.
using JointCdf = std::function<double(std::span<const double>)>;

/// Gaussian joint CDF with unit variances and correlation rho (D = 2).
[[nodiscard]] JointCdf gaussian_cdf(double rho);

/// Product of marginal CDFs (independent errors).
[[nodiscard]] JointCdf independent_cdf(std::vector<Law> margins);

/// The cell whose intervals contain the latent vector, under the
/// right-closed convention: a value equal to alpha_j falls in category j.
[[nodiscard]] CellIndex categorize(std::span<const double> latent, const LatticeSpec& spec);

/// Region the error vector must occupy for observation i:
/// (alpha_{j-1} - x beta, alpha_j - x beta] per dimension.
[[nodiscard]] Rectangle implied_rectangle(const Dataset& data, std::size_t i, const LatticeSpec& spec,
                                          const IndexModel& model);

/// Probability of a cell given per-dimension index values x_d beta_d, via
/// the 2^D signed corner evaluations of F. Corners with a -inf coordinate
/// contribute zero without calling F.
[[nodiscard]] double cell_probability(const CellIndex& cell, std::span<const double> indices,
                                      const LatticeSpec& spec, const JointCdf& F);

/// Same, with the index computed from observation i of a dataset.
[[nodiscard]] double cell_probability(const CellIndex& cell, const Dataset& data, std::size_t i,
                                      const LatticeSpec& spec, const IndexModel& model, const JointCdf& F);

/// Enumerates every cell of the lattice in lexicographic order.
[[nodiscard]] std::vector<CellIndex> all_cells(const LatticeSpec& spec);

}  // namespace lattice
