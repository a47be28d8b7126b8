#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "lattice/lattice.hpp"

namespace lattice {

/// Joint CDF values on a rectangular grid: values(k, l) = F(axis1[k], axis2[l]).
struct CdfGrid {
  std::vector<double> axis1;
  std::vector<double> axis2;
  Eigen::MatrixXd values;

  /// Largest violation of monotonicity along either axis or of the [0, 1]
  /// bounds; 0 for a valid grid.
  [[nodiscard]] double max_violation() const;
  /// Throws UsageError when the axes are not strictly increasing or do not
  /// match the value matrix, or when max_violation() exceeds tol.
  void validate(double tol = 1e-9) const;
};

/// Bilinear interpolation. Outside the hull the value is 0 if either
/// coordinate lies below the grid, and otherwise the coordinates are clamped
/// to the upper edge.
[[nodiscard]] double interpolate(const CdfGrid& grid, double e1, double e2);

/// K equally spaced points from lo to hi inclusive.
[[nodiscard]] std::vector<double> linspace(double lo, double hi, std::size_t k);

/// Samples a joint CDF on the given axes.
[[nodiscard]] CdfGrid sample_cdf(const JointCdf& F, const std::vector<double>& axis1, const std::vector<double>& axis2);

/// Long-form CSV: e1,e2,value (axis1 outer, axis2 inner).
[[nodiscard]] std::string cdf_grid_to_csv(const CdfGrid& grid);
/// {"axis1": [...], "axis2": [...], "values": [row-major]}
[[nodiscard]] std::string cdf_grid_to_json(const CdfGrid& grid);
[[nodiscard]] CdfGrid cdf_grid_from_json(std::string_view text);

}  // namespace lattice
