#pragma once

#include <span>

#include <Eigen/Dense>

namespace lattice {

/// Weighted isotonic regression (nondecreasing) by pool-adjacent-violators,
/// in place. Empty weights mean unit weights.
void pav(std::span<double> y, std::span<const double> w = {});

/// Euclidean projection of a chain onto {lo <= y_1 <= ... <= y_n <= hi} with
/// some entries held fixed (fixed[i] != 0). Fixed values must themselves be
/// nondecreasing and within [lo, hi]; free runs between them are projected
/// independently.
void project_chain(std::span<double> y, double lo, double hi, std::span<const unsigned char> fixed = {});

struct DykstraOptions {
  int max_iterations = 500;
  double tolerance = 1e-11;  ///< max change between sweeps
};

/// Projection onto {row-wise nondecreasing} x {column-wise nondecreasing}
/// x {lo <= v <= hi} with optional fixed entries, by Dykstra's algorithm
/// alternating between the row set and the column set (each including the
/// box). A final cumulative-max pass along rows, then columns, makes the
/// result exactly feasible even when the iteration stops early.
/// Returns the number of Dykstra sweeps used.
int project_monotone_box(Eigen::MatrixXd& v, double lo = 0.0, double hi = 1.0,
                         const Eigen::Matrix<unsigned char, Eigen::Dynamic, Eigen::Dynamic>* fixed = nullptr,
                         const DykstraOptions& options = {});

/// Projection onto the probability simplex {x >= 0, sum x = total}.
void project_simplex(Eigen::Ref<Eigen::VectorXd> x, double total = 1.0);

}  // namespace lattice
