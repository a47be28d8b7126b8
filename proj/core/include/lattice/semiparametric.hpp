#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "lattice/cdf_grid.hpp"
#include "lattice/lattice.hpp"

namespace lattice {

// ---------------------------------------------------------------------------
// Grid inversion

enum class GridSource { implied_bounds, fixed };
enum class FeasibleSet { monotone_box, proper_cdf };
enum class DesignRows { all_cells, observed_cell };

struct GridInversionConfig {
  GridSource grid_source = GridSource::fixed;
  /// Fixed-grid axes. When empty, `nodes` equally spaced points spanning the
  /// finite implied bounds are used for each dimension.
  std::vector<double> axis1;
  std::vector<double> axis2;
  std::size_t nodes = 30;
  /// One row per (observation, cell) with a 0/1 target, or only the observed
  /// cell with target 1.
  DesignRows rows = DesignRows::all_cells;
  double smoothness_lambda = 0.0;
  double tolerance = 1e-9;  ///< relative objective decrease for convergence
  int max_iterations = 2000;
  FeasibleSet feasible_set = FeasibleSet::monotone_box;
};

/// Least-squares system over the augmented unknown vector. Unknowns are
/// F(axis1[k], axis2[l]) for k < K1, l < K2 plus the marginal values
/// F(axis1[k], +inf) (index K2 in the second coordinate) and
/// F(+inf, axis2[l]) (index K1 in the first), stored column-major on a
/// (K1+1) x (K2+1) array whose (K1, K2) corner is the constant 1. The
/// constant's contribution is moved into the target.
struct DesignSystem {
  std::vector<double> axis1;
  std::vector<double> axis2;
  Eigen::SparseMatrix<double, Eigen::RowMajor> A;  ///< rows x (K1+1)(K2+1)
  Eigen::VectorXd target;                          ///< 0/1 indicator minus constant-corner terms
  Eigen::VectorXd indicator;                       ///< raw 0/1 targets
  std::vector<std::size_t> observation;            ///< source observation of each row
  std::size_t observations = 0;                    ///< N, the scale of the data term

  [[nodiscard]] Eigen::Index rows1() const noexcept { return static_cast<Eigen::Index>(axis1.size()) + 1; }
  [[nodiscard]] Eigen::Index rows2() const noexcept { return static_cast<Eigen::Index>(axis2.size()) + 1; }
  [[nodiscard]] Eigen::Index unknown(Eigen::Index k, Eigen::Index l) const noexcept { return k + rows1() * l; }
};

/// Builds A and the targets. Corner coordinates between grid nodes get
/// bilinear weights; on the implied-bounds grid every finite corner is a
/// node, so entries are exactly +-1. Corners at -inf are dropped. Throws
/// DataError naming the bound if a finite corner lies outside the grid hull.
[[nodiscard]] DesignSystem build_design_system(const Dataset& data, const LatticeSpec& spec, const IndexModel& model,
                                               const std::vector<double>& axis1, const std::vector<double>& axis2,
                                               DesignRows rows = DesignRows::all_cells);

/// Sorted unique finite corner coordinates per dimension: the bounds of
/// the observed rectangles, or with all-cells rows every alpha_j - x beta.
[[nodiscard]] std::pair<std::vector<double>, std::vector<double>> implied_bound_axes(
    const Dataset& data, const LatticeSpec& spec, const IndexModel& model, DesignRows rows = DesignRows::all_cells);

struct GridInversionResult {
  CdfGrid grid;                  ///< finite part of the estimate
  Eigen::VectorXd margin1;       ///< F(axis1[k], +inf)
  Eigen::VectorXd margin2;       ///< F(+inf, axis2[l])
  double objective = 0.0;        ///< (1/n)||A phi - pi||^2 + lambda ||D phi||^2
  double initial_objective = 0.0;
  double residual = 0.0;         ///< (1/n)||A phi - pi||^2
  double roughness = 0.0;        ///< ||D phi||
  int iterations = 0;
  bool converged = false;
  std::vector<double> history;   ///< objective per iteration
};

/// Solves min (1/N)||A phi - target||^2 + lambda ||D phi||^2 over the
/// feasible set by projected gradient with Barzilai-Borwein steps and an
/// exact line search on each projected segment, so the objective never
/// increases. D takes first differences of the finite block along both axes.
[[nodiscard]] GridInversionResult solve_design_system(const DesignSystem& system, const GridInversionConfig& config);

[[nodiscard]] GridInversionResult grid_inversion_fit(const Dataset& data, const LatticeSpec& spec,
                                                     const IndexModel& model, const GridInversionConfig& config = {});

// ---------------------------------------------------------------------------
// Rectangle-kernel smoothing

struct KernelConfig {
  std::size_t draws_per_obs = 10;
  /// Fixed bandwidths; Silverman's rule per coordinate when unset.
  std::optional<std::pair<double, double>> bandwidth;
  /// Infinite rectangle sides are cut at +-truncation marginal scale units
  /// (the box is widened to include every finite bound).
  double truncation = 4.0;
  double scale1 = 1.0;  ///< marginal error scale of dimension 1
  double scale2 = 1.0;
  std::uint64_t seed = 0;
};

struct KernelResult {
  CdfGrid grid;
  double h1 = 0.0;
  double h2 = 0.0;
  Eigen::MatrixXd points;  ///< pooled draws, (n*S) x 2
};

/// Pools S uniform draws from each implied rectangle and returns the CDF of
/// the Gaussian-kernel density estimate on the evaluation axes, in closed
/// form as the average of Phi((e1 - p1)/h1) Phi((e2 - p2)/h2). Draws for a
/// rectangle are seeded from its bounds and the pool is assembled in a
/// canonical rectangle order, so the result does not depend on the order
/// of observations.
[[nodiscard]] KernelResult kernel_smoothing_fit(const Dataset& data, const LatticeSpec& spec, const IndexModel& model,
                                                const KernelConfig& config, const std::vector<double>& axis1,
                                                const std::vector<double>& axis2);

/// Kernel CDF of a given point cloud.
[[nodiscard]] CdfGrid kernel_cdf(const Eigen::MatrixXd& points, double h1, double h2, const std::vector<double>& axis1,
                                 const std::vector<double>& axis2);

// ---------------------------------------------------------------------------
// Tensor B-spline sieve

/// Clamped B-spline basis of a given degree on [lo, hi] with equally spaced
/// interior knots. Evaluation clamps x to [lo, hi].
class BSplineBasis {
 public:
  BSplineBasis(int degree, int interior_knots, double lo, double hi);

  [[nodiscard]] int size() const noexcept { return static_cast<int>(knots_.size()) - degree_ - 1; }
  [[nodiscard]] int degree() const noexcept { return degree_; }
  [[nodiscard]] double lo() const noexcept { return lo_; }
  [[nodiscard]] double hi() const noexcept { return hi_; }
  [[nodiscard]] const std::vector<double>& knots() const noexcept { return knots_; }
  /// All basis values at x (length size()).
  [[nodiscard]] Eigen::VectorXd values(double x) const;
  /// All first derivatives at x; zero outside [lo, hi].
  [[nodiscard]] Eigen::VectorXd derivatives(double x) const;

 private:
  int degree_;
  double lo_;
  double hi_;
  std::vector<double> knots_;
};

struct SieveConfig {
  int degree = 2;
  int interior_knots = 3;
  double knot_lo = -4.0;
  double knot_hi = 4.0;
  /// Keep beta and thresholds at their starting values (known index).
  bool fix_index = false;
  int max_outer = 200;
  int inner_steps = 50;        ///< Newton steps per barrier level when updating h
  double tolerance = 1e-8;     ///< relative log-likelihood change for convergence
  std::vector<double> eval_axis1 = linspace(-2.5, 2.5, 80);
  std::vector<double> eval_axis2 = linspace(-2.5, 2.5, 80);
};

struct SieveResult {
  IndexModel model;
  LatticeSpec lattice;
  Eigen::MatrixXd coefficients;  ///< h, S1 x S2
  double loglik = 0.0;           ///< mean log-likelihood
  double initial_loglik = 0.0;
  std::vector<double> history;
  int iterations = 0;
  bool converged = false;
  double min_slack = 0.0;  ///< smallest slack over all linear constraints on h
  CdfGrid grid;            ///< fitted F on the evaluation axes
};

/// Spline CDF F(e1, e2) = sum h_{st} B_s(e1) B_t(e2) with +-inf handled exactly.
class SplineCdf {
 public:
  SplineCdf(BSplineBasis b1, BSplineBasis b2, Eigen::MatrixXd h);
  [[nodiscard]] double operator()(double e1, double e2) const;
  [[nodiscard]] JointCdf as_joint_cdf() const;
  [[nodiscard]] const Eigen::MatrixXd& coefficients() const noexcept { return h_; }
  [[nodiscard]] const BSplineBasis& basis1() const noexcept { return b1_; }
  [[nodiscard]] const BSplineBasis& basis2() const noexcept { return b2_; }

 private:
  BSplineBasis b1_;
  BSplineBasis b2_;
  Eigen::MatrixXd h_;
};

/// One-step sieve maximum likelihood. Normalizations: the first coefficient
/// of each beta_d is held at its starting value (pass 1 for a unit scale) and
/// so is the first threshold of each dimension. The spline coefficients obey
/// h nondecreasing in both indices, 0 <= h <= 1, h(1, .) = h(., 1) = 0 and
/// h(S1, S2) = 1. `start` supplies the starting index and thresholds.
[[nodiscard]] SieveResult sieve_mle_fit(const Dataset& data, const LatticeSpec& start_lattice,
                                        const IndexModel& start_model, const SieveConfig& config = {});

/// Mean log-likelihood of a dataset under an arbitrary joint CDF (cells with
/// non-positive mass give -infinity).
[[nodiscard]] double log_likelihood_cdf(const Dataset& data, const LatticeSpec& spec, const IndexModel& model,
                                        const JointCdf& F);

}  // namespace lattice
