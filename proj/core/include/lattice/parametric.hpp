#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lattice/lattice.hpp"
#include "lattice/optimizer.hpp"

namespace lattice {

/// Parameters of the bivariate ordered probit. The flat ("natural") layout
/// is beta_1, beta_2, thresholds_1, thresholds_2, rho.
struct ParamVector {
  std::vector<Eigen::VectorXd> beta;
  std::vector<std::vector<double>> thresholds;
  double rho = 0.0;

  [[nodiscard]] IndexModel model() const { return IndexModel{beta}; }
  [[nodiscard]] LatticeSpec lattice() const { return LatticeSpec(thresholds); }
  [[nodiscard]] Eigen::Index size() const;
  /// Throws UsageError unless there are two dimensions, thresholds are
  /// strictly increasing and |rho| < 1.
  void validate() const;

  [[nodiscard]] Eigen::VectorXd to_vector() const;
  /// Rebuilds a ParamVector with the same shape as `shape` from a flat vector.
  [[nodiscard]] static ParamVector from_vector(const Eigen::VectorXd& v, const ParamVector& shape);
};

/// Human-readable names in flat order, e.g. "beta1[x]", "alpha2[1]", "rho".
[[nodiscard]] std::vector<std::string> parameter_names(const ParamVector& shape,
                                                       const std::vector<std::vector<std::string>>& covariate_names = {});

/// Unconstrained coordinates: betas unchanged, first threshold raw, later
/// thresholds as square roots of the gaps, rho as atanh(rho).
[[nodiscard]] Eigen::VectorXd transform(const ParamVector& theta);
/// Inverse of transform. Any finite vector maps to a valid ParamVector
/// (a zero gap parameter is nudged to the smallest representable gap and
/// rho is clamped to |rho| <= 1 - 1e-12).
[[nodiscard]] ParamVector untransform(const Eigen::VectorXd& z, const ParamVector& shape);
/// d natural / d transformed, in flat order.
[[nodiscard]] Eigen::MatrixXd transform_jacobian(const Eigen::VectorXd& z, const ParamVector& shape);

/// Mean log-likelihood (1/N) sum_i log l_i. Throws DataError naming the
/// observation and cell if some observed cell has mass at or below 1e-300.
[[nodiscard]] double log_likelihood(const Dataset& data, const ParamVector& theta);

/// Mean log-likelihood with its gradient in natural coordinates. Returns
/// -infinity instead of throwing when a cell mass underflows.
[[nodiscard]] double log_likelihood(const Dataset& data, const ParamVector& theta, Eigen::VectorXd* gradient);

/// Per-observation scores (N x p) in natural coordinates.
[[nodiscard]] Eigen::MatrixXd observation_scores(const Dataset& data, const ParamVector& theta);

/// Predicted probabilities of every cell for observation i, in all_cells order.
[[nodiscard]] std::vector<double> predicted_cells(const Dataset& data, std::size_t i, const ParamVector& theta);

enum class SeKind { outer_product, sandwich };

struct FitOptions {
  BfgsOptions bfgs;
  bool compute_se = true;
  SeKind se_kind = SeKind::outer_product;
  std::string fingerprint;  ///< free-form seed/config tag stored in the result
};

struct FitResult {
  ParamVector estimate;
  ParamVector initial;
  Eigen::VectorXd se;  ///< natural coordinates, empty when not computed
  SeKind se_kind = SeKind::outer_product;
  std::string se_error;  ///< reason the SEs are missing, if they are
  double loglik = 0.0;   ///< mean log-likelihood at the estimate
  double initial_loglik = 0.0;
  std::size_t n = 0;
  bool converged = false;
  int iterations = 0;
  double gradient_norm = 0.0;
  std::string message;
  std::vector<double> history;  ///< mean log-likelihood of accepted iterates
  std::string fingerprint;
  std::vector<std::string> names;
};

/// Checks that every marginal category of both outcomes is observed;
/// throws DataError listing the empty ones.
void check_nondegenerate(const Dataset& data, const std::vector<int>& categories);

/// Univariate ordered probits per dimension for beta and thresholds, and the
/// normal-scores correlation of midpoint quantiles for rho.
[[nodiscard]] ParamVector auto_initial(const Dataset& data, const std::vector<int>& categories);

/// Maximum likelihood by BFGS in transformed coordinates. `categories` gives
/// M_d per dimension; it defaults to the largest observed category.
[[nodiscard]] FitResult fit(const Dataset& data, const std::optional<ParamVector>& init = std::nullopt,
                            const FitOptions& options = {}, std::vector<int> categories = {});

/// Standard errors in natural coordinates. The outer-product kind uses
/// J^{-1}/N; the sandwich uses H^{-1} J H^{-1}/N with a Hessian from
/// differenced analytic gradients. Both are formed in transformed
/// coordinates and mapped back by the delta method. Throws DataError when
/// the information matrix is singular.
[[nodiscard]] Eigen::VectorXd standard_errors(const Dataset& data, const ParamVector& theta_hat, SeKind kind);

[[nodiscard]] std::string fit_to_json(const FitResult& result);
/// parameter,estimate,se rows.
[[nodiscard]] std::string fit_coefficients_csv(const FitResult& result);
/// Reads the "estimate" block of fit.json, or a bare {"beta","thresholds","rho"} object.
[[nodiscard]] ParamVector params_from_json(std::string_view text);
[[nodiscard]] std::string params_to_json(const ParamVector& theta);

}  // namespace lattice
