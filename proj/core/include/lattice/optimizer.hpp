#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace lattice {

/// Objective returning f(x) and writing the gradient into `grad`. A
/// non-finite value marks x as outside the domain; the line search then
/// backtracks.
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& grad)>;

struct BfgsOptions {
  double gradient_tolerance = 1e-6;  ///< sup-norm
  int max_iterations = 500;
  double armijo = 1e-4;
  double backtrack = 0.5;
  int max_backtracks = 60;
  double max_step = 10.0;  ///< cap on the first trial step length
};

struct BfgsResult {
  Eigen::VectorXd x;
  double value = 0.0;
  Eigen::VectorXd gradient;
  double gradient_norm = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  std::string message;
  std::vector<double> history;  ///< objective at every accepted iterate, starting point first
};

/// Minimizes with BFGS and Armijo backtracking. The inverse-Hessian update is
/// skipped when the curvature condition fails, so the approximation stays
/// positive definite.
[[nodiscard]] BfgsResult minimize_bfgs(const Objective& f, Eigen::VectorXd x0, const BfgsOptions& options = {});

/// Central-difference gradient, used by tests and as a fallback.
[[nodiscard]] Eigen::VectorXd numeric_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                               const Eigen::VectorXd& x, double step = 1e-5);

}  // namespace lattice
