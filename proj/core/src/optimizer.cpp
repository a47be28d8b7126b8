#include "lattice/optimizer.hpp"

#include <algorithm>
#include <cmath>

#include "lattice/error.hpp"

namespace lattice {

BfgsResult minimize_bfgs(const Objective& f, Eigen::VectorXd x0, const BfgsOptions& options) {
  const Eigen::Index n = x0.size();
  BfgsResult res;
  res.x = std::move(x0);
  res.gradient.resize(n);
  res.value = f(res.x, res.gradient);
  res.evaluations = 1;
  if (!std::isfinite(res.value) || !res.gradient.allFinite())
    throw ConvergenceError("objective is not finite at the starting point");
  res.history.push_back(res.value);

  Eigen::MatrixXd Hinv = Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd g_new(n);
  bool first = true;

  for (;;) {
    res.gradient_norm = res.gradient.lpNorm<Eigen::Infinity>();
    if (res.gradient_norm <= options.gradient_tolerance) {
      res.converged = true;
      res.message = "gradient tolerance reached";
      break;
    }
    if (res.iterations >= options.max_iterations) {
      res.message = "iteration limit reached";
      break;
    }

    Eigen::VectorXd dir = -Hinv * res.gradient;
    double slope = dir.dot(res.gradient);
    if (!(slope < 0.0)) {
      Hinv.setIdentity();
      dir = -res.gradient;
      slope = dir.dot(res.gradient);
    }
    double t = 1.0;
    const double len = dir.norm();
    if (first && len > 1.0) t = 1.0 / len;
    if (t * len > options.max_step) t = options.max_step / len;

    bool accepted = false;
    Eigen::VectorXd x_new(n);
    double f_new = 0.0;
    for (int k = 0; k <= options.max_backtracks; ++k) {
      x_new = res.x + t * dir;
      f_new = f(x_new, g_new);
      ++res.evaluations;
      if (std::isfinite(f_new) && g_new.allFinite() && f_new <= res.value + options.armijo * t * slope) {
        accepted = true;
        break;
      }
      t *= options.backtrack;
    }
    if (!accepted) {
      if (!first && Hinv != Eigen::MatrixXd::Identity(n, n)) {
        // Retry once along steepest descent before giving up.
        Hinv.setIdentity();
        continue;
      }
      res.message = "line search failed to decrease the objective";
      break;
    }

    const Eigen::VectorXd s = x_new - res.x;
    const Eigen::VectorXd y = g_new - res.gradient;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (first) Hinv *= sy / y.squaredNorm();
      const double r = 1.0 / sy;
      const Eigen::VectorXd Hy = Hinv * y;
      Hinv += (r * r * y.dot(Hy) + r) * (s * s.transpose()) - r * (Hy * s.transpose() + s * Hy.transpose());
    }
    first = false;
    res.x = x_new;
    res.value = f_new;
    res.gradient = g_new;
    ++res.iterations;
    res.history.push_back(f_new);
  }
  return res;
}

Eigen::VectorXd numeric_gradient(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                                 double step) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = step * std::max(1.0, std::abs(x[i]));
    xp[i] = x[i] + h;
    const double fp = f(xp);
    xp[i] = x[i] - h;
    const double fm = f(xp);
    xp[i] = x[i];
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

}  // namespace lattice
