#include "lattice/parametric.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "json_util.hpp"
#include "lattice/distributions.hpp"
#include "lattice/error.hpp"
#include "lattice/io.hpp"

namespace lattice {

namespace {

constexpr double kMassFloor = 1e-300;
constexpr double kRhoLimit = 1.0 - 1e-12;

std::size_t dims_or_throw(const ParamVector& p) {
  if (p.beta.size() != 2 || p.thresholds.size() != 2)
    throw UsageError("the parametric model is bivariate: need two beta vectors and two threshold lists");
  return 2;
}

// Offsets of the blocks in the flat layout.
struct Layout {
  std::vector<Eigen::Index> beta;
  std::vector<Eigen::Index> alpha;
  Eigen::Index rho = 0;
  Eigen::Index size = 0;

  explicit Layout(const ParamVector& p) {
    Eigen::Index at = 0;
    for (const auto& b : p.beta) {
      beta.push_back(at);
      at += b.size();
    }
    for (const auto& t : p.thresholds) {
      alpha.push_back(at);
      at += static_cast<Eigen::Index>(t.size());
    }
    rho = at;
    size = at + 1;
  }
};

std::string cell_text(int j1, int j2) { return "(" + std::to_string(j1) + "," + std::to_string(j2) + ")"; }

// Shared kernel: accumulates the log-likelihood and, when requested, the
// gradient or per-row scores in natural coordinates.
double accumulate(const Dataset& data, const ParamVector& theta, Eigen::VectorXd* grad, Eigen::MatrixXd* scores,
                  bool throw_on_zero) {
  const Layout L(theta);
  const bool want = grad != nullptr || scores != nullptr;
  if (grad) grad->setZero(L.size);
  if (scores) scores->setZero(static_cast<Eigen::Index>(data.size()), L.size);
  Eigen::VectorXd row(L.size);
  double total = 0.0;
  const std::size_t n = data.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    double lo[2];
    double hi[2];
    double idx[2];
    int j[2];
    for (std::size_t d = 0; d < 2; ++d) {
      idx[d] = data.covariates[d].row(r).dot(theta.beta[d]);
      j[d] = data.outcomes(r, static_cast<Eigen::Index>(d));
      const auto& t = theta.thresholds[d];
      lo[d] = j[d] >= 2 ? t[static_cast<std::size_t>(j[d] - 2)] - idx[d] : -kInf;
      hi[d] = j[d] <= static_cast<int>(t.size()) ? t[static_cast<std::size_t>(j[d] - 1)] - idx[d] : kInf;
    }
    const RectangleMass m = bvn_rectangle(lo[0], hi[0], lo[1], hi[1], theta.rho, want);
    if (!(m.mass > kMassFloor)) {
      if (throw_on_zero) {
        std::ostringstream msg;
        msg << "observation " << (i + 1) << ": predicted mass of observed cell " << cell_text(j[0], j[1]) << " is "
            << m.mass << " (at or below 1e-300)";
        throw DataError(msg.str());
      }
      return -kInf;
    }
    total += std::log(m.mass);
    if (!want) continue;
    const double inv = 1.0 / m.mass;
    row.setZero();
    const double dl[2] = {m.d_l1, m.d_l2};
    const double du[2] = {m.d_u1, m.d_u2};
    for (std::size_t d = 0; d < 2; ++d) {
      row.segment(L.beta[d], theta.beta[d].size()) = -(dl[d] + du[d]) * inv * data.covariates[d].row(r).transpose();
      const int M1 = static_cast<int>(theta.thresholds[d].size());
      if (j[d] >= 2) row[L.alpha[d] + j[d] - 2] += dl[d] * inv;
      if (j[d] <= M1) row[L.alpha[d] + j[d] - 1] += du[d] * inv;
    }
    row[L.rho] = m.d_rho * inv;
    if (grad) *grad += row;
    if (scores) scores->row(r) = row.transpose();
  }
  if (grad) *grad /= static_cast<double>(n);
  return total / static_cast<double>(n);
}

// Univariate ordered probit in transformed coordinates
// (beta, first threshold, square-root gaps).
struct Probit1 {
  const Eigen::MatrixXd& X;
  const Eigen::VectorXi y;
  int M;

  [[nodiscard]] std::vector<double> thresholds(const Eigen::VectorXd& z) const {
    const Eigen::Index k = X.cols();
    std::vector<double> a(static_cast<std::size_t>(M - 1));
    for (int m = 0; m < M - 1; ++m) {
      const double v = z[k + m];
      a[static_cast<std::size_t>(m)] = m == 0 ? v : a[static_cast<std::size_t>(m - 1)] + v * v;
    }
    return a;
  }

  double operator()(const Eigen::VectorXd& z, Eigen::VectorXd& g) const {
    const Eigen::Index k = X.cols();
    const auto a = thresholds(z);
    Eigen::VectorXd ga = Eigen::VectorXd::Zero(M - 1);
    g.setZero(z.size());
    double total = 0.0;
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      const double idx = X.row(i).dot(z.head(k));
      const int j = y[i];
      const double lo = j >= 2 ? a[static_cast<std::size_t>(j - 2)] - idx : -kInf;
      const double hi = j <= M - 1 ? a[static_cast<std::size_t>(j - 1)] - idx : kInf;
      const double p = normal_interval_mass(lo, hi);
      if (!(p > kMassFloor)) return kInf;
      total += std::log(p);
      const double fl = std::isfinite(lo) ? std_normal_pdf(lo) / p : 0.0;
      const double fh = std::isfinite(hi) ? std_normal_pdf(hi) / p : 0.0;
      g.head(k) -= (fh - fl) * X.row(i).transpose();
      if (j >= 2) ga[j - 2] -= fl;
      if (j <= M - 1) ga[j - 1] += fh;
    }
    // Chain rule through the gap parameterization, then negate for minimization.
    double tail = 0.0;
    for (int m = M - 2; m >= 0; --m) {
      tail += ga[m];
      g[k + m] = m == 0 ? tail : 2.0 * z[k + m] * tail;
    }
    const auto n = static_cast<double>(X.rows());
    g = -g / n;
    return -total / n;
  }
};

Eigen::VectorXd flatten_thresholds(const std::vector<double>& t) {
  return Eigen::Map<const Eigen::VectorXd>(t.data(), static_cast<Eigen::Index>(t.size()));
}

std::vector<int> infer_categories(const Dataset& data) {
  std::vector<int> out;
  for (Eigen::Index d = 0; d < data.outcomes.cols(); ++d) out.push_back(data.outcomes.col(d).maxCoeff());
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

Eigen::Index ParamVector::size() const { return Layout(*this).size; }

void ParamVector::validate() const {
  dims_or_throw(*this);
  for (std::size_t d = 0; d < 2; ++d) {
    if (beta[d].size() < 1 || !beta[d].allFinite())
      throw UsageError("beta of dimension " + std::to_string(d + 1) + " must be non-empty and finite");
    const auto& t = thresholds[d];
    for (std::size_t k = 0; k < t.size(); ++k) {
      if (!std::isfinite(t[k])) throw UsageError("non-finite threshold in dimension " + std::to_string(d + 1));
      if (k > 0 && !(t[k] > t[k - 1]))
        throw UsageError("thresholds of dimension " + std::to_string(d + 1) + " are not strictly increasing");
    }
  }
  (void)Correlation(rho);
}

Eigen::VectorXd ParamVector::to_vector() const {
  const Layout L(*this);
  Eigen::VectorXd v(L.size);
  for (std::size_t d = 0; d < beta.size(); ++d) v.segment(L.beta[d], beta[d].size()) = beta[d];
  for (std::size_t d = 0; d < thresholds.size(); ++d)
    v.segment(L.alpha[d], static_cast<Eigen::Index>(thresholds[d].size())) = flatten_thresholds(thresholds[d]);
  v[L.rho] = rho;
  return v;
}

ParamVector ParamVector::from_vector(const Eigen::VectorXd& v, const ParamVector& shape) {
  const Layout L(shape);
  if (v.size() != L.size)
    throw UsageError("parameter vector has " + std::to_string(v.size()) + " entries, expected " +
                     std::to_string(L.size));
  ParamVector p;
  for (std::size_t d = 0; d < shape.beta.size(); ++d) p.beta.push_back(v.segment(L.beta[d], shape.beta[d].size()));
  for (std::size_t d = 0; d < shape.thresholds.size(); ++d) {
    const auto seg = v.segment(L.alpha[d], static_cast<Eigen::Index>(shape.thresholds[d].size()));
    p.thresholds.emplace_back(seg.data(), seg.data() + seg.size());
  }
  p.rho = v[L.rho];
  return p;
}

std::vector<std::string> parameter_names(const ParamVector& shape,
                                         const std::vector<std::vector<std::string>>& covariate_names) {
  std::vector<std::string> names;
  for (std::size_t d = 0; d < shape.beta.size(); ++d)
    for (Eigen::Index k = 0; k < shape.beta[d].size(); ++k) {
      const auto kk = static_cast<std::size_t>(k);
      const bool named = d < covariate_names.size() && kk < covariate_names[d].size();
      names.push_back("beta" + std::to_string(d + 1) + "[" +
                      (named ? covariate_names[d][kk] : std::to_string(k + 1)) + "]");
    }
  for (std::size_t d = 0; d < shape.thresholds.size(); ++d)
    for (std::size_t k = 0; k < shape.thresholds[d].size(); ++k)
      names.push_back("alpha" + std::to_string(d + 1) + "[" + std::to_string(k + 1) + "]");
  names.emplace_back("rho");
  return names;
}

Eigen::VectorXd transform(const ParamVector& theta) {
  theta.validate();
  const Layout L(theta);
  Eigen::VectorXd z = theta.to_vector();
  for (std::size_t d = 0; d < 2; ++d) {
    const auto& t = theta.thresholds[d];
    for (std::size_t k = 1; k < t.size(); ++k) z[L.alpha[d] + static_cast<Eigen::Index>(k)] = std::sqrt(t[k] - t[k - 1]);
  }
  z[L.rho] = std::atanh(theta.rho);
  return z;
}

ParamVector untransform(const Eigen::VectorXd& z, const ParamVector& shape) {
  const Layout L(shape);
  ParamVector p = ParamVector::from_vector(z, shape);
  for (std::size_t d = 0; d < p.thresholds.size(); ++d) {
    auto& t = p.thresholds[d];
    for (std::size_t k = 1; k < t.size(); ++k) {
      const double u = z[L.alpha[d] + static_cast<Eigen::Index>(k)];
      t[k] = std::max(t[k - 1] + u * u, std::nextafter(t[k - 1], kInf));
    }
  }
  p.rho = std::clamp(std::tanh(z[L.rho]), -kRhoLimit, kRhoLimit);
  return p;
}

Eigen::MatrixXd transform_jacobian(const Eigen::VectorXd& z, const ParamVector& shape) {
  const Layout L(shape);
  Eigen::MatrixXd G = Eigen::MatrixXd::Identity(L.size, L.size);
  for (std::size_t d = 0; d < shape.thresholds.size(); ++d) {
    const auto m = static_cast<Eigen::Index>(shape.thresholds[d].size());
    const Eigen::Index a = L.alpha[d];
    for (Eigen::Index row = 0; row < m; ++row)
      for (Eigen::Index col = 0; col <= row; ++col) G(a + row, a + col) = col == 0 ? 1.0 : 2.0 * z[a + col];
  }
  const double r = std::tanh(z[L.rho]);
  G(L.rho, L.rho) = 1.0 - r * r;
  return G;
}

double log_likelihood(const Dataset& data, const ParamVector& theta) {
  theta.validate();
  data.validate(theta.lattice());
  data.validate(theta.model());
  return accumulate(data, theta, nullptr, nullptr, true);
}

double log_likelihood(const Dataset& data, const ParamVector& theta, Eigen::VectorXd* gradient) {
  return accumulate(data, theta, gradient, nullptr, false);
}

Eigen::MatrixXd observation_scores(const Dataset& data, const ParamVector& theta) {
  Eigen::MatrixXd S;
  accumulate(data, theta, nullptr, &S, true);
  return S;
}

std::vector<double> predicted_cells(const Dataset& data, std::size_t i, const ParamVector& theta) {
  const LatticeSpec spec = theta.lattice();
  const IndexModel model = theta.model();
  const JointCdf F = gaussian_cdf(theta.rho);
  std::vector<double> out;
  for (const auto& cell : all_cells(spec)) out.push_back(cell_probability(cell, data, i, spec, model, F));
  return out;
}

void check_nondegenerate(const Dataset& data, const std::vector<int>& categories) {
  std::string empty;
  for (std::size_t d = 0; d < categories.size(); ++d) {
    if (categories[d] < 2)
      throw DataError("degenerate data: outcome y" + std::to_string(d + 1) +
                      " has a single category; declare the lattice (--dgp or --config thresholds) if some "
                      "categories are unobserved");
    std::vector<int> count(static_cast<std::size_t>(categories[d]) + 1, 0);
    for (Eigen::Index i = 0; i < data.outcomes.rows(); ++i) {
      const int j = data.outcomes(i, static_cast<Eigen::Index>(d));
      if (j >= 1 && j <= categories[d]) ++count[static_cast<std::size_t>(j)];
    }
    for (int j = 1; j <= categories[d]; ++j)
      if (count[static_cast<std::size_t>(j)] == 0)
        empty += (empty.empty() ? "" : ", ") + std::string("y") + std::to_string(d + 1) + "=" + std::to_string(j);
  }
  if (!empty.empty()) throw DataError("degenerate data: no observations in categories " + empty);
}

ParamVector auto_initial(const Dataset& data, const std::vector<int>& categories) {
  if (data.dims() != 2 || categories.size() != 2) throw UsageError("the parametric model is bivariate");
  check_nondegenerate(data, categories);
  const auto n = static_cast<double>(data.size());
  ParamVector p;
  std::vector<Eigen::VectorXd> score(2, Eigen::VectorXd(static_cast<Eigen::Index>(data.size())));
  for (std::size_t d = 0; d < 2; ++d) {
    const int M = categories[d];
    const Eigen::VectorXi y = data.outcomes.col(static_cast<Eigen::Index>(d));
    std::vector<double> cum(static_cast<std::size_t>(M) + 1, 0.0);
    for (Eigen::Index i = 0; i < y.size(); ++i) cum[static_cast<std::size_t>(y[i])] += 1.0 / n;
    for (int j = 1; j <= M; ++j) cum[static_cast<std::size_t>(j)] += cum[static_cast<std::size_t>(j - 1)];
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      const auto j = static_cast<std::size_t>(y[i]);
      score[d][i] = std_normal_quantile(std::clamp(0.5 * (cum[j - 1] + cum[j]), 1e-12, 1.0 - 1e-12));
    }

    const Eigen::MatrixXd& X = data.covariates[d];
    const Eigen::Index k = X.cols();
    Eigen::VectorXd z0 = Eigen::VectorXd::Zero(k + M - 1);
    std::vector<double> a(static_cast<std::size_t>(M - 1));
    for (int m = 0; m < M - 1; ++m) a[static_cast<std::size_t>(m)] = std_normal_quantile(std::clamp(cum[static_cast<std::size_t>(m + 1)], 1e-12, 1.0 - 1e-12));
    for (int m = 0; m < M - 1; ++m)
      z0[k + m] = m == 0 ? a[0] : std::sqrt(std::max(a[static_cast<std::size_t>(m)] - a[static_cast<std::size_t>(m - 1)], 1e-8));
    Probit1 probit{X, y, M};
    Eigen::VectorXd z = z0;
    try {
      BfgsOptions opt;
      opt.max_iterations = 200;
      opt.gradient_tolerance = 1e-7;
      z = minimize_bfgs([&](const Eigen::VectorXd& v, Eigen::VectorXd& g) { return probit(v, g); }, z0, opt).x;
    } catch (const ConvergenceError&) {
      z = z0;
    }
    p.beta.push_back(z.head(k));
    auto t = probit.thresholds(z);
    for (std::size_t m = 1; m < t.size(); ++m) t[m] = std::max(t[m], std::nextafter(t[m - 1], kInf));
    p.thresholds.push_back(t);
  }
  const Eigen::VectorXd c0 = score[0].array() - score[0].mean();
  const Eigen::VectorXd c1 = score[1].array() - score[1].mean();
  const double denom = std::sqrt(c0.squaredNorm() * c1.squaredNorm());
  p.rho = denom > 0.0 ? std::clamp(c0.dot(c1) / denom, -0.9, 0.9) : 0.0;
  return p;
}

FitResult fit(const Dataset& data, const std::optional<ParamVector>& init, const FitOptions& options,
              std::vector<int> categories) {
  if (data.dims() != 2) throw UsageError("the parametric model is bivariate; dataset has " +
                                         std::to_string(data.dims()) + " dimensions");
  if (data.size() == 0) throw DataError("dataset is empty");
  if (categories.empty()) categories = infer_categories(data);
  if (init) {
    init->validate();
    for (std::size_t d = 0; d < 2; ++d)
      if (static_cast<int>(init->thresholds[d].size()) + 1 != categories[d])
        throw UsageError("initial values have " + std::to_string(init->thresholds[d].size()) +
                         " thresholds in dimension " + std::to_string(d + 1) + ", data needs " +
                         std::to_string(categories[d] - 1));
  }
  check_nondegenerate(data, categories);
  const ParamVector start = init ? *init : auto_initial(data, categories);
  data.validate(start.lattice());
  data.validate(start.model());

  const Objective objective = [&](const Eigen::VectorXd& z, Eigen::VectorXd& g) {
    const ParamVector theta = untransform(z, start);
    Eigen::VectorXd gn;
    const double ll = log_likelihood(data, theta, &gn);
    if (!std::isfinite(ll)) return kInf;
    g = -(transform_jacobian(z, start).transpose() * gn);
    return -ll;
  };

  const BfgsResult opt = minimize_bfgs(objective, transform(start), options.bfgs);

  FitResult res;
  res.initial = start;
  res.estimate = untransform(opt.x, start);
  res.loglik = -opt.value;
  res.initial_loglik = -opt.history.front();
  res.n = data.size();
  res.converged = opt.converged;
  res.iterations = opt.iterations;
  res.gradient_norm = opt.gradient_norm;
  res.message = opt.message;
  for (double h : opt.history) res.history.push_back(-h);
  res.fingerprint = options.fingerprint;
  res.se_kind = options.se_kind;
  res.names = parameter_names(start, data.names);
  if (options.compute_se) {
    try {
      res.se = standard_errors(data, res.estimate, options.se_kind);
    } catch (const std::exception& e) {
      res.se_error = e.what();
    }
  }
  return res;
}

Eigen::VectorXd standard_errors(const Dataset& data, const ParamVector& theta_hat, SeKind kind) {
  theta_hat.validate();
  if (std::abs(theta_hat.rho) >= 1.0 - 1e-6) throw DataError("standard errors need |rho| < 1 - 1e-6 (boundary estimate)");
  for (const auto& t : theta_hat.thresholds)
    for (std::size_t k = 1; k < t.size(); ++k)
      if (t[k] - t[k - 1] <= 1e-6) throw DataError("standard errors need threshold gaps above 1e-6 (boundary estimate)");

  const auto N = static_cast<double>(data.size());
  const Eigen::VectorXd z = transform(theta_hat);
  const Eigen::MatrixXd G = transform_jacobian(z, theta_hat);
  const Eigen::MatrixXd S = observation_scores(data, theta_hat) * G;
  const Eigen::MatrixXd J = S.transpose() * S / N;
  const Eigen::Index p = z.size();

  const auto inverse_spd = [&](const Eigen::MatrixXd& A, const char* what) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
    const double top = es.eigenvalues().cwiseAbs().maxCoeff();
    if (!(es.eigenvalues().minCoeff() > 1e-10 * std::max(top, 1e-300)))
      throw DataError(std::string(what) +
                      " is singular or not positive definite; the parameters may not be identified "
                      "(run the identification diagnostics)");
    return Eigen::MatrixXd(es.eigenvectors() * es.eigenvalues().cwiseInverse().asDiagonal() *
                           es.eigenvectors().transpose());
  };

  Eigen::MatrixXd Vt;
  if (kind == SeKind::outer_product) {
    Vt = inverse_spd(J, "outer-product information matrix") / N;
  } else {
    Eigen::MatrixXd H(p, p);
    Eigen::VectorXd gp;
    Eigen::VectorXd gm;
    for (Eigen::Index k = 0; k < p; ++k) {
      const double h = 1e-5 * std::max(1.0, std::abs(z[k]));
      Eigen::VectorXd zp = z;
      Eigen::VectorXd zm = z;
      zp[k] += h;
      zm[k] -= h;
      const double lp = log_likelihood(data, untransform(zp, theta_hat), &gp);
      const double lm = log_likelihood(data, untransform(zm, theta_hat), &gm);
      if (!std::isfinite(lp) || !std::isfinite(lm)) throw DataError("log-likelihood not finite near the estimate");
      H.col(k) = -(transform_jacobian(zp, theta_hat).transpose() * gp - transform_jacobian(zm, theta_hat).transpose() * gm) /
                 (2.0 * h);
    }
    H = 0.5 * (H + H.transpose()).eval();
    const Eigen::MatrixXd Hinv = inverse_spd(H, "Hessian of the log-likelihood");
    Vt = Hinv * J * Hinv / N;
  }
  const Eigen::MatrixXd V = G * Vt * G.transpose();
  return V.diagonal().cwiseMax(0.0).cwiseSqrt();
}

// ---------------------------------------------------------------------------

namespace {

detail::json params_json(const ParamVector& p) {
  detail::json j = detail::index_model_to_json_value(p.model());
  j["thresholds"] = p.thresholds;
  j["rho"] = p.rho;
  return j;
}

}  // namespace

std::string params_to_json(const ParamVector& theta) { return params_json(theta).dump(2); }

ParamVector params_from_json(std::string_view text) {
  const auto j0 = detail::parse_json(text, "parameters");
  const auto& j = j0.contains("estimate") ? j0["estimate"] : j0;
  ParamVector p;
  p.beta = detail::index_model_from_json_value(j).beta;
  p.thresholds = detail::get_field<std::vector<std::vector<double>>>(j, "thresholds", "parameters");
  p.rho = j.value("rho", 0.0);
  p.validate();
  return p;
}

std::string fit_to_json(const FitResult& r) {
  using detail::json;
  json j;
  j["estimator"] = "parametric";
  j["n"] = r.n;
  j["loglik"] = r.loglik;
  j["loglik_total"] = r.loglik * static_cast<double>(r.n);
  j["initial_loglik"] = r.initial_loglik;
  j["converged"] = r.converged;
  j["iterations"] = r.iterations;
  j["gradient_norm"] = r.gradient_norm;
  j["message"] = r.message;
  j["fingerprint"] = r.fingerprint;
  j["se_kind"] = r.se_kind == SeKind::outer_product ? "outer-product" : "sandwich";
  if (!r.se_error.empty()) j["se_error"] = r.se_error;
  const Eigen::VectorXd est = r.estimate.to_vector();
  json params = json::array();
  for (Eigen::Index k = 0; k < est.size(); ++k) {
    json e{{"name", k < static_cast<Eigen::Index>(r.names.size()) ? r.names[static_cast<std::size_t>(k)] : ""},
           {"estimate", est[k]}};
    if (r.se.size() == est.size()) e["se"] = r.se[k];
    params.push_back(e);
  }
  j["parameters"] = params;
  j["estimate"] = params_json(r.estimate);
  j["initial"] = params_json(r.initial);
  return j.dump(2);
}

std::string fit_coefficients_csv(const FitResult& r) {
  std::string out = "parameter,estimate,se\n";
  const Eigen::VectorXd est = r.estimate.to_vector();
  const auto names = r.names.empty() ? parameter_names(r.estimate) : r.names;
  for (Eigen::Index k = 0; k < est.size(); ++k) {
    out += names[static_cast<std::size_t>(k)] + "," + format_double(est[k]) + ",";
    if (r.se.size() == est.size()) out += format_double(r.se[k]);
    out += "\n";
  }
  return out;
}

}  // namespace lattice
