#include <algorithm>
#include <cmath>

#include "lattice/error.hpp"
#include "lattice/optimizer.hpp"
#include "lattice/semiparametric.hpp"

namespace lattice {

BSplineBasis::BSplineBasis(int degree, int interior_knots, double lo, double hi)
    : degree_(degree), lo_(lo), hi_(hi) {
  if (degree < 1) throw UsageError("spline degree must be at least 1");
  if (interior_knots < 0) throw UsageError("interior knot count must be nonnegative");
  if (!(hi > lo) || !std::isfinite(lo) || !std::isfinite(hi)) throw UsageError("spline knot range must be finite and increasing");
  knots_.assign(static_cast<std::size_t>(degree) + 1, lo);
  for (int k = 1; k <= interior_knots; ++k)
    knots_.push_back(lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(interior_knots + 1));
  knots_.insert(knots_.end(), static_cast<std::size_t>(degree) + 1, hi);
}

namespace {

// Nonzero B-splines of degree q at x (Cox-de Boor), with span index mu so
// that N[r] is basis function mu - q + r.
int basis_funs(const std::vector<double>& t, int q, double x, std::vector<double>& N) {
  const int m = static_cast<int>(t.size()) - q - 1;  // number of basis functions
  int mu = q;
  while (mu < m - 1 && x >= t[static_cast<std::size_t>(mu) + 1]) ++mu;
  N.assign(static_cast<std::size_t>(q) + 1, 0.0);
  N[0] = 1.0;
  std::vector<double> left(static_cast<std::size_t>(q) + 1);
  std::vector<double> right(static_cast<std::size_t>(q) + 1);
  for (int j = 1; j <= q; ++j) {
    left[static_cast<std::size_t>(j)] = x - t[static_cast<std::size_t>(mu + 1 - j)];
    right[static_cast<std::size_t>(j)] = t[static_cast<std::size_t>(mu + j)] - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double den = right[static_cast<std::size_t>(r) + 1] + left[static_cast<std::size_t>(j - r)];
      const double tmp = den > 0.0 ? N[static_cast<std::size_t>(r)] / den : 0.0;
      N[static_cast<std::size_t>(r)] = saved + right[static_cast<std::size_t>(r) + 1] * tmp;
      saved = left[static_cast<std::size_t>(j - r)] * tmp;
    }
    N[static_cast<std::size_t>(j)] = saved;
  }
  return mu;
}

}  // namespace

Eigen::VectorXd BSplineBasis::values(double x) const {
  x = std::clamp(x, lo_, hi_);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(size());
  std::vector<double> N;
  const int mu = basis_funs(knots_, degree_, x, N);
  for (int r = 0; r <= degree_; ++r) out[mu - degree_ + r] = N[static_cast<std::size_t>(r)];
  return out;
}

Eigen::VectorXd BSplineBasis::derivatives(double x) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(size());
  if (x < lo_ || x > hi_) return out;
  const BSplineBasis lower(degree_ - 1, static_cast<int>(knots_.size()) - 2 * (degree_ + 1), lo_, hi_);
  const Eigen::VectorXd b = lower.values(x);  // size() - 1 functions of degree q-1
  for (int i = 0; i < size(); ++i) {
    const auto I = static_cast<std::size_t>(i);
    const auto q = static_cast<std::size_t>(degree_);
    const double d1 = knots_[I + q] - knots_[I];
    const double d2 = knots_[I + q + 1] - knots_[I + 1];
    double v = 0.0;
    if (i >= 1 && d1 > 0.0) v += degree_ * b[i - 1] / d1;
    if (i < size() - 1 && d2 > 0.0) v -= degree_ * b[i] / d2;
    out[i] = v;
  }
  return out;
}

SplineCdf::SplineCdf(BSplineBasis b1, BSplineBasis b2, Eigen::MatrixXd h)
    : b1_(std::move(b1)), b2_(std::move(b2)), h_(std::move(h)) {
  if (h_.rows() != b1_.size() || h_.cols() != b2_.size()) throw UsageError("spline coefficients do not match the bases");
}

double SplineCdf::operator()(double e1, double e2) const {
  if (e1 == -kInf || e2 == -kInf) return 0.0;
  return b1_.values(e1).dot(h_ * b2_.values(e2));
}

JointCdf SplineCdf::as_joint_cdf() const {
  return [self = *this](std::span<const double> e) { return std::clamp(self(e[0], e[1]), 0.0, 1.0); };
}

double log_likelihood_cdf(const Dataset& data, const LatticeSpec& spec, const IndexModel& model, const JointCdf& F) {
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    double p = 0.0;
    try {
      p = cell_probability(data.outcome(i), data, i, spec, model, F);
    } catch (const DataError&) {
      return -kInf;
    }
    if (!(p > 0.0)) return -kInf;
    total += std::log(p);
  }
  return total / static_cast<double>(data.size());
}

namespace {

using Mask = Eigen::Matrix<unsigned char, Eigen::Dynamic, Eigen::Dynamic>;

// Per-observation linear functionals W_i with mass_i = <W_i, h>.
Eigen::MatrixXd mass_functionals(const Dataset& data, const LatticeSpec& spec, const IndexModel& model,
                                 const BSplineBasis& b1, const BSplineBasis& b2) {
  const Eigen::Index S1 = b1.size();
  const Eigen::Index S2 = b2.size();
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(data.size()), S1 * S2);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const CellIndex cell = data.outcome(i);
    const double idx1 = data.index(i, 0, model);
    const double idx2 = data.index(i, 1, model);
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(S1, S2);
    for (int l1 = 0; l1 < 2; ++l1) {
      const double c1 = spec.threshold(0, cell[0] - l1) - idx1;
      if (c1 == -kInf) continue;
      const Eigen::VectorXd v1 = b1.values(c1);
      for (int l2 = 0; l2 < 2; ++l2) {
        const double c2 = spec.threshold(1, cell[1] - l2) - idx2;
        if (c2 == -kInf) continue;
        const double sign = (l1 + l2) % 2 == 0 ? 1.0 : -1.0;
        acc += sign * v1 * b2.values(c2).transpose();
      }
    }
    W.row(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::RowVectorXd>(acc.data(), acc.size());
  }
  return W;
}

double mean_log(const Eigen::VectorXd& mass) {
  if (!(mass.minCoeff() > 0.0)) return -kInf;
  return mass.array().log().mean();
}

struct Pins {
  Mask fixed;
  Eigen::MatrixXd values;
};

Pins make_pins(Eigen::Index S1, Eigen::Index S2) {
  Pins p{Mask::Zero(S1, S2), Eigen::MatrixXd::Zero(S1, S2)};
  p.fixed.row(0).setOnes();
  p.fixed.col(0).setOnes();
  p.fixed(S1 - 1, S2 - 1) = 1;
  p.values(S1 - 1, S2 - 1) = 1.0;
  return p;
}

// Order constraints between adjacent coefficients, as rows c with c.h >= 0
// over the column-major h. Pairs of two pinned entries are skipped; bounds
// 0 <= h <= 1 follow from the pinned zero row/column and the pinned corner.
Eigen::SparseMatrix<double, Eigen::RowMajor> order_constraints(const Pins& pins) {
  const Eigen::Index S1 = pins.fixed.rows();
  const Eigen::Index S2 = pins.fixed.cols();
  std::vector<Eigen::Triplet<double>> t;
  Eigen::Index row = 0;
  const auto add = [&](Eigen::Index r, Eigen::Index c, Eigen::Index r0, Eigen::Index c0) {
    if (pins.fixed(r, c) && pins.fixed(r0, c0)) return;
    t.emplace_back(row, r + S1 * c, 1.0);
    t.emplace_back(row, r0 + S1 * c0, -1.0);
    ++row;
  };
  for (Eigen::Index c = 0; c < S2; ++c)
    for (Eigen::Index r = 0; r < S1; ++r) {
      if (r > 0) add(r, c, r - 1, c);
      if (c > 0) add(r, c, r, c - 1);
    }
  Eigen::SparseMatrix<double, Eigen::RowMajor> C(row, S1 * S2);
  C.setFromTriplets(t.begin(), t.end());
  return C;
}

// Maximizes the concave mean log-likelihood over the free coefficients by a
// log-barrier method with damped Newton steps. h must be strictly feasible
// on entry and stays so; the barrier weight falls from mu0 to mu_min.
double h_barrier(const Eigen::MatrixXd& W, Eigen::MatrixXd& h, const Pins& pins,
                 const Eigen::SparseMatrix<double, Eigen::RowMajor>& C, double mu0, int newton_steps) {
  constexpr double kMuMin = 1e-11;
  const auto n = static_cast<double>(W.rows());
  std::vector<Eigen::Index> free;
  for (Eigen::Index k = 0; k < h.size(); ++k)
    if (!pins.fixed.data()[k]) free.push_back(k);
  const auto p = static_cast<Eigen::Index>(free.size());
  Eigen::Map<Eigen::VectorXd> hv(h.data(), h.size());
  Eigen::MatrixXd Wf(W.rows(), p);
  for (Eigen::Index j = 0; j < p; ++j) Wf.col(j) = W.col(free[static_cast<std::size_t>(j)]);
  Eigen::SparseMatrix<double, Eigen::ColMajor> Cf(C.rows(), p);
  {
    std::vector<Eigen::Triplet<double>> t;
    std::vector<Eigen::Index> pos(static_cast<std::size_t>(h.size()), -1);
    for (Eigen::Index j = 0; j < p; ++j) pos[static_cast<std::size_t>(free[static_cast<std::size_t>(j)])] = j;
    for (Eigen::Index r = 0; r < C.outerSize(); ++r)
      for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(C, r); it; ++it)
        if (pos[static_cast<std::size_t>(it.col())] >= 0) t.emplace_back(r, pos[static_cast<std::size_t>(it.col())], it.value());
    Cf.setFromTriplets(t.begin(), t.end());
  }

  const auto barrier = [&](const Eigen::VectorXd& mass, const Eigen::VectorXd& slack, double mu) {
    if (!(mass.minCoeff() > 0.0) || (slack.size() > 0 && !(slack.minCoeff() > 0.0))) return -kInf;
    return mass.array().log().mean() + mu * slack.array().log().sum();
  };

  Eigen::VectorXd mass = W * hv;
  Eigen::VectorXd slack = C * hv;
  if (!std::isfinite(barrier(mass, slack, mu0))) return -kInf;
  for (double mu = mu0; mu >= kMuMin * 0.999; mu *= 0.1) {
    for (int it = 0; it < newton_steps; ++it) {
      const Eigen::VectorXd inv_m = mass.cwiseInverse();
      const Eigen::VectorXd inv_s = slack.cwiseInverse();
      const Eigen::VectorXd g = Wf.transpose() * inv_m / n + mu * (Cf.transpose() * inv_s);
      const Eigen::MatrixXd Wm = inv_m.asDiagonal() * Wf;
      Eigen::MatrixXd negH = Wm.transpose() * Wm / n;
      negH += mu * Eigen::MatrixXd(Cf.transpose() * inv_s.cwiseAbs2().asDiagonal() * Cf);
      negH.diagonal().array() += 1e-12;
      const Eigen::VectorXd dz = negH.ldlt().solve(g);
      const double decrement = g.dot(dz);
      if (!(decrement > 2e-14)) break;
      // Largest step keeping every slack and mass positive, then backtracking.
      Eigen::VectorXd dh = Eigen::VectorXd::Zero(h.size());
      for (Eigen::Index j = 0; j < p; ++j) dh[free[static_cast<std::size_t>(j)]] = dz[j];
      const Eigen::VectorXd ds = C * dh;
      const Eigen::VectorXd dm = W * dh;
      double tmax = 1.0;
      for (Eigen::Index k = 0; k < ds.size(); ++k)
        if (ds[k] < 0.0) tmax = std::min(tmax, -0.99 * slack[k] / ds[k]);
      for (Eigen::Index k = 0; k < dm.size(); ++k)
        if (dm[k] < 0.0) tmax = std::min(tmax, -0.99 * mass[k] / dm[k]);
      const double f0 = barrier(mass, slack, mu);
      bool moved = false;
      for (double t = tmax; t > 1e-12; t *= 0.5) {
        const Eigen::VectorXd mt = mass + t * dm;
        const Eigen::VectorXd st = slack + t * ds;
        if (barrier(mt, st, mu) >= f0 + 1e-4 * t * decrement) {
          hv += t * dh;
          mass = mt;
          slack = st;
          moved = true;
          break;
        }
      }
      if (!moved) break;
    }
  }
  return mean_log(mass);
}

Eigen::MatrixXd initial_h(const BSplineBasis& b1, const BSplineBasis& b2, const Pins& pins) {
  // Independent standard normal margins at the Greville abscissae.
  const auto greville = [](const BSplineBasis& b) {
    Eigen::VectorXd g(b.size());
    for (int i = 0; i < b.size(); ++i) {
      double s = 0.0;
      for (int k = 1; k <= b.degree(); ++k) s += b.knots()[static_cast<std::size_t>(i + k)];
      g[i] = std_normal_cdf(s / b.degree());
    }
    return g;
  };
  Eigen::MatrixXd h = greville(b1) * greville(b2).transpose();
  for (Eigen::Index r = 0; r < h.rows(); ++r)
    for (Eigen::Index c = 0; c < h.cols(); ++c)
      if (pins.fixed(r, c)) h(r, c) = pins.values(r, c);
  return h;
}

// Free index parameters: beta_d without its first entry, then the first
// threshold is held and later ones are stored as square-root gaps.
struct IndexPacking {
  IndexModel model0;
  LatticeSpec lattice0;

  [[nodiscard]] Eigen::VectorXd pack(const IndexModel& m, const LatticeSpec& l) const {
    std::vector<double> v;
    for (std::size_t d = 0; d < m.dims(); ++d) {
      for (Eigen::Index k = 1; k < m.beta[d].size(); ++k) v.push_back(m.beta[d][k]);
      const auto& t = l.finite_thresholds(d);
      for (std::size_t k = 1; k < t.size(); ++k) v.push_back(std::sqrt(t[k] - t[k - 1]));
    }
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  }

  void unpack(const Eigen::VectorXd& z, IndexModel& m, LatticeSpec& l) const {
    m = model0;
    std::vector<std::vector<double>> th = lattice0.thresholds();
    Eigen::Index at = 0;
    for (std::size_t d = 0; d < m.dims(); ++d) {
      for (Eigen::Index k = 1; k < m.beta[d].size(); ++k) m.beta[d][k] = z[at++];
      auto& t = th[d];
      for (std::size_t k = 1; k < t.size(); ++k) {
        const double u = z[at++];
        t[k] = std::max(t[k - 1] + u * u, std::nextafter(t[k - 1], kInf));
      }
    }
    l = LatticeSpec(th);
  }
};

}  // namespace

SieveResult sieve_mle_fit(const Dataset& data, const LatticeSpec& start_lattice, const IndexModel& start_model,
                          const SieveConfig& config) {
  if (data.size() == 0) throw DataError("sieve: empty dataset");
  if (data.dims() != 2 || start_lattice.dims() != 2) throw UsageError("the sieve estimator is implemented for two dimensions");
  data.validate(start_lattice);
  data.validate(start_model);
  for (std::size_t d = 0; d < 2; ++d) {
    if (start_lattice.finite_thresholds(d).empty())
      throw UsageError("sieve normalization pins one threshold per dimension; dimension " + std::to_string(d + 1) +
                       " has none");
    if (!config.fix_index && start_model.beta[d][0] == 0.0)
      throw UsageError("sieve normalization fixes the first coefficient of beta_" + std::to_string(d + 1) +
                       "; it must be nonzero");
  }

  const BSplineBasis b1(config.degree, config.interior_knots, config.knot_lo, config.knot_hi);
  const BSplineBasis b2(config.degree, config.interior_knots, config.knot_lo, config.knot_hi);
  const Pins pins = make_pins(b1.size(), b2.size());

  SieveResult res;
  res.model = start_model;
  res.lattice = start_lattice;
  Eigen::MatrixXd h = initial_h(b1, b2, pins);
  Eigen::MatrixXd W = mass_functionals(data, res.lattice, res.model, b1, b2);
  double f = mean_log(W * Eigen::Map<const Eigen::VectorXd>(h.data(), h.size()));
  if (!std::isfinite(f)) throw DataError("sieve: starting spline CDF gives zero mass to an observed cell");
  res.initial_loglik = f;
  res.history.push_back(f);

  const IndexPacking packing{start_model, start_lattice};
  const auto C = order_constraints(pins);
  for (int outer = 0; outer < config.max_outer; ++outer) {
    const double f_start = f;
    Eigen::MatrixXd trial = h;
    const double ft = h_barrier(W, trial, pins, C, outer == 0 ? 1e-3 : 1e-7, config.inner_steps);
    if (ft >= f) {
      h = trial;
      f = ft;
    }

    if (!config.fix_index) {
      const Eigen::VectorXd z0 = packing.pack(res.model, res.lattice);
      if (z0.size() > 0) {
        const SplineCdf F(b1, b2, h);
        const auto negll = [&](const Eigen::VectorXd& z) {
          IndexModel m;
          LatticeSpec l;
          packing.unpack(z, m, l);
          const Eigen::MatrixXd Wz = mass_functionals(data, l, m, b1, b2);
          const double v = mean_log(Wz * Eigen::Map<const Eigen::VectorXd>(h.data(), h.size()));
          return std::isfinite(v) ? -v : kInf;
        };
        BfgsOptions opt;
        opt.max_iterations = 5;
        opt.gradient_tolerance = 1e-7;
        const BfgsResult r = minimize_bfgs(
            [&](const Eigen::VectorXd& z, Eigen::VectorXd& g) {
              const double v = negll(z);
              g = std::isfinite(v) ? numeric_gradient(negll, z, 1e-6) : Eigen::VectorXd::Zero(z.size());
              return v;
            },
            z0, opt);
        if (-r.value > f) {
          packing.unpack(r.x, res.model, res.lattice);
          W = mass_functionals(data, res.lattice, res.model, b1, b2);
          f = -r.value;
        }
      }
    }
    res.history.push_back(f);
    res.iterations = outer + 1;
    if (std::abs(f - f_start) <= config.tolerance * std::max(1.0, std::abs(f))) {
      res.converged = true;
      break;
    }
  }

  res.coefficients = h;
  res.loglik = f;
  double slack = 1.0;
  for (Eigen::Index r = 0; r < h.rows(); ++r)
    for (Eigen::Index c = 0; c < h.cols(); ++c) {
      slack = std::min({slack, h(r, c), 1.0 - h(r, c)});
      if (r > 0) slack = std::min(slack, h(r, c) - h(r - 1, c));
      if (c > 0) slack = std::min(slack, h(r, c) - h(r, c - 1));
    }
  res.min_slack = slack;
  const SplineCdf F(b1, b2, h);
  res.grid = sample_cdf(F.as_joint_cdf(), config.eval_axis1, config.eval_axis2);
  return res;
}

}  // namespace lattice
