#include "lattice/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include <json.hpp>

#include "lattice/error.hpp"

namespace lattice {

namespace {

constexpr double kShiftTolerance = 1e-3;
constexpr double kPivotTolerance = 1e-3;
constexpr double kJointTolerance = 1e-6;
constexpr std::size_t kDiscreteCutoff = 50;

bool has_width(const IntervalSet& s) {
  return std::any_of(s.parts.begin(), s.parts.end(), [](const auto& p) { return p.second > p.first; });
}

double quantile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double pos = p * static_cast<double>(v.size() - 1);
  const auto i = static_cast<std::size_t>(std::floor(pos));
  if (i + 1 >= v.size()) return v.back();
  return v[i] + (pos - static_cast<double>(i)) * (v[i + 1] - v[i]);
}

std::vector<double> unique_values(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

// Finite set of the distinct values when there are few, else the trimmed range.
IntervalSet empirical_set(const std::vector<double>& v, double trim) {
  const auto u = unique_values(v);
  IntervalSet s;
  if (u.size() <= kDiscreteCutoff) {
    for (double x : u) s.parts.emplace_back(x, x);
  } else {
    s.parts.emplace_back(quantile(v, trim), quantile(v, 1.0 - trim));
  }
  return s;
}

double nearest_to_zero(const IntervalSet& s) {
  double best = 0.0;
  double dist = kInf;
  for (const auto& [lo, hi] : s.parts) {
    const double c = std::clamp(0.0, lo, hi);
    if (std::abs(c) < dist) {
      dist = std::abs(c);
      best = c;
    }
  }
  return best;
}

std::vector<double> representative_points(const IntervalSet& s) {
  std::vector<double> pts;
  for (auto [lo, hi] : s.parts) {
    if (!std::isfinite(lo) && !std::isfinite(hi)) {
      lo = -3.0;
      hi = 3.0;
    } else if (!std::isfinite(lo)) {
      lo = hi - 3.0;
    } else if (!std::isfinite(hi)) {
      hi = lo + 3.0;
    }
    pts.push_back(lo);
    if (hi > lo) pts.push_back(hi);
  }
  pts = unique_values(pts);
  if (pts.size() > 64) {
    std::vector<double> thin;
    for (std::size_t i = 0; i < 64; ++i) thin.push_back(pts[i * (pts.size() - 1) / 63]);
    pts = unique_values(thin);
  }
  return pts;
}

IntervalSet law_set(const Law& law) {
  if (const auto* d = std::get_if<DiscreteLaw>(&law)) {
    IntervalSet s;
    for (double v : d->values) s.parts.emplace_back(v, v);
    s.normalize();
    return s;
  }
  const Support sup = law_support(law);
  return IntervalSet::interval(sup.lo, sup.hi);
}

}  // namespace

double IntervalSet::lo() const {
  if (parts.empty()) throw UsageError("empty interval set has no bounds");
  double v = kInf;
  for (const auto& p : parts) v = std::min(v, p.first);
  return v;
}

double IntervalSet::hi() const {
  if (parts.empty()) throw UsageError("empty interval set has no bounds");
  double v = -kInf;
  for (const auto& p : parts) v = std::max(v, p.second);
  return v;
}

void IntervalSet::normalize() {
  std::sort(parts.begin(), parts.end());
  std::vector<std::pair<double, double>> merged;
  for (const auto& p : parts) {
    if (!merged.empty() && p.first <= merged.back().second) {
      merged.back().second = std::max(merged.back().second, p.second);
    } else {
      merged.push_back(p);
    }
  }
  parts = std::move(merged);
}

IntervalSet IntervalSet::scaled(double c) const {
  if (c == 0.0) return empty() ? IntervalSet{} : point(0.0);
  IntervalSet s;
  for (const auto& [a, b] : parts) {
    const double x = c * a;
    const double y = c * b;
    s.parts.emplace_back(std::min(x, y), std::max(x, y));
  }
  s.normalize();
  return s;
}

IntervalSet IntervalSet::plus(const IntervalSet& other, std::size_t max_parts) const {
  if (empty() || other.empty()) return {};
  IntervalSet s;
  if (parts.size() * other.parts.size() > max_parts) {
    s.parts.emplace_back(lo() + other.lo(), hi() + other.hi());
    return s;
  }
  for (const auto& p : parts)
    for (const auto& q : other.parts) s.parts.emplace_back(p.first + q.first, p.second + q.second);
  s.normalize();
  return s;
}

IdentificationInput analytic_input(const DgpSpec& spec, std::size_t sample_size) {
  spec.validate();
  IdentificationInput in;
  in.source = "spec";
  in.lattice = spec.lattice;
  in.model = spec.model;

  std::map<std::string, IntervalSet> raw;
  for (const auto& v : spec.variables) {
    IntervalSet s = law_set(v.law);
    for (const auto& [src, coef] : v.linkage) s = s.plus(raw.at(src).scaled(coef));
    raw[v.name] = std::move(s);
  }

  const std::size_t D = spec.dims();
  in.regressors.resize(D);
  in.index_set.resize(D);
  for (std::size_t d = 0; d < D; ++d) {
    const auto& names = spec.regressors[d];
    std::vector<IntervalSet> contrib;
    for (std::size_t k = 0; k < names.size(); ++k) contrib.push_back(raw.at(names[k]).scaled(spec.model.beta[d][k]));
    for (std::size_t k = 0; k < names.size(); ++k) {
      RegressorInfo r;
      r.name = names[k];
      const IntervalSet& s = raw.at(names[k]);
      r.continuous = has_width(s);
      r.distinct = r.continuous ? 0 : s.parts.size();
      r.coefficient = spec.model.beta[d][k];
      r.exclusive = spec.is_exclusive(d, k);
      r.contribution = contrib[k];
      r.others = IntervalSet::point(0.0);
      for (std::size_t k2 = 0; k2 < names.size(); ++k2)
        if (k2 != k) r.others = r.others.plus(contrib[k2]);
      in.regressors[d].push_back(std::move(r));
    }
    IntervalSet total = IntervalSet::point(0.0);
    for (const auto& c : contrib) total = total.plus(c);
    in.index_set[d] = std::move(total);
  }

  DgpSpec sampled = spec;
  sampled.seed = derive_seed(spec.seed, 0xd1a9);
  const Dataset sample = generate(sampled, sample_size);
  in.covariates = sample.covariates;
  in.index_sample.resize(static_cast<Eigen::Index>(sample.size()), static_cast<Eigen::Index>(D));
  for (std::size_t d = 0; d < D; ++d) in.index_sample.col(static_cast<Eigen::Index>(d)) = sample.covariates[d] * spec.model.beta[d];

  const ErrorLaw errors = spec.errors;
  in.margin = [errors](std::size_t d, double e) { return error_margin_cdf(errors, d, e); };
  in.joint = error_cdf(errors);
  return in;
}

IdentificationInput empirical_input(const Dataset& data, const LatticeSpec& lattice, const IndexModel& model,
                                    double rho, double trim) {
  data.validate(lattice);
  data.validate(model);
  if (data.size() < 2) throw DataError("identification checks need at least two observations");
  if (!(trim >= 0.0 && trim < 0.5)) throw UsageError("trim must lie in [0, 0.5)");
  IdentificationInput in;
  in.source = "data";
  in.lattice = lattice;
  in.model = model;
  in.covariates = data.covariates;
  const std::size_t D = data.dims();
  const auto n = static_cast<Eigen::Index>(data.size());
  in.index_sample.resize(n, static_cast<Eigen::Index>(D));
  for (std::size_t d = 0; d < D; ++d) in.index_sample.col(static_cast<Eigen::Index>(d)) = data.covariates[d] * model.beta[d];

  const auto name_of = [&](std::size_t d, Eigen::Index k) -> std::string {
    if (d < data.names.size() && static_cast<std::size_t>(k) < data.names[d].size()) return data.names[d][static_cast<std::size_t>(k)];
    return {};
  };

  in.regressors.resize(D);
  in.index_set.resize(D);
  for (std::size_t d = 0; d < D; ++d) {
    const Eigen::MatrixXd& X = data.covariates[d];
    const Eigen::VectorXd idx = in.index_sample.col(static_cast<Eigen::Index>(d));
    in.index_set[d] = empirical_set(std::vector<double>(idx.data(), idx.data() + idx.size()), trim);
    for (Eigen::Index k = 0; k < X.cols(); ++k) {
      RegressorInfo r;
      r.name = name_of(d, k);
      const Eigen::VectorXd col = X.col(k);
      std::vector<double> v(col.data(), col.data() + col.size());
      r.distinct = unique_values(v).size();
      r.continuous = r.distinct >= kDiscreteCutoff;
      r.coefficient = model.beta[d][k];
      r.exclusive = true;
      for (std::size_t d2 = 0; d2 < D && r.exclusive; ++d2) {
        if (d2 == d) continue;
        for (Eigen::Index k2 = 0; k2 < data.covariates[d2].cols(); ++k2) {
          if ((!r.name.empty() && r.name == name_of(d2, k2)) || data.covariates[d2].col(k2) == col) {
            r.exclusive = false;
            break;
          }
        }
      }
      r.contribution = empirical_set(v, trim).scaled(r.coefficient);
      const Eigen::VectorXd rest = idx - r.coefficient * col;
      r.others = empirical_set(std::vector<double>(rest.data(), rest.data() + rest.size()), trim);
      in.regressors[d].push_back(std::move(r));
    }
  }
  in.margin = [](std::size_t, double e) { return std_normal_cdf(e); };
  in.joint = gaussian_cdf(rho);
  return in;
}

bool check_rank(const Eigen::MatrixXd& X) {
  const Eigen::Index k = X.cols() + 1;
  if (X.rows() < k) return false;
  Eigen::MatrixXd A(X.rows(), k);
  A.col(0).setOnes();
  A.rightCols(X.cols()) = X;
  for (Eigen::Index c = 0; c < k; ++c) {
    const double norm = A.col(c).norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) return false;
    A.col(c) /= norm;
  }
  const Eigen::VectorXd sv = Eigen::JacobiSVD<Eigen::MatrixXd>(A).singularValues();
  return sv.minCoeff() > 1e-8 * sv.maxCoeff();
}

bool check_index_variation(const IdentificationInput& in, std::size_t d) {
  const auto& regs = in.regressors.at(d);
  return std::any_of(regs.begin(), regs.end(), [](const RegressorInfo& r) { return r.continuous && r.coefficient != 0.0; });
}

std::vector<GapOverlap> check_threshold_gap_overlap(const IdentificationInput& in, std::size_t d) {
  const auto& a = in.lattice.finite_thresholds(d);
  const double lo = in.index_set.at(d).lo();
  const double hi = in.index_set.at(d).hi();
  std::vector<GapOverlap> out;
  for (std::size_t j = 0; j + 1 < a.size(); ++j) {
    GapOverlap g;
    g.j = static_cast<int>(j) + 1;
    g.lo = a[j + 1] - hi;
    g.hi = a[j] - lo;
    g.overlaps = a[j + 1] - a[j] <= hi - lo;
    out.push_back(g);
  }
  return out;
}

double check_coverage(const IdentificationInput& in, std::size_t d) {
  IntervalSet u;
  for (double alpha : in.lattice.finite_thresholds(d))
    for (const auto& [lo, hi] : in.index_set.at(d).parts) u.parts.emplace_back(in.margin(d, alpha - hi), in.margin(d, alpha - lo));
  u.normalize();
  double m = 0.0;
  for (const auto& [lo, hi] : u.parts) m += hi - lo;
  return m;
}

std::vector<bool> check_exclusive_shift(const IdentificationInput& in) {
  std::vector<bool> out;
  for (std::size_t d = 0; d < in.regressors.size(); ++d) {
    bool ok = false;
    for (const auto& r : in.regressors[d]) {
      if (!r.exclusive || r.coefficient == 0.0 || r.contribution.empty()) continue;
      const double e_lo = r.contribution.lo();
      const double e_hi = r.contribution.hi();
      const double o_lo = r.others.lo();
      const double o_hi = r.others.hi();
      bool all = true;
      for (double alpha : in.lattice.finite_thresholds(d)) {
        const bool low = e_hi == kInf || (std::isfinite(o_lo) && in.margin(d, alpha - o_lo - e_hi) <= kShiftTolerance);
        const bool high = e_lo == -kInf || (std::isfinite(o_hi) && in.margin(d, alpha - o_hi - e_lo) >= 1.0 - kShiftTolerance);
        if (!low || !high) {
          all = false;
          break;
        }
      }
      if (all) {
        ok = true;
        break;
      }
    }
    out.push_back(ok);
  }
  return out;
}

RhoConditions check_rho_conditions(const IdentificationInput& in) {
  RhoConditions rc;
  const std::size_t D = in.lattice.dims();
  if (D != 2) throw UsageError("correlation conditions are defined for two dimensions");

  for (std::size_t d = 0; d < D && !rc.a; ++d)
    for (double alpha : in.lattice.finite_thresholds(d))
      for (const auto& [lo, hi] : in.index_set[d].parts)
        if (in.margin(d, alpha - hi) <= 0.5 + kPivotTolerance && in.margin(d, alpha - lo) >= 0.5 - kPivotTolerance) rc.a = true;

  // With the third point equal to the first, the condition reduces to a pair
  // of points on the same side of the median in one margin and opposite sides
  // in the other.
  const Eigen::Index n = in.index_sample.rows();
  for (std::size_t d1 = 0; d1 < D && !rc.b; ++d1) {
    const std::size_t d2 = 1 - d1;
    for (double a1 : in.lattice.finite_thresholds(d1)) {
      for (double a2 : in.lattice.finite_thresholds(d2)) {
        bool seen[2][2] = {{false, false}, {false, false}};
        for (Eigen::Index i = 0; i < n; ++i) {
          const double s1 = in.margin(d1, a1 - in.index_sample(i, static_cast<Eigen::Index>(d1))) - 0.5;
          const double s2 = in.margin(d2, a2 - in.index_sample(i, static_cast<Eigen::Index>(d2))) - 0.5;
          if (s1 == 0.0 || s2 == 0.0) continue;
          seen[s2 > 0.0][s1 > 0.0] = true;
        }
        if ((seen[1][0] && seen[1][1]) || (seen[0][0] && seen[0][1])) rc.b = true;
      }
    }
  }

  for (std::size_t d1 = 0; d1 < D && !rc.c; ++d1) {
    const std::size_t d2 = 1 - d1;
    const double c2 = nearest_to_zero(in.index_set[d2]);
    for (const auto& r : in.regressors[d1]) {
      if (!r.exclusive || r.coefficient == 0.0 || r.contribution.empty()) continue;
      const double o = nearest_to_zero(r.others);
      const auto pts = representative_points(r.contribution);
      for (double a1 : in.lattice.finite_thresholds(d1)) {
        for (double a2 : in.lattice.finite_thresholds(d2)) {
          double p[2];
          p[d2] = a2 - c2;
          double fmin = kInf;
          double fmax = -kInf;
          for (double e : pts) {
            p[d1] = a1 - o - e;
            const double f = in.joint(p);
            fmin = std::min(fmin, f);
            fmax = std::max(fmax, f);
          }
          if (fmax - fmin > kJointTolerance) rc.c = true;
        }
      }
    }
  }
  return rc;
}

std::string level_name(IdentificationLevel level) {
  switch (level) {
    case IdentificationLevel::unidentified: return "unidentified";
    case IdentificationLevel::params_only: return "params-only";
    case IdentificationLevel::plus_threshold_gaps: return "plus-threshold-gaps";
    case IdentificationLevel::plus_marginals: return "plus-marginals";
    case IdentificationLevel::plus_joint_cdf: return "plus-joint-cdf";
  }
  return "unknown";
}

IdentificationReport classify(const IdentificationInput& in) {
  IdentificationReport rep;
  rep.source = in.source;
  const std::size_t D = in.lattice.dims();
  if (D == 0 || in.regressors.size() != D || in.index_set.size() != D || in.covariates.size() != D)
    throw UsageError("identification input has inconsistent dimensions");
  for (std::size_t d = 0; d < D; ++d) {
    rep.rank.push_back(check_rank(in.covariates[d]));
    rep.index_variation.push_back(check_index_variation(in, d));
    rep.overlaps.push_back(check_threshold_gap_overlap(in, d));
    rep.gaps.push_back(std::all_of(rep.overlaps.back().begin(), rep.overlaps.back().end(),
                                   [](const GapOverlap& g) { return g.overlaps; }));
    rep.coverage.push_back(check_coverage(in, d));
    rep.coverage_ok.push_back(rep.coverage.back() >= 1.0 - kCoverageTolerance);
  }
  rep.exclusive_shift = check_exclusive_shift(in);
  const auto passing = static_cast<std::size_t>(std::count(rep.exclusive_shift.begin(), rep.exclusive_shift.end(), true));
  rep.joint = passing + 1 >= D;
  if (D == 2) rep.rho = check_rho_conditions(in);

  const auto all = [](const std::vector<bool>& v) { return std::all_of(v.begin(), v.end(), [](bool b) { return b; }); };
  using L = IdentificationLevel;
  if (!all(rep.rank) || !all(rep.index_variation)) rep.level = L::unidentified;
  else if (!all(rep.gaps)) rep.level = L::params_only;
  else if (!all(rep.coverage_ok)) rep.level = L::plus_threshold_gaps;
  else if (!rep.joint) rep.level = L::plus_marginals;
  else rep.level = L::plus_joint_cdf;
  return rep;
}

IdentificationReport classify(const DgpSpec& spec) { return classify(analytic_input(spec)); }

IdentificationReport classify(const Dataset& data, const LatticeSpec& lattice, const IndexModel& model, double rho) {
  return classify(empirical_input(data, lattice, model, rho));
}

std::string report_to_json(const IdentificationReport& r) {
  using nlohmann::json;
  json dims = json::array();
  for (std::size_t d = 0; d < r.rank.size(); ++d) {
    json ov = json::array();
    for (const auto& g : r.overlaps[d]) ov.push_back({{"pair", {g.j, g.j + 1}}, {"overlaps", g.overlaps}, {"lo", g.lo}, {"hi", g.hi}});
    dims.push_back({{"rank", static_cast<bool>(r.rank[d])},
                    {"index_variation", static_cast<bool>(r.index_variation[d])},
                    {"gap_overlaps", ov},
                    {"gaps", static_cast<bool>(r.gaps[d])},
                    {"coverage", r.coverage[d]},
                    {"coverage_ok", static_cast<bool>(r.coverage_ok[d])},
                    {"exclusive_shift", static_cast<bool>(r.exclusive_shift[d])}});
  }
  json j{{"source", r.source},
         {"level", level_name(r.level)},
         {"dimensions", dims},
         {"joint", r.joint},
         {"rho_conditions", {{"a", r.rho.a}, {"b", r.rho.b}, {"c", r.rho.c}}}};
  return j.dump(2);
}

std::string report_to_text(const IdentificationReport& r) {
  std::ostringstream os;
  const auto yn = [](bool b) { return b ? "yes" : "no"; };
  os << "level: " << level_name(r.level) << " (" << r.source << ")\n";
  for (std::size_t d = 0; d < r.rank.size(); ++d) {
    os << "dimension " << d + 1 << ": rank " << yn(r.rank[d]) << ", index variation " << yn(r.index_variation[d])
       << ", gap overlap " << yn(r.gaps[d]) << ", coverage " << r.coverage[d] << " (" << yn(r.coverage_ok[d])
       << "), exclusive shift " << yn(r.exclusive_shift[d]) << "\n";
    for (const auto& g : r.overlaps[d])
      os << "  thresholds " << g.j << "," << g.j + 1 << ": " << (g.overlaps ? "overlap" : "no overlap") << " [" << g.lo
         << ", " << g.hi << "]\n";
  }
  os << "joint cdf: " << yn(r.joint) << "\n";
  os << "rho conditions: a " << yn(r.rho.a) << ", b " << yn(r.rho.b) << ", c " << yn(r.rho.c) << "\n";
  return os.str();
}

}  // namespace lattice
