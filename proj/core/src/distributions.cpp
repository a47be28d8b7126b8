#include "lattice/distributions.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>

#include "lattice/error.hpp"

namespace lattice {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

template <std::size_t N>
struct GaussLegendre {
  std::array<double, N> nodes{};
  std::array<double, N> weights{};

  GaussLegendre() {
    for (std::size_t i = 0; i < N; ++i) {
      double x = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) /
                          (static_cast<double>(N) + 0.5));
      double dp = 0.0;
      for (int iter = 0; iter < 100; ++iter) {
        double p0 = 1.0;
        double p1 = x;
        for (std::size_t k = 2; k <= N; ++k) {
          const double kk = static_cast<double>(k);
          const double p2 = ((2.0 * kk - 1.0) * x * p1 - (kk - 1.0) * p0) / kk;
          p0 = p1;
          p1 = p2;
        }
        dp = static_cast<double>(N) * (x * p1 - p0) / (x * x - 1.0);
        const double dx = p1 / dp;
        x -= dx;
        if (std::abs(dx) < 1e-16) break;
      }
      nodes[i] = x;
      weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
  }
};

const GaussLegendre<20>& gl20() {
  static const GaussLegendre<20> rule;
  return rule;
}

// Integral of phi(t) * Phi((b - rho t) / s) over [lo, hi] split into panels no
// wider than the local length scale.
double bvn_integral(double a, double b, double rho) {
  const double s = std::sqrt((1.0 - rho) * (1.0 + rho));
  double lo = std::min(-9.0, a - 4.0);
  double hi = std::min(a, 9.0);
  // Outside these limits the conditional probability is below Phi(-12).
  if (rho > 0.0) {
    hi = std::min(hi, (b + 12.0 * s) / rho);
  } else {
    lo = std::max(lo, (b + 12.0 * s) / rho);
  }
  if (!(hi > lo)) return 0.0;

  const double width = s / std::abs(rho);
  const double kink = b / rho;
  const double fine_lo = kink - 9.0 * width;
  const double fine_hi = kink + 9.0 * width;
  const double coarse_step = 3.0;
  const double fine_step = std::min(coarse_step, 3.0 * width);

  const auto& rule = gl20();
  auto panel = [&](double x0, double x1) {
    const double half = 0.5 * (x1 - x0);
    const double mid = 0.5 * (x1 + x0);
    double acc = 0.0;
    for (std::size_t i = 0; i < 20; ++i) {
      const double t = mid + half * rule.nodes[i];
      const double inner = 0.5 * std::erfc(-(b - rho * t) / s * kInvSqrt2);
      acc += rule.weights[i] * std::exp(-0.5 * t * t) * inner;
    }
    return acc * half * kInvSqrt2Pi;
  };
  auto integrate = [&](double x0, double x1, double step) {
    if (!(x1 > x0)) return 0.0;
    const auto count = static_cast<int>(std::ceil((x1 - x0) / step));
    const double h = (x1 - x0) / count;
    double acc = 0.0;
    for (int k = 0; k < count; ++k) acc += panel(x0 + k * h, k + 1 == count ? x1 : x0 + (k + 1) * h);
    return acc;
  };

  const double f0 = std::clamp(fine_lo, lo, hi);
  const double f1 = std::clamp(fine_hi, lo, hi);
  return integrate(lo, f0, coarse_step) + integrate(f0, f1, fine_step) +
         integrate(f1, hi, coarse_step);
}

struct CornerValue {
  double f = 0.0;
  double dx = 0.0;
  double dy = 0.0;
  double drho = 0.0;
};

CornerValue corner(double x, double y, double rho, bool with_gradient) {
  CornerValue c;
  if (x == -kInf || y == -kInf) return c;
  if (x == kInf && y == kInf) {
    c.f = 1.0;
    return c;
  }
  if (x == kInf) {
    c.f = std_normal_cdf(y);
    if (with_gradient) c.dy = std_normal_pdf(y);
    return c;
  }
  if (y == kInf) {
    c.f = std_normal_cdf(x);
    if (with_gradient) c.dx = std_normal_pdf(x);
    return c;
  }
  c.f = bvn_cdf(x, y, rho);
  if (with_gradient) {
    const double s = std::sqrt((1.0 - rho) * (1.0 + rho));
    c.dx = std_normal_pdf(x) * std_normal_cdf((y - rho * x) / s);
    c.dy = std_normal_pdf(y) * std_normal_cdf((x - rho * y) / s);
    c.drho = bivariate_normal_pdf(x, y, rho);
  }
  return c;
}

}  // namespace

Correlation::Correlation(double rho) : rho_(rho) {
  if (!std::isfinite(rho) || !(std::abs(rho) < 1.0)) {
    throw UsageError("correlation must lie strictly inside (-1, 1), got " + std::to_string(rho));
  }
}

double std_normal_pdf(double z) noexcept {
  if (std::isinf(z)) return 0.0;
  return kInvSqrt2Pi * std::exp(-0.5 * z * z);
}

double std_normal_cdf(double z) {
  if (std::isnan(z)) throw UsageError("std_normal_cdf: NaN argument");
  return 0.5 * std::erfc(-z * kInvSqrt2);
}

double std_normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw UsageError("std_normal_quantile: probability must lie in (0, 1), got " + std::to_string(p));
  }
  if (p > 0.5) return -std_normal_quantile(1.0 - p);
  if (p == 0.5) return 0.0;
  double lo = -40.0;
  double hi = 0.0;
  while (hi - lo > 1e-11 * std::max(1.0, std::abs(lo))) {
    const double mid = 0.5 * (lo + hi);
    if (std_normal_cdf(mid) < p) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  double x = 0.5 * (lo + hi);
  const double dens = std_normal_pdf(x);
  if (dens > 0.0) x -= (std_normal_cdf(x) - p) / dens;
  return x;
}

double bivariate_normal_pdf(double a, double b, double rho) noexcept {
  if (std::isinf(a) || std::isinf(b)) return 0.0;
  const double one_minus = (1.0 - rho) * (1.0 + rho);
  const double q = (a * a - 2.0 * rho * a * b + b * b) / one_minus;
  return std::exp(-0.5 * q) / (2.0 * std::numbers::pi * std::sqrt(one_minus));
}

double bvn_cdf(double a, double b, double rho) {
  if (std::isnan(a) || std::isnan(b) || std::isnan(rho)) {
    throw UsageError("bivariate_normal_cdf: NaN argument");
  }
  if (a == -kInf || b == -kInf) return 0.0;
  if (a == kInf) return std_normal_cdf(b);
  if (b == kInf) return std_normal_cdf(a);
  if (rho == 0.0) return std_normal_cdf(a) * std_normal_cdf(b);
  if (b < a) std::swap(a, b);
  if ((1.0 - std::abs(rho)) < 1e-14) {
    if (rho > 0.0) return std_normal_cdf(a);
    return std::max(0.0, std_normal_cdf(a) - std_normal_cdf(-b));
  }
  return std::clamp(bvn_integral(a, b, rho), 0.0, 1.0);
}

double bivariate_normal_cdf(double a, double b, Correlation rho) {
  return bvn_cdf(a, b, rho.value());
}

double normal_interval_mass(double l, double u) {
  if (!(u > l)) return 0.0;
  if (l > 0.0) return std_normal_cdf(-l) - std_normal_cdf(-u);
  return std_normal_cdf(u) - std_normal_cdf(l);
}

RectangleMass bvn_rectangle(double l1, double u1, double l2, double u2, double rho,
                            bool with_gradient) {
  RectangleMass out;
  if (!(u1 > l1) || !(u2 > l2)) return out;
  // Reflect dimensions whose interval lies entirely above zero.
  const double s1 = l1 > 0.0 ? -1.0 : 1.0;
  const double s2 = l2 > 0.0 ? -1.0 : 1.0;
  const double a_lo = s1 > 0 ? l1 : -u1;
  const double a_hi = s1 > 0 ? u1 : -l1;
  const double b_lo = s2 > 0 ? l2 : -u2;
  const double b_hi = s2 > 0 ? u2 : -l2;
  const double r = s1 * s2 * rho;

  const CornerValue hh = corner(a_hi, b_hi, r, with_gradient);
  const CornerValue lh = corner(a_lo, b_hi, r, with_gradient);
  const CornerValue hl = corner(a_hi, b_lo, r, with_gradient);
  const CornerValue ll = corner(a_lo, b_lo, r, with_gradient);
  out.mass = hh.f - lh.f - hl.f + ll.f;
  if (with_gradient) {
    const double d_alo = -lh.dx + ll.dx;
    const double d_ahi = hh.dx - hl.dx;
    const double d_blo = -hl.dy + ll.dy;
    const double d_bhi = hh.dy - lh.dy;
    const double d_r = hh.drho - lh.drho - hl.drho + ll.drho;
    if (s1 > 0) {
      out.d_l1 = d_alo;
      out.d_u1 = d_ahi;
    } else {
      out.d_u1 = -d_alo;
      out.d_l1 = -d_ahi;
    }
    if (s2 > 0) {
      out.d_l2 = d_blo;
      out.d_u2 = d_bhi;
    } else {
      out.d_u2 = -d_blo;
      out.d_l2 = -d_bhi;
    }
    out.d_rho = s1 * s2 * d_r;
  }
  return out;
}

// ---------------------------------------------------------------------------

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30U)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27U)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31U);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) noexcept {
  return splitmix64(splitmix64(base) ^ splitmix64(stream + 0x632BE59BD9B4E019ULL));
}

double Rng::uniform() {
  // 53 random bits, shifted by half an ulp so 0 is never returned.
  return (static_cast<double>(engine_() >> 11U) + 0.5) * 0x1.0p-53;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_normal_;
  }
  double u = 0.0;
  double v = 0.0;
  double s = 0.0;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double f = std::sqrt(-2.0 * std::log(s) / s);
  spare_normal_ = v * f;
  has_spare_ = true;
  return u * f;
}

double Rng::gamma(double shape) {
  if (shape < 1.0) {
    const double g = gamma(shape + 1.0);
    return g * std::pow(uniform(), 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = 0.0;
    double v = 0.0;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

// ---------------------------------------------------------------------------

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::vector<double> normalized_weights(const DiscreteLaw& law) {
  std::vector<double> w = law.weights;
  if (w.empty()) w.assign(law.values.size(), 1.0);
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  for (double& x : w) x /= total;
  return w;
}

}  // namespace

void validate(const Law& law) {
  std::visit(Overloaded{
                 [](const UniformLaw& l) {
                   if (!(std::isfinite(l.a) && std::isfinite(l.b) && l.a < l.b))
                     throw UsageError("uniform law requires finite a < b");
                 },
                 [](const NormalLaw& l) {
                   if (!(std::isfinite(l.mean) && l.sd > 0.0 && std::isfinite(l.sd)))
                     throw UsageError("normal law requires finite mean and sd > 0");
                 },
                 [](const LaplaceLaw& l) {
                   if (!(std::isfinite(l.location) && l.scale > 0.0 && std::isfinite(l.scale)))
                     throw UsageError("laplace law requires finite location and scale > 0");
                 },
                 [](const StudentTLaw& l) {
                   if (!(l.df > 0.0 && std::isfinite(l.df)))
                     throw UsageError("student_t law requires df > 0");
                 },
                 [](const LogisticLaw& l) {
                   if (!(std::isfinite(l.location) && l.scale > 0.0 && std::isfinite(l.scale)))
                     throw UsageError("logistic law requires finite location and scale > 0");
                 },
                 [](const DiscreteLaw& l) {
                   if (l.values.empty()) throw UsageError("discrete law requires at least one value");
                   if (!l.weights.empty() && l.weights.size() != l.values.size())
                     throw UsageError("discrete law: weights and values differ in length");
                   for (double w : l.weights)
                     if (!(w >= 0.0 && std::isfinite(w)))
                       throw UsageError("discrete law: weights must be finite and nonnegative");
                   if (!l.weights.empty() &&
                       std::accumulate(l.weights.begin(), l.weights.end(), 0.0) <= 0.0)
                     throw UsageError("discrete law: weights sum to zero");
                   for (double v : l.values)
                     if (!std::isfinite(v)) throw UsageError("discrete law: values must be finite");
                 },
             },
             law);
}

std::string law_tag(const Law& law) {
  return std::visit(Overloaded{
                        [](const UniformLaw&) { return std::string("uniform"); },
                        [](const NormalLaw&) { return std::string("normal"); },
                        [](const LaplaceLaw&) { return std::string("laplace"); },
                        [](const StudentTLaw&) { return std::string("student_t"); },
                        [](const LogisticLaw&) { return std::string("logistic"); },
                        [](const DiscreteLaw&) { return std::string("discrete"); },
                    },
                    law);
}

double draw(const Law& law, Rng& rng) {
  return std::visit(
      Overloaded{
          [&](const UniformLaw& l) { return l.a + (l.b - l.a) * rng.uniform(); },
          [&](const NormalLaw& l) { return l.mean + l.sd * rng.normal(); },
          [&](const LaplaceLaw& l) {
            const double u = rng.uniform() - 0.5;
            const double sign = u < 0.0 ? -1.0 : 1.0;
            return l.location - l.scale * sign * std::log1p(-2.0 * std::abs(u));
          },
          [&](const StudentTLaw& l) {
            const double z = rng.normal();
            const double chi2 = 2.0 * rng.gamma(0.5 * l.df);
            return z / std::sqrt(chi2 / l.df);
          },
          [&](const LogisticLaw& l) {
            const double u = rng.uniform();
            return l.location + l.scale * std::log(u / (1.0 - u));
          },
          [&](const DiscreteLaw& l) {
            const double u = rng.uniform();
            const std::vector<double> w = normalized_weights(l);
            double cum = 0.0;
            for (std::size_t i = 0; i < w.size(); ++i) {
              cum += w[i];
              if (u < cum) return l.values[i];
            }
            return l.values.back();
          },
      },
      law);
}

std::vector<double> sample(const Law& law, std::size_t n, std::uint64_t seed) {
  validate(law);
  if (n == 0) throw UsageError("sample: n must be at least 1");
  Rng rng(seed);
  std::vector<double> out(n);
  for (double& x : out) x = draw(law, rng);
  return out;
}

double law_cdf(const Law& law, double x) {
  return std::visit(
      Overloaded{
          [&](const UniformLaw& l) { return std::clamp((x - l.a) / (l.b - l.a), 0.0, 1.0); },
          [&](const NormalLaw& l) { return std_normal_cdf((x - l.mean) / l.sd); },
          [&](const LaplaceLaw& l) {
            const double z = (x - l.location) / l.scale;
            return z < 0.0 ? 0.5 * std::exp(z) : 1.0 - 0.5 * std::exp(-z);
          },
          [&](const StudentTLaw& l) {
            if (std::isinf(x)) return x > 0 ? 1.0 : 0.0;
            return boost::math::cdf(boost::math::students_t(l.df), x);
          },
          [&](const LogisticLaw& l) {
            const double z = (x - l.location) / l.scale;
            return 1.0 / (1.0 + std::exp(-z));
          },
          [&](const DiscreteLaw& l) {
            const std::vector<double> w = normalized_weights(l);
            double cum = 0.0;
            for (std::size_t i = 0; i < w.size(); ++i)
              if (l.values[i] <= x) cum += w[i];
            return std::min(cum, 1.0);
          },
      },
      law);
}

double law_quantile(const Law& law, double p) {
  if (!(p > 0.0 && p < 1.0)) throw UsageError("law_quantile: p must lie in (0, 1)");
  return std::visit(
      Overloaded{
          [&](const UniformLaw& l) { return l.a + p * (l.b - l.a); },
          [&](const NormalLaw& l) { return l.mean + l.sd * std_normal_quantile(p); },
          [&](const LaplaceLaw& l) {
            return p < 0.5 ? l.location + l.scale * std::log(2.0 * p)
                           : l.location - l.scale * std::log(2.0 * (1.0 - p));
          },
          [&](const StudentTLaw& l) {
            return boost::math::quantile(boost::math::students_t(l.df), p);
          },
          [&](const LogisticLaw& l) { return l.location + l.scale * std::log(p / (1.0 - p)); },
          [&](const DiscreteLaw& l) {
            std::vector<std::size_t> order(l.values.size());
            std::iota(order.begin(), order.end(), 0);
            std::sort(order.begin(), order.end(),
                      [&](std::size_t i, std::size_t j) { return l.values[i] < l.values[j]; });
            const std::vector<double> w = normalized_weights(l);
            double cum = 0.0;
            for (std::size_t i : order) {
              cum += w[i];
              if (cum >= p) return l.values[i];
            }
            return l.values[order.back()];
          },
      },
      law);
}

double law_mean(const Law& law) {
  return std::visit(Overloaded{
                        [](const UniformLaw& l) { return 0.5 * (l.a + l.b); },
                        [](const NormalLaw& l) { return l.mean; },
                        [](const LaplaceLaw& l) { return l.location; },
                        [](const StudentTLaw&) { return 0.0; },
                        [](const LogisticLaw& l) { return l.location; },
                        [](const DiscreteLaw& l) {
                          const std::vector<double> w = normalized_weights(l);
                          double m = 0.0;
                          for (std::size_t i = 0; i < w.size(); ++i) m += w[i] * l.values[i];
                          return m;
                        },
                    },
                    law);
}

double law_variance(const Law& law) {
  return std::visit(
      Overloaded{
          [](const UniformLaw& l) { return (l.b - l.a) * (l.b - l.a) / 12.0; },
          [](const NormalLaw& l) { return l.sd * l.sd; },
          [](const LaplaceLaw& l) { return 2.0 * l.scale * l.scale; },
          [](const StudentTLaw& l) { return l.df > 2.0 ? l.df / (l.df - 2.0) : kInf; },
          [](const LogisticLaw& l) {
            return l.scale * l.scale * std::numbers::pi * std::numbers::pi / 3.0;
          },
          [](const DiscreteLaw& l) {
            const std::vector<double> w = normalized_weights(l);
            double m = 0.0;
            double m2 = 0.0;
            for (std::size_t i = 0; i < w.size(); ++i) {
              m += w[i] * l.values[i];
              m2 += w[i] * l.values[i] * l.values[i];
            }
            return m2 - m * m;
          },
      },
      law);
}

Support law_support(const Law& law) {
  return std::visit(Overloaded{
                        [](const UniformLaw& l) { return Support{l.a, l.b}; },
                        [](const DiscreteLaw& l) {
                          const auto [lo, hi] = std::minmax_element(l.values.begin(), l.values.end());
                          return Support{*lo, *hi};
                        },
                        [](const auto&) { return Support{}; },
                    },
                    law);
}

bool is_discrete(const Law& law) noexcept { return std::holds_alternative<DiscreteLaw>(law); }

}  // namespace lattice
