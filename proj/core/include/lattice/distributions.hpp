#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace lattice {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Correlation coefficient strictly inside (-1, 1).
class Correlation {
 public:
  explicit Correlation(double rho);
  [[nodiscard]] double value() const noexcept { return rho_; }

 private:
  double rho_;
};

// ---------------------------------------------------------------------------
// Scalar kernels

[[nodiscard]] double std_normal_pdf(double z) noexcept;

/// Standard normal CDF. Accepts +-infinity; throws UsageError on NaN.
[[nodiscard]] double std_normal_cdf(double z);

/// Inverse standard normal CDF for p in (0, 1).
[[nodiscard]] double std_normal_quantile(double p);

/// Standard bivariate normal density with correlation rho.
[[nodiscard]] double bivariate_normal_pdf(double a, double b, double rho) noexcept;

/// P(Z1 <= a, Z2 <= b) for standard normals with correlation rho.
///
/// Evaluates the single-integral representation
///   int_{-inf}^{a} phi(t) Phi((b - rho t) / sqrt(1 - rho^2)) dt
/// with composite 20-point Gauss-Legendre panels whose widths adapt to the
/// conditional scale sqrt(1 - rho^2)/|rho| around the transition point
/// t = b / rho. Infinite limits short-circuit to marginals, 0 or 1.
[[nodiscard]] double bivariate_normal_cdf(double a, double b, Correlation rho);

/// Unchecked variant of bivariate_normal_cdf for hot loops (|rho| < 1 assumed).
[[nodiscard]] double bvn_cdf(double a, double b, double rho);

/// Mass of the half-open rectangle (l1, u1] x (l2, u2] under the standard
/// bivariate normal with correlation rho, together with its partial
/// derivatives. Tail rectangles are reflected toward the origin before
/// evaluation so that tiny masses keep relative precision.
struct RectangleMass {
  double mass = 0.0;
  double d_l1 = 0.0;
  double d_u1 = 0.0;
  double d_l2 = 0.0;
  double d_u2 = 0.0;
  double d_rho = 0.0;
};
[[nodiscard]] RectangleMass bvn_rectangle(double l1, double u1, double l2, double u2,
                                          double rho, bool with_gradient = true);

/// Mass of (l, u] under the standard normal, computed on the side of the
/// origin that avoids cancellation.
[[nodiscard]] double normal_interval_mass(double l, double u);

// ---------------------------------------------------------------------------
// Random number generation

/// SplitMix64 finalizer; used to derive independent stream seeds.
[[nodiscard]] std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Counter-based seed split: distinct (base, stream) pairs give
/// statistically independent seeds regardless of scheduling order.
[[nodiscard]] std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) noexcept;

/// Deterministic generator with portable transforms (no reliance on the
/// implementation-defined std:: distributions).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  /// Uniform on the open interval (0, 1) with 53 random bits.
  double uniform();
  double normal();
  /// Gamma(shape, 1) via Marsaglia-Tsang.
  double gamma(double shape);

 private:
  std::mt19937_64 engine_;
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

// ---------------------------------------------------------------------------
// Covariate and error laws

struct UniformLaw {
  double a = 0.0;
  double b = 1.0;
};
struct NormalLaw {
  double mean = 0.0;
  double sd = 1.0;
};
struct LaplaceLaw {
  double location = 0.0;
  double scale = 1.0;
};
struct StudentTLaw {
  double df = 7.0;
};
struct LogisticLaw {
  double location = 0.0;
  double scale = 1.0;
};
struct DiscreteLaw {
  std::vector<double> values;
  std::vector<double> weights;  ///< empty means equal weights
};

using Law = std::variant<UniformLaw, NormalLaw, LaplaceLaw, StudentTLaw, LogisticLaw, DiscreteLaw>;

/// Throws UsageError when the law parameters are invalid.
void validate(const Law& law);

/// Short tag used in JSON ("uniform", "normal", "laplace", "student_t",
/// "logistic", "discrete").
[[nodiscard]] std::string law_tag(const Law& law);

/// Draw n values; identical (law, n, seed) always give identical output.
[[nodiscard]] std::vector<double> sample(const Law& law, std::size_t n, std::uint64_t seed);

/// Single draw from an existing generator.
[[nodiscard]] double draw(const Law& law, Rng& rng);

[[nodiscard]] double law_cdf(const Law& law, double x);
[[nodiscard]] double law_quantile(const Law& law, double p);
[[nodiscard]] double law_mean(const Law& law);
[[nodiscard]] double law_variance(const Law& law);

/// Closed support hull [lo, hi]; +-infinity for unbounded laws.
struct Support {
  double lo = -kInf;
  double hi = kInf;
};
[[nodiscard]] Support law_support(const Law& law);
[[nodiscard]] bool is_discrete(const Law& law) noexcept;

}  // namespace lattice
