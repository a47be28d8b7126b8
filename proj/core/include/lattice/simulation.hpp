#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "lattice/distributions.hpp"
#include "lattice/lattice.hpp"

namespace lattice {

/// A raw covariate: draw from `law`, then add sum(coef * earlier variable).
/// Linkage may only reference variables declared before this one.
struct RawVariable {
  std::string name;
  Law law;
  std::vector<std::pair<std::string, double>> linkage;
};

struct GaussianErrors {
  double rho = 0.0;
};

/// Independent error margins (one law per dimension).
struct IndependentErrors {
  std::vector<Law> margins;
};

using ErrorLaw = std::variant<GaussianErrors, IndependentErrors>;

/// Joint CDF of an error law, usable with cell_probability.
[[nodiscard]] JointCdf error_cdf(const ErrorLaw& law);
/// Marginal CDF of dimension d of an error law.
[[nodiscard]] double error_margin_cdf(const ErrorLaw& law, std::size_t d, double e);

struct DgpSpec {
  std::string id;
  LatticeSpec lattice;
  std::vector<RawVariable> variables;
  /// regressors[d] lists the raw variable names entering x_d, in order.
  std::vector<std::vector<std::string>> regressors;
  IndexModel model;
  ErrorLaw errors = GaussianErrors{};
  std::uint64_t seed = 0;

  [[nodiscard]] std::size_t dims() const noexcept { return regressors.size(); }
  [[nodiscard]] const RawVariable& variable(std::string_view name) const;
  /// Number of dimensions whose index uses the named variable.
  [[nodiscard]] int usage_count(std::string_view name) const;
  /// Whether regressor k of dimension d enters no other dimension.
  [[nodiscard]] bool is_exclusive(std::size_t d, std::size_t k) const;
  /// Throws UsageError on an inconsistent specification.
  void validate() const;
};

/// Dataset plus the latent error draws that produced it.
struct Simulation {
  Dataset data;
  Eigen::MatrixXd errors;  ///< n x D
};

/// Draws n observations. Variable v uses stream derive_seed(seed, v) and the
/// errors use a stream of their own, so results do not depend on n.
[[nodiscard]] Dataset generate(const DgpSpec& spec, std::size_t n);
[[nodiscard]] Simulation generate_with_errors(const DgpSpec& spec, std::size_t n);

/// Ids: semiparam-1..4, twostep-5.1, param-design-1..3.
[[nodiscard]] DgpSpec builtin_spec(std::string_view id, std::uint64_t seed = 0);
[[nodiscard]] std::vector<std::string> builtin_ids();
[[nodiscard]] std::pair<DgpSpec, Dataset> builtin_dgp(std::string_view id, std::size_t n, std::uint64_t seed);

/// dgp.json round trip.
[[nodiscard]] std::string dgp_to_json(const DgpSpec& spec);
[[nodiscard]] DgpSpec dgp_from_json(std::string_view text);

}  // namespace lattice
