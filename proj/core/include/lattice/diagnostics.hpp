#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "lattice/lattice.hpp"
#include "lattice/simulation.hpp"

namespace lattice {

/// Finite union of closed intervals (points are degenerate intervals).
struct IntervalSet {
  std::vector<std::pair<double, double>> parts;

  [[nodiscard]] static IntervalSet point(double x) { return {{{x, x}}}; }
  [[nodiscard]] static IntervalSet interval(double lo, double hi) { return {{{lo, hi}}}; }
  [[nodiscard]] bool empty() const noexcept { return parts.empty(); }
  [[nodiscard]] double lo() const;
  [[nodiscard]] double hi() const;
  /// Sorts and merges overlapping parts.
  void normalize();
  [[nodiscard]] IntervalSet scaled(double c) const;
  /// Minkowski sum; falls back to the hull beyond `max_parts` pieces.
  [[nodiscard]] IntervalSet plus(const IntervalSet& other, std::size_t max_parts = 4096) const;
};

struct RegressorInfo {
  std::string name;
  bool continuous = false;    ///< support contains an interval
  std::size_t distinct = 0;   ///< distinct values (data) or support points (discrete law)
  double coefficient = 0.0;
  bool exclusive = false;     ///< enters no other dimension
  IntervalSet contribution;   ///< attainable values of coefficient * regressor
  IntervalSet others;         ///< attainable index values without this regressor
};

/// Everything the checks need, built either analytically from a DGP or
/// empirically from a dataset and a first stage.
struct IdentificationInput {
  std::string source;  ///< "spec" or "data"
  LatticeSpec lattice;
  IndexModel model;
  std::vector<Eigen::MatrixXd> covariates;           ///< sample used for rank checks
  Eigen::MatrixXd index_sample;                      ///< n x D index values for the sign search
  std::vector<std::vector<RegressorInfo>> regressors;
  std::vector<IntervalSet> index_set;                ///< attainable x_d beta_d
  std::function<double(std::size_t, double)> margin;  ///< F_d
  JointCdf joint;                                    ///< F (two dimensions)
};

/// Analytic input: true supports and error law; the rank check and the sign
/// search use a generated sample of `sample_size` draws.
[[nodiscard]] IdentificationInput analytic_input(const DgpSpec& spec, std::size_t sample_size = 2000);

/// Empirical input: supports are trimmed at the `trim` and 1 - `trim`
/// quantiles; margins are standard normal and the joint law is Gaussian with
/// correlation rho (the parametric first stage). A regressor is exclusive
/// when no column of another dimension has its name or identical values.
[[nodiscard]] IdentificationInput empirical_input(const Dataset& data, const LatticeSpec& lattice,
                                                  const IndexModel& model, double rho = 0.0, double trim = 0.005);

/// [1, X] has full column rank (columns scaled to unit norm first).
[[nodiscard]] bool check_rank(const Eigen::MatrixXd& X);

/// Some regressor varies over an interval (continuous law, or at least 50
/// distinct values in data) and has a nonzero coefficient.
[[nodiscard]] bool check_index_variation(const IdentificationInput& in, std::size_t d);

struct GapOverlap {
  int j = 0;  ///< pair (j, j+1), 1-based
  bool overlaps = false;
  double lo = 0.0;  ///< overlap of the attainable shift intervals
  double hi = 0.0;
};

[[nodiscard]] std::vector<GapOverlap> check_threshold_gap_overlap(const IdentificationInput& in, std::size_t d);

/// Lebesgue measure of the union over j of {F_d(alpha_j - v) : v attainable}.
[[nodiscard]] double check_coverage(const IdentificationInput& in, std::size_t d);
inline constexpr double kCoverageTolerance = 1e-3;

/// Per dimension: some exclusive regressor alone drives F_d(alpha_j - index)
/// below 1e-3 and above 1 - 1e-3 for every finite threshold j, whatever the
/// other regressors do. This is what sends the joint probability of the
/// target cells to 0 and to the lower-dimensional joint probability.
[[nodiscard]] std::vector<bool> check_exclusive_shift(const IdentificationInput& in);

struct RhoConditions {
  bool a = false;  ///< pivot: F_d(alpha_j - x beta) = 0.5 attainable within 1e-3
  bool b = false;  ///< sign flip in one margin with a fixed sign in the other
  bool c = false;  ///< exclusive regressor moves the joint probability by more than 1e-6
};

[[nodiscard]] RhoConditions check_rho_conditions(const IdentificationInput& in);

enum class IdentificationLevel { unidentified, params_only, plus_threshold_gaps, plus_marginals, plus_joint_cdf };

[[nodiscard]] std::string level_name(IdentificationLevel level);

struct IdentificationReport {
  std::string source;
  std::vector<bool> rank;
  std::vector<bool> index_variation;
  std::vector<std::vector<GapOverlap>> overlaps;
  std::vector<bool> gaps;
  std::vector<double> coverage;
  std::vector<bool> coverage_ok;
  std::vector<bool> exclusive_shift;
  bool joint = false;  ///< at least D - 1 dimensions pass the exclusive shift
  RhoConditions rho;
  IdentificationLevel level = IdentificationLevel::unidentified;
};

[[nodiscard]] IdentificationReport classify(const IdentificationInput& in);
[[nodiscard]] IdentificationReport classify(const DgpSpec& spec);
[[nodiscard]] IdentificationReport classify(const Dataset& data, const LatticeSpec& lattice, const IndexModel& model,
                                            double rho = 0.0);

[[nodiscard]] std::string report_to_json(const IdentificationReport& report);
[[nodiscard]] std::string report_to_text(const IdentificationReport& report);

}  // namespace lattice
