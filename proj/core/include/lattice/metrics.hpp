#pragma once

#include <optional>
#include <string>
#include <vector>

#include "lattice/cdf_grid.hpp"
#include "lattice/lattice.hpp"

namespace lattice {

struct MetricsReport {
  std::string method;
  std::size_t replicate = 0;
  std::size_t grid_points = 0;
  double rmse = 0.0;
  double ks = 0.0;
  double cvm = 0.0;
  /// Pearson correlation; empty when either side is constant.
  std::optional<double> correlation;
};

/// Compares an estimate (bilinearly interpolated off-node) with the exact
/// reference CDF at every point of axis1 x axis2.
[[nodiscard]] MetricsReport evaluate(const CdfGrid& estimate, const JointCdf& reference,
                                     const std::vector<double>& axis1, const std::vector<double>& axis2);

/// The standard evaluation axis: 80 points on [-2.5, 2.5].
[[nodiscard]] std::vector<double> evaluation_axis();

/// method,replicate,rmse,ks,cvm,corr (corr empty when undefined).
[[nodiscard]] std::string metrics_csv_header();
[[nodiscard]] std::string metrics_csv_row(const MetricsReport& m);

struct MetricsSummary {
  std::string method;
  std::size_t count = 0;
  double mean[4] = {0, 0, 0, 0};  ///< rmse, ks, cvm, corr
  double sd[4] = {0, 0, 0, 0};    ///< NaN when count < 2
};

/// Means and standard deviations per method, in first-appearance order.
[[nodiscard]] std::vector<MetricsSummary> summarize(const std::vector<MetricsReport>& reports);
/// method,rmse_mean,rmse_sd,ks_mean,ks_sd,cvm_mean,cvm_sd,corr_mean,corr_sd,reps
[[nodiscard]] std::string metrics_summary_csv(const std::vector<MetricsSummary>& summary);

}  // namespace lattice
