#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "lattice/metrics.hpp"
#include "lattice/parametric.hpp"
#include "lattice/semiparametric.hpp"
#include "lattice/simulation.hpp"

namespace lattice {

enum class Estimator { parametric, grid_inversion, kernel, sieve };

[[nodiscard]] std::string estimator_name(Estimator e);
/// Accepts "parametric", "grid-inversion", "kernel", "sieve".
[[nodiscard]] Estimator parse_estimator(std::string_view name);

/// Index and thresholds handed to the semiparametric estimators: the
/// generating values, or the parametric MLE of the same replication.
enum class FirstStage { truth, parametric };

/// Replication r draws its data from seed derive_seed(base, r).
[[nodiscard]] std::uint64_t replication_seed(std::uint64_t base, std::size_t r) noexcept;

/// Generating parameters of a Gaussian-error DGP in ParamVector form.
/// Throws UsageError for other error laws.
[[nodiscard]] ParamVector true_params(const DgpSpec& spec);

struct MonteCarloConfig {
  DgpSpec spec;
  std::size_t replications = 1;
  std::size_t n = 1000;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  std::vector<Estimator> estimators{Estimator::parametric};
  FirstStage first_stage = FirstStage::truth;
  FitOptions fit;
  GridInversionConfig grid;
  KernelConfig kernel;
  SieveConfig sieve;
  std::vector<double> eval_axis1 = evaluation_axis();
  std::vector<double> eval_axis2 = evaluation_axis();
  /// Called after each finished replication (serialized).
  std::function<void(std::size_t done, std::size_t total)> progress;
};

struct ParametricReplication {
  std::size_t replicate = 0;
  std::uint64_t seed = 0;
  bool converged = false;
  double loglik = 0.0;
  int iterations = 0;
  Eigen::VectorXd estimate;
  Eigen::VectorXd se;  ///< empty when unavailable
};

struct ReplicationFailure {
  std::size_t replicate = 0;
  std::string method;
  std::string message;
};

struct MonteCarloResult {
  std::string dgp;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::size_t replications = 0;
  std::vector<std::string> names;  ///< parameter names, when the DGP is Gaussian
  Eigen::VectorXd truth;
  std::vector<ParametricReplication> parametric;  ///< successful fits, by replicate
  std::vector<MetricsReport> metrics;             ///< by replicate, then estimator order
  std::vector<ReplicationFailure> failures;
};

/// Runs the replications on a pool of `workers` threads. Each replication
/// is independent; results are collected by replication index so the
/// output does not depend on the worker count. A failing estimator is
/// recorded in `failures` and the run continues.
[[nodiscard]] MonteCarloResult run_montecarlo(const MonteCarloConfig& config);

struct ParameterSummary {
  std::string name;
  double truth = 0.0;
  double mean = 0.0;
  double sd = 0.0;  ///< NaN with fewer than two replications
  double mean_se = 0.0;
  std::size_t count = 0;
};

[[nodiscard]] std::vector<ParameterSummary> summarize_parameters(const MonteCarloResult& result);

[[nodiscard]] std::string parametric_replications_csv(const MonteCarloResult& result);
/// parameter,true,mean,sd,mean_se,reps
[[nodiscard]] std::string parameter_summary_csv(const std::vector<ParameterSummary>& summary);
[[nodiscard]] std::string failures_csv(const MonteCarloResult& result);
[[nodiscard]] std::string montecarlo_manifest(const MonteCarloResult& result, const MonteCarloConfig& config);

/// Writes the per-replication and aggregate tables plus a manifest into dir.
void write_montecarlo_outputs(const std::filesystem::path& dir, const MonteCarloResult& result,
                              const MonteCarloConfig& config);

struct VerifyReport {
  bool ok = true;
  std::vector<std::string> messages;
};

/// Recomputes every aggregate mean and SD in dir from the per-replication
/// files and compares them with the stored aggregates.
[[nodiscard]] VerifyReport verify_outputs(const std::filesystem::path& dir, double tolerance = 1e-12);

}  // namespace lattice
