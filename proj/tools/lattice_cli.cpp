#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lattice/diagnostics.hpp"
#include "lattice/error.hpp"
#include "lattice/harness.hpp"
#include "lattice/io.hpp"
#include "lattice/metrics.hpp"
#include "lattice/parametric.hpp"
#include "lattice/semiparametric.hpp"
#include "lattice/simulation.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace lattice;

namespace {

struct Options {
  std::string dgp;
  std::string data;
  std::string sidecar;
  std::string config;
  std::optional<std::size_t> n;
  std::optional<std::size_t> reps;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::string out = ".";
  std::vector<std::string> estimators;
  std::string first_stage;
};

json load_config(const Options& o) {
  if (o.config.empty()) return json::object();
  const std::string text = read_text_file(o.config);
  try {
    json j = json::parse(text);
    if (!j.is_object()) throw UsageError(o.config + ": config must be a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    throw UsageError(o.config + ": invalid JSON: " + e.what());
  }
}

// A config is either a DGP spec itself or a run config with a "dgp" entry
// (a builtin id or an inline spec).
std::optional<DgpSpec> resolve_dgp(const Options& o, const json& cfg) {
  std::uint64_t seed = o.seed.value_or(cfg.value("seed", std::uint64_t{0}));
  if (!o.dgp.empty()) return builtin_spec(o.dgp, seed);
  if (cfg.contains("thresholds")) {
    DgpSpec s = dgp_from_json(cfg.dump());
    if (o.seed) s.seed = *o.seed;
    return s;
  }
  if (cfg.contains("dgp")) {
    if (cfg["dgp"].is_string()) return builtin_spec(cfg["dgp"].get<std::string>(), seed);
    DgpSpec s = dgp_from_json(cfg["dgp"].dump());
    if (o.seed || cfg.contains("seed")) s.seed = seed;
    return s;
  }
  return std::nullopt;
}

DgpSpec require_dgp(const Options& o, const json& cfg) {
  auto s = resolve_dgp(o, cfg);
  if (!s) throw UsageError("a DGP is required (--dgp <id> or --config <json>)");
  return *s;
}

template <class T>
T cfg_value(const json& j, const char* key, T fallback) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw UsageError(std::string("config: bad value for '") + key + "': " + e.what());
  }
}

FitOptions fit_options(const json& cfg) {
  FitOptions f;
  const json j = cfg.value("fit", json::object());
  f.bfgs.max_iterations = cfg_value(j, "max_iterations", f.bfgs.max_iterations);
  f.bfgs.gradient_tolerance = cfg_value(j, "gradient_tolerance", f.bfgs.gradient_tolerance);
  const std::string se = cfg_value<std::string>(j, "se", "opg");
  if (se == "opg") f.se_kind = SeKind::outer_product;
  else if (se == "sandwich") f.se_kind = SeKind::sandwich;
  else throw UsageError("config: fit.se must be 'opg' or 'sandwich'");
  return f;
}

GridInversionConfig grid_options(const json& cfg) {
  GridInversionConfig g;
  const json j = cfg.value("grid_inversion", json::object());
  g.nodes = cfg_value(j, "nodes", g.nodes);
  g.smoothness_lambda = cfg_value(j, "lambda", g.smoothness_lambda);
  g.tolerance = cfg_value(j, "tolerance", g.tolerance);
  g.max_iterations = cfg_value(j, "max_iterations", g.max_iterations);
  const std::string rows = cfg_value<std::string>(j, "rows", "all_cells");
  if (rows == "all_cells") g.rows = DesignRows::all_cells;
  else if (rows == "observed_cell") g.rows = DesignRows::observed_cell;
  else throw UsageError("config: grid_inversion.rows must be 'all_cells' or 'observed_cell'");
  const std::string grid = cfg_value<std::string>(j, "grid", "fixed");
  if (grid == "fixed") g.grid_source = GridSource::fixed;
  else if (grid == "implied_bounds") g.grid_source = GridSource::implied_bounds;
  else throw UsageError("config: grid_inversion.grid must be 'fixed' or 'implied_bounds'");
  const std::string fs_ = cfg_value<std::string>(j, "feasible_set", "monotone_box");
  if (fs_ == "monotone_box") g.feasible_set = FeasibleSet::monotone_box;
  else if (fs_ == "proper_cdf") g.feasible_set = FeasibleSet::proper_cdf;
  else throw UsageError("config: grid_inversion.feasible_set must be 'monotone_box' or 'proper_cdf'");
  return g;
}

KernelConfig kernel_options(const json& cfg) {
  KernelConfig k;
  const json j = cfg.value("kernel", json::object());
  k.draws_per_obs = cfg_value(j, "draws", k.draws_per_obs);
  k.truncation = cfg_value(j, "truncation", k.truncation);
  k.seed = cfg_value(j, "seed", k.seed);
  if (j.contains("bandwidth")) {
    const auto h = cfg_value<std::vector<double>>(j, "bandwidth", {});
    if (h.size() != 2) throw UsageError("config: kernel.bandwidth must have two entries");
    k.bandwidth = std::make_pair(h[0], h[1]);
  }
  return k;
}

SieveConfig sieve_options(const json& cfg, bool fix_index_default) {
  SieveConfig s;
  const json j = cfg.value("sieve", json::object());
  s.degree = cfg_value(j, "degree", s.degree);
  s.interior_knots = cfg_value(j, "interior_knots", s.interior_knots);
  s.knot_lo = cfg_value(j, "knot_lo", s.knot_lo);
  s.knot_hi = cfg_value(j, "knot_hi", s.knot_hi);
  s.max_outer = cfg_value(j, "max_outer", s.max_outer);
  s.tolerance = cfg_value(j, "tolerance", s.tolerance);
  s.fix_index = cfg_value(j, "fix_index", fix_index_default);
  return s;
}

std::vector<Estimator> estimators(const Options& o, const json& cfg, Estimator fallback) {
  std::vector<std::string> names = o.estimators;
  if (names.empty()) names = cfg_value<std::vector<std::string>>(cfg, "estimators", {});
  std::vector<Estimator> out;
  for (const auto& n : names) out.push_back(parse_estimator(n));
  if (out.empty()) out.push_back(fallback);
  return out;
}

Dataset load_data(const Options& o) {
  if (o.data.empty()) throw UsageError("--data is required");
  if (!fs::exists(o.data)) throw DataError("data file not found: " + o.data);
  std::optional<fs::path> side;
  if (!o.sidecar.empty()) side = o.sidecar;
  return read_dataset_csv(o.data, side);
}

std::vector<int> observed_categories(const Dataset& d) {
  std::vector<int> c;
  for (Eigen::Index k = 0; k < d.outcomes.cols(); ++k) c.push_back(d.outcomes.col(k).maxCoeff());
  return c;
}

// Category counts from the first stage, a DGP, or a "categories" config
// entry; the largest observed category otherwise.
std::vector<int> declared_categories(const Options& o, const json& cfg, const Dataset& d,
                                     const std::optional<ParamVector>& first) {
  std::vector<int> c = observed_categories(d);
  std::optional<LatticeSpec> lattice;
  if (first) lattice = first->lattice();
  else if (auto s = resolve_dgp(o, cfg)) lattice = s->lattice;
  if (lattice) {
    if (lattice->dims() != c.size()) throw UsageError("the declared lattice has a different number of outcomes");
    for (std::size_t k = 0; k < c.size(); ++k) c[k] = lattice->categories(k);
  } else if (cfg.contains("categories")) {
    c = cfg_value<std::vector<int>>(cfg, "categories", c);
    if (c.size() != d.dims()) throw UsageError("config 'categories' needs one entry per outcome");
  }
  std::vector<std::vector<double>> placeholder(c.size());
  for (std::size_t k = 0; k < c.size(); ++k)
    for (int j = 1; j < c[k]; ++j) placeholder[k].push_back(j);
  d.validate(LatticeSpec(placeholder));
  return c;
}

fs::path out_dir(const Options& o) {
  std::error_code ec;
  fs::create_directories(o.out, ec);
  if (ec) throw DataError("cannot create output directory " + o.out + ": " + ec.message());
  return o.out;
}

int cmd_simulate(const Options& o) {
  const json cfg = load_config(o);
  const DgpSpec spec = require_dgp(o, cfg);
  const std::size_t n = o.n.value_or(cfg_value<std::size_t>(cfg, "n", 1000));
  const std::size_t reps = o.reps.value_or(cfg_value<std::size_t>(cfg, "reps", 1));
  if (n < 1 || reps < 1) throw UsageError("--n and --reps must be at least 1");
  const fs::path dir = out_dir(o);
  json files = json::array();
  for (std::size_t r = 0; r < reps; ++r) {
    DgpSpec s = spec;
    s.seed = replication_seed(spec.seed, r);
    const std::string name = reps == 1 ? "data.csv" : "data_" + std::to_string(r) + ".csv";
    write_dataset_csv(dir / name, generate(s, n));
    files.push_back({{"file", name}, {"replicate", r}, {"seed", s.seed}});
  }
  write_text_file(dir / "dgp.json", dgp_to_json(spec) + "\n");
  if (std::holds_alternative<GaussianErrors>(spec.errors))
    write_text_file(dir / "true-params.json", params_to_json(true_params(spec)) + "\n");
  json manifest{{"dgp", spec.id}, {"base_seed", spec.seed}, {"n", n}, {"datasets", files}};
  write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
  std::cout << "wrote " << reps << " dataset(s) of " << n << " rows to " << dir.string() << "\n";
  return 0;
}

int cmd_fit(const Options& o) {
  const json cfg = load_config(o);
  const Dataset data = load_data(o);
  const auto est = estimators(o, cfg, Estimator::parametric);
  if (est.size() != 1) throw UsageError("fit takes exactly one --estimator");
  const Estimator e = est.front();
  const fs::path dir = out_dir(o);
  std::optional<ParamVector> first;
  if (!o.first_stage.empty()) first = params_from_json(read_text_file(o.first_stage));
  const std::vector<int> categories = declared_categories(o, cfg, data, first);

  if (e == Estimator::parametric) {
    FitOptions opts = fit_options(cfg);
    opts.fingerprint = "data=" + o.data;
    const FitResult r = fit(data, first, opts, categories);
    write_text_file(dir / "fit.json", fit_to_json(r) + "\n");
    write_text_file(dir / "coefficients.csv", fit_coefficients_csv(r));
    std::cout << fit_coefficients_csv(r);
    if (!r.se_error.empty()) std::cerr << "warning: standard errors unavailable: " << r.se_error << "\n";
    if (!r.converged) {
      std::cerr << "convergence failure: " << r.message << "\n";
      return 3;
    }
    return 0;
  }

  if (!first) {
    const FitResult r = fit(data, std::nullopt, fit_options(cfg), categories);
    if (!r.converged) throw ConvergenceError("parametric first stage did not converge: " + r.message);
    first = r.estimate;
  }
  write_text_file(dir / "first_stage.json", params_to_json(*first) + "\n");
  const LatticeSpec lattice = first->lattice();
  const IndexModel model = first->model();
  const auto axis = evaluation_axis();
  CdfGrid grid;
  bool converged = true;
  std::string note;
  json info;
  if (e == Estimator::grid_inversion) {
    const auto r = grid_inversion_fit(data, lattice, model, grid_options(cfg));
    grid = r.grid;
    converged = r.converged;
    info = {{"objective", r.objective}, {"residual", r.residual}, {"iterations", r.iterations}, {"converged", r.converged}};
  } else if (e == Estimator::kernel) {
    const auto r = kernel_smoothing_fit(data, lattice, model, kernel_options(cfg), axis, axis);
    grid = r.grid;
    info = {{"h1", r.h1}, {"h2", r.h2}, {"draws", r.points.rows()}};
  } else {
    SieveConfig s = sieve_options(cfg, !o.first_stage.empty());
    const auto r = sieve_mle_fit(data, lattice, model, s);
    grid = r.grid;
    converged = r.converged;
    info = {{"loglik", r.loglik}, {"initial_loglik", r.initial_loglik}, {"iterations", r.iterations},
            {"converged", r.converged}, {"min_slack", r.min_slack},
            {"index", json::parse(index_model_to_json(r.model))}, {"thresholds", r.lattice.thresholds()}};
  }
  info["estimator"] = estimator_name(e);
  write_text_file(dir / "fit.json", info.dump(2) + "\n");
  write_text_file(dir / "cdf_grid.csv", cdf_grid_to_csv(grid));
  write_text_file(dir / "cdf_grid.json", cdf_grid_to_json(grid) + "\n");
  if (auto ref = resolve_dgp(o, cfg)) {
    MetricsReport m = evaluate(grid, error_cdf(ref->errors), axis, axis);
    m.method = estimator_name(e);
    const std::string csv = metrics_csv_header() + metrics_csv_row(m);
    write_text_file(dir / "metrics.csv", csv);
    std::cout << csv;
  }
  std::cout << info.dump(2) << "\n";
  if (!converged) {
    std::cerr << "convergence failure: " << estimator_name(e) << " stopped at its iteration limit\n";
    return 3;
  }
  return 0;
}

int cmd_montecarlo(const Options& o) {
  const json cfg = load_config(o);
  MonteCarloConfig mc;
  mc.spec = require_dgp(o, cfg);
  mc.seed = mc.spec.seed;
  mc.n = o.n.value_or(cfg_value<std::size_t>(cfg, "n", 1000));
  mc.replications = o.reps.value_or(cfg_value<std::size_t>(cfg, "reps", 100));
  mc.workers = o.workers.value_or(cfg_value<std::size_t>(cfg, "workers", std::max(1u, std::thread::hardware_concurrency())));
  mc.estimators = estimators(o, cfg, Estimator::parametric);
  const std::string fs_ = o.first_stage.empty() ? cfg_value<std::string>(cfg, "first_stage", "truth") : o.first_stage;
  if (fs_ == "truth") mc.first_stage = FirstStage::truth;
  else if (fs_ == "parametric") mc.first_stage = FirstStage::parametric;
  else throw UsageError("montecarlo --first-stage must be 'truth' or 'parametric'");
  mc.fit = fit_options(cfg);
  mc.fit.compute_se = true;
  mc.grid = grid_options(cfg);
  mc.kernel = kernel_options(cfg);
  mc.sieve = sieve_options(cfg, mc.first_stage == FirstStage::truth);
  mc.progress = [](std::size_t done, std::size_t total) {
    std::cerr << "\rreplication " << done << "/" << total << std::flush;
    if (done == total) std::cerr << "\n";
  };
  const MonteCarloResult r = run_montecarlo(mc);
  const fs::path dir = out_dir(o);
  write_montecarlo_outputs(dir, r, mc);
  if (!r.names.empty()) std::cout << parameter_summary_csv(summarize_parameters(r));
  if (!r.metrics.empty()) std::cout << metrics_summary_csv(summarize(r.metrics));
  std::cout << "failures: " << r.failures.size() << "\n";
  return 0;
}

int cmd_diagnose(const Options& o) {
  const json cfg = load_config(o);
  IdentificationReport rep;
  if (!o.data.empty()) {
    const Dataset data = load_data(o);
    ParamVector first;
    if (!o.first_stage.empty()) {
      first = params_from_json(read_text_file(o.first_stage));
    } else {
      const FitResult r = fit(data, std::nullopt, fit_options(cfg), declared_categories(o, cfg, data, std::nullopt));
      if (!r.converged) throw ConvergenceError("parametric first stage did not converge: " + r.message);
      first = r.estimate;
    }
    rep = classify(data, first.lattice(), first.model(), first.rho);
  } else {
    rep = classify(require_dgp(o, cfg));
  }
  const fs::path dir = out_dir(o);
  write_text_file(dir / "identification.json", report_to_json(rep) + "\n");
  write_text_file(dir / "identification.txt", report_to_text(rep));
  std::cout << report_to_text(rep);
  return 0;
}

int cmd_metrics(const Options& o) {
  const json cfg = load_config(o);
  if (o.data.empty()) throw UsageError("--data must name a cdf_grid.json file");
  const CdfGrid grid = cdf_grid_from_json(read_text_file(o.data));
  const DgpSpec ref = require_dgp(o, cfg);
  const auto axis = evaluation_axis();
  MetricsReport m = evaluate(grid, error_cdf(ref.errors), axis, axis);
  m.method = fs::path(o.data).stem().string();
  const std::string csv = metrics_csv_header() + metrics_csv_row(m);
  write_text_file(out_dir(o) / "metrics.csv", csv);
  std::cout << csv;
  return 0;
}

int cmd_verify(const Options& o) {
  const fs::path dir = o.data.empty() ? fs::path(o.out) : fs::path(o.data);
  const VerifyReport v = verify_outputs(dir);
  for (const auto& m : v.messages) std::cout << m << "\n";
  std::cout << (v.ok ? "verify: aggregates match replication files\n" : "verify: MISMATCH\n");
  return v.ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lattice ordered-response models: simulation, estimation, diagnostics"};
  app.require_subcommand(1);
  Options o;

  const auto common = [&](CLI::App* sub) {
    sub->add_option("--dgp", o.dgp, "builtin DGP id");
    sub->add_option("--data", o.data, "input file");
    sub->add_option("--sidecar", o.sidecar, "JSON sidecar mapping covariate columns to dimensions");
    sub->add_option("--config", o.config, "JSON config (DGP spec or run config)");
    sub->add_option("--n", o.n, "sample size");
    sub->add_option("--reps", o.reps, "replications");
    sub->add_option("--seed", o.seed, "base seed");
    sub->add_option("--workers", o.workers, "worker threads");
    sub->add_option("--out", o.out, "output directory")->capture_default_str();
    sub->add_option("--estimator", o.estimators, "parametric | grid-inversion | kernel | sieve");
    sub->add_option("--first-stage", o.first_stage, "first-stage parameters JSON (montecarlo: truth | parametric)");
  };
  CLI::App* simulate = app.add_subcommand("simulate", "draw datasets from a DGP");
  CLI::App* fitc = app.add_subcommand("fit", "fit an estimator to a dataset");
  CLI::App* mc = app.add_subcommand("montecarlo", "run Monte Carlo replications");
  CLI::App* diag = app.add_subcommand("diagnose", "identification diagnostics for a DGP or dataset");
  CLI::App* met = app.add_subcommand("metrics", "compare a CDF grid with a DGP's error law");
  CLI::App* ver = app.add_subcommand("verify", "cross-check Monte Carlo aggregates");
  for (CLI::App* s : {simulate, fitc, mc, diag, met, ver}) common(s);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (simulate->parsed()) return cmd_simulate(o);
    if (fitc->parsed()) return cmd_fit(o);
    if (mc->parsed()) return cmd_montecarlo(o);
    if (diag->parsed()) return cmd_diagnose(o);
    if (met->parsed()) return cmd_metrics(o);
    if (ver->parsed()) return cmd_verify(o);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const ConvergenceError& e) {
    std::cerr << "convergence failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
