#include "lattice/harness.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "lattice/error.hpp"
#include "lattice/io.hpp"

namespace lattice {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string fmt(double v) { return std::isnan(v) ? std::string() : format_double(v); }

struct MeanSd {
  double mean = kNaN;
  double sd = kNaN;
};

MeanSd mean_sd(const std::vector<double>& v) {
  MeanSd m;
  if (v.empty()) return m;
  double sum = 0.0;
  for (double x : v) sum += x;
  m.mean = sum / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - m.mean) * (x - m.mean);
    m.sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return m;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::vector<std::vector<std::string>> read_csv_table(const std::filesystem::path& path) {
  std::istringstream is(read_text_file(path));
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) rows.push_back(split_csv_line(line));
  }
  if (rows.empty()) throw DataError(path.string() + ": empty file");
  for (std::size_t r = 1; r < rows.size(); ++r)
    if (rows[r].size() != rows[0].size())
      throw DataError(path.string() + ": row " + std::to_string(r + 1) + " has " + std::to_string(rows[r].size()) +
                      " fields, header has " + std::to_string(rows[0].size()));
  return rows;
}

double parse_cell(const std::string& s, const std::filesystem::path& path) {
  if (s.empty()) return kNaN;
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError(path.string() + ": not a number: '" + s + "'");
  }
}

bool close(double a, double b, double tol) {
  if (std::isnan(a) || std::isnan(b)) return std::isnan(a) && std::isnan(b);
  return std::abs(a - b) <= tol * std::max(1.0, std::max(std::abs(a), std::abs(b)));
}

}  // namespace

std::string estimator_name(Estimator e) {
  switch (e) {
    case Estimator::parametric: return "parametric";
    case Estimator::grid_inversion: return "grid-inversion";
    case Estimator::kernel: return "kernel";
    case Estimator::sieve: return "sieve";
  }
  return "unknown";
}

Estimator parse_estimator(std::string_view name) {
  if (name == "parametric") return Estimator::parametric;
  if (name == "grid-inversion") return Estimator::grid_inversion;
  if (name == "kernel") return Estimator::kernel;
  if (name == "sieve") return Estimator::sieve;
  throw UsageError("unknown estimator '" + std::string(name) + "' (parametric, grid-inversion, kernel, sieve)");
}

std::uint64_t replication_seed(std::uint64_t base, std::size_t r) noexcept { return derive_seed(base, r); }

ParamVector true_params(const DgpSpec& spec) {
  const auto* g = std::get_if<GaussianErrors>(&spec.errors);
  if (g == nullptr) throw UsageError("DGP '" + spec.id + "' has non-Gaussian errors; no parametric truth");
  ParamVector p;
  p.beta = spec.model.beta;
  p.thresholds = spec.lattice.thresholds();
  p.rho = g->rho;
  p.validate();
  return p;
}

MonteCarloResult run_montecarlo(const MonteCarloConfig& config) {
  if (config.replications < 1) throw UsageError("replications must be at least 1");
  if (config.n < 1) throw UsageError("sample size must be at least 1");
  if (config.estimators.empty()) throw UsageError("no estimator selected");
  config.spec.validate();

  bool want_parametric = config.first_stage == FirstStage::parametric;
  bool want_semi = false;
  for (Estimator e : config.estimators) {
    if (e == Estimator::parametric) want_parametric = true;
    else want_semi = true;
  }
  if (want_semi && config.spec.dims() != 2) throw UsageError("semiparametric estimators need two dimensions");

  MonteCarloResult out;
  out.dgp = config.spec.id;
  out.n = config.n;
  out.seed = config.seed;
  out.replications = config.replications;
  std::optional<ParamVector> truth;
  if (want_parametric) {
    truth = true_params(config.spec);
    out.truth = truth->to_vector();
    out.names = parameter_names(*truth, config.spec.regressors);
  }
  std::vector<int> categories;
  for (std::size_t d = 0; d < config.spec.dims(); ++d) categories.push_back(config.spec.lattice.categories(d));
  const JointCdf reference = error_cdf(config.spec.errors);

  struct Slot {
    std::optional<ParametricReplication> fit;
    std::vector<MetricsReport> metrics;
    std::vector<ReplicationFailure> failures;
  };
  std::vector<Slot> slots(config.replications);

  const auto run_one = [&](std::size_t r) {
    Slot& slot = slots[r];
    DgpSpec spec = config.spec;
    spec.seed = replication_seed(config.seed, r);
    const auto fail = [&](const std::string& method, const std::string& message) {
      slot.failures.push_back({r, method, message});
    };
    Dataset data;
    try {
      data = generate(spec, config.n);
    } catch (const std::exception& e) {
      fail("simulate", e.what());
      return;
    }

    std::optional<FitResult> mle;
    if (want_parametric) {
      try {
        FitOptions opts = config.fit;
        opts.fingerprint = "seed=" + std::to_string(spec.seed);
        mle = fit(data, std::nullopt, opts, categories);
        ParametricReplication p;
        p.replicate = r;
        p.seed = spec.seed;
        p.converged = mle->converged;
        p.loglik = mle->loglik;
        p.iterations = mle->iterations;
        p.estimate = mle->estimate.to_vector();
        p.se = mle->se;
        slot.fit = std::move(p);
      } catch (const std::exception& e) {
        fail("parametric", e.what());
      }
    }

    LatticeSpec lattice = spec.lattice;
    IndexModel model = spec.model;
    if (config.first_stage == FirstStage::parametric) {
      if (!mle) {
        for (Estimator e : config.estimators)
          if (e != Estimator::parametric) fail(estimator_name(e), "first stage failed");
        return;
      }
      lattice = mle->estimate.lattice();
      model = mle->estimate.model();
    }

    for (Estimator e : config.estimators) {
      if (e == Estimator::parametric) continue;
      const std::string name = estimator_name(e);
      try {
        CdfGrid grid;
        switch (e) {
          case Estimator::grid_inversion:
            grid = grid_inversion_fit(data, lattice, model, config.grid).grid;
            break;
          case Estimator::kernel: {
            KernelConfig k = config.kernel;
            k.seed = derive_seed(spec.seed, 0x6b65726e);
            grid = kernel_smoothing_fit(data, lattice, model, k, config.eval_axis1, config.eval_axis2).grid;
            break;
          }
          case Estimator::sieve: {
            SieveConfig s = config.sieve;
            s.eval_axis1 = config.eval_axis1;
            s.eval_axis2 = config.eval_axis2;
            grid = sieve_mle_fit(data, lattice, model, s).grid;
            break;
          }
          case Estimator::parametric:
            break;
        }
        MetricsReport m = evaluate(grid, reference, config.eval_axis1, config.eval_axis2);
        m.method = name;
        m.replicate = r;
        slot.metrics.push_back(std::move(m));
      } catch (const std::exception& ex) {
        fail(name, ex.what());
      }
    }
  };

  const std::size_t workers = std::max<std::size_t>(1, std::min(config.workers, config.replications));
  std::atomic<std::size_t> next{0};
  std::size_t done = 0;
  std::mutex progress_mutex;
  const auto worker = [&] {
    for (std::size_t r = next++; r < config.replications; r = next++) {
      run_one(r);
      if (config.progress) {
        std::lock_guard lock(progress_mutex);
        config.progress(++done, config.replications);
      }
    }
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  for (auto& slot : slots) {
    if (slot.fit) out.parametric.push_back(std::move(*slot.fit));
    for (auto& m : slot.metrics) out.metrics.push_back(std::move(m));
    for (auto& f : slot.failures) out.failures.push_back(std::move(f));
  }
  return out;
}

std::vector<ParameterSummary> summarize_parameters(const MonteCarloResult& result) {
  std::vector<ParameterSummary> out;
  for (std::size_t k = 0; k < result.names.size(); ++k) {
    const auto ki = static_cast<Eigen::Index>(k);
    std::vector<double> est;
    std::vector<double> se;
    for (const auto& p : result.parametric) {
      est.push_back(p.estimate[ki]);
      if (p.se.size() > ki && std::isfinite(p.se[ki])) se.push_back(p.se[ki]);
    }
    const MeanSd e = mean_sd(est);
    ParameterSummary s;
    s.name = result.names[k];
    s.truth = result.truth[ki];
    s.mean = e.mean;
    s.sd = e.sd;
    s.mean_se = mean_sd(se).mean;
    s.count = est.size();
    out.push_back(std::move(s));
  }
  return out;
}

std::string parametric_replications_csv(const MonteCarloResult& result) {
  std::string s = "replicate,seed,converged,loglik,iterations";
  for (const auto& n : result.names) s += "," + n;
  for (const auto& n : result.names) s += ",se_" + n;
  s += "\n";
  for (const auto& p : result.parametric) {
    s += std::to_string(p.replicate) + "," + std::to_string(p.seed) + "," + (p.converged ? "1" : "0") + "," +
         format_double(p.loglik) + "," + std::to_string(p.iterations);
    for (Eigen::Index k = 0; k < p.estimate.size(); ++k) s += "," + format_double(p.estimate[k]);
    for (Eigen::Index k = 0; k < p.estimate.size(); ++k) s += "," + (p.se.size() > k ? fmt(p.se[k]) : std::string());
    s += "\n";
  }
  return s;
}

std::string parameter_summary_csv(const std::vector<ParameterSummary>& summary) {
  std::string s = "parameter,true,mean,sd,mean_se,reps\n";
  for (const auto& p : summary)
    s += p.name + "," + format_double(p.truth) + "," + fmt(p.mean) + "," + fmt(p.sd) + "," + fmt(p.mean_se) + "," +
         std::to_string(p.count) + "\n";
  return s;
}

std::string failures_csv(const MonteCarloResult& result) {
  std::string s = "replicate,method,message\n";
  for (const auto& f : result.failures) {
    std::string msg = f.message;
    for (char& c : msg)
      if (c == ',' || c == '\n' || c == '\r') c = ';';
    s += std::to_string(f.replicate) + "," + f.method + "," + msg + "\n";
  }
  return s;
}

std::string montecarlo_manifest(const MonteCarloResult& result, const MonteCarloConfig& config) {
  using nlohmann::json;
  json est = json::array();
  for (Estimator e : config.estimators) est.push_back(estimator_name(e));
  json seeds = json::array();
  for (std::size_t r = 0; r < config.replications; ++r) seeds.push_back(replication_seed(config.seed, r));
  json j{{"dgp", result.dgp},
         {"n", result.n},
         {"replications", result.replications},
         {"seed", result.seed},
         {"estimators", est},
         {"first_stage", config.first_stage == FirstStage::truth ? "truth" : "parametric"},
         {"replication_seeds", seeds},
         {"failures", result.failures.size()}};
  return j.dump(2) + "\n";
}

void write_montecarlo_outputs(const std::filesystem::path& dir, const MonteCarloResult& result,
                              const MonteCarloConfig& config) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create output directory " + dir.string() + ": " + ec.message());
  if (!result.names.empty()) {
    write_text_file(dir / "parametric_replications.csv", parametric_replications_csv(result));
    write_text_file(dir / "parametric_summary.csv", parameter_summary_csv(summarize_parameters(result)));
  }
  bool semi = false;
  for (Estimator e : config.estimators) semi = semi || e != Estimator::parametric;
  if (semi) {
    std::string rows = metrics_csv_header();
    for (const auto& m : result.metrics) rows += metrics_csv_row(m);
    write_text_file(dir / "metrics_replications.csv", rows);
    write_text_file(dir / "metrics_summary.csv", metrics_summary_csv(summarize(result.metrics)));
  }
  write_text_file(dir / "failures.csv", failures_csv(result));
  write_text_file(dir / "manifest.json", montecarlo_manifest(result, config));
}

VerifyReport verify_outputs(const std::filesystem::path& dir, double tolerance) {
  VerifyReport rep;
  const auto bad = [&](std::string msg) {
    rep.ok = false;
    rep.messages.push_back(std::move(msg));
  };
  bool any = false;

  const auto prep = dir / "parametric_replications.csv";
  const auto psum = dir / "parametric_summary.csv";
  if (std::filesystem::exists(prep) || std::filesystem::exists(psum)) {
    any = true;
    const auto reps = read_csv_table(prep);
    const auto summ = read_csv_table(psum);
    std::map<std::string, std::size_t> col;
    for (std::size_t c = 0; c < reps[0].size(); ++c) col[reps[0][c]] = c;
    for (std::size_t r = 1; r < summ.size(); ++r) {
      const std::string& name = summ[r][0];
      if (!col.count(name)) {
        bad("parameter '" + name + "' missing from " + prep.filename().string());
        continue;
      }
      std::vector<double> est;
      std::vector<double> se;
      for (std::size_t i = 1; i < reps.size(); ++i) {
        est.push_back(parse_cell(reps[i][col[name]], prep));
        if (col.count("se_" + name)) {
          const double v = parse_cell(reps[i][col["se_" + name]], prep);
          if (std::isfinite(v)) se.push_back(v);
        }
      }
      const MeanSd e = mean_sd(est);
      const double stored_mean = parse_cell(summ[r][2], psum);
      const double stored_sd = parse_cell(summ[r][3], psum);
      const double stored_se = parse_cell(summ[r][4], psum);
      const double stored_n = parse_cell(summ[r][5], psum);
      if (!close(e.mean, stored_mean, tolerance)) bad(name + ": mean " + fmt(stored_mean) + " != recomputed " + fmt(e.mean));
      if (!close(e.sd, stored_sd, tolerance)) bad(name + ": sd " + fmt(stored_sd) + " != recomputed " + fmt(e.sd));
      if (!close(mean_sd(se).mean, stored_se, tolerance)) bad(name + ": mean_se differs from recomputed value");
      if (stored_n != static_cast<double>(est.size())) bad(name + ": replication count differs");
    }
  }

  const auto mrep = dir / "metrics_replications.csv";
  const auto msum = dir / "metrics_summary.csv";
  if (std::filesystem::exists(mrep) || std::filesystem::exists(msum)) {
    any = true;
    const auto reps = read_csv_table(mrep);
    const auto summ = read_csv_table(msum);
    std::vector<MetricsReport> reports;
    for (std::size_t i = 1; i < reps.size(); ++i) {
      MetricsReport m;
      m.method = reps[i][0];
      m.replicate = static_cast<std::size_t>(parse_cell(reps[i][1], mrep));
      m.rmse = parse_cell(reps[i][2], mrep);
      m.ks = parse_cell(reps[i][3], mrep);
      m.cvm = parse_cell(reps[i][4], mrep);
      const double c = parse_cell(reps[i][5], mrep);
      if (!std::isnan(c)) m.correlation = c;
      reports.push_back(std::move(m));
    }
    const auto recomputed = summarize(reports);
    for (std::size_t r = 1; r < summ.size(); ++r) {
      const std::string& method = summ[r][0];
      auto it = std::find_if(recomputed.begin(), recomputed.end(), [&](const MetricsSummary& s) { return s.method == method; });
      if (it == recomputed.end()) {
        bad("method '" + method + "' has no replication rows");
        continue;
      }
      static const char* metric[4] = {"rmse", "ks", "cvm", "corr"};
      for (int c = 0; c < 4; ++c) {
        const double mean = parse_cell(summ[r][1 + 2 * static_cast<std::size_t>(c)], msum);
        const double sd = parse_cell(summ[r][2 + 2 * static_cast<std::size_t>(c)], msum);
        if (!close(it->mean[c], mean, tolerance)) bad(method + " " + metric[c] + ": mean differs from recomputed value");
        if (!close(it->sd[c], sd, tolerance)) bad(method + " " + metric[c] + ": sd differs from recomputed value");
      }
      if (parse_cell(summ[r].back(), msum) != static_cast<double>(it->count)) bad(method + ": replication count differs");
    }
    if (recomputed.size() != summ.size() - 1) bad("metrics summary and replication files list different methods");
  }

  if (!any) bad("no Monte Carlo tables found in " + dir.string());
  return rep;
}

}  // namespace lattice
