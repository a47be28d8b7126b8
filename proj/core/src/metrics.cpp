#include "lattice/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "lattice/error.hpp"
#include "lattice/io.hpp"

namespace lattice {

MetricsReport evaluate(const CdfGrid& estimate, const JointCdf& reference, const std::vector<double>& axis1,
                       const std::vector<double>& axis2) {
  const std::size_t G = axis1.size() * axis2.size();
  if (G == 0) throw UsageError("metrics need a non-empty evaluation grid");
  std::vector<double> est;
  std::vector<double> ref;
  est.reserve(G);
  ref.reserve(G);
  double p[2];
  for (double e1 : axis1)
    for (double e2 : axis2) {
      p[0] = e1;
      p[1] = e2;
      est.push_back(interpolate(estimate, e1, e2));
      ref.push_back(reference(p));
    }
  MetricsReport m;
  m.grid_points = G;
  double ss = 0.0;
  for (std::size_t g = 0; g < G; ++g) {
    const double d = est[g] - ref[g];
    ss += d * d;
    m.ks = std::max(m.ks, std::abs(d));
  }
  m.cvm = ss / static_cast<double>(G);
  m.rmse = std::sqrt(m.cvm);

  double me = 0.0;
  double mr = 0.0;
  for (std::size_t g = 0; g < G; ++g) {
    me += est[g];
    mr += ref[g];
  }
  me /= static_cast<double>(G);
  mr /= static_cast<double>(G);
  double see = 0.0;
  double srr = 0.0;
  double ser = 0.0;
  for (std::size_t g = 0; g < G; ++g) {
    see += (est[g] - me) * (est[g] - me);
    srr += (ref[g] - mr) * (ref[g] - mr);
    ser += (est[g] - me) * (ref[g] - mr);
  }
  if (see > 0.0 && srr > 0.0) m.correlation = std::clamp(ser / std::sqrt(see * srr), -1.0, 1.0);
  return m;
}

std::vector<double> evaluation_axis() { return linspace(-2.5, 2.5, 80); }

std::string metrics_csv_header() { return "method,replicate,rmse,ks,cvm,corr\n"; }

std::string metrics_csv_row(const MetricsReport& m) {
  return m.method + "," + std::to_string(m.replicate) + "," + format_double(m.rmse) + "," + format_double(m.ks) + "," +
         format_double(m.cvm) + "," + (m.correlation ? format_double(*m.correlation) : std::string()) + "\n";
}

std::vector<MetricsSummary> summarize(const std::vector<MetricsReport>& reports) {
  std::vector<MetricsSummary> out;
  for (const auto& r : reports) {
    auto it = std::find_if(out.begin(), out.end(), [&](const MetricsSummary& s) { return s.method == r.method; });
    if (it == out.end()) {
      out.push_back(MetricsSummary{r.method});
    }
  }
  for (auto& s : out) {
    std::vector<double> cols[4];
    for (const auto& r : reports) {
      if (r.method != s.method) continue;
      cols[0].push_back(r.rmse);
      cols[1].push_back(r.ks);
      cols[2].push_back(r.cvm);
      cols[3].push_back(r.correlation ? *r.correlation : std::numeric_limits<double>::quiet_NaN());
    }
    s.count = cols[0].size();
    for (int c = 0; c < 4; ++c) {
      double sum = 0.0;
      for (double v : cols[c]) sum += v;
      const double mean = sum / static_cast<double>(s.count);
      double ss = 0.0;
      for (double v : cols[c]) ss += (v - mean) * (v - mean);
      s.mean[c] = mean;
      s.sd[c] = s.count > 1 ? std::sqrt(ss / static_cast<double>(s.count - 1)) : std::numeric_limits<double>::quiet_NaN();
    }
  }
  return out;
}

std::string metrics_summary_csv(const std::vector<MetricsSummary>& summary) {
  std::string out = "method,rmse_mean,rmse_sd,ks_mean,ks_sd,cvm_mean,cvm_sd,corr_mean,corr_sd,reps\n";
  const auto fmt = [](double v) { return std::isnan(v) ? std::string() : format_double(v); };
  for (const auto& s : summary) {
    out += s.method;
    for (int c = 0; c < 4; ++c) out += "," + fmt(s.mean[c]) + "," + fmt(s.sd[c]);
    out += "," + std::to_string(s.count) + "\n";
  }
  return out;
}

}  // namespace lattice
