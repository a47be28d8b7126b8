#include "lattice/projection.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

namespace lattice {

void pav(std::span<double> y, std::span<const double> w) {
  const std::size_t n = y.size();
  if (n < 2) return;
  std::vector<double> level;
  std::vector<double> weight;
  std::vector<std::size_t> count;
  level.reserve(n);
  weight.reserve(n);
  count.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    level.push_back(y[i]);
    weight.push_back(w.empty() ? 1.0 : w[i]);
    count.push_back(1);
    while (level.size() > 1 && level[level.size() - 2] > level.back()) {
      const std::size_t b = level.size() - 1;
      const double wt = weight[b - 1] + weight[b];
      level[b - 1] = (weight[b - 1] * level[b - 1] + weight[b] * level[b]) / wt;
      weight[b - 1] = wt;
      count[b - 1] += count[b];
      level.pop_back();
      weight.pop_back();
      count.pop_back();
    }
  }
  std::size_t at = 0;
  for (std::size_t b = 0; b < level.size(); ++b)
    for (std::size_t c = 0; c < count[b]; ++c) y[at++] = level[b];
}

void project_chain(std::span<double> y, double lo, double hi, std::span<const unsigned char> fixed) {
  const std::size_t n = y.size();
  std::size_t start = 0;
  double floor_v = lo;
  while (start < n) {
    if (!fixed.empty() && fixed[start]) {
      floor_v = y[start];
      ++start;
      continue;
    }
    std::size_t end = start;
    while (end < n && (fixed.empty() || !fixed[end])) ++end;
    const double ceil_v = end < n ? y[end] : hi;
    auto run = y.subspan(start, end - start);
    pav(run);
    for (double& v : run) v = std::clamp(v, floor_v, ceil_v);
    start = end;
  }
}

int project_monotone_box(Eigen::MatrixXd& v, double lo, double hi,
                         const Eigen::Matrix<unsigned char, Eigen::Dynamic, Eigen::Dynamic>* fixed,
                         const DykstraOptions& options) {
  const Eigen::Index R = v.rows();
  const Eigen::Index C = v.cols();
  std::vector<double> buf(static_cast<std::size_t>(std::max(R, C)));
  std::vector<unsigned char> mask(buf.size());

  const auto rows_step = [&](Eigen::MatrixXd& m) {
    for (Eigen::Index r = 0; r < R; ++r) {
      for (Eigen::Index c = 0; c < C; ++c) {
        buf[static_cast<std::size_t>(c)] = m(r, c);
        mask[static_cast<std::size_t>(c)] = fixed ? (*fixed)(r, c) : 0;
      }
      project_chain(std::span(buf.data(), static_cast<std::size_t>(C)), lo, hi,
                    std::span<const unsigned char>(mask.data(), static_cast<std::size_t>(C)));
      for (Eigen::Index c = 0; c < C; ++c) m(r, c) = buf[static_cast<std::size_t>(c)];
    }
  };
  const auto cols_step = [&](Eigen::MatrixXd& m) {
    for (Eigen::Index c = 0; c < C; ++c) {
      for (Eigen::Index r = 0; r < R; ++r) {
        buf[static_cast<std::size_t>(r)] = m(r, c);
        mask[static_cast<std::size_t>(r)] = fixed ? (*fixed)(r, c) : 0;
      }
      project_chain(std::span(buf.data(), static_cast<std::size_t>(R)), lo, hi,
                    std::span<const unsigned char>(mask.data(), static_cast<std::size_t>(R)));
      for (Eigen::Index r = 0; r < R; ++r) m(r, c) = buf[static_cast<std::size_t>(r)];
    }
  };

  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(R, C);
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(R, C);
  Eigen::MatrixXd x = v;
  Eigen::MatrixXd y(R, C);
  int sweeps = 0;
  for (; sweeps < options.max_iterations; ++sweeps) {
    y = x + p;
    rows_step(y);
    p = x + p - y;
    Eigen::MatrixXd x_new = y + q;
    cols_step(x_new);
    q = y + q - x_new;
    const double change = (x_new - x).cwiseAbs().maxCoeff();
    x = std::move(x_new);
    if (change <= options.tolerance && (x - y).cwiseAbs().maxCoeff() <= options.tolerance) {
      ++sweeps;
      break;
    }
  }
  // Exact feasibility: cummax along rows then columns keeps row order.
  for (Eigen::Index r = 0; r < R; ++r)
    for (Eigen::Index c = 1; c < C; ++c) x(r, c) = std::max(x(r, c), x(r, c - 1));
  for (Eigen::Index c = 0; c < C; ++c)
    for (Eigen::Index r = 1; r < R; ++r) x(r, c) = std::max(x(r, c), x(r - 1, c));
  x = x.cwiseMax(lo).cwiseMin(hi);
  v = std::move(x);
  return sweeps;
}

void project_simplex(Eigen::Ref<Eigen::VectorXd> x, double total) {
  const Eigen::Index n = x.size();
  if (n == 0) return;
  std::vector<double> u(x.data(), x.data() + n);
  std::sort(u.begin(), u.end(), std::greater<>());
  double cum = 0.0;
  double theta = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    cum += u[static_cast<std::size_t>(k)];
    const double t = (cum - total) / static_cast<double>(k + 1);
    if (u[static_cast<std::size_t>(k)] - t > 0.0) theta = t;
  }
  x = (x.array() - theta).cwiseMax(0.0);
}

}  // namespace lattice
