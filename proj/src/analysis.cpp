#include "ricnet/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "ricnet/errors.hpp"

namespace ricnet {

std::vector<double> efficiency_of_compaction(const std::vector<double>& qc_ini, const std::vector<double>& qc_post) {
  if (qc_ini.size() != qc_post.size()) throw ValidationError("efficiency_of_compaction: profile lengths differ");
  std::vector<double> ec(qc_ini.size());
  for (std::size_t i = 0; i < qc_ini.size(); ++i) {
    if (!(qc_ini[i] > 0.0)) throw ValidationError("efficiency_of_compaction: qc_ini must be positive");
    ec[i] = (qc_post[i] - qc_ini[i]) / qc_ini[i] * 100.0;
  }
  return ec;
}

// ---------------------------------------------------------------------------

namespace {

// psi(m) for integer m >= 1: -gamma + H_{m-1}.
std::vector<double> digamma_table(std::size_t max_arg) {
  std::vector<double> t(max_arg + 1, 0.0);
  double h = 0.0;
  for (std::size_t m = 1; m <= max_arg; ++m) {
    t[m] = -std::numbers::egamma + h;
    h += 1.0 / static_cast<double>(m);
  }
  return t;
}

bool has_ties(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return std::adjacent_find(v.begin(), v.end()) != v.end();
}

void jitter_if_tied(std::vector<double>& v, std::mt19937_64& rng) {
  if (!has_ties(v)) return;
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const double amp = 1e-6 * (*hi - *lo);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (auto& x : v) x += amp * u(rng);
}

void standardize(std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / n);
  for (auto& x : v) x = sd > 0.0 ? (x - mean) / sd : 0.0;
}

// Number of entries of sorted `s` strictly within `r` of `c`, minus the point itself.
std::size_t count_within(const std::vector<double>& s, double c, double r) {
  const auto lo = std::upper_bound(s.begin(), s.end(), c - r);
  const auto hi = std::lower_bound(s.begin(), s.end(), c + r);
  const auto n = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, hi - lo));
  return n > 0 ? n - 1 : 0;
}

}  // namespace

double mutual_info(const std::vector<double>& x_in, const std::vector<double>& y_in, std::size_t k,
                   std::uint64_t jitter_seed) {
  if (x_in.size() != y_in.size()) throw ValidationError("mutual_info: sample counts differ");
  const std::size_t n = x_in.size();
  if (n < 10) throw ValidationError("mutual_info: need at least 10 samples");
  if (k == 0 || k >= n) throw ValidationError("mutual_info: k must lie in [1, n)");

  std::vector<double> x = x_in;
  std::vector<double> y = y_in;
  std::mt19937_64 rng(jitter_seed);
  jitter_if_tied(x, rng);
  jitter_if_tied(y, rng);
  standardize(x);
  standardize(y);

  std::vector<double> sx = x;
  std::vector<double> sy = y;
  std::sort(sx.begin(), sx.end());
  std::sort(sy.begin(), sy.end());
  const auto psi = digamma_table(n + 1);

  std::vector<double> dist(n);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      dist[j] = j == i ? INFINITY : std::max(std::abs(x[i] - x[j]), std::abs(y[i] - y[j]));
    }
    std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k - 1), dist.end());
    const double radius = dist[k - 1];
    const std::size_t nx = count_within(sx, x[i], radius);
    const std::size_t ny = count_within(sy, y[i], radius);
    acc += psi[nx + 1] + psi[ny + 1];
  }
  const double mi = psi[n] + psi[k] - acc / static_cast<double>(n);
  return std::max(0.0, mi);
}

std::vector<MiEstimate> rank_features(const Dataset& dataset, std::size_t k) {
  if (dataset.samples.empty()) throw ValidationError("rank_features: empty dataset");
  if (!dataset.all_have_targets()) throw ValidationError("targets required");
  std::vector<double> qc_ini, fines, fill, blows, qc_post;
  for (const auto& s : dataset.samples) {
    for (std::size_t d = 0; d < kProfileLength; ++d) {
      qc_ini.push_back(s.qc_ini[d]);
      fines.push_back(s.features.fine_content);
      fill.push_back(s.features.fill_thickness);
      blows.push_back(s.features.blows);
      qc_post.push_back(s.qc_post[d]);
    }
  }
  std::vector<MiEstimate> out{
      {"qc_ini", mutual_info(qc_ini, qc_post, k), k},
      {"fine_content", mutual_info(fines, qc_post, k), k},
      {"fill_thickness", mutual_info(fill, qc_post, k), k},
      {"blows", mutual_info(blows, qc_post, k), k},
  };
  std::stable_sort(out.begin(), out.end(), [](const MiEstimate& a, const MiEstimate& b) { return a.mi > b.mi; });
  return out;
}

// ---------------------------------------------------------------------------

double scott_bandwidth(const std::vector<double>& values) {
  const std::size_t n = values.size();
  if (n < 2) throw ValidationError("kde: need at least 2 values");
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  return std::pow(static_cast<double>(n), -0.2) * sd;
}

std::vector<double> kde_evaluate(const std::vector<double>& values, double h, const std::vector<double>& grid) {
  if (values.empty()) throw ValidationError("kde: empty input");
  if (!(h > 0.0)) throw ValidationError("kde: bandwidth must be positive");
  const double norm = 1.0 / (static_cast<double>(values.size()) * h * std::sqrt(2.0 * std::numbers::pi));
  std::vector<double> out(grid.size());
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double acc = 0.0;
    for (double v : values) {
      const double z = (grid[g] - v) / h;
      acc += std::exp(-0.5 * z * z);
    }
    out[g] = norm * acc;
  }
  return out;
}

KdeCurve kde(const std::vector<double>& values, std::optional<double> bandwidth, std::optional<std::vector<double>> grid,
             std::size_t points) {
  if (values.empty()) throw ValidationError("kde: empty input");
  KdeCurve c;
  if (bandwidth) {
    c.bandwidth = *bandwidth;
  } else {
    c.bandwidth = scott_bandwidth(values);
    if (!(c.bandwidth > 0.0)) throw ValidationError("kde: values are constant; supply a bandwidth");
  }
  if (!(c.bandwidth > 0.0)) throw ValidationError("kde: bandwidth must be positive");
  if (grid) {
    c.grid = std::move(*grid);
  } else {
    if (points < 2) throw ValidationError("kde: need at least 2 grid points");
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    const double a = *lo - 6.0 * c.bandwidth;
    const double b = *hi + 6.0 * c.bandwidth;
    c.grid.resize(points);
    for (std::size_t i = 0; i < points; ++i) c.grid[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(points - 1);
  }
  c.density = kde_evaluate(values, c.bandwidth, c.grid);
  return c;
}

double trapezoid(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw ValidationError("trapezoid: length mismatch");
  double area = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) {
    if (!(x[i] > x[i - 1])) throw ValidationError("trapezoid: grid must be strictly increasing");
    area += 0.5 * (y[i] + y[i - 1]) * (x[i] - x[i - 1]);
  }
  return area;
}

}  // namespace ricnet
