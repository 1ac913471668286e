#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ricnet/data.hpp"

namespace ricnet {

// Percent change per depth: (qc_post - qc_ini) / qc_ini * 100.
std::vector<double> efficiency_of_compaction(const std::vector<double>& qc_ini, const std::vector<double>& qc_post);

struct MiEstimate {
  std::string feature;
  double mi = 0.0;  // nats, clamped at 0
  std::size_t k = 3;
};

inline constexpr std::uint64_t kMiJitterSeed = 0x5eed;

// Kraskov-Stoegbauer-Grassberger estimator (first variant) on standardized
// columns with Chebyshev distance:
//   MI = psi(n) + psi(k) - < psi(n_x + 1) + psi(n_y + 1) >
// where n_x, n_y count neighbours strictly inside the joint k-th neighbour
// radius. Columns containing repeated values get U(-1, 1) * 1e-6 * range
// jitter from `jitter_seed` before standardization.
double mutual_info(const std::vector<double>& x, const std::vector<double>& y, std::size_t k = 3,
                   std::uint64_t jitter_seed = kMiJitterSeed);

// MI of qc_ini, fine content, fill thickness and blows against qc_post over
// pooled (sample, depth) rows, sorted by descending MI (stable on ties).
std::vector<MiEstimate> rank_features(const Dataset& dataset, std::size_t k = 3);

struct KdeCurve {
  std::vector<double> grid;
  std::vector<double> density;
  double bandwidth = 0.0;
};

// n^(-1/5) * sample standard deviation (ddof = 1).
double scott_bandwidth(const std::vector<double>& values);

// Gaussian KDE evaluated on `grid`.
std::vector<double> kde_evaluate(const std::vector<double>& values, double bandwidth, const std::vector<double>& grid);

// Default grid: `points` evenly spaced over [min - 6h, max + 6h]. A zero
// Scott bandwidth (all values equal) without an explicit bandwidth is an error.
KdeCurve kde(const std::vector<double>& values, std::optional<double> bandwidth = std::nullopt,
             std::optional<std::vector<double>> grid = std::nullopt, std::size_t points = 1024);

// Trapezoid rule over a strictly increasing grid.
double trapezoid(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace ricnet
