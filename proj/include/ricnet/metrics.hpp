#pragma once

#include <cstddef>
#include <vector>

#include <json.hpp>

namespace ricnet {

// Mean of |pred - actual|.
double mae(const std::vector<double>& pred, const std::vector<double>& actual);
double rmse(const std::vector<double>& pred, const std::vector<double>& actual);
// Mean of |pred - actual| / |actual| * 100. Zero actual values are an error.
double mape(const std::vector<double>& pred, const std::vector<double>& actual);
// |sum(pred - actual)| / N, the form in which signed errors cancel.
// Reported for comparison only.
double literal_absolute_sum_error(const std::vector<double>& pred, const std::vector<double>& actual);

struct Metrics {
  std::size_t count = 0;
  double mae = 0.0;   // MPa
  double rmse = 0.0;  // MPa
  double mape = 0.0;  // %
  double mae_scaled = 0.0;
  double rmse_scaled = 0.0;
  double mse_scaled = 0.0;
  double literal_abs_sum_error = 0.0;
  std::vector<double> per_depth_mae;   // MPa, one per grid depth
  std::vector<double> per_depth_rmse;  // MPa

  nlohmann::json to_json() const;
};

// `pred`/`actual` are row-major (samples, depths) in both physical and
// scaled space.
Metrics compute_metrics(const std::vector<double>& pred, const std::vector<double>& actual,
                        const std::vector<double>& pred_scaled, const std::vector<double>& actual_scaled,
                        std::size_t depths);

}  // namespace ricnet
