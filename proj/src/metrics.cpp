#include "ricnet/metrics.hpp"

#include <cmath>

#include "ricnet/errors.hpp"

namespace ricnet {

namespace {

void check(const std::vector<double>& pred, const std::vector<double>& actual, const char* what) {
  if (pred.size() != actual.size()) {
    throw ValidationError(std::string(what) + ": length mismatch (" + std::to_string(pred.size()) + " vs " +
                          std::to_string(actual.size()) + ")");
  }
  if (pred.empty()) throw ValidationError(std::string(what) + ": empty input");
}

}  // namespace

double mae(const std::vector<double>& pred, const std::vector<double>& actual) {
  check(pred, actual, "mae");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) acc += std::abs(pred[i] - actual[i]);
  return acc / static_cast<double>(pred.size());
}

double rmse(const std::vector<double>& pred, const std::vector<double>& actual) {
  check(pred, actual, "rmse");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) acc += (pred[i] - actual[i]) * (pred[i] - actual[i]);
  return std::sqrt(acc / static_cast<double>(pred.size()));
}

double mape(const std::vector<double>& pred, const std::vector<double>& actual) {
  check(pred, actual, "mape");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (actual[i] == 0.0) throw ValidationError("mape: actual value is zero at index " + std::to_string(i));
    acc += std::abs(pred[i] - actual[i]) / std::abs(actual[i]);
  }
  return acc / static_cast<double>(pred.size()) * 100.0;
}

double literal_absolute_sum_error(const std::vector<double>& pred, const std::vector<double>& actual) {
  check(pred, actual, "literal_absolute_sum_error");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) acc += pred[i] - actual[i];
  return std::abs(acc) / static_cast<double>(pred.size());
}

nlohmann::json Metrics::to_json() const {
  return {{"count", count},
          {"mae_mpa", mae},
          {"rmse_mpa", rmse},
          {"mape_pct", mape},
          {"mae_scaled", mae_scaled},
          {"rmse_scaled", rmse_scaled},
          {"mse_scaled", mse_scaled},
          {"literal_abs_sum_error_mpa", literal_abs_sum_error},
          {"per_depth_mae_mpa", per_depth_mae},
          {"per_depth_rmse_mpa", per_depth_rmse}};
}

Metrics compute_metrics(const std::vector<double>& pred, const std::vector<double>& actual,
                        const std::vector<double>& pred_scaled, const std::vector<double>& actual_scaled,
                        std::size_t depths) {
  check(pred, actual, "metrics");
  check(pred_scaled, actual_scaled, "metrics");
  if (depths == 0 || pred.size() % depths != 0) throw ValidationError("metrics: size is not a multiple of depth count");
  Metrics m;
  m.count = pred.size();
  m.mae = mae(pred, actual);
  m.rmse = rmse(pred, actual);
  m.mape = mape(pred, actual);
  m.literal_abs_sum_error = literal_absolute_sum_error(pred, actual);
  m.mae_scaled = mae(pred_scaled, actual_scaled);
  m.rmse_scaled = rmse(pred_scaled, actual_scaled);
  double sq = 0.0;
  for (std::size_t i = 0; i < pred_scaled.size(); ++i) sq += (pred_scaled[i] - actual_scaled[i]) * (pred_scaled[i] - actual_scaled[i]);
  m.mse_scaled = sq / static_cast<double>(pred_scaled.size());
  const std::size_t rows = pred.size() / depths;
  m.per_depth_mae.assign(depths, 0.0);
  m.per_depth_rmse.assign(depths, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t d = 0; d < depths; ++d) {
      const double e = pred[r * depths + d] - actual[r * depths + d];
      m.per_depth_mae[d] += std::abs(e);
      m.per_depth_rmse[d] += e * e;
    }
  }
  for (std::size_t d = 0; d < depths; ++d) {
    m.per_depth_mae[d] /= static_cast<double>(rows);
    m.per_depth_rmse[d] = std::sqrt(m.per_depth_rmse[d] / static_cast<double>(rows));
  }
  return m;
}

}  // namespace ricnet
