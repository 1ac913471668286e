#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include <json.hpp>

#include "ricnet/data.hpp"
#include "ricnet/metrics.hpp"
#include "ricnet/models.hpp"
#include "ricnet/optim.hpp"

namespace ricnet {

struct TrainConfig {
  std::size_t epochs = 2000;
  std::size_t batch_size = 0;  // 0 selects 10 for feed-forward kinds, 100 for seq2seq
  AdamConfig adam;
  std::uint64_t seed = 1;
  bool keep_best = true;  // restore best-validation parameters at the end

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

std::size_t default_batch_size(ModelKind kind);

struct TrainHistory {
  std::vector<double> train_loss;  // mean train-mode batch loss per epoch
  std::vector<double> val_loss;    // eval-mode loss per epoch; empty without a val split
  std::optional<std::size_t> best_epoch;
  double best_val_loss = 0.0;
  std::vector<double> epoch_ms;  // wall clock; not reproducible
  std::size_t effective_batch = 0;
  std::size_t items_per_epoch = 0;  // rows for FNN, samples otherwise
};

// Called after every epoch with (epoch, history so far).
using EpochCallback = std::function<void(std::size_t, const TrainHistory&)>;

// Seeded mini-batch Adam on scaled MSE over the train split; seq2seq kinds
// are teacher-forced. Throws NumericError naming the epoch if a loss
// becomes non-finite.
TrainHistory train(Model& model, const Dataset& dataset, const Scaler& scaler, const TrainConfig& config,
                   const EpochCallback& on_epoch = {});

// Eval-mode predictions, no graph recorded.
Tensor predict(const Model& model, const ModelInput& input);

// Eval-mode scaled MSE on the given samples.
double scaled_loss(const Model& model, const Dataset& dataset, const std::vector<std::size_t>& samples,
                   const Scaler& scaler);

// Teacher-forced for seq2seq kinds; metrics in MPa and in scaled space.
Metrics evaluate(const Model& model, const Dataset& dataset, const std::vector<std::size_t>& samples,
                 const Scaler& scaler);

}  // namespace ricnet
