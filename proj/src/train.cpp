#include "ricnet/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "ricnet/errors.hpp"

namespace ricnet {

void TrainConfig::validate() const {
  if (epochs < 1) throw ValidationError("train.epochs: must be at least 1");
  Adam{adam};
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lr", c.adam.lr},
          {"beta1", c.adam.beta1},
          {"beta2", c.adam.beta2},
          {"epsilon", c.adam.epsilon},
          {"seed", c.seed},
          {"keep_best", c.keep_best}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("train: expected an object");
  TrainConfig c;
  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "epochs") c.epochs = v.get<std::size_t>();
      else if (key == "batch_size") c.batch_size = v.get<std::size_t>();
      else if (key == "lr") c.adam.lr = v.get<double>();
      else if (key == "beta1") c.adam.beta1 = v.get<double>();
      else if (key == "beta2") c.adam.beta2 = v.get<double>();
      else if (key == "epsilon") c.adam.epsilon = v.get<double>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "keep_best") c.keep_best = v.get<bool>();
      else throw ValidationError("train." + key + ": unknown field");
    } catch (const nlohmann::json::exception&) {
      throw ValidationError("train." + key + ": wrong type");
    }
  }
  try {
    c.validate();
  } catch (const ValidationError& e) {
    const std::string what = e.what();
    throw ValidationError(what.rfind("train.", 0) == 0 ? what : "train: " + what);
  }
  return c;
}

std::size_t default_batch_size(ModelKind kind) { return is_seq2seq(kind) ? 100 : 10; }

Tensor predict(const Model& model, const ModelInput& input) {
  NoGradGuard no_grad;
  return model.forward(input, ForwardContext{});
}

namespace {

double mse_of(const Tensor& pred, const Tensor& target) {
  const auto p = pred.data();
  const auto t = target.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) acc += (p[i] - t[i]) * (p[i] - t[i]);
  return acc / static_cast<double>(p.size());
}

ModelInput slice_batch(const ModelInput& full, const std::vector<std::size_t>& rows) {
  ModelInput b;
  b.input = gather_rows(full.input, rows);
  if (full.features.defined()) b.features = gather_rows(full.features, rows);
  if (full.shifted.defined()) b.shifted = gather_rows(full.shifted, rows);
  return b;
}

}  // namespace

double scaled_loss(const Model& model, const Dataset& dataset, const std::vector<std::size_t>& samples,
                   const Scaler& scaler) {
  const auto a = assemble_tensors(dataset, samples, scaler, model.kind());
  return mse_of(predict(model, a.input), a.target);
}

TrainHistory train(Model& model, const Dataset& dataset, const Scaler& scaler, const TrainConfig& config,
                   const EpochCallback& on_epoch) {
  config.validate();
  if (!dataset.is_split()) throw ValidationError("train: dataset has no split assignment");
  const auto train_idx = dataset.indices(Split::train);
  if (train_idx.empty()) throw ValidationError("train: empty train split");
  const auto val_idx = dataset.indices(Split::val);

  const auto train_set = assemble_tensors(dataset, train_idx, scaler, model.kind());
  std::optional<Assembled> val_set;
  if (!val_idx.empty()) val_set = assemble_tensors(dataset, val_idx, scaler, model.kind());

  TrainHistory h;
  h.items_per_epoch = train_set.target.dim(0);
  const std::size_t requested = config.batch_size == 0 ? default_batch_size(model.kind()) : config.batch_size;
  h.effective_batch = std::min(requested, h.items_per_epoch);

  auto params = model.parameter_tensors();
  Adam adam(config.adam);
  Rng shuffle_rng(config.seed);
  Rng dropout_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(h.items_per_epoch);
  std::iota(order.begin(), order.end(), 0);

  std::vector<std::vector<double>> best;
  const auto snapshot = [&] {
    best.clear();
    for (const auto& p : params) best.emplace_back(p.data().begin(), p.data().end());
  };

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double weighted = 0.0;
    for (std::size_t b = 0; b < order.size(); b += h.effective_batch) {
      const std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(b),
                                          order.begin() + static_cast<std::ptrdiff_t>(
                                                              std::min(order.size(), b + h.effective_batch)));
      const ModelInput in = slice_batch(train_set.input, rows);
      const Tensor target = gather_rows(train_set.target, rows);
      const Tensor loss = mse_loss(model.forward(in, ForwardContext{true, &dropout_rng}), target);
      const double value = loss.item();
      if (!std::isfinite(value)) {
        throw NumericError("training diverged: non-finite loss at epoch " + std::to_string(epoch + 1));
      }
      zero_grads(params);
      backward(loss);
      adam.step(params);
      weighted += value * static_cast<double>(rows.size());
    }
    h.train_loss.push_back(weighted / static_cast<double>(order.size()));

    if (val_set) {
      const double v = mse_of(predict(model, val_set->input), val_set->target);
      if (!std::isfinite(v)) {
        throw NumericError("training diverged: non-finite validation loss at epoch " + std::to_string(epoch + 1));
      }
      h.val_loss.push_back(v);
      if (!h.best_epoch || v < h.best_val_loss) {
        h.best_epoch = epoch;
        h.best_val_loss = v;
        if (config.keep_best) snapshot();
      }
    }
    h.epoch_ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count());
    if (on_epoch) on_epoch(epoch, h);
  }

  if (config.keep_best && !best.empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) std::copy(best[i].begin(), best[i].end(), params[i].data_mut().begin());
  }
  return h;
}

Metrics evaluate(const Model& model, const Dataset& dataset, const std::vector<std::size_t>& samples,
                 const Scaler& scaler) {
  if (samples.empty()) throw ValidationError("evaluate: empty split");
  const auto a = assemble_tensors(dataset, samples, scaler, model.kind());
  const Tensor pred = predict(model, a.input);
  std::vector<double> pred_scaled = pred.to_vector();
  std::vector<double> actual_scaled = a.target.to_vector();
  std::vector<double> actual;
  actual.reserve(pred_scaled.size());
  for (auto i : samples) actual.insert(actual.end(), dataset.samples[i].qc_post.begin(), dataset.samples[i].qc_post.end());
  const auto physical = scaler.invert(kQcPost, pred_scaled);
  return compute_metrics(physical, actual, pred_scaled, actual_scaled, kProfileLength);
}

}  // namespace ricnet
