#include "ricnet/generate.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <thread>

#include "ricnet/errors.hpp"

namespace ricnet {

namespace {

void require_seq2seq(const Model& model) {
  if (!is_seq2seq(model.kind())) {
    throw KindError("generative inference requires a sequence-to-sequence model (got " + to_string(model.kind()) + ")");
  }
}

}  // namespace

Tensor generate_scaled(const Model& model, const ModelInput& in) {
  require_seq2seq(model);
  NoGradGuard no_grad;
  const ForwardContext eval;
  const EncoderState state = model.encode(in.input, in.features, eval);
  const std::size_t n = in.input.dim(0);
  std::vector<double> shifted(n * kProfileLength, 0.0);
  std::vector<double> out(n * kProfileLength, 0.0);
  for (std::size_t t = 0; t < kProfileLength; ++t) {
    const Tensor step = model.decode(state, Tensor({n, kProfileLength}, shifted), eval);
    const auto y = step.data();
    for (std::size_t i = 0; i < n; ++i) {
      out[i * kProfileLength + t] = y[i * kProfileLength + t];
      if (t + 1 < kProfileLength) shifted[i * kProfileLength + t + 1] = y[i * kProfileLength + t];
    }
  }
  return Tensor({n, kProfileLength}, std::move(out));
}

std::vector<double> generate(const Model& model, const Scaler& scaler, const std::vector<double>& qc_ini,
                             const CompactionFeatures& features) {
  require_seq2seq(model);
  features.validate();
  const ModelInput in = encode_inputs({qc_ini}, {features}, scaler);
  return scaler.invert(kQcPost, generate_scaled(model, in).to_vector());
}

std::vector<SweepRow> parametric_sweep(const Model& model, const Scaler& scaler, const std::vector<double>& qc_ini,
                                       const std::vector<CompactionFeatures>& grid, std::size_t threads) {
  require_seq2seq(model);
  if (grid.empty()) throw ValidationError("sweep: empty feature grid");
  for (const auto& f : grid) f.validate();
  std::vector<SweepRow> rows(grid.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  auto worker = [&] {
    try {
      for (std::size_t i = next++; i < grid.size() && !failed; i = next++) {
        rows[i] = {grid[i], generate(model, scaler, qc_ini, grid[i])};
      }
    } catch (...) {
      if (!failed.exchange(true)) failure = std::current_exception();
    }
  };
  const std::size_t n = std::clamp<std::size_t>(threads, 1, grid.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return rows;
}

}  // namespace ricnet
