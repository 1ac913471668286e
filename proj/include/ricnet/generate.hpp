#pragma once

#include <cstddef>
#include <vector>

#include "ricnet/data.hpp"
#include "ricnet/models.hpp"

namespace ricnet {

// Autoregressive decoding in scaled space. The encoder runs once; the
// decoder starts from an all-zero shifted profile and writes each
// prediction into the next slot, 28 steps in total. in.input (N, 28, 4),
// in.features (N, 3) -> (N, 28).
Tensor generate_scaled(const Model& model, const ModelInput& in);

// Predicted post-compaction profile in MPa.
std::vector<double> generate(const Model& model, const Scaler& scaler, const std::vector<double>& qc_ini,
                             const CompactionFeatures& features);

struct SweepRow {
  CompactionFeatures features;
  std::vector<double> profile;  // MPa
};

// One generated profile per grid point, in grid order. Work is spread over
// `threads` workers sharing the frozen model.
std::vector<SweepRow> parametric_sweep(const Model& model, const Scaler& scaler, const std::vector<double>& qc_ini,
                                       const std::vector<CompactionFeatures>& grid, std::size_t threads = 1);

}  // namespace ricnet
