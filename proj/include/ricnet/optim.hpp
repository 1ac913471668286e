#pragma once

#include <cstdint>
#include <vector>

#include "ricnet/tensor.hpp"

namespace ricnet {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Per-parameter moments plus the shared step counter.
struct AdamState {
  AdamConfig config;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t t = 0;
};

// Bias-corrected Adam. State is lazily shaped from `params` on the first step.
class Adam {
 public:
  explicit Adam(AdamConfig config = {});

  // Updates every tensor in `params` from its current grad buffer.
  void step(std::vector<Tensor>& params);
  // Same update with explicitly supplied gradients (one buffer per param).
  void step(std::vector<Tensor>& params, const std::vector<std::vector<double>>& grads);

  const AdamState& state() const { return state_; }

 private:
  AdamState state_;
};

void zero_grads(std::vector<Tensor>& params);

}  // namespace ricnet
