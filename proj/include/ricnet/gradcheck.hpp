#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ricnet/tensor.hpp"

namespace ricnet {

// |a - n| / max(|a|, |n|, floor). The floor keeps vanishing gradients from
// turning finite-difference round-off into huge ratios.
double relative_error(double analytic, double numeric, double floor = 1e-6);

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::string worst;  // "<tensor index>[<element>]"
};

// Compares reverse-mode gradients of `loss_fn` with respect to `wrt`
// against central differences with step `eps`, scoring each element with
// relative_error(·, ·, floor). `loss_fn` must rebuild the graph from the
// current values of `wrt` on every call.
GradCheckResult check_gradients(const std::function<Tensor()>& loss_fn, std::vector<Tensor> wrt,
                                double eps = 1e-5, double floor = 1e-6);

struct GradCheckRow {
  std::string name;
  std::size_t instances = 0;
  double max_rel_error = 0.0;
  bool passed = false;
};

// Randomized finite-difference checks for every primitive and layer, each
// over `instances` seeds. A row passes when its worst error is below `tolerance`.
std::vector<GradCheckRow> run_gradcheck_suite(std::size_t instances = 100, std::uint64_t base_seed = 1,
                                              double tolerance = 1e-4);

}  // namespace ricnet
