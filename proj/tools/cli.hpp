#pragma once

#include <json.hpp>

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "ricnet/model_spec.hpp"

namespace ricnet::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kInvalid = 2, kNumeric = 3 };

inline constexpr int kSchemaVersion = 1;

// Figures reported for each kind on the field data set; the parameter counts
// are echoed beside ours but never expected to match.
struct PublishedFigures {
  double mae_train = 0.0;
  double mae_test = 0.0;
  double rmse_train = 0.0;
  double rmse_test = 0.0;
  std::size_t params = 0;
  double epoch_ms = 0.0;
};
const PublishedFigures& published_figures(ModelKind kind);

// Runs one command. `args` excludes the program name. Artifacts go under the
// configured output directory; human-readable progress goes to `out` and a
// single-line JSON error to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ricnet::cli
