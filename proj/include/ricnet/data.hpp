#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "ricnet/model_spec.hpp"
#include "ricnet/models.hpp"

namespace ricnet {

inline constexpr double kDepthStep = 0.25;
inline constexpr double kMaxDepth = 7.0;

// 0.25, 0.50, ..., 7.00 m.
const std::vector<double>& depth_grid();

struct CompactionFeatures {
  double blows = 100.0;
  double fill_thickness = 0.5;  // T, m
  double fine_content = 18.0;   // F, %

  // Throws ValidationError naming the field.
  void validate() const;
  bool operator==(const CompactionFeatures&) const = default;
};

struct SoilSample {
  std::string id;
  std::vector<double> qc_ini;   // 28 values, MPa
  std::vector<double> qc_post;  // 28 values or empty for inference-only samples
  CompactionFeatures features;

  bool has_target() const { return !qc_post.empty(); }
  void validate() const;
  bool operator==(const SoilSample&) const = default;
};

enum class Split { train, val, test };
enum class Provenance { csv, synthetic };

std::string to_string(Split split);
std::string to_string(Provenance provenance);

struct Dataset {
  std::vector<SoilSample> samples;
  std::vector<Split> splits;  // empty until split_dataset; else one per sample
  Provenance provenance = Provenance::synthetic;

  std::size_t size() const { return samples.size(); }
  bool is_split() const { return splits.size() == samples.size() && !samples.empty(); }
  std::vector<std::size_t> indices(Split split) const;
  bool all_have_targets() const;
};

// Linear interpolation onto the 28-point grid. Outside the raw range the
// nearest raw value is held.
std::vector<double> resample_profile(const std::vector<double>& depths, const std::vector<double>& values);

// Count per split by largest-remainder rounding of n * fractions.
std::array<std::size_t, 3> split_sizes(std::size_t n, const std::array<double, 3>& fractions);

// Seeded shuffle then contiguous cut into train/val/test.
Dataset split_dataset(Dataset dataset, const std::array<double, 3>& fractions = {0.8, 0.1, 0.1},
                      std::uint64_t seed = 0);

struct ChannelStats {
  double mean = 0.0;
  double std = 1.0;  // population, floored
  bool degenerate = false;
};

inline constexpr double kStdFloor = 1e-12;

// Population mean and standard deviation with σ floored at 1e-12. A
// constant channel is flagged `degenerate` and a warning is logged.
ChannelStats fit_channel(const std::vector<double>& values, const std::string& name = "channel");

enum Channel : std::size_t { kQcIni = 0, kBlows, kFill, kFines, kQcPost, kChannelCount };

// One standard scaler per channel, fitted on the training split only.
struct Scaler {
  std::array<ChannelStats, kChannelCount> channels{};
  bool fitted = false;

  static const std::array<const char*, kChannelCount>& channel_names();

  double apply(Channel c, double x) const;
  double invert(Channel c, double x) const;
  std::vector<double> apply(Channel c, const std::vector<double>& xs) const;
  std::vector<double> invert(Channel c, const std::vector<double>& xs) const;

  nlohmann::json to_json() const;
  static Scaler from_json(const nlohmann::json& j);
};

// Fits on the samples listed in `fit_indices` (the training split).
Scaler fit_scaler(const Dataset& dataset, const std::vector<std::size_t>& fit_indices);

// Model-ready tensors for `sample_indices` plus the scaled target.
struct Assembled {
  ModelInput input;
  Tensor target;  // (rows, 1) for FNN, (N, 28) otherwise; undefined without targets
  std::vector<std::size_t> samples;
};

// Inference-only samples are accepted when `require_targets` is false; the
// seq2seq shifted target is then all zeros.
Assembled assemble_tensors(const Dataset& dataset, const std::vector<std::size_t>& sample_indices,
                           const Scaler& scaler, ModelKind kind, bool require_targets = true);

// Scaled (N, 28, 4) sequence and (N, 3) features for raw profiles.
ModelInput encode_inputs(const std::vector<std::vector<double>>& qc_ini, const std::vector<CompactionFeatures>& features,
                         const Scaler& scaler);

// [0, y1, ..., y27] from each row of a (N, 28) tensor.
Tensor shift_right(const Tensor& target);

// Rows of `t` along axis 0 at `rows`, as a constant tensor.
Tensor gather_rows(const Tensor& t, const std::vector<std::size_t>& rows);

}  // namespace ricnet
