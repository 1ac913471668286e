#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <json.hpp>

#include "ricnet/data.hpp"

namespace ricnet {

// Deterministic stand-in for field data. The post-compaction profile is
//
//   qc_post(d) = qc_ini(d) * (1 + A(b, F) * exp(-(d - d0)^2 / (2 w^2)) - P(b, F) * [d < d_p]) * (1 + e(d))
//
//   A(b, F) = peak_gain * (b / 100) * exp(1 - b / 100) * max(0, 1 - fines_sensitivity * F / 100)
//   P(b, F) = punch_gain * max(0, b - 100) / 100 * F / punch_fines_ref
//   d0      = peak_depth_base + peak_depth_per_fill * T + peak_depth_per_100_blows * b / 100
//
// A peaks at 100 blows and falls with fines; P is the punching penalty
// above 100 blows. e(d) is AR(1) along depth with marginal std `noise`.
// qc_ini(d) = a + s d + r sin(2 pi d / lambda + phi) with r small enough that
// qc_ini is strictly increasing in depth. Values are clamped to `qc_floor`.
struct SynthConfig {
  std::size_t samples = 32;
  std::vector<double> blows{50, 100, 150, 200};
  std::vector<double> fill_thickness{0.5, 3, 5};
  std::vector<double> fine_content{18, 21, 33};
  double noise = 0.05;
  double noise_correlation = 0.9;

  double peak_gain = 1.0;
  double fines_sensitivity = 1.5;
  double punch_gain = 0.6;
  double punch_fines_ref = 33.0;
  double peak_depth_base = 1.0;
  double peak_depth_per_fill = 0.2;
  double peak_depth_per_100_blows = 0.5;
  double peak_width = 1.0;
  double punch_depth = 1.0;

  double surface_qc_min = 1.5;
  double surface_qc_max = 3.0;
  double gradient_min = 0.6;  // MPa per m
  double gradient_max = 1.2;
  double wiggle = 0.3;  // fraction of the monotonicity bound
  double wiggle_wavelength = 2.0;
  double qc_floor = 0.05;

  // Throws ValidationError naming the field ("synth.<name>").
  void validate() const;
};

nlohmann::json to_json(const SynthConfig& c);
SynthConfig synth_config_from_json(const nlohmann::json& j);

// Multiplicative noise-free response factor at one depth.
double oracle_factor(const SynthConfig& c, const CompactionFeatures& f, double depth);

// Noise-free post-compaction profile for a given initial profile.
std::vector<double> oracle_profile(const SynthConfig& c, const std::vector<double>& qc_ini, const CompactionFeatures& f);

// Features come from a seeded shuffle of the blows x T x F grid, cycling
// when more samples than grid points are requested.
Dataset synth_generate(const SynthConfig& config, std::uint64_t seed);

}  // namespace ricnet
