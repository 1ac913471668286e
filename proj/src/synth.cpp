#include "ricnet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "ricnet/errors.hpp"

namespace ricnet {

namespace {

void require(bool ok, const char* field, const char* what) {
  if (!ok) throw ValidationError(std::string("synth.") + field + ": " + what);
}

struct ScalarField {
  const char* name;
  double SynthConfig::*member;
};

constexpr ScalarField kScalarFields[] = {
    {"noise", &SynthConfig::noise},
    {"noise_correlation", &SynthConfig::noise_correlation},
    {"peak_gain", &SynthConfig::peak_gain},
    {"fines_sensitivity", &SynthConfig::fines_sensitivity},
    {"punch_gain", &SynthConfig::punch_gain},
    {"punch_fines_ref", &SynthConfig::punch_fines_ref},
    {"peak_depth_base", &SynthConfig::peak_depth_base},
    {"peak_depth_per_fill", &SynthConfig::peak_depth_per_fill},
    {"peak_depth_per_100_blows", &SynthConfig::peak_depth_per_100_blows},
    {"peak_width", &SynthConfig::peak_width},
    {"punch_depth", &SynthConfig::punch_depth},
    {"surface_qc_min", &SynthConfig::surface_qc_min},
    {"surface_qc_max", &SynthConfig::surface_qc_max},
    {"gradient_min", &SynthConfig::gradient_min},
    {"gradient_max", &SynthConfig::gradient_max},
    {"wiggle", &SynthConfig::wiggle},
    {"wiggle_wavelength", &SynthConfig::wiggle_wavelength},
    {"qc_floor", &SynthConfig::qc_floor},
};

}  // namespace

void SynthConfig::validate() const {
  require(samples > 0, "samples", "must be positive");
  require(!blows.empty(), "blows", "must not be empty");
  for (double b : blows) require(b > 0.0 && std::isfinite(b), "blows", "values must be positive");
  require(!fill_thickness.empty(), "fill_thickness", "must not be empty");
  for (double t : fill_thickness) require(t >= 0.0 && std::isfinite(t), "fill_thickness", "values must be non-negative");
  require(!fine_content.empty(), "fine_content", "must not be empty");
  for (double f : fine_content) require(f >= 0.0 && f <= 100.0, "fine_content", "values must lie in [0, 100]");
  require(noise >= 0.0 && std::isfinite(noise), "noise", "must be non-negative");
  require(noise_correlation >= 0.0 && noise_correlation < 1.0, "noise_correlation", "must lie in [0, 1)");
  require(peak_gain >= 0.0, "peak_gain", "must be non-negative");
  require(fines_sensitivity >= 0.0, "fines_sensitivity", "must be non-negative");
  require(punch_gain >= 0.0, "punch_gain", "must be non-negative");
  require(punch_fines_ref > 0.0, "punch_fines_ref", "must be positive");
  require(peak_width > 0.0, "peak_width", "must be positive");
  require(punch_depth >= 0.0, "punch_depth", "must be non-negative");
  require(surface_qc_min > 0.0 && surface_qc_max >= surface_qc_min, "surface_qc_max",
          "need 0 < surface_qc_min <= surface_qc_max");
  require(gradient_min > 0.0 && gradient_max >= gradient_min, "gradient_max", "need 0 < gradient_min <= gradient_max");
  require(wiggle >= 0.0 && wiggle < 1.0, "wiggle", "must lie in [0, 1)");
  require(wiggle_wavelength > 0.0, "wiggle_wavelength", "must be positive");
  require(qc_floor > 0.0, "qc_floor", "must be positive");
}

nlohmann::json to_json(const SynthConfig& c) {
  return {{"samples", c.samples},
          {"blows", c.blows},
          {"fill_thickness", c.fill_thickness},
          {"fine_content", c.fine_content},
          {"noise", c.noise},
          {"noise_correlation", c.noise_correlation},
          {"peak_gain", c.peak_gain},
          {"fines_sensitivity", c.fines_sensitivity},
          {"punch_gain", c.punch_gain},
          {"punch_fines_ref", c.punch_fines_ref},
          {"peak_depth_base", c.peak_depth_base},
          {"peak_depth_per_fill", c.peak_depth_per_fill},
          {"peak_depth_per_100_blows", c.peak_depth_per_100_blows},
          {"peak_width", c.peak_width},
          {"punch_depth", c.punch_depth},
          {"surface_qc_min", c.surface_qc_min},
          {"surface_qc_max", c.surface_qc_max},
          {"gradient_min", c.gradient_min},
          {"gradient_max", c.gradient_max},
          {"wiggle", c.wiggle},
          {"wiggle_wavelength", c.wiggle_wavelength},
          {"qc_floor", c.qc_floor}};
}

SynthConfig synth_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("synth: expected an object");
  SynthConfig c;
  const nlohmann::json defaults = to_json(c);
  for (const auto& [key, value] : j.items()) {
    if (!defaults.contains(key)) throw ValidationError("synth." + key + ": unknown field");
    try {
      if (key == "samples") {
        if (!value.is_number_integer() || value.get<long long>() <= 0) throw ValidationError("must be a positive integer");
        c.samples = value.get<std::size_t>();
      } else if (key == "blows") {
        c.blows = value.get<std::vector<double>>();
      } else if (key == "fill_thickness") {
        c.fill_thickness = value.get<std::vector<double>>();
      } else if (key == "fine_content") {
        c.fine_content = value.get<std::vector<double>>();
      } else {
        if (!value.is_number()) throw ValidationError("expected a number");
        const double v = value.get<double>();
        for (const auto& [name, member] : kScalarFields) {
          if (key == name) c.*member = v;
        }
      }
    } catch (const ValidationError& e) {
      throw ValidationError("synth." + key + ": " + e.what());
    } catch (const nlohmann::json::exception&) {
      throw ValidationError("synth." + key + ": wrong type");
    }
  }
  c.validate();
  return c;
}

double oracle_factor(const SynthConfig& c, const CompactionFeatures& f, double depth) {
  const double b = f.blows / 100.0;
  const double gain = c.peak_gain * b * std::exp(1.0 - b) * std::max(0.0, 1.0 - c.fines_sensitivity * f.fine_content / 100.0);
  const double punch = c.punch_gain * std::max(0.0, f.blows - 100.0) / 100.0 * f.fine_content / c.punch_fines_ref;
  const double d0 = c.peak_depth_base + c.peak_depth_per_fill * f.fill_thickness + c.peak_depth_per_100_blows * b;
  const double z = (depth - d0) / c.peak_width;
  return 1.0 + gain * std::exp(-0.5 * z * z) - (depth < c.punch_depth ? punch : 0.0);
}

std::vector<double> oracle_profile(const SynthConfig& c, const std::vector<double>& qc_ini, const CompactionFeatures& f) {
  if (qc_ini.size() != kProfileLength) throw ValidationError("oracle_profile: initial profile must have 28 values");
  const auto& grid = depth_grid();
  std::vector<double> out(kProfileLength);
  for (std::size_t d = 0; d < kProfileLength; ++d) {
    out[d] = std::max(c.qc_floor, qc_ini[d] * oracle_factor(c, f, grid[d]));
  }
  return out;
}

Dataset synth_generate(const SynthConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);

  std::vector<CompactionFeatures> grid;
  for (double b : config.blows) {
    for (double t : config.fill_thickness) {
      for (double f : config.fine_content) grid.push_back({b, t, f});
    }
  }
  std::shuffle(grid.begin(), grid.end(), rng);

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double two_pi = 2.0 * std::numbers::pi;
  const double innovation = std::sqrt(1.0 - config.noise_correlation * config.noise_correlation);
  const auto& depths = depth_grid();

  Dataset ds;
  ds.provenance = Provenance::synthetic;
  const int id_width = config.samples >= 100 ? 3 : 2;
  for (std::size_t i = 0; i < config.samples; ++i) {
    SoilSample s;
    char id[16];
    std::snprintf(id, sizeof id, "S%0*zu", id_width, i + 1);
    s.id = id;
    s.features = grid[i % grid.size()];

    const double a = config.surface_qc_min + (config.surface_qc_max - config.surface_qc_min) * unit(rng);
    const double slope = config.gradient_min + (config.gradient_max - config.gradient_min) * unit(rng);
    const double phase = two_pi * unit(rng);
    // |d/dd r sin(...)| <= r 2 pi / lambda < slope keeps the profile increasing.
    const double r = config.wiggle * slope * config.wiggle_wavelength / two_pi;
    s.qc_ini.resize(kProfileLength);
    for (std::size_t d = 0; d < kProfileLength; ++d) {
      const double qc = a + slope * depths[d] + r * std::sin(two_pi * depths[d] / config.wiggle_wavelength + phase);
      s.qc_ini[d] = std::max(config.qc_floor, qc);
    }

    s.qc_post = oracle_profile(config, s.qc_ini, s.features);
    double e = 0.0;
    for (std::size_t d = 0; d < kProfileLength; ++d) {
      const double z = normal(rng);
      e = d == 0 ? config.noise * z : config.noise_correlation * e + innovation * config.noise * z;
      s.qc_post[d] = std::max(config.qc_floor, s.qc_post[d] * (1.0 + e));
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace ricnet
