#include "ricnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <random>

#include "ricnet/errors.hpp"

namespace ricnet {

const std::vector<double>& depth_grid() {
  static const std::vector<double> grid = [] {
    std::vector<double> g(kProfileLength);
    for (std::size_t i = 0; i < kProfileLength; ++i) g[i] = kDepthStep * static_cast<double>(i + 1);
    return g;
  }();
  return grid;
}

void CompactionFeatures::validate() const {
  if (!(blows > 0.0) || !std::isfinite(blows)) throw ValidationError("blows: must be positive");
  if (!(fill_thickness >= 0.0) || !std::isfinite(fill_thickness)) {
    throw ValidationError("fill_thickness_m: must be non-negative");
  }
  if (!(fine_content >= 0.0 && fine_content <= 100.0)) throw ValidationError("fine_content_pct: must lie in [0, 100]");
}

void SoilSample::validate() const {
  const std::string where = "sample '" + id + "': ";
  if (qc_ini.size() != kProfileLength) {
    throw ValidationError(where + "expected 28 qc_ini values, got " + std::to_string(qc_ini.size()));
  }
  if (!qc_post.empty() && qc_post.size() != kProfileLength) {
    throw ValidationError(where + "expected 28 qc_post values, got " + std::to_string(qc_post.size()));
  }
  for (double v : qc_ini) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError(where + "qc_ini values must be positive");
  }
  for (double v : qc_post) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError(where + "qc_post values must be positive");
  }
  try {
    features.validate();
  } catch (const ValidationError& e) {
    throw ValidationError(where + e.what());
  }
}

std::string to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

std::string to_string(Provenance provenance) { return provenance == Provenance::csv ? "csv" : "synthetic"; }

std::vector<std::size_t> Dataset::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < splits.size(); ++i) {
    if (splits[i] == split) out.push_back(i);
  }
  return out;
}

bool Dataset::all_have_targets() const {
  return std::all_of(samples.begin(), samples.end(), [](const SoilSample& s) { return s.has_target(); });
}

// ---------------------------------------------------------------------------

std::vector<double> resample_profile(const std::vector<double>& depths, const std::vector<double>& values) {
  if (depths.empty()) throw ValidationError("resample_profile: empty input");
  if (depths.size() != values.size()) throw ValidationError("resample_profile: depth and value counts differ");
  for (std::size_t i = 1; i < depths.size(); ++i) {
    if (!(depths[i] > depths[i - 1])) {
      throw ValidationError("resample_profile: depths must be strictly increasing (index " + std::to_string(i) + ")");
    }
  }
  std::vector<double> out;
  out.reserve(kProfileLength);
  for (double d : depth_grid()) {
    if (d <= depths.front()) {
      out.push_back(values.front());
      continue;
    }
    if (d >= depths.back()) {
      out.push_back(values.back());
      continue;
    }
    const auto hi = static_cast<std::size_t>(std::upper_bound(depths.begin(), depths.end(), d) - depths.begin());
    const std::size_t lo = hi - 1;
    if (depths[lo] == d) {
      out.push_back(values[lo]);
      continue;
    }
    const double w = (d - depths[lo]) / (depths[hi] - depths[lo]);
    out.push_back(values[lo] + w * (values[hi] - values[lo]));
  }
  return out;
}

std::array<std::size_t, 3> split_sizes(std::size_t n, const std::array<double, 3>& fractions) {
  double total = 0.0;
  for (double f : fractions) {
    if (!(f >= 0.0)) throw ValidationError("split fractions must be non-negative");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ValidationError("split fractions must sum to 1");
  std::array<std::size_t, 3> sizes{};
  std::array<double, 3> remainder{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double exact = fractions[i] * static_cast<double>(n);
    sizes[i] = static_cast<std::size_t>(std::floor(exact));
    remainder[i] = exact - static_cast<double>(sizes[i]);
    assigned += sizes[i];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  // Largest remainder first; ties go to the earlier split.
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++sizes[order[k % 3]];
  return sizes;
}

Dataset split_dataset(Dataset dataset, const std::array<double, 3>& fractions, std::uint64_t seed) {
  const std::size_t n = dataset.size();
  if (n < 10) throw ValidationError("split_dataset needs at least 10 samples, got " + std::to_string(n));
  const auto sizes = split_sizes(n, fractions);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  dataset.splits.assign(n, Split::train);
  for (std::size_t k = 0; k < n; ++k) {
    const Split s = k < sizes[0] ? Split::train : (k < sizes[0] + sizes[1] ? Split::val : Split::test);
    dataset.splits[order[k]] = s;
  }
  return dataset;
}

// ---------------------------------------------------------------------------

ChannelStats fit_channel(const std::vector<double>& values, const std::string& name) {
  if (values.empty()) throw ValidationError("cannot fit scaler channel '" + name + "' on no data");
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  ChannelStats s;
  s.mean = mean;
  s.std = std::sqrt(ss / n);
  if (s.std < kStdFloor) {
    s.std = kStdFloor;
    s.degenerate = true;
    std::cerr << "warning: scaler channel '" << name << "' is constant; sigma floored at 1e-12\n";
  }
  return s;
}

const std::array<const char*, kChannelCount>& Scaler::channel_names() {
  static const std::array<const char*, kChannelCount> names{"qc_ini_mpa", "blows", "fill_thickness_m",
                                                            "fine_content_pct", "qc_post_mpa"};
  return names;
}

double Scaler::apply(Channel c, double x) const {
  if (!fitted) throw ValidationError("scaler is not fitted");
  return (x - channels[c].mean) / channels[c].std;
}

double Scaler::invert(Channel c, double x) const {
  if (!fitted) throw ValidationError("scaler is not fitted");
  return x * channels[c].std + channels[c].mean;
}

std::vector<double> Scaler::apply(Channel c, const std::vector<double>& xs) const {
  std::vector<double> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) out[i] = apply(c, xs[i]);
  return out;
}

std::vector<double> Scaler::invert(Channel c, const std::vector<double>& xs) const {
  std::vector<double> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) out[i] = invert(c, xs[i]);
  return out;
}

nlohmann::json Scaler::to_json() const {
  nlohmann::json j = nlohmann::json::array();
  for (std::size_t c = 0; c < kChannelCount; ++c) {
    j.push_back({{"channel", channel_names()[c]}, {"mean", channels[c].mean}, {"std", channels[c].std}});
  }
  return j;
}

Scaler Scaler::from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != kChannelCount) throw ValidationError("scaler: expected 5 channel entries");
  Scaler s;
  for (std::size_t c = 0; c < kChannelCount; ++c) {
    const auto& e = j[c];
    if (e.value("channel", std::string{}) != channel_names()[c]) {
      throw ValidationError(std::string("scaler: expected channel ") + channel_names()[c]);
    }
    s.channels[c].mean = e.at("mean").get<double>();
    s.channels[c].std = e.at("std").get<double>();
    s.channels[c].degenerate = s.channels[c].std <= kStdFloor;
    if (!(s.channels[c].std > 0.0)) throw ValidationError("scaler: std must be positive");
  }
  s.fitted = true;
  return s;
}

Scaler fit_scaler(const Dataset& dataset, const std::vector<std::size_t>& fit_indices) {
  if (fit_indices.empty()) throw ValidationError("cannot fit scaler on an empty split");
  std::array<std::vector<double>, kChannelCount> columns;
  for (auto i : fit_indices) {
    const auto& s = dataset.samples.at(i);
    if (!s.has_target()) throw ValidationError("targets required to fit the scaler (sample '" + s.id + "')");
    for (std::size_t d = 0; d < kProfileLength; ++d) {
      columns[kQcIni].push_back(s.qc_ini[d]);
      columns[kQcPost].push_back(s.qc_post[d]);
    }
    columns[kBlows].push_back(s.features.blows);
    columns[kFill].push_back(s.features.fill_thickness);
    columns[kFines].push_back(s.features.fine_content);
  }
  Scaler scaler;
  for (std::size_t c = 0; c < kChannelCount; ++c) {
    scaler.channels[c] = fit_channel(columns[c], Scaler::channel_names()[c]);
  }
  scaler.fitted = true;
  return scaler;
}

// ---------------------------------------------------------------------------

ModelInput encode_inputs(const std::vector<std::vector<double>>& qc_ini, const std::vector<CompactionFeatures>& features,
                         const Scaler& scaler) {
  if (!scaler.fitted) throw ValidationError("scaler is not fitted");
  if (qc_ini.size() != features.size()) throw ValidationError("profile and feature counts differ");
  const std::size_t n = qc_ini.size();
  std::vector<double> seq;
  std::vector<double> feats;
  seq.reserve(n * kProfileLength * kSequenceChannels);
  feats.reserve(n * kFeatureCount);
  for (std::size_t i = 0; i < n; ++i) {
    if (qc_ini[i].size() != kProfileLength) throw ValidationError("initial profile must have 28 values");
    const std::array<double, 3> f{scaler.apply(kBlows, features[i].blows), scaler.apply(kFill, features[i].fill_thickness),
                                  scaler.apply(kFines, features[i].fine_content)};
    for (std::size_t d = 0; d < kProfileLength; ++d) {
      seq.push_back(scaler.apply(kQcIni, qc_ini[i][d]));
      seq.insert(seq.end(), f.begin(), f.end());
    }
    feats.insert(feats.end(), f.begin(), f.end());
  }
  ModelInput in;
  in.input = Tensor({n, kProfileLength, kSequenceChannels}, std::move(seq));
  in.features = Tensor({n, kFeatureCount}, std::move(feats));
  return in;
}

Tensor shift_right(const Tensor& target) {
  if (target.rank() != 2) throw ShapeError("shift_right expects (N, T), got " + shape_str(target.shape()));
  const std::size_t n = target.dim(0);
  const std::size_t t = target.dim(1);
  const auto y = target.data();
  std::vector<double> out(n * t, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 1; j < t; ++j) out[i * t + j] = y[i * t + j - 1];
  }
  return Tensor({n, t}, std::move(out));
}

Tensor gather_rows(const Tensor& t, const std::vector<std::size_t>& rows) {
  const std::size_t row = t.dim(0) == 0 ? 0 : t.numel() / t.dim(0);
  const auto src = t.data();
  std::vector<double> out;
  out.reserve(rows.size() * row);
  for (auto r : rows) {
    if (r >= t.dim(0)) throw ShapeError("gather_rows index out of range");
    out.insert(out.end(), src.begin() + static_cast<std::ptrdiff_t>(r * row),
               src.begin() + static_cast<std::ptrdiff_t>((r + 1) * row));
  }
  Shape shape = t.shape();
  shape[0] = rows.size();
  return Tensor(std::move(shape), std::move(out));
}

Assembled assemble_tensors(const Dataset& dataset, const std::vector<std::size_t>& sample_indices, const Scaler& scaler,
                           ModelKind kind, bool require_targets) {
  if (!scaler.fitted) throw ValidationError("assemble_tensors: scaler is not fitted");
  if (sample_indices.empty()) throw ValidationError("assemble_tensors: no samples selected");
  std::vector<std::vector<double>> profiles;
  std::vector<CompactionFeatures> features;
  bool targets = true;
  for (auto i : sample_indices) {
    const auto& s = dataset.samples.at(i);
    if (!s.has_target()) {
      if (require_targets) throw ValidationError("targets required (sample '" + s.id + "' has no qc_post)");
      targets = false;
    }
    profiles.push_back(s.qc_ini);
    features.push_back(s.features);
  }
  const std::size_t n = sample_indices.size();
  Assembled out;
  out.samples = sample_indices;
  ModelInput seq = encode_inputs(profiles, features, scaler);

  std::vector<double> y;
  if (targets) {
    y.reserve(n * kProfileLength);
    for (auto i : sample_indices) {
      const auto scaled = scaler.apply(kQcPost, dataset.samples[i].qc_post);
      y.insert(y.end(), scaled.begin(), scaled.end());
    }
  }

  switch (kind) {
    case ModelKind::FNN: {
      // One row per (sample, depth); the sequence tensor already has this layout.
      out.input.input = reshape(seq.input, {n * kProfileLength, kFnnRowWidth});
      if (targets) out.target = Tensor({n * kProfileLength, 1}, std::move(y));
      break;
    }
    case ModelKind::FNN_S: {
      std::vector<double> flat;
      flat.reserve(n * kFnnSWidth);
      const auto s = seq.input.data();
      const auto f = seq.features.data();
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t d = 0; d < kProfileLength; ++d) flat.push_back(s[(i * kProfileLength + d) * kSequenceChannels]);
        flat.insert(flat.end(), f.begin() + static_cast<std::ptrdiff_t>(i * kFeatureCount),
                    f.begin() + static_cast<std::ptrdiff_t>((i + 1) * kFeatureCount));
      }
      out.input.input = Tensor({n, kFnnSWidth}, std::move(flat));
      if (targets) out.target = Tensor({n, kProfileLength}, std::move(y));
      break;
    }
    default: {
      out.input = seq;
      if (targets) out.target = Tensor({n, kProfileLength}, std::move(y));
      if (is_seq2seq(kind)) {
        out.input.shifted = targets ? shift_right(out.target) : Tensor::zeros({n, kProfileLength});
      }
      break;
    }
  }
  return out;
}

}  // namespace ricnet
