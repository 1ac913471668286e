#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>
#include <set>

#include "ricnet/analysis.hpp"
#include "ricnet/csv.hpp"
#include "ricnet/data.hpp"
#include "ricnet/errors.hpp"
#include "ricnet/synth.hpp"

using namespace ricnet;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("ricnet_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

// Direct piecewise-linear evaluation with end values held.
double interpolate(const std::vector<double>& xs, const std::vector<double>& ys, double x) {
  if (x <= xs.front()) return ys.front();
  if (x >= xs.back()) return ys.back();
  for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
    if (x >= xs[i] && x <= xs[i + 1]) {
      const double t = (x - xs[i]) / (xs[i + 1] - xs[i]);
      return ys[i] + t * (ys[i + 1] - ys[i]);
    }
  }
  return ys.back();
}

// Closed-form response with the default constants, written independently.
double default_factor(double blows, double fill, double fines, double depth) {
  const double b = blows / 100.0;
  const double gain = b * std::exp(1.0 - b) * std::max(0.0, 1.0 - 1.5 * fines / 100.0);
  const double punch = 0.6 * std::max(0.0, blows - 100.0) / 100.0 * fines / 33.0;
  const double d0 = 1.0 + 0.2 * fill + 0.5 * b;
  return 1.0 + gain * std::exp(-0.5 * (depth - d0) * (depth - d0)) - (depth < 1.0 ? punch : 0.0);
}

SynthConfig noise_free() {
  SynthConfig c;
  c.noise = 0.0;
  return c;
}

}  // namespace

TEST_CASE("depth grid is 0.25 to 7.0 m") {
  const auto& g = depth_grid();
  REQUIRE(g.size() == 28);
  for (std::size_t i = 0; i < 28; ++i) CHECK(g[i] == 0.25 * static_cast<double>(i + 1));
}

TEST_CASE("resample closed cases") {
  const auto& g = depth_grid();
  std::vector<double> v(28);
  std::iota(v.begin(), v.end(), 1.0);
  CHECK(resample_profile(g, v) == v);

  const auto r = resample_profile({0.0, 7.0}, {1.0, 8.0});
  CHECK(std::abs(r[13] - 4.5) < 1e-12);  // 3.5 m
  CHECK_THROWS_AS(resample_profile({1.0, 1.0}, {2.0, 3.0}), ValidationError);
}

TEST_CASE("resample matches a brute-force interpolation oracle") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + static_cast<std::size_t>(u(rng) * 40);
    std::vector<double> xs(n), ys(n);
    double x = -0.5 + u(rng);
    for (std::size_t i = 0; i < n; ++i) {
      x += 0.01 + u(rng) * 0.5;
      xs[i] = x;
      ys[i] = 1.0 + 10.0 * u(rng);
    }
    const auto r = resample_profile(xs, ys);
    for (std::size_t d = 0; d < 28; ++d) CHECK(std::abs(r[d] - interpolate(xs, ys, depth_grid()[d])) < 1e-12);
  }
}

TEST_CASE("split sizes by largest remainder") {
  CHECK(split_sizes(32, {0.8, 0.1, 0.1}) == std::array<std::size_t, 3>{26, 3, 3});
  CHECK(split_sizes(10, {0.8, 0.1, 0.1}) == std::array<std::size_t, 3>{8, 1, 1});
  for (std::size_t n = 10; n < 200; ++n) {
    const auto s = split_sizes(n, {0.7, 0.2, 0.1});
    CHECK(s[0] + s[1] + s[2] == n);
  }
}

TEST_CASE("split assignment is deterministic, disjoint and complete") {
  const Dataset ds = synth_generate(SynthConfig{}, 1);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Dataset a = split_dataset(ds, {0.8, 0.1, 0.1}, seed);
    const Dataset b = split_dataset(ds, {0.8, 0.1, 0.1}, seed);
    CHECK(a.splits == b.splits);
    std::set<std::size_t> seen;
    for (auto s : {Split::train, Split::val, Split::test}) {
      for (auto i : a.indices(s)) CHECK(seen.insert(i).second);
    }
    CHECK(seen.size() == 32);
    CHECK(a.indices(Split::train).size() == 26);
    CHECK(a.indices(Split::val).size() == 3);
    CHECK(a.indices(Split::test).size() == 3);
  }
  Dataset small = ds;
  small.samples.resize(9);
  CHECK_THROWS_AS(split_dataset(small), ValidationError);
}

TEST_CASE("scaler closed cases") {
  const auto s = fit_channel({0.0, 2.0});
  CHECK(s.mean == 1.0);
  CHECK(s.std == 1.0);
  CHECK_FALSE(s.degenerate);

  const auto c = fit_channel({5.0, 5.0, 5.0}, "constant");
  CHECK(c.degenerate);
  Scaler sc;
  sc.fitted = true;
  sc.channels[kBlows] = c;
  for (double v : sc.apply(kBlows, std::vector<double>{5.0, 5.0, 5.0})) CHECK(v == 0.0);
  sc.channels[kQcIni] = s;
  CHECK(sc.apply(kQcIni, std::vector<double>{0.0, 2.0}) == std::vector<double>{-1.0, 1.0});
}

TEST_CASE("scaler round trip and standardization on train splits") {
  SynthConfig cfg;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const Dataset ds = split_dataset(synth_generate(cfg, seed), {0.8, 0.1, 0.1}, seed);
    const auto idx = ds.indices(Split::train);
    const Scaler sc = fit_scaler(ds, idx);
    std::vector<double> qc;
    for (auto i : idx) qc.insert(qc.end(), ds.samples[i].qc_post.begin(), ds.samples[i].qc_post.end());
    const auto z = sc.apply(kQcPost, qc);
    double m = 0, v = 0;
    for (double x : z) m += x;
    m /= static_cast<double>(z.size());
    for (double x : z) v += (x - m) * (x - m);
    v /= static_cast<double>(z.size());
    CHECK(std::abs(m) < 1e-9);
    CHECK(std::abs(v - 1.0) < 1e-9);
    const auto back = sc.invert(kQcPost, z);
    for (std::size_t i = 0; i < qc.size(); ++i) CHECK(std::abs(back[i] - qc[i]) < 1e-9);

    const Scaler again = Scaler::from_json(sc.to_json());
    for (std::size_t c = 0; c < kChannelCount; ++c) {
      CHECK(again.channels[c].mean == sc.channels[c].mean);
      CHECK(again.channels[c].std == sc.channels[c].std);
    }
  }
}

TEST_CASE("assembled tensor shapes") {
  const Dataset ds = synth_generate(SynthConfig{}, 3);
  std::vector<std::size_t> all(32);
  std::iota(all.begin(), all.end(), 0);
  const Scaler sc = fit_scaler(ds, all);

  const auto fnn_s = assemble_tensors(ds, all, sc, ModelKind::FNN_S);
  CHECK(fnn_s.input.input.shape() == Shape{32, 31});
  CHECK(fnn_s.target.shape() == Shape{32, 28});
  const auto fnn = assemble_tensors(ds, all, sc, ModelKind::FNN);
  CHECK(fnn.input.input.shape() == Shape{32 * 28, 4});
  CHECK(fnn.target.shape() == Shape{32 * 28, 1});
  const auto seq = assemble_tensors(ds, all, sc, ModelKind::LSTM);
  CHECK(seq.input.input.shape() == Shape{32, 28, 4});
  CHECK(seq.input.features.shape() == Shape{32, 3});
  CHECK_FALSE(seq.input.shifted.defined());
  const auto s2s = assemble_tensors(ds, all, sc, ModelKind::LSTM_ATT_S2S);
  CHECK(s2s.input.shifted.shape() == Shape{32, 28});

  // Channel layout of the sequence tensor: qc_ini, blows, T, F.
  const auto& s0 = ds.samples[0];
  CHECK(seq.input.input.data()[0] == sc.apply(kQcIni, s0.qc_ini[0]));
  CHECK(seq.input.input.data()[1] == sc.apply(kBlows, s0.features.blows));
  CHECK(seq.input.input.data()[2] == sc.apply(kFill, s0.features.fill_thickness));
  CHECK(seq.input.input.data()[3] == sc.apply(kFines, s0.features.fine_content));
}

TEST_CASE("shifted target starts at zero and drops the last value") {
  std::vector<double> y(2 * 28);
  std::iota(y.begin(), y.end(), 1.0);
  const auto s = shift_right(Tensor({2, 28}, y)).to_vector();
  for (std::size_t r = 0; r < 2; ++r) {
    CHECK(s[r * 28] == 0.0);
    for (std::size_t t = 1; t < 28; ++t) CHECK(s[r * 28 + t] == y[r * 28 + t - 1]);
  }
}

TEST_CASE("targets are required unless inference-only assembly is requested") {
  Dataset ds = synth_generate(SynthConfig{}, 4);
  for (auto& s : ds.samples) s.qc_post.clear();
  Scaler sc;
  sc.fitted = true;
  CHECK_THROWS_WITH_AS(assemble_tensors(ds, {0, 1}, sc, ModelKind::CNN_S2S), doctest::Contains("targets required"),
                       ValidationError);
  const auto a = assemble_tensors(ds, {0, 1}, sc, ModelKind::CNN_S2S, false);
  CHECK_FALSE(a.target.defined());
  for (double v : a.input.shifted.data()) CHECK(v == 0.0);
}

TEST_CASE("noise-free synthetic data equals the closed-form response") {
  const Dataset a = synth_generate(noise_free(), 8);
  const Dataset b = synth_generate(noise_free(), 8);
  CHECK(a.samples == b.samples);
  for (const auto& s : a.samples) {
    for (std::size_t d = 0; d < 28; ++d) {
      const double expect = s.qc_ini[d] * default_factor(s.features.blows, s.features.fill_thickness,
                                                         s.features.fine_content, depth_grid()[d]);
      CHECK(std::abs(s.qc_post[d] - std::max(0.05, expect)) < 1e-12);
    }
    for (std::size_t d = 1; d < 28; ++d) CHECK(s.qc_ini[d] > s.qc_ini[d - 1]);
  }
}

TEST_CASE("synthetic features cover the grid and ids are ordered") {
  const Dataset ds = synth_generate(SynthConfig{}, 2);
  REQUIRE(ds.size() == 32);
  CHECK(ds.samples[0].id == "S01");
  CHECK(ds.samples[31].id == "S32");
  std::set<std::tuple<double, double, double>> combos;
  for (const auto& s : ds.samples) {
    combos.insert({s.features.blows, s.features.fill_thickness, s.features.fine_content});
  }
  CHECK(combos.size() == 32);  // 36 grid points, first 32 of a shuffle
  CHECK(ds.provenance == Provenance::synthetic);
}

TEST_CASE("EC over 0-4 m peaks near 100 blows") {
  const SynthConfig c = noise_free();
  const Dataset ds = synth_generate(c, 1);
  for (double fill : {0.5, 3.0, 5.0}) {
    for (double fines : {18.0, 21.0, 33.0}) {
      const auto& qc = ds.samples[0].qc_ini;
      auto mean_ec = [&](double blows) {
        const auto post = oracle_profile(c, qc, {blows, fill, fines});
        const auto ec = efficiency_of_compaction(qc, post);
        double m = 0;
        std::size_t n = 0;
        for (std::size_t d = 0; d < 28; ++d) {
          if (depth_grid()[d] <= 4.0) {
            m += ec[d];
            ++n;
          }
        }
        return m / static_cast<double>(n);
      };
      CHECK(mean_ec(100) > mean_ec(50));
    }
  }
}

TEST_CASE("punching regime gives negative EC at shallow depth") {
  const SynthConfig c = noise_free();
  const Dataset ds = synth_generate(c, 1);
  const auto& qc = ds.samples[0].qc_ini;
  const auto ec = efficiency_of_compaction(qc, oracle_profile(c, qc, {200, 0.5, 33}));
  bool negative = false;
  for (std::size_t d = 0; d < 28 && depth_grid()[d] < 1.0; ++d) negative = negative || ec[d] < 0.0;
  CHECK(negative);
}

TEST_CASE("synth config validation names the field") {
  SynthConfig c;
  c.blows = {100, -5};
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("synth.blows"), ValidationError);
  nlohmann::json j = to_json(SynthConfig{});
  j["blows"] = {"many"};
  CHECK_THROWS_WITH_AS(synth_config_from_json(j), doctest::Contains("synth.blows"), ValidationError);
  CHECK_THROWS_WITH_AS(synth_config_from_json({{"nois", 0.1}}), doctest::Contains("synth.nois"), ValidationError);
  CHECK(to_json(synth_config_from_json(to_json(SynthConfig{}))) == to_json(SynthConfig{}));
}

TEST_CASE("CSV round trip is exact and byte-stable") {
  const Dataset ds = synth_generate(SynthConfig{}, 6);
  const auto dir = temp_dir("csv");
  save_csv(ds, dir / "a.csv");
  const Dataset back = load_csv(dir / "a.csv");
  CHECK(back.samples == ds.samples);
  CHECK(back.provenance == Provenance::csv);
  CHECK(dataset_to_csv(back) == dataset_to_csv(ds));
  CHECK(dataset_to_csv(synth_generate(SynthConfig{}, 6)) == dataset_to_csv(ds));
  CHECK(read_text(dir / "a.csv").rfind(std::string(kDatasetHeader) + "\n", 0) == 0);
}

TEST_CASE("CSV validation errors name the line") {
  const Dataset ds = synth_generate(SynthConfig{}, 6);
  std::string text = dataset_to_csv(ds);

  // Row 5 of the file is the fourth data row.
  std::vector<std::string> lines;
  std::size_t start = 0;
  for (std::size_t pos; (pos = text.find('\n', start)) != std::string::npos; start = pos + 1) {
    lines.push_back(text.substr(start, pos - start));
  }
  auto join = [](const std::vector<std::string>& ls) {
    std::string out;
    for (const auto& l : ls) out += l + "\n";
    return out;
  };
  auto neg = lines;
  const auto c1 = neg[4].find(',', neg[4].find(',') + 1);
  neg[4] = neg[4].substr(0, c1 + 1) + "-1.5" + neg[4].substr(neg[4].find(',', c1 + 1));
  CHECK_THROWS_WITH_AS(parse_dataset_csv(join(neg)), doctest::Contains("line 5"), ValidationError);

  auto short_sample = lines;
  short_sample.erase(short_sample.begin() + 28);  // last row of S01
  CHECK_THROWS_WITH_AS(parse_dataset_csv(join(short_sample)), doctest::Contains("expected 28 depth rows, got 27"),
                       ValidationError);

  auto bad_header = lines;
  bad_header[0] = "id,depth";
  CHECK_THROWS_WITH_AS(parse_dataset_csv(join(bad_header)), doctest::Contains("line 1"), ValidationError);

  auto partial = lines;
  const auto p = partial[3].find(',', partial[3].find(',', partial[3].find(',') + 1) + 1);
  partial[3] = partial[3].substr(0, p + 1) + partial[3].substr(partial[3].find(',', p + 1));
  CHECK_THROWS_WITH_AS(parse_dataset_csv(join(partial)), doctest::Contains("all rows or on none"), ValidationError);

  CHECK_THROWS_AS(load_csv("/nonexistent/dir/x.csv"), ValidationError);
}

TEST_CASE("inference-only CSV loads without targets") {
  Dataset ds = synth_generate(SynthConfig{}, 7);
  for (auto& s : ds.samples) s.qc_post.clear();
  const Dataset back = parse_dataset_csv(dataset_to_csv(ds));
  CHECK_FALSE(back.all_have_targets());
  CHECK(back.samples == ds.samples);
}

TEST_CASE("format_double is the shortest exact form") {
  for (double v : {0.1, 1.0 / 3.0, 2.5, 1e-300, 12345678.9}) CHECK(std::stod(format_double(v)) == v);
  CHECK(format_double(0.25) == "0.25");
}
