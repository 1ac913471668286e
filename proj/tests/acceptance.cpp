// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include "cli.hpp"
#include "ricnet/analysis.hpp"
#include "ricnet/csv.hpp"
#include "ricnet/data.hpp"
#include "ricnet/generate.hpp"
#include "ricnet/gradcheck.hpp"
#include "ricnet/metrics.hpp"
#include "ricnet/ops.hpp"
#include "ricnet/synth.hpp"
#include "ricnet/train.hpp"

using namespace ricnet;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = true;
  std::string summary;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Dataset noise_free(std::size_t n, std::uint64_t seed) {
  SynthConfig c;
  c.samples = n;
  c.noise = 0.0;
  return synth_generate(c, seed);
}

// ---- 1: finite-difference gradient suite ----
Outcome gradient_suite() {
  const auto t0 = Clock::now();
  const auto rows = run_gradcheck_suite(100, 1, 1e-4);
  const double secs = seconds_since(t0);
  Outcome o;
  double worst = 0.0;
  std::string worst_name;
  std::size_t min_instances = rows.empty() ? 0 : rows.front().instances;
  for (const auto& r : rows) {
    std::printf("    %-28s n=%zu max_rel=%.3e %s\n", r.name.c_str(), r.instances, r.max_rel_error,
                r.passed ? "ok" : "FAIL");
    o.pass = o.pass && r.passed && r.max_rel_error < 1e-4;
    min_instances = std::min(min_instances, r.instances);
    if (r.max_rel_error >= worst) {
      worst = r.max_rel_error;
      worst_name = r.name;
    }
  }
  o.pass = o.pass && !rows.empty() && min_instances >= 100 && secs < 120.0;
  o.summary = fmt("%zu rows, >=%zu instances each, worst %.2e (%s) < 1e-4, %.1f s < 120 s", rows.size(),
                  min_instances, worst, worst_name.c_str(), secs);
  return o;
}

// ---- 2: all kinds build and run on (32, 28, 4) ----
ModelInput random_batch(ModelKind k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  auto make = [&](Shape s) {
    std::vector<double> v(shape_numel(s));
    for (auto& x : v) x = g(rng);
    return Tensor(std::move(s), std::move(v));
  };
  ModelInput in;
  if (k == ModelKind::FNN) {
    in.input = make({32 * 28, 4});
  } else if (k == ModelKind::FNN_S) {
    in.input = make({32, 31});
  } else {
    in.input = make({32, 28, 4});
    in.features = make({32, 3});
    if (is_seq2seq(k)) in.shifted = shift_right(make({32, 28}));
  }
  return in;
}

Outcome architecture() {
  Outcome o;
  std::size_t ok = 0;
  for (auto k : kAllKinds) {
    bool good = true;
    std::string note;
    const Model m(default_spec(k), 1);
    try {
      const Tensor out = m.forward(random_batch(k, 2));
      good = out.shape() == (k == ModelKind::FNN ? Shape{32 * 28, 1} : Shape{32, 28});
      backward(mean(square(out)));
      for (const auto& p : m.parameters()) {
        bool any = false;
        for (double v : p.tensor.grad()) any = any || (v != 0.0 && std::isfinite(v));
        good = good && any;
      }
    } catch (const std::exception& e) {
      good = false;
      note = e.what();
    }
    const auto pub = cli::published_figures(k).params;
    const long long delta = static_cast<long long>(m.param_count()) - static_cast<long long>(pub);
    std::printf("    %-13s params %9zu  published %7zu  delta %+9lld  forward/backward %s%s\n", to_string(k).c_str(),
                m.param_count(), pub, delta, good ? "ok" : "FAILED ", note.c_str());
    if (k == ModelKind::LSTM) {
      std::printf("    %-13s (the LSTM text quotes 487810 trainable parameters; delta %+lld)\n", "",
                  static_cast<long long>(m.param_count()) - 487810LL);
    }
    ok += good;
  }
  o.pass = ok == std::size(kAllKinds);
  o.summary = fmt("%zu/10 kinds run forward/backward on (32, 28, 4); counts printed beside published figures", ok);
  return o;
}

// ---- 3: memorization of four noise-free samples ----
Outcome memorization() {
  Dataset ds = noise_free(4, 7);
  ds.splits.assign(ds.size(), Split::train);
  const Scaler sc = fit_scaler(ds, ds.indices(Split::train));
  Outcome o;
  std::size_t ok = 0;
  double slowest = 0.0, worst = 0.0;
  for (auto k : kAllKinds) {
    Model m(default_spec(k), 3);
    TrainConfig cfg;
    cfg.epochs = 2000;
    cfg.seed = 3;
    const auto t0 = Clock::now();
    double mse = INFINITY;
    std::size_t epoch_hit = 0;
    TrainHistory h;
    try {
      h = train(m, ds, sc, cfg);
      mse = evaluate(m, ds, ds.indices(Split::train), sc).mse_scaled;
    } catch (const std::exception& e) {
      std::printf("    %-13s error: %s\n", to_string(k).c_str(), e.what());
    }
    for (std::size_t e = 0; e < h.train_loss.size(); ++e) {
      if (h.train_loss[e] < 1e-2) {
        epoch_hit = e + 1;
        break;
      }
    }
    const double secs = seconds_since(t0);
    const bool good = mse < 1e-2 && secs < 600.0;
    std::printf("    %-13s batch %3zu  train mse (scaled, eval mode) %.3e  first epoch with batch loss<1e-2: %zu  %.1f s %s\n",
                to_string(k).c_str(), h.effective_batch, mse, epoch_hit, secs, good ? "ok" : "FAIL");
    std::fflush(stdout);
    ok += good;
    slowest = std::max(slowest, secs);
    worst = std::max(worst, mse);
  }
  o.pass = ok == std::size(kAllKinds);
  o.summary = fmt("%zu/10 kinds reach train MSE < 1e-2 in 2000 epochs (worst %.2e), slowest %.0f s < 600 s", ok,
                  worst, slowest);
  return o;
}

// ---- 4: seq2seq generalizes better than feed-forward ----
constexpr ModelKind kTrendFeedForward[] = {ModelKind::FNN, ModelKind::FNN_S, ModelKind::LSTM, ModelKind::CNN,
                                           ModelKind::LSTM_CNN};
constexpr ModelKind kTrendSeq2Seq[] = {ModelKind::CNN_S2S, ModelKind::LSTM_S2S};

double test_rmse(ModelKind k, std::uint64_t seed, std::size_t epochs) {
  const Dataset ds = split_dataset(synth_generate(SynthConfig{}, seed), {0.8, 0.1, 0.1}, seed);
  const Scaler sc = fit_scaler(ds, ds.indices(Split::train));
  Model m(default_spec(k), seed);
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.seed = seed;
  train(m, ds, sc, cfg);
  return evaluate(m, ds, ds.indices(Split::test), sc).rmse;
}

Outcome trend(std::size_t epochs) {
  Outcome o;
  std::size_t wins = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    double best_ff = INFINITY, best_s2s = INFINITY;
    std::string ff_name, s2s_name;
    std::ostringstream line;
    for (auto k : kTrendFeedForward) {
      const double r = test_rmse(k, seed, epochs);
      line << " " << to_string(k) << "=" << fmt("%.4f", r);
      if (r < best_ff) best_ff = r, ff_name = to_string(k);
    }
    for (auto k : kTrendSeq2Seq) {
      const double r = test_rmse(k, seed, epochs);
      line << " " << to_string(k) << "=" << fmt("%.4f", r);
      if (r < best_s2s) best_s2s = r, s2s_name = to_string(k);
    }
    const bool win = best_s2s <= best_ff;
    wins += win;
    std::printf("    seed %llu test RMSE (MPa):%s\n    seed %llu best seq2seq %s %.4f vs best feed-forward %s %.4f %s\n",
                static_cast<unsigned long long>(seed), line.str().c_str(), static_cast<unsigned long long>(seed),
                s2s_name.c_str(), best_s2s, ff_name.c_str(), best_ff, win ? "win" : "loss");
    std::fflush(stdout);
  }
  o.pass = wins >= 4;
  o.summary = fmt("best seq2seq test RMSE <= best feed-forward in %zu/5 seeds (need >= 4), %zu epochs", wins, epochs);
  return o;
}

// ---- 5: autoregressive generation against a prefix oracle ----
Outcome generative() {
  const Dataset ds = split_dataset(synth_generate(SynthConfig{}, 5), {0.8, 0.1, 0.1}, 5);
  const Scaler sc = fit_scaler(ds, ds.indices(Split::train));
  const auto rows = ds.indices(Split::test);
  const std::size_t n = rows.size();
  Outcome o;
  double worst = 0.0;
  bool step_one = true, repeat = true;
  for (auto k : kAllKinds) {
    if (!is_seq2seq(k)) continue;
    Model m(default_spec(k), 9);
    TrainConfig cfg;
    cfg.epochs = 3;
    train(m, ds, sc, cfg);
    const auto a = assemble_tensors(ds, rows, sc, k);
    const Tensor gen = generate_scaled(m, a.input);
    const Tensor forced = predict(m, a.input);
    for (std::size_t i = 0; i < n; ++i) step_one = step_one && gen.data()[i * 28] == forced.data()[i * 28];
    std::vector<double> prefix(n * 28, 0.0);
    double kind_worst = 0.0;
    for (std::size_t t = 0; t < 28; ++t) {
      ModelInput in = a.input;
      in.shifted = Tensor({n, 28}, prefix);
      const Tensor step = predict(m, in);
      for (std::size_t i = 0; i < n; ++i) {
        kind_worst = std::max(kind_worst, std::abs(gen.data()[i * 28 + t] - step.data()[i * 28 + t]));
        if (t + 1 < 28) prefix[i * 28 + t + 1] = step.data()[i * 28 + t];
      }
    }
    repeat = repeat && generate_scaled(m, a.input).to_vector() == gen.to_vector();
    std::printf("    %-13s max |generate - prefix oracle| = %.3e\n", to_string(k).c_str(), kind_worst);
    worst = std::max(worst, kind_worst);
  }
  o.pass = worst < 1e-12 && step_one && repeat;
  o.summary = fmt("5 seq2seq kinds: prefix oracle within %.1e (< 1e-12), step 1 == teacher forcing: %s, repeat "
                  "bit-identical: %s",
                  worst, step_one ? "yes" : "no", repeat ? "yes" : "no");
  return o;
}

// ---- 6: feature analysis ----
Outcome feature_analysis() {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> g(0.0, 1.0);
  const double rho = 0.9;
  std::vector<double> x(5000), y(5000);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double a = g(rng), b = g(rng);
    x[i] = a;
    y[i] = rho * a + std::sqrt(1 - rho * rho) * b;
  }
  const double analytic = -0.5 * std::log(1 - rho * rho);
  const double mi = mutual_info(x, y);

  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> ix(2000), iy(2000);
  for (auto& v : ix) v = u(rng);
  for (auto& v : iy) v = g(rng);
  const double mi_indep = mutual_info(ix, iy);

  const Dataset ds = noise_free(32, 1);
  const auto ranked = rank_features(ds);

  std::vector<double> post;
  for (const auto& s : ds.samples) post.insert(post.end(), s.qc_post.begin(), s.qc_post.end());
  const KdeCurve c1 = kde(post), c2 = kde(x);
  const double mass_err = std::max(std::abs(trapezoid(c1.grid, c1.density) - 1), std::abs(trapezoid(c2.grid, c2.density) - 1));

  std::printf("    ranking:");
  for (const auto& r : ranked) std::printf(" %s=%.3f", r.feature.c_str(), r.mi);
  std::printf("\n");
  Outcome o;
  o.pass = std::abs(mi - 0.830) < 0.1 && std::abs(analytic - 0.830) < 1e-3 && mi_indep < 0.05 &&
           ranked.front().feature == "qc_ini" && mass_err < 1e-3;
  o.summary = fmt("MI(rho=0.9, n=5000) %.4f vs 0.830, independent %.4f < 0.05, first feature %s, KDE mass error %.1e",
                  mi, mi_indep, ranked.front().feature.c_str(), mass_err);
  return o;
}

// ---- 7: pipeline algebra ----
Outcome pipeline_algebra() {
  const Dataset ds = split_dataset(synth_generate(SynthConfig{}, 2), {0.8, 0.1, 0.1}, 2);
  const Scaler sc = fit_scaler(ds, ds.indices(Split::train));
  double round_trip = 0.0;
  for (const auto& s : ds.samples) {
    for (std::size_t d = 0; d < 28; ++d) {
      round_trip = std::max(round_trip, std::abs(sc.invert(kQcIni, sc.apply(kQcIni, s.qc_ini[d])) - s.qc_ini[d]));
      round_trip = std::max(round_trip, std::abs(sc.invert(kQcPost, sc.apply(kQcPost, s.qc_post[d])) - s.qc_post[d]));
    }
    round_trip = std::max(round_trip, std::abs(sc.invert(kBlows, sc.apply(kBlows, s.features.blows)) - s.features.blows));
  }
  const std::array<std::size_t, 3> sizes{ds.indices(Split::train).size(), ds.indices(Split::val).size(),
                                         ds.indices(Split::test).size()};
  const auto up = efficiency_of_compaction({2.0}, {4.0}), down = efficiency_of_compaction({4.0}, {2.0});

  std::mt19937_64 rng(31);
  std::normal_distribution<double> g(0.0, 2.0);
  std::uniform_int_distribution<int> len(1, 60);
  std::size_t dominated = 0;
  for (int t = 0; t < 1000; ++t) {
    std::vector<double> p(len(rng)), a(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = g(rng), a[i] = g(rng);
    dominated += rmse(p, a) >= mae(p, a);
  }
  Outcome o;
  o.pass = round_trip < 1e-9 && sizes == std::array<std::size_t, 3>{26, 3, 3} && up[0] == 100.0 && down[0] == -50.0 &&
           dominated == 1000;
  o.summary = fmt("scaler round trip %.1e < 1e-9, split %zu/%zu/%zu, EC 2->4 %+g and 4->2 %+g, rmse >= mae in %zu/1000",
                  round_trip, sizes[0], sizes[1], sizes[2], up[0], down[0], dominated);
  return o;
}

// ---- 8: rerun from manifest ----
Outcome reproducibility(const fs::path& workdir) {
  std::ostringstream sink;
  auto run = [&](std::vector<std::string> args) { return cli::run(args, sink, sink); };
  Outcome o;
  std::size_t ok = 0;
  const std::vector<std::pair<std::string, std::string>> runs{{"FNN", "20"}, {"CNN_S2S", "20"}, {"LSTM_ATT_S2S", "3"}};
  for (const auto& [kind, epochs] : runs) {
    const fs::path a = workdir / ("repro_" + kind), b = workdir / ("repro_" + kind + "_rerun");
    fs::remove_all(a);
    fs::remove_all(b);
    bool good = run({"train", "--kind", kind, "--epochs", epochs, "--seed", "8", "--out", a.string()}) == 0 &&
                run({"train", "--config", (a / "manifest.json").string(), "--out", b.string()}) == 0;
    good = good && read_text(a / "history.csv") == read_text(b / "history.csv") &&
           read_text(a / "checkpoint.bin") == read_text(b / "checkpoint.bin");
    std::printf("    %-13s history and checkpoint %s\n", kind.c_str(), good ? "bit-identical" : "DIFFER");
    ok += good;
  }
  if (!sink.str().empty() && ok != runs.size()) std::printf("%s", sink.str().c_str());
  o.pass = ok == runs.size();
  o.summary = fmt("%zu/%zu train reruns from manifest reproduce history.csv and checkpoint bytes", ok, runs.size());
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string workdir = "acceptance_runs";
  std::vector<int> only;
  std::size_t trend_epochs = 2000;
  app.add_option("--workdir", workdir, "Scratch directory for CLI runs");
  app.add_option("--only", only, "Run only these criteria")->delimiter(',');
  app.add_option("--trend-epochs", trend_epochs, "Epochs per model in the trend criterion");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(workdir);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient suite", gradient_suite},
      {"architecture conformance", architecture},
      {"memorization", memorization},
      {"trend reproduction", [&] { return trend(trend_epochs); }},
      {"generative consistency", generative},
      {"feature analysis", feature_analysis},
      {"pipeline algebra", pipeline_algebra},
      {"reproducibility", [&] { return reproducibility(workdir); }},
  };
  const std::set<int> selected(only.begin(), only.end());
  bool all = true;
  std::vector<std::string> lines;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.contains(id)) continue;
    std::printf("criterion %d (%s)\n", id, criteria[i].first.c_str());
    std::fflush(stdout);
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const std::string line = fmt("criterion %d %s: %s: %s [%.0f s]", id, o.pass ? "PASS" : "FAIL",
                                 criteria[i].first.c_str(), o.summary.c_str(), seconds_since(t0));
    std::printf("%s\n", line.c_str());
    std::fflush(stdout);
    lines.push_back(line);
    all = all && o.pass;
  }
  std::printf("\nsummary\n");
  for (const auto& l : lines) std::printf("%s\n", l.c_str());
  return all ? 0 : 1;
}
