#include "cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>

#include "ricnet/analysis.hpp"
#include "ricnet/checkpoint.hpp"
#include "ricnet/csv.hpp"
#include "ricnet/data.hpp"
#include "ricnet/errors.hpp"
#include "ricnet/generate.hpp"
#include "ricnet/gradcheck.hpp"
#include "ricnet/synth.hpp"
#include "ricnet/train.hpp"

namespace ricnet::cli {

namespace fs = std::filesystem;
using nlohmann::json;

const PublishedFigures& published_figures(ModelKind kind) {
  static const std::map<ModelKind, PublishedFigures> table{
      {ModelKind::FNN, {0.652, 0.6235, 0.9142, 0.8734, 301, 12}},
      {ModelKind::FNN_S, {0.1680, 0.5417, 0.2311, 0.7904, 9378, 26}},
      {ModelKind::LSTM, {0.0392, 0.6117, 0.0538, 0.9109, 492412, 63}},
      {ModelKind::CNN, {0.0437, 0.5916, 0.0574, 0.9081, 139234, 52}},
      {ModelKind::LSTM_CNN, {0.0394, 0.5112, 0.0519, 0.7906, 593284, 67}},
      {ModelKind::TRANSFORMER, {0.1292, 0.5020, 0.1868, 0.7494, 192399, 200}},
      {ModelKind::LSTM_S2S, {0.0947, 0.4431, 0.1425, 0.6486, 448435, 840}},
      {ModelKind::CNN_S2S, {0.0934, 0.4490, 0.1439, 0.6553, 256385, 479}},
      {ModelKind::LSTM_CNN_S2S, {0.0989, 0.4368, 0.1572, 0.6525, 448435, 905}},
      {ModelKind::LSTM_ATT_S2S, {0.0982, 0.4264, 0.1446, 0.6303, 866573, 3000}},
  };
  return table.at(kind);
}

namespace {

// Flag values; unset optionals leave the config file untouched.
struct Flags {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string data;
  std::string kind;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<double> lr;
  std::vector<double> split;
  std::string checkpoint;
  std::string profile;
  std::string sample;
  std::optional<std::size_t> samples;
  std::optional<double> noise;
  std::vector<double> blows;
  std::vector<double> fill_thickness;
  std::vector<double> fine_content;
  std::optional<std::size_t> threads;
  std::optional<std::size_t> instances;
  std::optional<double> tolerance;
  std::optional<std::size_t> k;
};

const std::set<std::string> kTopLevelKeys{"schema_version", "command", "seed",    "out",    "data",
                                          "split",          "model",   "train",   "analyze", "checkpoint",
                                          "profile",        "sample",  "features", "sweep",  "gradcheck"};

void require_object(const json& j, const std::string& where) {
  if (!j.is_object()) throw ValidationError(where + ": expected an object");
}

void reject_unknown(const json& j, const std::string& where, const std::set<std::string>& allowed) {
  require_object(j, where);
  for (const auto& [key, _] : j.items()) {
    if (!allowed.contains(key)) throw ValidationError((where.empty() ? "" : where + ".") + key + ": unknown field");
  }
}

template <class T>
T get_field(const json& j, const std::string& key, const std::string& where, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValidationError(where + "." + key + ": wrong type");
  }
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Reads a file and checks it against a recorded content hash, if any.
std::string read_pinned(const std::string& path, const json& recorded_hash, const std::string& where) {
  if (!fs::exists(path)) throw ValidationError(where + ": no such file '" + path + "'");
  std::string text = read_text(path);
  if (!recorded_hash.is_null() && recorded_hash.get<std::string>() != hex64(fnv1a64(text))) {
    throw ValidationError(where + ": '" + path + "' differs from the recorded content hash");
  }
  return text;
}

std::string absolute(const std::string& path) { return fs::absolute(path).lexically_normal().string(); }

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  if (!fs::exists(path)) throw ValidationError("config: no such file '" + path + "'");
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw ValidationError("config: " + std::string(e.what()));
  }
  reject_unknown(j, "", kTopLevelKeys);
  if (j.contains("schema_version") && j["schema_version"] != kSchemaVersion) {
    throw ValidationError("schema_version: expected " + std::to_string(kSchemaVersion));
  }
  return j;
}

json& sub(json& j, const std::string& key) {
  if (!j.contains(key)) j[key] = json::object();
  require_object(j[key], key);
  return j[key];
}

// Flags are folded into the config document so the manifest records them.
void apply_flags(json& c, const std::string& command, const Flags& f) {
  if (!f.out.empty()) c["out"] = f.out;
  if (f.seed) {
    c["seed"] = *f.seed;
    // --seed replaces every derived seed, including ones pinned in the file.
    if (c.contains("data") && c["data"].is_object()) c["data"].erase("seed");
    if (c.contains("split") && c["split"].is_object()) c["split"].erase("seed");
    if (c.contains("train") && c["train"].is_object()) c["train"].erase("seed");
    if (c.contains("gradcheck") && c["gradcheck"].is_object()) c["gradcheck"].erase("seed");
  }
  if (!f.data.empty()) c["data"] = {{"csv", f.data}};
  if (!f.kind.empty()) {
    const ModelKind kind = model_kind_from_string(f.kind);
    const bool same = c.contains("model") && c["model"].is_object() && c["model"].value("kind", "") == f.kind;
    if (!same) c["model"] = {{"kind", to_string(kind)}};
  }
  if (f.epochs) sub(c, "train")["epochs"] = *f.epochs;
  if (f.batch_size) sub(c, "train")["batch_size"] = *f.batch_size;
  if (f.lr) sub(c, "train")["lr"] = *f.lr;
  if (!f.split.empty()) sub(c, "split")["fractions"] = f.split;
  if (!f.checkpoint.empty()) c["checkpoint"] = f.checkpoint;
  if (!f.profile.empty()) c["profile"] = {{"csv", f.profile}};
  if (!f.sample.empty()) c["sample"] = f.sample;
  if (f.k) sub(c, "analyze")["k"] = *f.k;
  if (f.instances) sub(c, "gradcheck")["instances"] = *f.instances;
  if (f.tolerance) sub(c, "gradcheck")["tolerance"] = *f.tolerance;

  if (command == "synth") {
    auto synth_block = [&]() -> json& {
      json& d = sub(c, "data");
      if (!d.contains("synth")) d["synth"] = json::object();
      return d["synth"];
    };
    if (f.samples) synth_block()["samples"] = *f.samples;
    if (f.noise) synth_block()["noise"] = *f.noise;
    if (!f.blows.empty()) synth_block()["blows"] = f.blows;
    if (!f.fill_thickness.empty()) synth_block()["fill_thickness"] = f.fill_thickness;
    if (!f.fine_content.empty()) synth_block()["fine_content"] = f.fine_content;
  } else if (command == "sweep") {
    if (!f.blows.empty()) sub(c, "sweep")["blows"] = f.blows;
    if (!f.fill_thickness.empty()) sub(c, "sweep")["fill_thickness"] = f.fill_thickness;
    if (!f.fine_content.empty()) sub(c, "sweep")["fine_content"] = f.fine_content;
    if (f.threads) sub(c, "sweep")["threads"] = *f.threads;
  } else if (command == "generate") {
    auto single = [&](const std::vector<double>& v, const char* key) {
      if (v.empty()) return;
      if (v.size() != 1) throw ValidationError(std::string("features.") + key + ": generate takes one value");
      sub(c, "features")[key] = v.front();
    };
    single(f.blows, "blows");
    single(f.fill_thickness, "fill_thickness");
    single(f.fine_content, "fine_content");
  }
}

struct Context {
  json config;  // as loaded plus flags
  json resolved;
  std::uint64_t seed = 1;
  fs::path out;
  std::ostream* log = nullptr;
};

Context make_context(json config, const std::string& command) {
  Context ctx;
  ctx.seed = get_field<std::uint64_t>(config, "seed", "", 1);
  const std::string out = get_field<std::string>(config, "out", "", "out");
  ctx.out = out;
  ctx.resolved = {{"schema_version", kSchemaVersion}, {"command", command}, {"seed", ctx.seed}, {"out", out}};
  ctx.config = std::move(config);
  return ctx;
}

void prepare_out(const Context& ctx) {
  std::error_code ec;
  fs::create_directories(ctx.out, ec);
  if (ec || !fs::is_directory(ctx.out)) {
    throw ValidationError("out: cannot create directory '" + ctx.out.string() + "'");
  }
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

void write_manifest(const Context& ctx) { write_json(ctx.out / "manifest.json", ctx.resolved); }

// {"csv": path[, "fnv1a64": hex]} or {"synth": {...}[, "seed": n]}.
Dataset resolve_data(const json& source, std::uint64_t seed, json& resolved, const std::string& where = "data") {
  const json src = source.is_null() ? json{{"synth", json::object()}} : source;
  require_object(src, where);
  const bool has_csv = src.contains("csv"), has_synth = src.contains("synth");
  if (has_csv == has_synth) throw ValidationError(where + ": expected exactly one of 'csv' or 'synth'");
  if (has_csv) {
    reject_unknown(src, where, {"csv", "fnv1a64"});
    const std::string path = absolute(get_field<std::string>(src, "csv", where, ""));
    const std::string text = read_pinned(path, src.value("fnv1a64", json()), where + ".csv");
    Dataset ds;
    try {
      ds = parse_dataset_csv(text);
    } catch (const ValidationError& e) {
      throw ValidationError(path + ": " + e.what());
    }
    ds.provenance = Provenance::csv;
    resolved = {{"csv", path}, {"fnv1a64", hex64(fnv1a64(text))}};
    return ds;
  }
  reject_unknown(src, where, {"synth", "seed"});
  const SynthConfig cfg = synth_config_from_json(src["synth"]);
  const std::uint64_t s = get_field<std::uint64_t>(src, "seed", where, seed);
  resolved = {{"synth", to_json(cfg)}, {"seed", s}};
  return synth_generate(cfg, s);
}

struct SplitConfig {
  std::array<double, 3> fractions{0.8, 0.1, 0.1};
  std::uint64_t seed = 1;
};

SplitConfig resolve_split(const json& j, std::uint64_t seed, json& resolved) {
  SplitConfig s;
  s.seed = seed;
  if (!j.is_null()) {
    reject_unknown(j, "split", {"fractions", "seed"});
    const auto fr = get_field<std::vector<double>>(j, "fractions", "split", {0.8, 0.1, 0.1});
    if (fr.size() != 3) throw ValidationError("split.fractions: expected three values (train, val, test)");
    s.fractions = {fr[0], fr[1], fr[2]};
    s.seed = get_field<std::uint64_t>(j, "seed", "split", seed);
  }
  split_sizes(32, s.fractions);  // validates the fractions
  resolved = {{"fractions", s.fractions}, {"seed", s.seed}};
  return s;
}

ModelSpec resolve_model(const json& j, json& resolved) {
  if (j.is_null()) throw ValidationError("model: a kind is required (use --kind)");
  require_object(j, "model");
  if (!j.contains("kind")) throw ValidationError("model.kind: required");
  const ModelKind kind = model_kind_from_string(get_field<std::string>(j, "kind", "model", ""));
  json merged = to_json(default_spec(kind));
  merged.merge_patch(j);
  const ModelSpec spec = spec_from_json(merged);
  spec.validate();
  resolved = to_json(spec);
  return spec;
}

TrainConfig resolve_train(const json& j, std::uint64_t seed, json& resolved) {
  json patched = j.is_null() ? json::object() : j;
  require_object(patched, "train");
  if (!patched.contains("seed")) patched["seed"] = seed;
  const TrainConfig c = train_config_from_json(patched);
  resolved = to_json(c);
  return c;
}

std::vector<std::string> split_names(const Dataset& ds) {
  std::vector<std::string> names;
  for (Split s : ds.splits) names.push_back(to_string(s));
  return names;
}

Dataset with_splits(Dataset ds, const json& names) {
  if (!names.is_array() || names.size() != ds.size()) {
    throw ValidationError("checkpoint: split assignment does not match the dataset size");
  }
  ds.splits.clear();
  for (const auto& n : names) {
    const std::string s = n.get<std::string>();
    if (s == "train") ds.splits.push_back(Split::train);
    else if (s == "val") ds.splits.push_back(Split::val);
    else if (s == "test") ds.splits.push_back(Split::test);
    else throw ValidationError("checkpoint: unknown split '" + s + "'");
  }
  return ds;
}

json metrics_by_split(const Model& model, const Dataset& ds, const Scaler& scaler) {
  json m = json::object();
  for (Split s : {Split::train, Split::val, Split::test}) {
    const auto idx = ds.indices(s);
    if (!idx.empty()) m[to_string(s)] = evaluate(model, ds, idx, scaler).to_json();
  }
  return m;
}

// ---- commands ----

int cmd_synth(Context& ctx) {
  reject_unknown(ctx.config, "", {"schema_version", "command", "seed", "out", "data"});
  json data = ctx.config.value("data", json{{"synth", json::object()}});
  require_object(data, "data");
  if (data.contains("csv")) throw ValidationError("data.csv: synth generates data; give a synth block");
  if (!data.contains("synth")) data["synth"] = json::object();
  const Dataset ds = resolve_data(data, ctx.seed, ctx.resolved["data"]);
  prepare_out(ctx);
  save_csv(ds, ctx.out / "dataset.csv");
  write_manifest(ctx);
  *ctx.log << "synth: " << ds.size() << " samples -> " << (ctx.out / "dataset.csv").string() << "\n";
  return kOk;
}

int cmd_analyze(Context& ctx) {
  const Dataset ds = resolve_data(ctx.config.value("data", json()), ctx.seed, ctx.resolved["data"]);
  const json a = ctx.config.value("analyze", json::object());
  reject_unknown(a, "analyze", {"k", "kde_points"});
  const auto k = get_field<std::size_t>(a, "k", "analyze", 3);
  const auto points = get_field<std::size_t>(a, "kde_points", "analyze", 1024);
  if (k < 1) throw ValidationError("analyze.k: must be at least 1");
  if (points < 2) throw ValidationError("analyze.kde_points: must be at least 2");
  ctx.resolved["analyze"] = {{"k", k}, {"kde_points", points}};
  if (!ds.all_have_targets()) throw ValidationError("targets required: every sample needs qc_post for analysis");

  const auto ranked = rank_features(ds, k);
  std::vector<std::vector<std::string>> mi_rows;
  for (const auto& r : ranked) mi_rows.push_back({r.feature, format_double(r.mi)});

  std::vector<std::vector<std::string>> ec_rows;
  std::vector<double> all_ec, all_ini, all_post;
  std::map<double, std::vector<double>> ec_by_blows;
  for (const auto& s : ds.samples) {
    const auto ec = efficiency_of_compaction(s.qc_ini, s.qc_post);
    for (std::size_t d = 0; d < ec.size(); ++d) {
      ec_rows.push_back({s.id, format_double(depth_grid()[d]), format_double(ec[d])});
      all_ec.push_back(ec[d]);
      all_ini.push_back(s.qc_ini[d]);
      all_post.push_back(s.qc_post[d]);
      ec_by_blows[s.features.blows].push_back(ec[d]);
    }
  }

  prepare_out(ctx);
  write_table(ctx.out / "mi_scores.csv", {"feature", "mi_nats"}, mi_rows);
  write_table(ctx.out / "ec_profiles.csv", {"sample_id", "depth_m", "ec_pct"}, ec_rows);
  std::vector<std::pair<std::string, const std::vector<double>*>> groups{
      {"qc_ini", &all_ini}, {"qc_post", &all_post}, {"ec", &all_ec}};
  for (const auto& [b, v] : ec_by_blows) groups.emplace_back("ec_blows_" + format_double(b), &v);
  json kde_meta = json::array();
  for (const auto& [name, values] : groups) {
    const KdeCurve curve = kde(*values, std::nullopt, std::nullopt, points);
    std::vector<std::vector<std::string>> rows;
    for (std::size_t g = 0; g < curve.grid.size(); ++g) {
      rows.push_back({format_double(curve.grid[g]), format_double(curve.density[g])});
    }
    write_table(ctx.out / ("kde_" + name + ".csv"), {"grid", "density"}, rows);
    kde_meta.push_back({{"group", name}, {"bandwidth", curve.bandwidth}, {"mass", trapezoid(curve.grid, curve.density)}});
  }
  write_json(ctx.out / "analysis.json", {{"mi_pooling", "pooled (sample, depth) rows"},
                                         {"mi_units", "nats"},
                                         {"kde_kernel", "gaussian, Scott bandwidth"},
                                         {"kde", kde_meta}});
  write_manifest(ctx);
  for (const auto& r : ranked) *ctx.log << "mi " << r.feature << " " << format_double(r.mi) << "\n";
  return kOk;
}

int cmd_train(Context& ctx) {
  Dataset ds = resolve_data(ctx.config.value("data", json()), ctx.seed, ctx.resolved["data"]);
  if (!ds.all_have_targets()) throw ValidationError("targets required: training needs qc_post on every sample");
  const SplitConfig split = resolve_split(ctx.config.value("split", json()), ctx.seed, ctx.resolved["split"]);
  const ModelSpec spec = resolve_model(ctx.config.value("model", json()), ctx.resolved["model"]);
  const TrainConfig tc = resolve_train(ctx.config.value("train", json()), ctx.seed, ctx.resolved["train"]);
  const fs::path ckpt = ctx.out / "checkpoint.bin";
  ctx.resolved["checkpoint"] = absolute(ckpt.string());
  prepare_out(ctx);
  // Written first so a failed run still leaves its configuration behind.
  write_manifest(ctx);

  ds = split_dataset(std::move(ds), split.fractions, split.seed);
  const Scaler scaler = fit_scaler(ds, ds.indices(Split::train));
  Model model(spec, ctx.seed);
  const TrainHistory h = train(model, ds, scaler, tc);

  std::vector<std::vector<std::string>> rows;
  for (std::size_t e = 0; e < h.train_loss.size(); ++e) {
    rows.push_back({std::to_string(e + 1), format_double(h.train_loss[e]),
                    h.val_loss.empty() ? "" : format_double(h.val_loss[e])});
  }
  write_table(ctx.out / "history.csv", {"epoch", "train_loss", "val_loss"}, rows);

  // Location fields stay out so a rerun elsewhere writes the same bytes.
  json config = ctx.resolved;
  config.erase("out");
  config.erase("checkpoint");
  json manifest{{"config", config}, {"scaler", scaler.to_json()}, {"splits", split_names(ds)}};
  save_checkpoint(ckpt, model, manifest);

  const PublishedFigures& pub = published_figures(spec.kind);
  const json metrics = metrics_by_split(model, ds, scaler);
  json report{
      {"kind", to_string(spec.kind)},
      {"seed", ctx.seed},
      {"param_count", model.param_count()},
      {"published_param_count", pub.params},
      {"param_count_delta", static_cast<long long>(model.param_count()) - static_cast<long long>(pub.params)},
      {"batch_size_requested", tc.batch_size},
      {"effective_batch", h.effective_batch},
      {"items_per_epoch", h.items_per_epoch},
      {"epochs", h.train_loss.size()},
      {"best_epoch", h.best_epoch ? json(*h.best_epoch + 1) : json()},
      {"best_val_loss", h.best_epoch ? json(h.best_val_loss) : json()},
      {"final_train_loss", h.train_loss.back()},
      {"metrics", metrics},
      {"published", {{"mae_train", pub.mae_train},
                     {"mae_test", pub.mae_test},
                     {"rmse_train", pub.rmse_train},
                     {"rmse_test", pub.rmse_test},
                     {"params", pub.params},
                     {"epoch_ms", pub.epoch_ms}}},
  };
  write_json(ctx.out / "report.json", report);
  double total_ms = 0.0;
  for (double ms : h.epoch_ms) total_ms += ms;
  write_json(ctx.out / "timing.json",
             {{"total_ms", total_ms}, {"mean_epoch_ms", total_ms / static_cast<double>(h.epoch_ms.size())}});

  *ctx.log << "train " << to_string(spec.kind) << ": " << model.param_count() << " params (published "
           << pub.params << "), batch " << h.effective_batch << ", " << h.train_loss.size() << " epochs";
  if (metrics.contains("test")) *ctx.log << ", test rmse " << format_double(metrics.at("test").at("rmse_mpa").get<double>()) << " MPa";
  *ctx.log << "\n";
  return kOk;
}

LoadedCheckpoint resolve_checkpoint(Context& ctx) {
  if (!ctx.config.contains("checkpoint")) throw ValidationError("checkpoint: required (use --checkpoint)");
  const std::string path = absolute(get_field<std::string>(ctx.config, "checkpoint", "", ""));
  if (!fs::exists(path)) throw ValidationError("checkpoint: no such file '" + path + "'");
  ctx.resolved["checkpoint"] = path;
  return load_checkpoint(path);
}

Scaler checkpoint_scaler(const LoadedCheckpoint& ck) {
  if (!ck.manifest.contains("scaler")) throw ValidationError("checkpoint: no scaler recorded");
  return Scaler::from_json(ck.manifest["scaler"]);
}

int cmd_eval(Context& ctx) {
  const LoadedCheckpoint ck = resolve_checkpoint(ctx);
  const Scaler scaler = checkpoint_scaler(ck);
  json metrics;
  // An explicit dataset is scored whole; otherwise the training splits are rebuilt.
  if (ctx.config.contains("data")) {
    const Dataset ds = resolve_data(ctx.config["data"], ctx.seed, ctx.resolved["data"]);
    if (!ds.all_have_targets()) throw ValidationError("targets required: evaluation needs qc_post on every sample");
    std::vector<std::size_t> all(ds.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    metrics = {{"all", evaluate(ck.model, ds, all, scaler).to_json()}};
  } else {
    if (!ck.manifest.contains("config")) throw ValidationError("checkpoint: no training config recorded");
    const json& tc = ck.manifest["config"];
    json ignored;
    const Dataset ds = with_splits(resolve_data(tc.value("data", json()), tc.value("seed", 1ULL), ignored, "checkpoint.data"),
                                   ck.manifest.value("splits", json()));
    metrics = metrics_by_split(ck.model, ds, scaler);
  }
  prepare_out(ctx);
  write_json(ctx.out / "metrics.json", {{"kind", to_string(ck.model.kind())}, {"metrics", metrics}});
  write_manifest(ctx);
  for (const auto& [split, m] : metrics.items()) {
    *ctx.log << "eval " << split << ": rmse " << format_double(m.at("rmse_mpa").get<double>()) << " MPa, mae " << format_double(m.at("mae_mpa").get<double>())
             << " MPa\n";
  }
  return kOk;
}

Dataset resolve_profile(Context& ctx) {
  if (!ctx.config.contains("profile")) throw ValidationError("profile: required (use --profile)");
  return resolve_data(ctx.config["profile"], ctx.seed, ctx.resolved["profile"], "profile");
}

void require_generative(const Model& model) {
  if (!is_seq2seq(model.kind())) {
    throw KindError("generative inference requires a sequence-to-sequence model (got " + to_string(model.kind()) + ")");
  }
}

int cmd_generate(Context& ctx) {
  const LoadedCheckpoint ck = resolve_checkpoint(ctx);
  require_generative(ck.model);
  const Scaler scaler = checkpoint_scaler(ck);
  Dataset ds = resolve_profile(ctx);
  if (ctx.config.contains("features")) {
    const json& f = ctx.config["features"];
    reject_unknown(f, "features", {"blows", "fill_thickness", "fine_content"});
    for (auto& s : ds.samples) {
      s.features.blows = get_field<double>(f, "blows", "features", s.features.blows);
      s.features.fill_thickness = get_field<double>(f, "fill_thickness", "features", s.features.fill_thickness);
      s.features.fine_content = get_field<double>(f, "fine_content", "features", s.features.fine_content);
      try {
        s.features.validate();
      } catch (const ValidationError& e) {
        throw ValidationError(std::string("features.") + e.what());
      }
    }
    ctx.resolved["features"] = f;
  }
  std::vector<std::vector<double>> qc;
  std::vector<CompactionFeatures> feats;
  for (const auto& s : ds.samples) {
    qc.push_back(s.qc_ini);
    feats.push_back(s.features);
  }
  const Tensor scaled = generate_scaled(ck.model, encode_inputs(qc, feats, scaler));
  const auto pred = scaler.invert(kQcPost, scaled.to_vector());

  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& s = ds.samples[i];
    for (std::size_t d = 0; d < kProfileLength; ++d) {
      rows.push_back({s.id, format_double(depth_grid()[d]), format_double(s.qc_ini[d]),
                      format_double(pred[i * kProfileLength + d]), s.has_target() ? format_double(s.qc_post[d]) : "",
                      format_double(s.features.blows), format_double(s.features.fill_thickness),
                      format_double(s.features.fine_content)});
    }
  }
  prepare_out(ctx);
  write_table(ctx.out / "predictions.csv",
              {"sample_id", "depth_m", "qc_ini_mpa", "qc_pred_mpa", "qc_post_mpa", "blows", "fill_thickness_m",
               "fine_content_pct"},
              rows);
  write_manifest(ctx);
  *ctx.log << "generate: " << ds.size() << " profiles -> " << (ctx.out / "predictions.csv").string() << "\n";
  return kOk;
}

int cmd_sweep(Context& ctx) {
  const LoadedCheckpoint ck = resolve_checkpoint(ctx);
  require_generative(ck.model);
  const Scaler scaler = checkpoint_scaler(ck);
  const Dataset ds = resolve_profile(ctx);
  const SoilSample* chosen = &ds.samples.front();
  if (ctx.config.contains("sample")) {
    const std::string id = get_field<std::string>(ctx.config, "sample", "", "");
    chosen = nullptr;
    for (const auto& s : ds.samples) {
      if (s.id == id) chosen = &s;
    }
    if (!chosen) throw ValidationError("sample: no sample '" + id + "' in the profile file");
  }
  ctx.resolved["sample"] = chosen->id;

  const json sw = ctx.config.value("sweep", json::object());
  reject_unknown(sw, "sweep", {"blows", "fill_thickness", "fine_content", "threads"});
  const auto blows = get_field<std::vector<double>>(sw, "blows", "sweep", {50, 100, 150, 200});
  const auto fills = get_field<std::vector<double>>(sw, "fill_thickness", "sweep", {chosen->features.fill_thickness});
  const auto fines = get_field<std::vector<double>>(sw, "fine_content", "sweep", {chosen->features.fine_content});
  const auto threads = get_field<std::size_t>(sw, "threads", "sweep", 1);
  ctx.resolved["sweep"] = {{"blows", blows}, {"fill_thickness", fills}, {"fine_content", fines}, {"threads", threads}};

  std::vector<CompactionFeatures> grid;
  for (double b : blows)
    for (double t : fills)
      for (double f : fines) grid.push_back({b, t, f});
  const auto result = parametric_sweep(ck.model, scaler, chosen->qc_ini, grid, threads);

  std::vector<std::vector<std::string>> rows;
  for (const auto& r : result) {
    for (std::size_t d = 0; d < kProfileLength; ++d) {
      rows.push_back({format_double(r.features.blows), format_double(r.features.fill_thickness),
                      format_double(r.features.fine_content), format_double(depth_grid()[d]),
                      format_double(chosen->qc_ini[d]), format_double(r.profile[d])});
    }
  }
  prepare_out(ctx);
  write_table(ctx.out / "sweep.csv",
              {"blows", "fill_thickness_m", "fine_content_pct", "depth_m", "qc_ini_mpa", "qc_pred_mpa"}, rows);
  write_manifest(ctx);
  *ctx.log << "sweep: " << grid.size() << " grid points for " << chosen->id << " -> "
           << (ctx.out / "sweep.csv").string() << "\n";
  return kOk;
}

int cmd_gradcheck(Context& ctx) {
  const json g = ctx.config.value("gradcheck", json::object());
  reject_unknown(g, "gradcheck", {"instances", "tolerance", "seed"});
  const auto instances = get_field<std::size_t>(g, "instances", "gradcheck", 100);
  const auto tolerance = get_field<double>(g, "tolerance", "gradcheck", 1e-4);
  const auto seed = get_field<std::uint64_t>(g, "seed", "gradcheck", ctx.seed);
  if (instances < 1) throw ValidationError("gradcheck.instances: must be at least 1");
  if (!(tolerance > 0.0)) throw ValidationError("gradcheck.tolerance: must be positive");
  ctx.resolved["gradcheck"] = {{"instances", instances}, {"tolerance", tolerance}, {"seed", seed}};

  const auto table = run_gradcheck_suite(instances, seed, tolerance);
  std::vector<std::vector<std::string>> rows;
  bool all = true;
  for (const auto& r : table) {
    rows.push_back({r.name, std::to_string(r.instances), format_double(r.max_rel_error), r.passed ? "pass" : "fail"});
    all = all && r.passed;
    char line[128];
    std::snprintf(line, sizeof line, "%-28s %5zu  %.3e  %s\n", r.name.c_str(), r.instances, r.max_rel_error,
                  r.passed ? "pass" : "FAIL");
    *ctx.log << line;
  }
  prepare_out(ctx);
  write_table(ctx.out / "gradcheck.csv", {"name", "instances", "max_rel_error", "status"}, rows);
  write_manifest(ctx);
  if (!all) throw NumericError("gradient check failed for at least one row (see gradcheck.csv)");
  return kOk;
}

void add_common(CLI::App* app, Flags& f) {
  app->add_option("--config", f.config, "JSON config or a manifest from an earlier run");
  app->add_option("--out", f.out, "Output directory");
  app->add_option("--seed", f.seed, "Seed for data, split, initialization and shuffling");
}

void report_error(std::ostream& err, const std::string& kind, const std::string& command, const std::string& message) {
  err << json{{"error", kind}, {"command", command}, {"message", message}}.dump() << "\n";
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sequence models for cone-resistance profiles after rapid impact compaction", "ricnet"};
  app.require_subcommand(1);
  Flags f;

  auto* synth = app.add_subcommand("synth", "Write a seeded synthetic dataset CSV");
  auto* analyze = app.add_subcommand("analyze", "Mutual information, compaction efficiency and KDE tables");
  auto* train_cmd = app.add_subcommand("train", "Train one model kind and write a checkpoint and report");
  auto* eval = app.add_subcommand("eval", "Score a checkpoint");
  auto* gen = app.add_subcommand("generate", "Autoregressive profiles from a seq2seq checkpoint");
  auto* sweep = app.add_subcommand("sweep", "Generate one profile over a grid of compaction features");
  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of every primitive and layer");
  for (auto* c : {synth, analyze, train_cmd, eval, gen, sweep, grad}) add_common(c, f);

  synth->add_option("--samples", f.samples, "Number of samples");
  synth->add_option("--noise", f.noise, "Marginal std of the multiplicative noise");
  for (auto* c : {synth, sweep, gen}) {
    c->add_option("--blows", f.blows, "Blow count(s)")->delimiter(',');
    c->add_option("--fill-thickness", f.fill_thickness, "Fill thickness(es), m")->delimiter(',');
    c->add_option("--fine-content", f.fine_content, "Fine content(s), %")->delimiter(',');
  }
  for (auto* c : {analyze, train_cmd, eval}) c->add_option("--data", f.data, "Dataset CSV");
  analyze->add_option("--k", f.k, "Nearest neighbours for the MI estimator");
  train_cmd->add_option("--kind", f.kind, "Model kind, e.g. LSTM_ATT_S2S");
  train_cmd->add_option("--epochs", f.epochs, "Training epochs");
  train_cmd->add_option("--batch-size", f.batch_size, "Mini-batch size (0 picks the kind default)");
  train_cmd->add_option("--lr", f.lr, "Adam learning rate");
  train_cmd->add_option("--split", f.split, "train,val,test fractions")->delimiter(',');
  for (auto* c : {eval, gen, sweep}) c->add_option("--checkpoint", f.checkpoint, "Checkpoint written by train");
  for (auto* c : {gen, sweep}) c->add_option("--profile", f.profile, "Dataset-schema CSV of initial profiles");
  sweep->add_option("--sample", f.sample, "Sample id within the profile CSV");
  sweep->add_option("--threads", f.threads, "Worker threads");
  grad->add_option("--instances", f.instances, "Random instances per row");
  grad->add_option("--tolerance", f.tolerance, "Maximum relative error");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    report_error(err, "usage", "", e.what());
    return kUsage;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    json config = load_config(f.config);
    // A train manifest names its checkpoint; its data and model belong to the checkpoint.
    if (command != "train" && config.value("command", "") == "train") {
      for (const char* key : {"data", "split", "model", "train"}) config.erase(key);
    }
    apply_flags(config, command, f);
    Context ctx = make_context(std::move(config), command);
    ctx.log = &out;
    if (command == "synth") return cmd_synth(ctx);
    if (command == "analyze") return cmd_analyze(ctx);
    if (command == "train") return cmd_train(ctx);
    if (command == "eval") return cmd_eval(ctx);
    if (command == "generate") return cmd_generate(ctx);
    if (command == "sweep") return cmd_sweep(ctx);
    return cmd_gradcheck(ctx);
  } catch (const KindError& e) {
    report_error(err, "kind", command, e.what());
    return kInvalid;
  } catch (const ShapeError& e) {
    report_error(err, "shape", command, e.what());
    return kInvalid;
  } catch (const ValidationError& e) {
    report_error(err, "validation", command, e.what());
    return kInvalid;
  } catch (const NumericError& e) {
    report_error(err, "numeric", command, e.what());
    return kNumeric;
  } catch (const fs::filesystem_error& e) {
    report_error(err, "io", command, e.what());
    return kInvalid;
  } catch (const json::exception& e) {
    report_error(err, "validation", command, e.what());
    return kInvalid;
  }
}

}  // namespace ricnet::cli
