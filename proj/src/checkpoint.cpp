#include "ricnet/checkpoint.hpp"

#include <cstdint>
#include <cstring>

#include "ricnet/csv.hpp"
#include "ricnet/errors.hpp"

namespace ricnet {

namespace {

constexpr char kMagic[8] = {'R', 'I', 'C', 'N', 'E', 'T', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string take(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw ValidationError("checkpoint: truncated file");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string checkpoint_bytes(const Model& model, nlohmann::json manifest) {
  manifest["model"] = to_json(model.spec());
  manifest["seed"] = model.seed();
  manifest["spec_hash"] = spec_hash(model.spec());
  const std::string text = manifest.dump();

  std::string out(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, text.size());
  out += text;
  const auto& params = model.parameters();
  put<std::uint64_t>(out, params.size());
  for (const auto& p : params) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
    out += p.name;
    const auto& shape = p.tensor.shape();
    put<std::uint32_t>(out, static_cast<std::uint32_t>(shape.size()));
    for (auto e : shape) put<std::uint64_t>(out, e);
    const auto v = p.tensor.data();
    out.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const Model& model, nlohmann::json manifest) {
  write_text(path, checkpoint_bytes(model, std::move(manifest)));
}

LoadedCheckpoint checkpoint_from_bytes(const std::string& bytes) {
  Reader r(bytes);
  if (r.take(sizeof kMagic) != std::string(kMagic, sizeof kMagic)) throw ValidationError("checkpoint: bad magic");
  if (r.get<std::uint32_t>() != kVersion) throw ValidationError("checkpoint: unsupported version");
  const auto manifest_len = r.get<std::uint64_t>();
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(r.take(manifest_len));
  } catch (const nlohmann::json::exception&) {
    throw ValidationError("checkpoint: manifest is not valid JSON");
  }
  if (!manifest.contains("model") || !manifest.contains("seed") || !manifest.contains("spec_hash")) {
    throw ValidationError("checkpoint: manifest lacks model, seed or spec_hash");
  }
  const ModelSpec spec = spec_from_json(manifest.at("model"));
  if (spec_hash(spec) != manifest.at("spec_hash").get<std::uint64_t>()) {
    throw ValidationError("checkpoint: spec hash mismatch");
  }
  Model model(spec, manifest.at("seed").get<std::uint64_t>());

  const auto& params = model.parameters();
  const auto count = r.get<std::uint64_t>();
  if (count != params.size()) {
    throw ValidationError("checkpoint: expected " + std::to_string(params.size()) + " tensors, found " +
                          std::to_string(count));
  }
  for (const auto& p : params) {
    const std::string name = r.take(r.get<std::uint32_t>());
    if (name != p.name) throw ValidationError("checkpoint: expected tensor '" + p.name + "', found '" + name + "'");
    Shape shape(r.get<std::uint32_t>());
    for (auto& e : shape) e = r.get<std::uint64_t>();
    if (shape != p.tensor.shape()) {
      throw ValidationError("checkpoint: tensor '" + name + "' has shape " + shape_str(shape) + ", model expects " +
                            shape_str(p.tensor.shape()));
    }
    Tensor target = p.tensor;
    auto dst = target.data_mut();
    const std::string raw = r.take(dst.size() * sizeof(double));
    std::memcpy(dst.data(), raw.data(), raw.size());
  }
  if (!r.done()) throw ValidationError("checkpoint: trailing bytes");
  return {std::move(manifest), std::move(model)};
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) { return checkpoint_from_bytes(read_text(path)); }

}  // namespace ricnet
