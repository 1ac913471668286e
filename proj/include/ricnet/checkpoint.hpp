#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "ricnet/models.hpp"

namespace ricnet {

// Binary layout (native little-endian):
//   "RICNETCK" | u32 version | u64 n | n bytes of JSON manifest
//   | u64 count | count x (u32 len, name, u32 rank, rank x u64 extent, doubles)
// The manifest always carries "model" (spec), "seed" and "spec_hash"; callers
// may add more keys. Values are stored bit-exact.
void save_checkpoint(const std::filesystem::path& path, const Model& model, nlohmann::json manifest = nlohmann::json::object());
std::string checkpoint_bytes(const Model& model, nlohmann::json manifest = nlohmann::json::object());

struct LoadedCheckpoint {
  nlohmann::json manifest;
  Model model;
};

// Rebuilds the model from the manifest spec and seed, then overwrites every
// parameter. Throws ValidationError on a corrupt file, a spec hash mismatch,
// or a parameter name/shape mismatch.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);
LoadedCheckpoint checkpoint_from_bytes(const std::string& bytes);

}  // namespace ricnet
