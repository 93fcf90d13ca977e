#pragma once

#include <filesystem>

#include "json.hpp"
#include "mdbt/training.h"

namespace mdbt {

// Model files: 8-byte magic, u64 little-endian header length, a JSON header
// (kind, dims, vocabulary dump and hash, array names and lengths, manifests)
// and then every array as raw little-endian doubles in header order. Doubles
// round-trip bit for bit.
inline constexpr char kModelMagic[8] = {'M', 'D', 'B', 'T', 'M', 'O', 'D', '1'};

void save_shared(const SharedModel& model, const std::filesystem::path& path);
SharedModel load_shared(const std::filesystem::path& path);

void save_specialized(const SpecializedModel& model, const std::filesystem::path& path);
SpecializedModel load_specialized(const std::filesystem::path& path);

// A directory holding member_<i>.model plus ensemble.json.
void save_ensemble(const EnsembleModel& model, const std::filesystem::path& dir);
EnsembleModel load_ensemble(const std::filesystem::path& dir);

// Loads either a single model file (as a one-member ensemble; shared models
// are wrapped without specialised slots) or an ensemble directory.
EnsembleModel load_any_model(const std::filesystem::path& path);

TrainingManifest manifest_from_json(const nlohmann::json& j);

}  // namespace mdbt
