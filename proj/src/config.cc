#include "mdbt/config.h"

#include <cmath>

#include "mdbt/error.h"
#include "mdbt/ontology.h"

namespace mdbt {

void RunConfig::validate() const {
  auto fail = [](const char* field, const char* why) {
    throw ValidationError(std::string("config '") + field + "': " + why);
  };
  if (n_max < 1) fail("n_max", "must be >= 1");
  if (min_count < 1) fail("min_count", "must be >= 1");
  if (hidden_dim < 1) fail("hidden_dim", "must be >= 1");
  if (memory_dim < 1) fail("memory_dim", "must be >= 1");
  if (!(lr_shared > 0) || !std::isfinite(lr_shared)) fail("lr_shared", "must be finite and > 0");
  if (!(lr_specialize > 0) || !std::isfinite(lr_specialize)) fail("lr_specialize", "must be finite and > 0");
  if (!(clip_norm > 0) || !std::isfinite(clip_norm)) fail("clip_norm", "must be finite and > 0");
  if (max_epochs_shared < 0) fail("max_epochs_shared", "must be >= 0");
  if (max_epochs_specialize < 0) fail("max_epochs_specialize", "must be >= 0");
  if (patience < 1) fail("patience", "must be >= 1");
  if (ensemble_k < 1) fail("ensemble_k", "must be >= 1");
  if (!(train_fraction > 0) || !(dev_fraction >= 0) || !(train_fraction + dev_fraction < 1)) {
    fail("train_fraction/dev_fraction", "need 0 < train, 0 <= dev, train + dev < 1");
  }
}

RunConfig config_from_json(const nlohmann::json& j, RunConfig c) {
  if (!j.is_object()) throw ValidationError("config: top level must be an object");
  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "n_max") c.n_max = v.get<size_t>();
      else if (key == "min_count") c.min_count = v.get<size_t>();
      else if (key == "hidden_dim") c.hidden_dim = v.get<size_t>();
      else if (key == "memory_dim") c.memory_dim = v.get<size_t>();
      else if (key == "lr_shared") c.lr_shared = v.get<double>();
      else if (key == "lr_specialize") c.lr_specialize = v.get<double>();
      else if (key == "clip_norm") c.clip_norm = v.get<double>();
      else if (key == "max_epochs_shared") c.max_epochs_shared = v.get<int>();
      else if (key == "max_epochs_specialize") c.max_epochs_specialize = v.get<int>();
      else if (key == "patience") c.patience = v.get<int>();
      else if (key == "ensemble_k") c.ensemble_k = v.get<int>();
      else if (key == "seed") c.seed = v.get<uint64_t>();
      else if (key == "train_fraction") c.train_fraction = v.get<double>();
      else if (key == "dev_fraction") c.dev_fraction = v.get<double>();
      else throw ValidationError("config: unknown key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("config '" + key + "': " + e.what());
    }
  }
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  try {
    return config_from_json(read_json_file(path));
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

nlohmann::json config_to_json(const RunConfig& c) {
  return {{"n_max", c.n_max},
          {"min_count", c.min_count},
          {"hidden_dim", c.hidden_dim},
          {"memory_dim", c.memory_dim},
          {"lr_shared", c.lr_shared},
          {"lr_specialize", c.lr_specialize},
          {"clip_norm", c.clip_norm},
          {"max_epochs_shared", c.max_epochs_shared},
          {"max_epochs_specialize", c.max_epochs_specialize},
          {"patience", c.patience},
          {"ensemble_k", c.ensemble_k},
          {"seed", c.seed},
          {"train_fraction", c.train_fraction},
          {"dev_fraction", c.dev_fraction}};
}

}  // namespace mdbt
