#pragma once

#include <cstdint>
#include <filesystem>

#include "json.hpp"

namespace mdbt {

struct RunConfig {
  size_t n_max = 3;
  size_t min_count = 2;
  size_t hidden_dim = 64;
  size_t memory_dim = 32;
  double lr_shared = 0.05;
  double lr_specialize = 0.01;
  double clip_norm = 5.0;
  int max_epochs_shared = 50;
  int max_epochs_specialize = 20;
  int patience = 3;
  int ensemble_k = 1;
  uint64_t seed = 1;
  double train_fraction = 0.8;
  double dev_fraction = 0.1;

  // Throws ValidationError naming the offending field.
  void validate() const;
};

// Unknown keys are rejected so typos in sweep configs fail loudly.
RunConfig config_from_json(const nlohmann::json& j, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path);
nlohmann::json config_to_json(const RunConfig& c);

}  // namespace mdbt
