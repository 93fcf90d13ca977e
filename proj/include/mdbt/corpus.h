#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"
#include "mdbt/ontology.h"

namespace mdbt {

struct SystemAct {
  std::string act;
  std::optional<std::string> slot;
  std::optional<std::string> value;

  friend bool operator==(const SystemAct&, const SystemAct&) = default;
};

struct AsrHypothesis {
  std::string text;
  double score = 0.0;

  friend bool operator==(const AsrHypothesis&, const AsrHypothesis&) = default;
};

struct Turn {
  std::vector<SystemAct> system_acts;
  std::vector<AsrHypothesis> asr;
  // Constraints newly expressed in this turn.
  std::map<std::string, std::string> turn_labels;

  friend bool operator==(const Turn&, const Turn&) = default;
};

struct Dialog {
  std::string dialog_id;
  std::string domain_name;
  std::vector<Turn> turns;

  friend bool operator==(const Dialog&, const Dialog&) = default;
};

struct Corpus {
  Ontology ontology;
  std::vector<Dialog> dialogs;

  friend bool operator==(const Corpus&, const Corpus&) = default;
};

// Accumulated user goal: goals[t][slot] is the last value mentioned for the
// slot in turns 0..t, nullopt (the "no constraint" label) before that.
struct GoalTrajectory {
  std::vector<std::map<std::string, std::optional<std::string>>> turns;

  size_t size() const { return turns.size(); }
};

// Throws ValidationError citing dialog id, turn index and slot.
void validate_dialog(const Dialog& dialog, const Ontology& ontology);
void validate_corpus(const Corpus& corpus);

Corpus parse_corpus(const nlohmann::json& j, const Ontology& ontology);
Corpus load_corpus(const std::filesystem::path& path, const Ontology& ontology);
nlohmann::json corpus_to_json(const Corpus& corpus);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);

GoalTrajectory accumulate_goals(const Dialog& dialog, const Ontology& ontology);

// Gold label per turn for one slot as a candidate index: value position in
// slot.values, or slot.values.size() for "no constraint".
std::vector<int> gold_indices(const GoalTrajectory& goals, const SlotSpec& slot);

struct CorpusSplit {
  Corpus train;
  Corpus dev;
  Corpus test;
};

// Seeded partition by dialog. Train and dev sizes are rounded shares of the
// total and test takes the remainder. Each part keeps input order.
CorpusSplit split_corpus(const Corpus& corpus, double train_fraction, double dev_fraction, uint64_t seed);

// Two-way variant used to carve an early-stopping set out of training data.
std::pair<Corpus, Corpus> holdout_split(const Corpus& corpus, double holdout_fraction, uint64_t seed);

// Dialogs [0, n) of a seeded permutation; a larger n always yields a superset.
Corpus nested_subset(const Corpus& corpus, size_t n, uint64_t seed);

}  // namespace mdbt
