#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "mdbt/corpus.h"
#include "mdbt/ontology.h"

namespace mdbt {

// One user-utterance template. Placeholders:
//   {value} {slot}    first constraint, any slot
//   {value2} {slot2}  second constraint, any slot
//   {<slot name>}     a value of that specific slot
struct UtteranceTemplate {
  enum class Kind { kGeneric, kBound };
  struct Piece {
    bool literal = true;
    std::string text;        // literal text
    int group = 0;           // constraint index for placeholders
    bool is_slot_name = false;
  };
  struct Group {
    Kind kind = Kind::kGeneric;
    std::string bound_slot;  // for kBound
  };

  std::string source;
  std::vector<Piece> pieces;
  std::vector<Group> groups;

  size_t arity() const { return groups.size(); }
};

struct SynthDomainSpec {
  Ontology ontology;
  std::vector<UtteranceTemplate> templates;
};

// Throws ValidationError for placeholders naming unknown slots and for
// template sets that cannot realise every slot.
UtteranceTemplate parse_template(const std::string& text, const Ontology& ontology);
SynthDomainSpec parse_synth_spec(const nlohmann::json& j);
SynthDomainSpec load_synth_spec(const std::filesystem::path& path);

// Seeded generator: 2-6 turns per dialog, 0-2 new constraints per turn, an
// n-best list whose top entry is the true utterance with probability
// 1 - noise. Confusions swap in another value of the same slot.
Corpus generate_synthetic(const SynthDomainSpec& spec, size_t n_dialogs, double noise, uint64_t seed);

}  // namespace mdbt
