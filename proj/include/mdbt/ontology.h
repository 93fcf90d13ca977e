#pragma once

#include <compare>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mdbt/text.h"

namespace mdbt {

struct SlotSpec {
  std::string name;
  std::vector<std::string> values;
  // Surface forms used for tagging. Filled with the tokenised canonical
  // string when the source file does not provide them.
  std::vector<TokenSeq> name_forms;
  std::map<std::string, std::vector<TokenSeq>> value_forms;

  // Index of `value` in `values`, or nullopt.
  std::optional<size_t> value_index(const std::string& value) const;

  friend bool operator==(const SlotSpec&, const SlotSpec&) = default;
};

struct Ontology {
  std::string domain_name;
  std::vector<SlotSpec> slots;

  const SlotSpec* find_slot(const std::string& name) const;
  std::optional<size_t> slot_index(const std::string& name) const;

  friend bool operator==(const Ontology&, const Ontology&) = default;
};

// Same-named slots in different domains are distinct targets.
struct SlotKey {
  std::string domain;
  std::string slot;

  auto operator<=>(const SlotKey&) const = default;
  std::string str() const { return domain + "/" + slot; }
};

struct CombinedOntology {
  std::string name;
  std::vector<Ontology> members;
  std::map<SlotKey, SlotSpec> slot_index;

  const Ontology* find_member(const std::string& domain) const;
};

// Validates and fills surface-form defaults. Throws ValidationError naming
// the offending slot.
Ontology parse_ontology(const nlohmann::json& j);
Ontology load_ontology(const std::filesystem::path& path);

nlohmann::json ontology_to_json(const Ontology& ontology);
void save_ontology(const Ontology& ontology, const std::filesystem::path& path);

CombinedOntology merge_ontologies(std::vector<Ontology> members, std::string name);

// Reads a JSON file, rethrowing parse failures as ValidationError with the
// path and byte offset.
nlohmann::json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& contents);

}  // namespace mdbt
