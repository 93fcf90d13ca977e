#include "mdbt/ontology.h"

#include <fstream>
#include <set>
#include <sstream>

#include "mdbt/error.h"

namespace mdbt {
namespace {

using nlohmann::json;

// Re-tokenises every token of a provided surface form so forms always line
// up with tokenised text.
TokenSeq normalise_form(const json& form, const std::string& slot) {
  if (!form.is_array()) throw ValidationError("slot '" + slot + "': surface form must be an array of tokens");
  TokenSeq out;
  for (const auto& tok : form) {
    if (!tok.is_string()) throw ValidationError("slot '" + slot + "': surface form tokens must be strings");
    for (auto& t : tokenize(tok.get<std::string>())) out.push_back(std::move(t));
  }
  if (out.empty()) throw ValidationError("slot '" + slot + "': empty surface form");
  return out;
}

TokenSeq default_form(const std::string& text, const std::string& slot) {
  TokenSeq out = tokenize(text);
  if (out.empty()) throw ValidationError("slot '" + slot + "': '" + text + "' has no tokens to use as a surface form");
  return out;
}

std::string require_string(const json& obj, const char* key, const std::string& context) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) {
    throw ValidationError(context + ": missing string field '" + key + "'");
  }
  return it->get<std::string>();
}

SlotSpec parse_slot(const json& j) {
  if (!j.is_object()) throw ValidationError("ontology: slot entry must be an object");
  SlotSpec slot;
  slot.name = require_string(j, "name", "ontology slot");
  if (slot.name.empty()) throw ValidationError("ontology: empty slot name");

  auto values = j.find("values");
  if (values == j.end() || !values->is_array()) {
    throw ValidationError("slot '" + slot.name + "': missing 'values' array");
  }
  std::set<std::string> seen;
  for (const auto& v : *values) {
    if (!v.is_string()) throw ValidationError("slot '" + slot.name + "': values must be strings");
    auto value = v.get<std::string>();
    if (!seen.insert(value).second) {
      throw ValidationError("slot '" + slot.name + "': duplicate value '" + value + "'");
    }
    slot.values.push_back(std::move(value));
  }
  if (slot.values.empty()) throw ValidationError("slot '" + slot.name + "': empty value list");

  if (auto nf = j.find("name_forms"); nf != j.end() && !nf->is_null()) {
    if (!nf->is_array()) throw ValidationError("slot '" + slot.name + "': 'name_forms' must be an array");
    for (const auto& form : *nf) slot.name_forms.push_back(normalise_form(form, slot.name));
  }
  if (slot.name_forms.empty()) slot.name_forms.push_back(default_form(slot.name, slot.name));

  if (auto vf = j.find("value_forms"); vf != j.end() && !vf->is_null()) {
    if (!vf->is_object()) throw ValidationError("slot '" + slot.name + "': 'value_forms' must be an object");
    for (const auto& [value, forms] : vf->items()) {
      if (!seen.count(value)) {
        throw ValidationError("slot '" + slot.name + "': value_forms key '" + value + "' is not a value");
      }
      if (!forms.is_array() || forms.empty()) {
        throw ValidationError("slot '" + slot.name + "': value_forms['" + value + "'] must be a non-empty array");
      }
      auto& dst = slot.value_forms[value];
      for (const auto& form : forms) dst.push_back(normalise_form(form, slot.name));
    }
  }
  for (const auto& value : slot.values) {
    if (!slot.value_forms.count(value)) slot.value_forms[value] = {default_form(value, slot.name)};
  }
  return slot;
}

}  // namespace

std::optional<size_t> SlotSpec::value_index(const std::string& value) const {
  for (size_t i = 0; i < values.size(); ++i) {
    if (values[i] == value) return i;
  }
  return std::nullopt;
}

const SlotSpec* Ontology::find_slot(const std::string& name) const {
  for (const auto& s : slots) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

std::optional<size_t> Ontology::slot_index(const std::string& name) const {
  for (size_t i = 0; i < slots.size(); ++i) {
    if (slots[i].name == name) return i;
  }
  return std::nullopt;
}

const Ontology* CombinedOntology::find_member(const std::string& domain) const {
  for (const auto& m : members) {
    if (m.domain_name == domain) return &m;
  }
  return nullptr;
}

Ontology parse_ontology(const json& j) {
  if (!j.is_object()) throw ValidationError("ontology: top level must be an object");
  Ontology out;
  out.domain_name = require_string(j, "domain", "ontology");
  if (out.domain_name.empty()) throw ValidationError("ontology: empty domain name");
  auto slots = j.find("slots");
  if (slots == j.end() || !slots->is_array()) throw ValidationError("ontology '" + out.domain_name + "': missing 'slots' array");
  std::set<std::string> names;
  for (const auto& s : *slots) {
    SlotSpec slot = parse_slot(s);
    if (!names.insert(slot.name).second) {
      throw ValidationError("ontology '" + out.domain_name + "': duplicate slot '" + slot.name + "'");
    }
    out.slots.push_back(std::move(slot));
  }
  return out;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError(path.string() + ": cannot open file");
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return json::parse(buf.str());
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": JSON parse error at byte " + std::to_string(e.byte) + ": " + e.what());
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError(path.string() + ": cannot open for writing");
  out << contents;
  if (!out) throw ValidationError(path.string() + ": write failed");
}

Ontology load_ontology(const std::filesystem::path& path) {
  json j = read_json_file(path);
  try {
    return parse_ontology(j);
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

json ontology_to_json(const Ontology& ontology) {
  json slots = json::array();
  for (const auto& s : ontology.slots) {
    json value_forms = json::object();
    for (const auto& [value, forms] : s.value_forms) value_forms[value] = forms;
    slots.push_back({{"name", s.name}, {"values", s.values}, {"name_forms", s.name_forms}, {"value_forms", value_forms}});
  }
  return {{"domain", ontology.domain_name}, {"slots", slots}};
}

void save_ontology(const Ontology& ontology, const std::filesystem::path& path) {
  write_text_file(path, ontology_to_json(ontology).dump(2) + "\n");
}

CombinedOntology merge_ontologies(std::vector<Ontology> members, std::string name) {
  if (members.empty()) throw ValidationError("merge_ontologies: no member ontologies");
  CombinedOntology out;
  out.name = std::move(name);
  std::set<std::string> domains;
  for (const auto& m : members) {
    if (!domains.insert(m.domain_name).second) {
      throw ValidationError("merge_ontologies: domain '" + m.domain_name + "' appears more than once");
    }
    for (const auto& s : m.slots) out.slot_index.emplace(SlotKey{m.domain_name, s.name}, s);
  }
  out.members = std::move(members);
  return out;
}

}  // namespace mdbt
