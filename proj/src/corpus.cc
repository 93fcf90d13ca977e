#include "mdbt/corpus.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "mdbt/error.h"
#include "mdbt/rng.h"

namespace mdbt {
namespace {

using nlohmann::json;

std::string where(const Dialog& d, size_t turn) {
  return "dialog '" + d.dialog_id + "' turn " + std::to_string(turn);
}

std::optional<std::string> optional_string(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw ValidationError(std::string("field '") + key + "' must be a string");
  return it->get<std::string>();
}

Turn parse_turn(const json& j) {
  if (!j.is_object()) throw ValidationError("turn must be an object");
  Turn t;
  if (auto acts = j.find("system_acts"); acts != j.end()) {
    if (!acts->is_array()) throw ValidationError("'system_acts' must be an array");
    for (const auto& a : *acts) {
      if (!a.is_object() || !a.contains("act") || !a["act"].is_string()) {
        throw ValidationError("system act needs a string 'act'");
      }
      t.system_acts.push_back({a["act"].get<std::string>(), optional_string(a, "slot"), optional_string(a, "value")});
    }
  }
  auto asr = j.find("asr");
  if (asr == j.end() || !asr->is_array()) throw ValidationError("missing 'asr' array");
  for (const auto& h : *asr) {
    if (!h.is_object() || !h.contains("text") || !h["text"].is_string() || !h.contains("score") ||
        !h["score"].is_number()) {
      throw ValidationError("ASR hypothesis needs string 'text' and numeric 'score'");
    }
    t.asr.push_back({h["text"].get<std::string>(), h["score"].get<double>()});
  }
  if (auto labels = j.find("turn_labels"); labels != j.end() && !labels->is_null()) {
    if (!labels->is_object()) throw ValidationError("'turn_labels' must be an object");
    for (const auto& [slot, value] : labels->items()) {
      if (!value.is_string()) throw ValidationError("turn label for '" + slot + "' must be a string");
      t.turn_labels[slot] = value.get<std::string>();
    }
  }
  return t;
}

// Fisher-Yates permutation of [0, n).
std::vector<size_t> permutation(size_t n, uint64_t seed) {
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), size_t{0});
  Rng rng(seed);
  rng.shuffle(idx);
  return idx;
}

Corpus gather(const Corpus& corpus, std::vector<size_t> idx) {
  std::sort(idx.begin(), idx.end());
  Corpus out{corpus.ontology, {}};
  out.dialogs.reserve(idx.size());
  for (size_t i : idx) out.dialogs.push_back(corpus.dialogs[i]);
  return out;
}

}  // namespace

void validate_dialog(const Dialog& d, const Ontology& ontology) {
  if (d.domain_name != ontology.domain_name) {
    throw ValidationError("dialog '" + d.dialog_id + "': domain '" + d.domain_name + "' does not match ontology '" +
                          ontology.domain_name + "'");
  }
  if (d.turns.empty()) throw ValidationError("dialog '" + d.dialog_id + "': no turns");
  for (size_t t = 0; t < d.turns.size(); ++t) {
    const Turn& turn = d.turns[t];
    if (turn.asr.empty()) throw ValidationError(where(d, t) + ": empty ASR list");
    double total = 0.0;
    for (const auto& h : turn.asr) {
      if (!(h.score >= 0.0 && h.score <= 1.0)) {
        throw ValidationError(where(d, t) + ": ASR score " + std::to_string(h.score) + " outside [0,1]");
      }
      total += h.score;
    }
    if (total > 1.0 + 1e-6) throw ValidationError(where(d, t) + ": ASR scores sum to " + std::to_string(total));
    for (const auto& [slot, value] : turn.turn_labels) {
      const SlotSpec* spec = ontology.find_slot(slot);
      if (!spec) throw ValidationError(where(d, t) + " slot '" + slot + "': unknown slot");
      if (!spec->value_index(value)) {
        throw ValidationError(where(d, t) + " slot '" + slot + "': value '" + value + "' not in ontology");
      }
    }
  }
}

void validate_corpus(const Corpus& corpus) {
  std::set<std::string> ids;
  for (const auto& d : corpus.dialogs) {
    if (!ids.insert(d.dialog_id).second) throw ValidationError("duplicate dialog id '" + d.dialog_id + "'");
    validate_dialog(d, corpus.ontology);
  }
}

Corpus parse_corpus(const json& j, const Ontology& ontology) {
  if (!j.is_object()) throw ValidationError("corpus: top level must be an object");
  if (!j.contains("domain") || !j["domain"].is_string()) throw ValidationError("corpus: missing string 'domain'");
  const auto domain = j["domain"].get<std::string>();
  if (domain != ontology.domain_name) {
    throw ValidationError("corpus domain '" + domain + "' does not match ontology '" + ontology.domain_name + "'");
  }
  auto dialogs = j.find("dialogs");
  if (dialogs == j.end() || !dialogs->is_array()) throw ValidationError("corpus: missing 'dialogs' array");
  Corpus out{ontology, {}};
  out.dialogs.reserve(dialogs->size());
  for (size_t i = 0; i < dialogs->size(); ++i) {
    const json& dj = (*dialogs)[i];
    Dialog d;
    d.domain_name = domain;
    try {
      if (!dj.is_object() || !dj.contains("dialog_id") || !dj["dialog_id"].is_string()) {
        throw ValidationError("missing string 'dialog_id'");
      }
      d.dialog_id = dj["dialog_id"].get<std::string>();
      if (!dj.contains("turns") || !dj["turns"].is_array()) throw ValidationError("missing 'turns' array");
      const json& turns = dj["turns"];
      for (size_t t = 0; t < turns.size(); ++t) {
        try {
          d.turns.push_back(parse_turn(turns[t]));
        } catch (const ValidationError& e) {
          throw ValidationError("turn " + std::to_string(t) + ": " + e.what());
        }
      }
    } catch (const ValidationError& e) {
      throw ValidationError("dialog #" + std::to_string(i) + (d.dialog_id.empty() ? "" : " ('" + d.dialog_id + "')") +
                            ": " + e.what());
    }
    out.dialogs.push_back(std::move(d));
  }
  validate_corpus(out);
  return out;
}

Corpus load_corpus(const std::filesystem::path& path, const Ontology& ontology) {
  json j = read_json_file(path);
  try {
    return parse_corpus(j, ontology);
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

json corpus_to_json(const Corpus& corpus) {
  json dialogs = json::array();
  for (const auto& d : corpus.dialogs) {
    json turns = json::array();
    for (const auto& t : d.turns) {
      json acts = json::array();
      for (const auto& a : t.system_acts) {
        json aj = {{"act", a.act}};
        if (a.slot) aj["slot"] = *a.slot;
        if (a.value) aj["value"] = *a.value;
        acts.push_back(std::move(aj));
      }
      json asr = json::array();
      for (const auto& h : t.asr) asr.push_back({{"text", h.text}, {"score", h.score}});
      json labels = json::object();
      for (const auto& [s, v] : t.turn_labels) labels[s] = v;
      turns.push_back({{"system_acts", std::move(acts)}, {"asr", std::move(asr)}, {"turn_labels", std::move(labels)}});
    }
    dialogs.push_back({{"dialog_id", d.dialog_id}, {"turns", std::move(turns)}});
  }
  return {{"domain", corpus.ontology.domain_name}, {"dialogs", std::move(dialogs)}};
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  write_text_file(path, corpus_to_json(corpus).dump() + "\n");
}

GoalTrajectory accumulate_goals(const Dialog& dialog, const Ontology& ontology) {
  GoalTrajectory out;
  std::map<std::string, std::optional<std::string>> goal;
  for (const auto& s : ontology.slots) goal[s.name] = std::nullopt;
  for (const auto& turn : dialog.turns) {
    for (const auto& [slot, value] : turn.turn_labels) goal[slot] = value;
    out.turns.push_back(goal);
  }
  return out;
}

std::vector<int> gold_indices(const GoalTrajectory& goals, const SlotSpec& slot) {
  std::vector<int> out;
  out.reserve(goals.size());
  const int null_index = static_cast<int>(slot.values.size());
  for (const auto& g : goals.turns) {
    auto it = g.find(slot.name);
    if (it == g.end() || !it->second) {
      out.push_back(null_index);
    } else {
      auto idx = slot.value_index(*it->second);
      if (!idx) throw ValidationError("slot '" + slot.name + "': gold value '" + *it->second + "' not in ontology");
      out.push_back(static_cast<int>(*idx));
    }
  }
  return out;
}

CorpusSplit split_corpus(const Corpus& corpus, double train_fraction, double dev_fraction, uint64_t seed) {
  if (!(train_fraction > 0.0) || !(dev_fraction >= 0.0) || !(train_fraction + dev_fraction < 1.0)) {
    throw ValidationError("split_corpus: fractions (" + std::to_string(train_fraction) + ", " +
                          std::to_string(dev_fraction) + ") out of range");
  }
  const size_t n = corpus.dialogs.size();
  const size_t n_train = static_cast<size_t>(std::llround(train_fraction * static_cast<double>(n)));
  const size_t n_dev = std::min(n - n_train, static_cast<size_t>(std::llround(dev_fraction * static_cast<double>(n))));
  auto perm = permutation(n, seed);
  std::vector<size_t> a(perm.begin(), perm.begin() + n_train);
  std::vector<size_t> b(perm.begin() + n_train, perm.begin() + n_train + n_dev);
  std::vector<size_t> c(perm.begin() + n_train + n_dev, perm.end());
  return {gather(corpus, a), gather(corpus, b), gather(corpus, c)};
}

std::pair<Corpus, Corpus> holdout_split(const Corpus& corpus, double holdout_fraction, uint64_t seed) {
  if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0)) {
    throw ValidationError("holdout_split: fraction " + std::to_string(holdout_fraction) + " out of range");
  }
  const size_t n = corpus.dialogs.size();
  const size_t n_hold = static_cast<size_t>(std::llround(holdout_fraction * static_cast<double>(n)));
  auto perm = permutation(n, seed);
  std::vector<size_t> hold(perm.begin(), perm.begin() + n_hold);
  std::vector<size_t> rest(perm.begin() + n_hold, perm.end());
  return {gather(corpus, rest), gather(corpus, hold)};
}

Corpus nested_subset(const Corpus& corpus, size_t n, uint64_t seed) {
  if (n > corpus.dialogs.size()) {
    throw ValidationError("requested " + std::to_string(n) + " dialogs but corpus '" + corpus.ontology.domain_name +
                          "' has " + std::to_string(corpus.dialogs.size()));
  }
  auto perm = permutation(corpus.dialogs.size(), seed);
  perm.resize(n);
  return gather(corpus, perm);
}

}  // namespace mdbt
