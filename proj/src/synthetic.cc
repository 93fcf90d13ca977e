#include "mdbt/synthetic.h"

#include <algorithm>
#include <cstdio>
#include <map>

#include "mdbt/error.h"
#include "mdbt/rng.h"

namespace mdbt {
namespace {

struct Assignment {
  const SlotSpec* slot = nullptr;
  size_t value = 0;
};

std::string pick_form(const std::vector<TokenSeq>& forms, Rng& rng) { return join(rng.pick(forms)); }

std::string render(const UtteranceTemplate& tpl, const std::vector<Assignment>& groups, Rng& rng) {
  std::string out;
  for (const auto& p : tpl.pieces) {
    if (p.literal) {
      out += p.text;
      continue;
    }
    const Assignment& a = groups[p.group];
    if (p.is_slot_name) {
      out += pick_form(a.slot->name_forms, rng);
    } else {
      out += pick_form(a.slot->value_forms.at(a.slot->values[a.value]), rng);
    }
  }
  return out;
}

class DialogGenerator {
 public:
  DialogGenerator(const SynthDomainSpec& spec, double noise, Rng& rng) : spec_(spec), noise_(noise), rng_(rng) {
    for (size_t i = 0; i < spec.templates.size(); ++i) {
      const auto& tpl = spec.templates[i];
      if (tpl.arity() == 0) {
        fillers_.push_back(i);
      } else if (tpl.arity() == 1 && tpl.groups[0].kind == UtteranceTemplate::Kind::kGeneric) {
        generic1_.push_back(i);
      } else if (tpl.arity() == 1) {
        bound_[tpl.groups[0].bound_slot].push_back(i);
      } else if (tpl.groups[0].kind == UtteranceTemplate::Kind::kGeneric &&
                 tpl.groups[1].kind == UtteranceTemplate::Kind::kGeneric) {
        generic2_.push_back(i);
      }
    }
  }

  Dialog generate(std::string id) {
    const Ontology& ont = spec_.ontology;
    Dialog d{std::move(id), ont.domain_name, {}};
    const int n_turns = rng_.range(2, 6);

    std::vector<size_t> order(ont.slots.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng_.shuffle(order);
    const size_t goal_size = 1 + rng_.index(std::min<size_t>(order.size(), 4));
    std::vector<Assignment> pending;
    for (size_t i = 0; i < goal_size; ++i) {
      const SlotSpec& s = ont.slots[order[i]];
      pending.push_back({&s, rng_.index(s.values.size())});
    }
    std::vector<Assignment> expressed;

    for (int t = 0; t < n_turns; ++t) {
      Turn turn;
      std::vector<Assignment> said;
      if (t == 0) {
        turn.system_acts.push_back({"welcomemsg", std::nullopt, std::nullopt});
      } else if (!pending.empty() && rng_.bernoulli(0.5)) {
        const Assignment a = pending.front();
        turn.system_acts.push_back({"request", a.slot->name, std::nullopt});
        if (rng_.bernoulli(0.85)) {
          said.push_back(a);
          pending.erase(pending.begin());
        }
      } else if (!expressed.empty() && rng_.bernoulli(0.5)) {
        const Assignment& a = expressed.back();
        turn.system_acts.push_back({"confirm", a.slot->name, a.slot->values[a.value]});
      } else {
        turn.system_acts.push_back({"reqmore", std::nullopt, std::nullopt});
      }

      if (said.empty()) {
        const size_t want = rng_.index(3);
        while (said.size() < want && !pending.empty()) {
          said.push_back(pending.front());
          pending.erase(pending.begin());
        }
        if (said.empty() && !expressed.empty() && rng_.bernoulli(0.1)) {
          // change of mind on an already expressed slot
          Assignment a = rng_.pick(expressed);
          if (a.slot->values.size() > 1) {
            size_t v = rng_.index(a.slot->values.size() - 1);
            a.value = v >= a.value ? v + 1 : v;
            said.push_back(a);
          }
        }
      }
      if (said.size() == 2 && generic2_.empty()) {
        pending.insert(pending.begin(), said.back());
        said.pop_back();
      }

      const UtteranceTemplate& tpl = choose_template(said);
      turn.asr = make_nbest(tpl, said);
      for (const auto& a : said) {
        turn.turn_labels[a.slot->name] = a.slot->values[a.value];
        auto it = std::find_if(expressed.begin(), expressed.end(), [&](const Assignment& e) { return e.slot == a.slot; });
        if (it != expressed.end()) {
          *it = a;
        } else {
          expressed.push_back(a);
        }
      }
      d.turns.push_back(std::move(turn));
    }
    return d;
  }

 private:
  const UtteranceTemplate& choose_template(const std::vector<Assignment>& said) {
    const auto& tpls = spec_.templates;
    if (said.empty()) return tpls[rng_.pick(fillers_)];
    if (said.size() == 2) return tpls[rng_.pick(generic2_)];
    std::vector<size_t> options = generic1_;
    if (auto it = bound_.find(said[0].slot->name); it != bound_.end()) {
      options.insert(options.end(), it->second.begin(), it->second.end());
    }
    return tpls[rng_.pick(options)];
  }

  Assignment confuse(const Assignment& a) {
    Assignment out = a;
    if (a.slot->values.size() > 1) {
      size_t v = rng_.index(a.slot->values.size() - 1);
      out.value = v >= a.value ? v + 1 : v;
    }
    return out;
  }

  // A misrecognition of the user's utterance: every spoken value replaced
  // by another value of its slot, or a spurious mention for turns with none.
  std::string confusion(const UtteranceTemplate& tpl, const std::vector<Assignment>& said) {
    if (said.empty()) {
      const UtteranceTemplate& other = spec_.templates[rng_.pick(generic1_)];
      const SlotSpec& s = rng_.pick(spec_.ontology.slots);
      return render(other, {{&s, rng_.index(s.values.size())}}, rng_);
    }
    std::vector<Assignment> wrong;
    for (const auto& a : said) wrong.push_back(confuse(a));
    return render(tpl, wrong, rng_);
  }

  std::vector<AsrHypothesis> make_nbest(const UtteranceTemplate& tpl, const std::vector<Assignment>& said) {
    const std::string truth = render(tpl, said, rng_);
    if (noise_ <= 0.0) return {{truth, 1.0}};
    const bool correct_top = rng_.bernoulli(1.0 - noise_);
    std::vector<AsrHypothesis> out;
    if (correct_top) {
      const double s1 = rng_.uniform(0.55, 0.95);
      out.push_back({truth, s1});
      out.push_back({confusion(tpl, said), rng_.uniform(0.0, std::min(s1, 1.0 - s1))});
    } else {
      const double s1 = rng_.uniform(0.35, 0.75);
      out.push_back({confusion(tpl, said), s1});
      out.push_back({truth, rng_.uniform(0.0, std::min(s1, 1.0 - s1))});
    }
    if (rng_.bernoulli(0.5)) {
      const double rest = 1.0 - out[0].score - out[1].score;
      out.push_back({confusion(tpl, said), rng_.uniform(0.0, std::min(out[1].score, rest))});
    }
    return out;
  }

  const SynthDomainSpec& spec_;
  double noise_;
  Rng& rng_;
  std::vector<size_t> fillers_, generic1_, generic2_;
  std::map<std::string, std::vector<size_t>> bound_;
};

}  // namespace

UtteranceTemplate parse_template(const std::string& text, const Ontology& ontology) {
  UtteranceTemplate tpl;
  tpl.source = text;
  bool has_value1 = false, has_slot1 = false, has_value2 = false, has_slot2 = false;
  std::map<std::string, int> bound_groups;
  auto add_placeholder = [&](const std::string& name) {
    UtteranceTemplate::Piece p;
    p.literal = false;
    if (name == "value" || name == "slot") {
      p.group = 0;
      p.is_slot_name = name == "slot";
      (p.is_slot_name ? has_slot1 : has_value1) = true;
    } else if (name == "value2" || name == "slot2") {
      p.group = 1;
      p.is_slot_name = name == "slot2";
      (p.is_slot_name ? has_slot2 : has_value2) = true;
    } else {
      if (!ontology.find_slot(name)) {
        throw ValidationError("template '" + text + "' references unknown slot '" + name + "'");
      }
      auto [it, fresh] = bound_groups.emplace(name, static_cast<int>(bound_groups.size()));
      p.group = -1 - it->second;  // resolved below
    }
    tpl.pieces.push_back(std::move(p));
  };

  size_t pos = 0;
  std::string literal;
  while (pos < text.size()) {
    if (text[pos] == '{') {
      const size_t close = text.find('}', pos);
      if (close == std::string::npos) throw ValidationError("template '" + text + "': unterminated placeholder");
      if (!literal.empty()) tpl.pieces.push_back({true, std::exchange(literal, {}), 0, false});
      add_placeholder(text.substr(pos + 1, close - pos - 1));
      pos = close + 1;
    } else {
      literal.push_back(text[pos++]);
    }
  }
  if (!literal.empty()) tpl.pieces.push_back({true, literal, 0, false});

  if ((has_slot1 && !has_value1) || (has_slot2 && !has_value2)) {
    throw ValidationError("template '" + text + "': {slot} placeholder without its {value}");
  }
  if (has_value2 && !has_value1) throw ValidationError("template '" + text + "': {value2} without {value}");
  if (has_value1 && !bound_groups.empty()) {
    throw ValidationError("template '" + text + "': cannot mix generic and slot-bound placeholders");
  }
  if (has_value1) {
    tpl.groups.push_back({UtteranceTemplate::Kind::kGeneric, {}});
    if (has_value2) tpl.groups.push_back({UtteranceTemplate::Kind::kGeneric, {}});
  } else {
    tpl.groups.resize(bound_groups.size());
    for (const auto& [name, idx] : bound_groups) tpl.groups[idx] = {UtteranceTemplate::Kind::kBound, name};
    for (auto& p : tpl.pieces) {
      if (!p.literal) p.group = -1 - p.group;
    }
  }
  if (tpl.arity() > 2) throw ValidationError("template '" + text + "': more than two constraints");
  if (tpl.arity() == 2 && tpl.groups[0].kind == UtteranceTemplate::Kind::kBound) {
    throw ValidationError("template '" + text + "': two-constraint templates must use {value}/{value2}");
  }
  return tpl;
}

SynthDomainSpec parse_synth_spec(const nlohmann::json& j) {
  SynthDomainSpec spec;
  spec.ontology = parse_ontology(j);
  auto templates = j.find("templates");
  if (templates == j.end() || !templates->is_array()) {
    throw ValidationError("synthetic spec '" + spec.ontology.domain_name + "': missing 'templates' array");
  }
  bool filler = false, generic = false;
  for (const auto& t : *templates) {
    if (!t.is_string()) throw ValidationError("synthetic spec: templates must be strings");
    spec.templates.push_back(parse_template(t.get<std::string>(), spec.ontology));
    const auto& tpl = spec.templates.back();
    filler |= tpl.arity() == 0;
    generic |= tpl.arity() == 1 && tpl.groups[0].kind == UtteranceTemplate::Kind::kGeneric;
  }
  if (!filler || !generic) {
    throw ValidationError("synthetic spec '" + spec.ontology.domain_name +
                          "': needs at least one template without placeholders and one with {value}");
  }
  return spec;
}

SynthDomainSpec load_synth_spec(const std::filesystem::path& path) {
  auto j = read_json_file(path);
  try {
    return parse_synth_spec(j);
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

Corpus generate_synthetic(const SynthDomainSpec& spec, size_t n_dialogs, double noise, uint64_t seed) {
  if (!(noise >= 0.0 && noise <= 1.0)) throw ValidationError("generate_synthetic: noise must be in [0,1]");
  Rng rng(derive_seed(seed, "synthetic/" + spec.ontology.domain_name));
  DialogGenerator gen(spec, noise, rng);
  Corpus out{spec.ontology, {}};
  out.dialogs.reserve(n_dialogs);
  for (size_t i = 0; i < n_dialogs; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "%05zu", i);
    out.dialogs.push_back(gen.generate(spec.ontology.domain_name + "-" + id));
  }
  return out;
}

}  // namespace mdbt
