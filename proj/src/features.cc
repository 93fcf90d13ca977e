#include "mdbt/features.h"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "mdbt/error.h"
#include "mdbt/hash.h"

namespace mdbt {
namespace {

bool matches_at(const TokenSeq& tokens, size_t pos, const TokenSeq& form) {
  if (pos + form.size() > tokens.size()) return false;
  return std::equal(form.begin(), form.end(), tokens.begin() + static_cast<std::ptrdiff_t>(pos));
}

bool contains(const TokenSeq& tokens, const TokenSeq& form) {
  for (size_t i = 0; i + form.size() <= tokens.size(); ++i) {
    if (matches_at(tokens, i, form)) return true;
  }
  return false;
}

TokenSeq replace_forms(const TokenSeq& in, const std::vector<TokenSeq>& forms, std::string_view tag) {
  TokenSeq out;
  out.reserve(in.size());
  size_t i = 0;
  while (i < in.size()) {
    size_t best = 0;
    for (const auto& f : forms) {
      if (f.size() > best && matches_at(in, i, f)) best = f.size();
    }
    if (best) {
      out.emplace_back(tag);
      i += best;
    } else {
      out.push_back(in[i++]);
    }
  }
  return out;
}

bool is_tag(std::string_view tok) { return tok == kValueTag || tok == kNameTag; }

std::string field_token(const std::string& s) {
  std::string t = join(tokenize(s), "_");
  return t.empty() ? "_" : t;
}

// Adds `weight` once for every distinct n-gram of `tokens`.
void add_ngrams(NgramBag& bag, const TokenSeq& tokens, double weight, size_t n_max, bool require_tag) {
  std::set<std::string> seen;
  for (size_t i = 0; i < tokens.size(); ++i) {
    std::string gram;
    bool tagged = false;
    for (size_t n = 1; n <= n_max && i + n <= tokens.size(); ++n) {
      const std::string& tok = tokens[i + n - 1];
      if (n > 1) gram.push_back(' ');
      gram += tok;
      tagged = tagged || is_tag(tok);
      if (require_tag && !tagged) continue;
      if (seen.insert(gram).second) bag[gram] += weight;
    }
  }
}

// sys-<act>, sys-<act> <slot>, sys-<act> <slot> <value>; each prefix weight 1.
void add_act(NgramBag& bag, const std::string& act, const std::optional<std::string>& slot,
             const std::optional<std::string>& value, size_t n_max, bool require_tag) {
  TokenSeq toks{"sys-" + field_token(act)};
  if (slot) {
    toks.push_back(*slot);
    if (value) toks.push_back(*value);
  }
  std::string gram;
  bool tagged = false;
  for (size_t n = 1; n <= std::min(n_max, toks.size()); ++n) {
    if (n > 1) gram.push_back(' ');
    gram += toks[n - 1];
    tagged = tagged || is_tag(toks[n - 1]);
    if (require_tag && !tagged) continue;
    bag[gram] += 1.0;
  }
}

NgramBag lexical_bag_impl(const Turn& turn, const std::vector<TokenSeq>& hyp_tokens, size_t n_max, bool count_mode) {
  NgramBag bag;
  for (size_t h = 0; h < turn.asr.size(); ++h) {
    add_ngrams(bag, hyp_tokens[h], count_mode ? 1.0 : turn.asr[h].score, n_max, false);
  }
  for (const auto& a : turn.system_acts) {
    std::optional<std::string> slot, value;
    if (a.slot) slot = field_token(*a.slot);
    if (a.value) value = field_token(*a.value);
    add_act(bag, a.act, slot, value, n_max, false);
  }
  return bag;
}

NgramBag delex_bag_impl(const Turn& turn, const std::vector<TokenSeq>& hyp_tokens, const SlotSpec& slot,
                        std::optional<std::string_view> value, size_t n_max, bool count_mode) {
  NgramBag bag;
  for (size_t h = 0; h < turn.asr.size(); ++h) {
    add_ngrams(bag, delexicalise(hyp_tokens[h], slot, value), count_mode ? 1.0 : turn.asr[h].score, n_max, true);
  }
  for (const auto& a : turn.system_acts) {
    std::optional<std::string> s, v;
    const bool on_slot = a.slot && *a.slot == slot.name;
    if (a.slot) s = on_slot ? std::string(kNameTag) : field_token(*a.slot);
    if (a.value) v = (on_slot && value && *a.value == *value) ? std::string(kValueTag) : field_token(*a.value);
    add_act(bag, a.act, s, v, n_max, true);
  }
  return bag;
}

std::vector<TokenSeq> tokenize_hypotheses(const Turn& turn) {
  std::vector<TokenSeq> out;
  out.reserve(turn.asr.size());
  for (const auto& h : turn.asr) out.push_back(tokenize(h.text));
  return out;
}

std::vector<size_t> mentioned_impl(const Turn& turn, const std::vector<TokenSeq>& hyp_tokens, const SlotSpec& slot) {
  std::vector<size_t> out;
  for (size_t v = 0; v < slot.values.size(); ++v) {
    bool hit = false;
    for (const auto& a : turn.system_acts) {
      hit = hit || (a.slot && a.value && *a.slot == slot.name && *a.value == slot.values[v]);
    }
    for (const auto& form : slot.value_forms.at(slot.values[v])) {
      for (const auto& toks : hyp_tokens) hit = hit || contains(toks, form);
    }
    if (hit) out.push_back(v);
  }
  return out;
}

}  // namespace

TokenSeq delexicalise(const TokenSeq& tokens, const SlotSpec& slot, std::optional<std::string_view> value) {
  TokenSeq out = tokens;
  if (value) {
    auto it = slot.value_forms.find(std::string(*value));
    if (it != slot.value_forms.end()) out = replace_forms(out, it->second, kValueTag);
  }
  return replace_forms(out, slot.name_forms, kNameTag);
}

NgramBag lexical_bag(const Turn& turn, size_t n_max) {
  return lexical_bag_impl(turn, tokenize_hypotheses(turn), n_max, false);
}

NgramBag delex_bag(const Turn& turn, const SlotSpec& slot, std::optional<std::string_view> value, size_t n_max) {
  return delex_bag_impl(turn, tokenize_hypotheses(turn), slot, value, n_max, false);
}

std::vector<size_t> mentioned_values(const Turn& turn, const SlotSpec& slot) {
  return mentioned_impl(turn, tokenize_hypotheses(turn), slot);
}

FeatureVocabulary::FeatureVocabulary(std::vector<std::string> lexical, std::vector<std::string> delex, size_t n_max,
                                     size_t min_count)
    : lexical_(std::move(lexical)), delex_(std::move(delex)), n_max_(n_max), min_count_(min_count) {
  for (uint32_t i = 0; i < lexical_.size(); ++i) lexical_index_.emplace(lexical_[i], i);
  for (uint32_t i = 0; i < delex_.size(); ++i) delex_index_.emplace(delex_[i], i);
}

std::string FeatureVocabulary::dump() const {
  std::ostringstream out;
  out << "# n_max=" << n_max_ << " min_count=" << min_count_ << "\n";
  for (size_t i = 0; i < lexical_.size(); ++i) out << "L\t" << lexical_[i] << "\t" << i << "\n";
  for (size_t i = 0; i < delex_.size(); ++i) out << "D\t" << delex_[i] << "\t" << i << "\n";
  return out.str();
}

FeatureVocabulary FeatureVocabulary::parse_dump(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  size_t n_max = 0, min_count = 0;
  std::vector<std::string> lex, delex;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (std::sscanf(line.c_str(), "# n_max=%zu min_count=%zu", &n_max, &min_count) != 2) {
        throw ValidationError("vocabulary line " + std::to_string(lineno) + ": bad header");
      }
      continue;
    }
    const size_t t1 = line.find('\t');
    const size_t t2 = line.rfind('\t');
    if (t1 == std::string::npos || t2 == t1) throw ValidationError("vocabulary line " + std::to_string(lineno) + ": malformed");
    const std::string kind = line.substr(0, t1);
    const std::string gram = line.substr(t1 + 1, t2 - t1 - 1);
    const size_t id = std::stoul(line.substr(t2 + 1));
    auto& dst = kind == "L" ? lex : delex;
    if ((kind != "L" && kind != "D") || id != dst.size()) {
      throw ValidationError("vocabulary line " + std::to_string(lineno) + ": unexpected kind or id");
    }
    dst.push_back(gram);
  }
  if (n_max == 0) throw ValidationError("vocabulary dump: missing header");
  return FeatureVocabulary(std::move(lex), std::move(delex), n_max, min_count);
}

std::string FeatureVocabulary::hash() const { return fnv1a_hex(dump()); }

FeatureVocabulary build_vocabulary(const std::vector<const Corpus*>& corpora, const CombinedOntology& ontologies,
                                   size_t n_max, size_t min_count) {
  if (corpora.empty()) throw ValidationError("build_vocabulary: no corpora");
  if (n_max < 1 || min_count < 1) throw ValidationError("build_vocabulary: n_max and min_count must be >= 1");
  std::unordered_map<std::string, double> lex_counts, delex_counts;
  for (const Corpus* corpus : corpora) {
    const Ontology* ont = ontologies.find_member(corpus->ontology.domain_name);
    if (!ont) {
      throw ValidationError("build_vocabulary: domain '" + corpus->ontology.domain_name + "' not in combined ontology '" +
                            ontologies.name + "'");
    }
    for (const auto& dialog : corpus->dialogs) {
      for (const auto& turn : dialog.turns) {
        const auto toks = tokenize_hypotheses(turn);
        for (const auto& [gram, c] : lexical_bag_impl(turn, toks, n_max, true)) lex_counts[gram] += c;
        for (const auto& slot : ont->slots) {
          const auto mentioned = mentioned_impl(turn, toks, slot);
          // every unmentioned candidate tags exactly like "no constraint"
          const double same_as_null = static_cast<double>(slot.values.size() + 1 - mentioned.size());
          for (const auto& [gram, c] : delex_bag_impl(turn, toks, slot, std::nullopt, n_max, true)) {
            delex_counts[gram] += c * same_as_null;
          }
          for (size_t v : mentioned) {
            for (const auto& [gram, c] : delex_bag_impl(turn, toks, slot, slot.values[v], n_max, true)) {
              delex_counts[gram] += c;
            }
          }
        }
      }
    }
  }
  auto select = [&](const std::unordered_map<std::string, double>& counts) {
    std::vector<std::string> out;
    for (const auto& [gram, c] : counts) {
      if (c >= static_cast<double>(min_count)) out.push_back(gram);
    }
    std::sort(out.begin(), out.end());
    return out;
  };
  return FeatureVocabulary(select(lex_counts), select(delex_counts), n_max, min_count);
}

SparseVector vectorize(const NgramBag& bag, const std::unordered_map<std::string, uint32_t>& index) {
  std::vector<std::pair<uint32_t, double>> entries;
  for (const auto& [gram, w] : bag) {
    auto it = index.find(gram);
    if (it != index.end()) entries.emplace_back(it->second, w);
  }
  std::sort(entries.begin(), entries.end());
  SparseVector out;
  out.dim = index.size();
  out.index.reserve(entries.size());
  out.value.reserve(entries.size());
  for (const auto& [i, w] : entries) {
    out.index.push_back(i);
    out.value.push_back(w);
  }
  return out;
}

TurnFeatures extract_turn_features(const Turn& turn, const SlotSpec& slot, const FeatureVocabulary& vocab) {
  const auto toks = tokenize_hypotheses(turn);
  TurnFeatures f;
  f.lexical = vectorize(lexical_bag_impl(turn, toks, vocab.n_max(), false), vocab.lexical_index());
  const auto mentioned = mentioned_impl(turn, toks, slot);
  f.delex_groups.push_back(
      vectorize(delex_bag_impl(turn, toks, slot, std::nullopt, vocab.n_max(), false), vocab.delex_index()));
  f.candidate_group.assign(slot.values.size() + 1, 0);
  for (size_t v : mentioned) {
    f.delex_groups.push_back(
        vectorize(delex_bag_impl(turn, toks, slot, slot.values[v], vocab.n_max(), false), vocab.delex_index()));
    f.candidate_group[v] = static_cast<uint32_t>(f.delex_groups.size() - 1);
  }
  return f;
}

}  // namespace mdbt
