#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mdbt/corpus.h"
#include "mdbt/ontology.h"
#include "mdbt/text.h"

namespace mdbt {

inline constexpr std::string_view kValueTag = "tagged-slot-value";
inline constexpr std::string_view kNameTag = "tagged-slot-name";

// n-gram (tokens joined by single spaces) -> non-negative weight.
using NgramBag = std::unordered_map<std::string, double>;

// Sorted-index sparse vector.
struct SparseVector {
  size_t dim = 0;
  std::vector<uint32_t> index;
  std::vector<double> value;

  size_t nnz() const { return index.size(); }
  friend bool operator==(const SparseVector&, const SparseVector&) = default;
};

// Replaces leftmost-longest occurrences of `value`'s surface forms with
// kValueTag, then of the slot's name forms with kNameTag. With no value only
// the name is tagged.
TokenSeq delexicalise(const TokenSeq& tokens, const SlotSpec& slot, std::optional<std::string_view> value);

// Confidence-weighted n-grams of every hypothesis (each hypothesis adds its
// score once per distinct n-gram) plus system-act pseudo-token n-grams
// `sys-<act> [slot [value]]` at weight 1 per act.
NgramBag lexical_bag(const Turn& turn, size_t n_max);

// Same extraction over the text delexicalised for (slot, value); act fields
// are tagged when they refer to the slot / the candidate value. Only n-grams
// that contain a tag are kept: the rest already live in the lexical bag.
NgramBag delex_bag(const Turn& turn, const SlotSpec& slot, std::optional<std::string_view> value, size_t n_max);

// Values of `slot` with a surface form in some hypothesis or named by a
// system act on the slot. Every other candidate delexicalises exactly like
// the "no constraint" candidate.
std::vector<size_t> mentioned_values(const Turn& turn, const SlotSpec& slot);

class FeatureVocabulary {
 public:
  FeatureVocabulary() = default;
  FeatureVocabulary(std::vector<std::string> lexical, std::vector<std::string> delex, size_t n_max, size_t min_count);

  size_t lexical_size() const { return lexical_.size(); }
  size_t delex_size() const { return delex_.size(); }
  size_t n_max() const { return n_max_; }
  size_t min_count() const { return min_count_; }

  const std::unordered_map<std::string, uint32_t>& lexical_index() const { return lexical_index_; }
  const std::unordered_map<std::string, uint32_t>& delex_index() const { return delex_index_; }
  const std::vector<std::string>& lexical_ngrams() const { return lexical_; }
  const std::vector<std::string>& delex_ngrams() const { return delex_; }

  // Lines "L|D <tab> n-gram <tab> id", preceded by a "#" header carrying
  // n_max and min_count.
  std::string dump() const;
  static FeatureVocabulary parse_dump(std::string_view text);
  // FNV-1a of dump().
  std::string hash() const;

 private:
  std::vector<std::string> lexical_, delex_;
  std::unordered_map<std::string, uint32_t> lexical_index_, delex_index_;
  size_t n_max_ = 3;
  size_t min_count_ = 2;
};

// An n-gram is indexed iff its occurrence count (one per hypothesis or act
// it appears in; for the delexicalised index summed over every slot of the
// dialog's domain and every candidate value plus "no constraint") reaches
// min_count. Ids follow sorted n-gram order.
FeatureVocabulary build_vocabulary(const std::vector<const Corpus*>& corpora, const CombinedOntology& ontologies,
                                   size_t n_max, size_t min_count);

SparseVector vectorize(const NgramBag& bag, const std::unordered_map<std::string, uint32_t>& index);

// Features for one slot at one turn. Candidates 0..|V|-1 are the slot's
// values, candidate |V| is "no constraint". Candidates with identical
// delexicalised input share one entry of `delex_groups`.
struct TurnFeatures {
  SparseVector lexical;
  std::vector<SparseVector> delex_groups;
  std::vector<uint32_t> candidate_group;

  size_t num_values() const { return candidate_group.size() - 1; }
  size_t null_candidate() const { return num_values(); }
  const SparseVector& delex(size_t candidate) const { return delex_groups[candidate_group[candidate]]; }
};

TurnFeatures extract_turn_features(const Turn& turn, const SlotSpec& slot, const FeatureVocabulary& vocab);

}  // namespace mdbt
