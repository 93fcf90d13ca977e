#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "mdbt/config.h"
#include "mdbt/corpus.h"
#include "mdbt/features.h"
#include "mdbt/ontology.h"
#include "mdbt/rnn.h"

namespace mdbt {

// One (dialog, slot) sequence with features extracted once up front.
struct SlotExample {
  SlotKey key;
  std::string dialog_id;
  std::vector<TurnFeatures> turns;
  std::vector<int> gold;
};

std::vector<SlotExample> make_examples(const Corpus& corpus, const FeatureVocabulary& vocab);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double dev_loss = 0.0;
};

struct TrainingManifest {
  std::string phase;
  std::vector<std::string> domains;
  uint64_t seed = 0;
  double lr = 0.0;
  int max_epochs = 0;
  int best_epoch = 0;
  double best_dev_loss = 0.0;
  size_t train_examples = 0;
  size_t dev_examples = 0;
  std::vector<EpochRecord> epochs;

  nlohmann::json to_json() const;
};

// Called after every epoch with the current parameters; return false to stop.
using EpochHook = std::function<bool(int epoch, const SlotParams& params, double dev_loss)>;

struct SgdOptions {
  double lr = 0.05;
  double clip_norm = 5.0;
  int max_epochs = 50;
  int patience = 3;
  uint64_t shuffle_seed = 0;
  const EpochHook* hook = nullptr;
};

// Per-example SGD with a seeded shuffle each epoch and early stopping on the
// summed dev loss. The starting point counts as epoch 0, so the result never
// has a worse dev loss than `start`. An empty dev set falls back to train.
SlotParams run_sgd(SlotParams start, std::span<const SlotExample* const> train,
                   std::span<const SlotExample* const> dev, const SgdOptions& options, TrainingManifest* log);

double total_loss(const SlotParams& params, std::span<const SlotExample* const> examples);

// A single tied parameter set used for every slot of every domain.
struct SharedModel {
  SlotParams params;
  std::shared_ptr<const FeatureVocabulary> vocab;
  TrainingManifest manifest;

  const SlotParams& params_for(const SlotKey&) const { return params; }
};

// Per-slot copies of a shared model. Slots without a copy use the shared
// parameters.
struct SpecializedModel {
  std::shared_ptr<const FeatureVocabulary> vocab;
  SlotParams shared;
  std::map<SlotKey, SlotParams> slots;
  std::string provenance;  // fingerprint of the parent shared parameters
  std::vector<TrainingManifest> manifests;

  const SlotParams& params_for(const SlotKey& key) const;
};

struct EnsembleModel {
  std::vector<SpecializedModel> members;
  std::string combination = "mean";

  const FeatureVocabulary& vocab() const { return *members.at(0).vocab; }
};

SpecializedModel as_specialized(const SharedModel& shared);
EnsembleModel as_ensemble(SpecializedModel model);

// Train and dev corpora for one training phase.
struct TrainingData {
  std::vector<const Corpus*> train;
  std::vector<const Corpus*> dev;
};

std::shared_ptr<const FeatureVocabulary> vocabulary_for(const TrainingData& data, const CombinedOntology& ontology,
                                                        const RunConfig& config);

// Streams every (dialog, slot) pair of every training domain through one
// tied parameter set.
SharedModel train_shared(const TrainingData& data, std::shared_ptr<const FeatureVocabulary> vocab,
                         const RunConfig& config, uint64_t seed, const EpochHook* hook = nullptr);

// Convenience form: builds the vocabulary and holds out a dev share of each
// corpus (dev_fraction / (train_fraction + dev_fraction)).
SharedModel train_shared(const std::vector<Corpus>& corpora, const CombinedOntology& combined, const RunConfig& config,
                         uint64_t seed);

// Fine-tunes a copy of the shared parameters on one slot's sequences at
// lr_specialize. The shared model is not modified.
SlotParams specialize_slot(const SharedModel& shared, std::span<const SlotExample* const> train,
                           std::span<const SlotExample* const> dev, const RunConfig& config, uint64_t seed,
                           TrainingManifest* log = nullptr);
SlotParams specialize_slot(const SharedModel& shared, const std::string& slot, const Corpus& train, const Corpus& dev,
                           const RunConfig& config, uint64_t seed);

// Specialises every slot of every domain in `data`.
SpecializedModel specialize_all(const SharedModel& shared, const TrainingData& data, const RunConfig& config,
                                uint64_t seed);

// K independent shared -> specialise runs with seeds base_seed..base_seed+K-1
// over one vocabulary. Members are trained concurrently when `parallel`.
EnsembleModel train_ensemble(const TrainingData& shared_phase, const TrainingData& specialize_phase,
                             const CombinedOntology& ontology, const RunConfig& config, int k, uint64_t base_seed,
                             bool parallel = false);

// Per-turn beliefs for one (dialog, slot) sequence: the member
// distributions averaged and renormalised.
std::vector<BeliefState> predict_ensemble(const EnsembleModel& ensemble, const SlotExample& example);

// beliefs[turn][slot] for a whole dialog, slots in ontology order.
std::vector<std::vector<BeliefState>> predict_dialog(const EnsembleModel& ensemble, const Dialog& dialog,
                                                     const Ontology& ontology);

}  // namespace mdbt
