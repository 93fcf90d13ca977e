#include "mdbt/training.h"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>

#include "mdbt/error.h"
#include "mdbt/rng.h"

namespace mdbt {
namespace {

std::vector<std::string> domains_of(const std::vector<const Corpus*>& corpora) {
  std::vector<std::string> out;
  for (const Corpus* c : corpora) out.push_back(c->ontology.domain_name);
  return out;
}

ModelDims dims_for(const FeatureVocabulary& vocab, const RunConfig& config) {
  return {vocab.lexical_size(), vocab.delex_size(), config.hidden_dim, config.memory_dim};
}

// Features for every corpus of a phase, extracted once and shared read-only.
struct FeaturizedPhase {
  std::vector<std::vector<SlotExample>> train, dev;

  FeaturizedPhase(const TrainingData& data, const FeatureVocabulary& vocab) {
    for (const Corpus* c : data.train) train.push_back(make_examples(*c, vocab));
    for (const Corpus* c : data.dev) dev.push_back(make_examples(*c, vocab));
  }

  static std::vector<const SlotExample*> flatten(const std::vector<std::vector<SlotExample>>& parts,
                                                 const SlotKey* only = nullptr) {
    std::vector<const SlotExample*> out;
    for (const auto& part : parts) {
      for (const auto& e : part) {
        if (!only || e.key == *only) out.push_back(&e);
      }
    }
    return out;
  }
};

SharedModel train_shared_on(const FeaturizedPhase& phase, const std::vector<std::string>& domains,
                            std::shared_ptr<const FeatureVocabulary> vocab, const RunConfig& config, uint64_t seed,
                            const EpochHook* hook) {
  SharedModel model{init_params(dims_for(*vocab, config), seed), vocab, {}};
  model.manifest.phase = "shared";
  model.manifest.domains = domains;
  model.manifest.seed = seed;
  SgdOptions opt;
  opt.lr = config.lr_shared;
  opt.clip_norm = config.clip_norm;
  opt.max_epochs = config.max_epochs_shared;
  opt.patience = config.patience;
  opt.shuffle_seed = derive_seed(seed, "shuffle/shared");
  opt.hook = hook;
  const auto train = FeaturizedPhase::flatten(phase.train);
  const auto dev = FeaturizedPhase::flatten(phase.dev);
  model.params = run_sgd(std::move(model.params), train, dev, opt, &model.manifest);
  return model;
}

SpecializedModel specialize_on(const SharedModel& shared, const FeaturizedPhase& phase,
                               const std::vector<const Corpus*>& corpora, const RunConfig& config, uint64_t seed) {
  SpecializedModel out = as_specialized(shared);
  for (const Corpus* c : corpora) {
    for (const auto& slot : c->ontology.slots) {
      const SlotKey key{c->ontology.domain_name, slot.name};
      if (out.slots.count(key)) continue;
      const auto train = FeaturizedPhase::flatten(phase.train, &key);
      const auto dev = FeaturizedPhase::flatten(phase.dev, &key);
      TrainingManifest log;
      log.domains = {key.domain};
      out.slots.emplace(key, specialize_slot(shared, train, dev, config, seed, &log));
      out.manifests.push_back(std::move(log));
    }
  }
  return out;
}

}  // namespace

std::vector<SlotExample> make_examples(const Corpus& corpus, const FeatureVocabulary& vocab) {
  std::vector<SlotExample> out;
  out.reserve(corpus.dialogs.size() * corpus.ontology.slots.size());
  for (const auto& dialog : corpus.dialogs) {
    const GoalTrajectory goals = accumulate_goals(dialog, corpus.ontology);
    for (const auto& slot : corpus.ontology.slots) {
      SlotExample ex;
      ex.key = {corpus.ontology.domain_name, slot.name};
      ex.dialog_id = dialog.dialog_id;
      ex.turns.reserve(dialog.turns.size());
      for (const auto& turn : dialog.turns) ex.turns.push_back(extract_turn_features(turn, slot, vocab));
      ex.gold = gold_indices(goals, slot);
      out.push_back(std::move(ex));
    }
  }
  return out;
}

nlohmann::json TrainingManifest::to_json() const {
  nlohmann::json epochs_json = nlohmann::json::array();
  for (const auto& e : epochs) {
    epochs_json.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"dev_loss", e.dev_loss}});
  }
  return {{"phase", phase},
          {"domains", domains},
          {"seed", seed},
          {"lr", lr},
          {"max_epochs", max_epochs},
          {"best_epoch", best_epoch},
          {"best_dev_loss", best_dev_loss},
          {"train_examples", train_examples},
          {"dev_examples", dev_examples},
          {"epochs", epochs_json}};
}

double total_loss(const SlotParams& params, std::span<const SlotExample* const> examples) {
  double loss = 0.0;
  for (const SlotExample* e : examples) {
    loss += dialog_loss(std::span<const TurnOutput>(forward_dialog(params, e->turns)), e->gold);
  }
  return loss;
}

SlotParams run_sgd(SlotParams start, std::span<const SlotExample* const> train,
                   std::span<const SlotExample* const> dev, const SgdOptions& options, TrainingManifest* log) {
  if (dev.empty()) dev = train;
  TrainingManifest scratch;
  TrainingManifest& m = log ? *log : scratch;
  m.lr = options.lr;
  m.max_epochs = options.max_epochs;
  m.train_examples = train.size();
  m.dev_examples = dev.size();
  m.epochs.clear();

  SlotParams params = std::move(start);
  SlotParams best = params;
  double best_loss = total_loss(params, dev);
  if (!std::isfinite(best_loss)) throw NumericError("non-finite initial dev loss");
  m.best_epoch = 0;
  m.best_dev_loss = best_loss;
  m.epochs.push_back({0, std::numeric_limits<double>::quiet_NaN(), best_loss});

  Rng rng(options.shuffle_seed);
  std::vector<const SlotExample*> order(train.begin(), train.end());
  Gradients grads(params.dims);
  int since_best = 0;
  for (int epoch = 1; epoch <= options.max_epochs; ++epoch) {
    rng.shuffle(order);
    double train_loss = 0.0;
    for (const SlotExample* e : order) {
      const auto traj = forward_dialog(params, e->turns);
      train_loss += dialog_loss(std::span<const TurnOutput>(traj), e->gold);
      grads.clear();
      backward_dialog(params, e->turns, traj, e->gold, grads);
      sgd_step(params, grads, options.lr, options.clip_norm);
    }
    if (!std::isfinite(train_loss)) throw NumericError("non-finite training loss at epoch " + std::to_string(epoch));
    const double dev_loss = total_loss(params, dev);
    if (!std::isfinite(dev_loss)) throw NumericError("non-finite dev loss at epoch " + std::to_string(epoch));
    m.epochs.push_back({epoch, train_loss, dev_loss});
    if (dev_loss < best_loss) {
      best_loss = dev_loss;
      best = params;
      m.best_epoch = epoch;
      m.best_dev_loss = dev_loss;
      since_best = 0;
    } else if (++since_best >= options.patience) {
      break;
    }
    if (options.hook && !(*options.hook)(epoch, params, dev_loss)) break;
  }
  return best;
}

const SlotParams& SpecializedModel::params_for(const SlotKey& key) const {
  auto it = slots.find(key);
  return it == slots.end() ? shared : it->second;
}

SpecializedModel as_specialized(const SharedModel& shared) {
  SpecializedModel out;
  out.vocab = shared.vocab;
  out.shared = shared.params;
  out.provenance = shared.params.fingerprint();
  out.manifests.push_back(shared.manifest);
  return out;
}

EnsembleModel as_ensemble(SpecializedModel model) {
  EnsembleModel e;
  e.members.push_back(std::move(model));
  return e;
}

std::shared_ptr<const FeatureVocabulary> vocabulary_for(const TrainingData& data, const CombinedOntology& ontology,
                                                        const RunConfig& config) {
  return std::make_shared<const FeatureVocabulary>(
      build_vocabulary(data.train, ontology, config.n_max, config.min_count));
}

SharedModel train_shared(const TrainingData& data, std::shared_ptr<const FeatureVocabulary> vocab,
                         const RunConfig& config, uint64_t seed, const EpochHook* hook) {
  if (data.train.empty()) throw ValidationError("train_shared: no training corpora");
  if (!vocab) throw ValidationError("train_shared: no vocabulary");
  config.validate();
  const FeaturizedPhase phase(data, *vocab);
  return train_shared_on(phase, domains_of(data.train), std::move(vocab), config, seed, hook);
}

SharedModel train_shared(const std::vector<Corpus>& corpora, const CombinedOntology& combined, const RunConfig& config,
                         uint64_t seed) {
  if (corpora.empty()) throw ValidationError("train_shared: no training corpora");
  config.validate();
  const double holdout = config.dev_fraction / (config.train_fraction + config.dev_fraction);
  std::vector<Corpus> train, dev;
  for (const auto& c : corpora) {
    auto [tr, dv] = holdout_split(c, holdout, derive_seed(seed, "holdout/" + c.ontology.domain_name));
    train.push_back(std::move(tr));
    dev.push_back(std::move(dv));
  }
  TrainingData data;
  for (size_t i = 0; i < train.size(); ++i) {
    data.train.push_back(&train[i]);
    data.dev.push_back(&dev[i]);
  }
  return train_shared(data, vocabulary_for(data, combined, config), config, seed);
}

SlotParams specialize_slot(const SharedModel& shared, std::span<const SlotExample* const> train,
                           std::span<const SlotExample* const> dev, const RunConfig& config, uint64_t seed,
                           TrainingManifest* log) {
  SgdOptions opt;
  opt.lr = config.lr_specialize;
  opt.clip_norm = config.clip_norm;
  opt.max_epochs = config.max_epochs_specialize;
  opt.patience = config.patience;
  const std::string key = train.empty() ? std::string("empty") : train.front()->key.str();
  opt.shuffle_seed = derive_seed(seed, "shuffle/specialize/" + key);
  if (log) {
    log->phase = "specialize:" + key;
    log->seed = seed;
  }
  if (config.max_epochs_specialize == 0 || train.empty()) {
    if (log) log->max_epochs = 0;
    return shared.params;
  }
  return run_sgd(shared.params, train, dev, opt, log);
}

SlotParams specialize_slot(const SharedModel& shared, const std::string& slot, const Corpus& train, const Corpus& dev,
                           const RunConfig& config, uint64_t seed) {
  if (!train.ontology.find_slot(slot)) {
    throw ValidationError("specialize_slot: unknown slot '" + slot + "' in domain '" + train.ontology.domain_name + "'");
  }
  const SlotKey key{train.ontology.domain_name, slot};
  const FeaturizedPhase phase(TrainingData{{&train}, {&dev}}, *shared.vocab);
  const auto tr = FeaturizedPhase::flatten(phase.train, &key);
  const auto dv = FeaturizedPhase::flatten(phase.dev, &key);
  return specialize_slot(shared, tr, dv, config, seed);
}

SpecializedModel specialize_all(const SharedModel& shared, const TrainingData& data, const RunConfig& config,
                                uint64_t seed) {
  config.validate();
  const FeaturizedPhase phase(data, *shared.vocab);
  return specialize_on(shared, phase, data.train, config, seed);
}

EnsembleModel train_ensemble(const TrainingData& shared_phase, const TrainingData& specialize_phase,
                             const CombinedOntology& ontology, const RunConfig& config, int k, uint64_t base_seed,
                             bool parallel) {
  if (k < 1) throw ValidationError("train_ensemble: K must be >= 1");
  if (shared_phase.train.empty()) throw ValidationError("train_ensemble: no training corpora");
  config.validate();
  auto vocab = vocabulary_for(shared_phase, ontology, config);
  const FeaturizedPhase shared_data(shared_phase, *vocab);
  const FeaturizedPhase special_data(specialize_phase, *vocab);
  const auto domains = domains_of(shared_phase.train);

  auto member = [&](uint64_t seed) {
    SharedModel shared = train_shared_on(shared_data, domains, vocab, config, seed, nullptr);
    return specialize_on(shared, special_data, specialize_phase.train, config, seed);
  };
  EnsembleModel out;
  if (parallel && k > 1) {
    std::vector<std::future<SpecializedModel>> jobs;
    for (int i = 0; i < k; ++i) jobs.push_back(std::async(std::launch::async, member, base_seed + i));
    for (auto& j : jobs) out.members.push_back(j.get());
  } else {
    for (int i = 0; i < k; ++i) out.members.push_back(member(base_seed + i));
  }
  return out;
}

std::vector<BeliefState> predict_ensemble(const EnsembleModel& ensemble, const SlotExample& example) {
  if (ensemble.members.empty()) throw ValidationError("predict_ensemble: empty ensemble");
  const auto& vocab = ensemble.members[0].vocab;
  std::vector<BeliefState> mean;
  for (const auto& member : ensemble.members) {
    if (member.vocab != vocab && member.vocab->hash() != vocab->hash()) {
      throw ValidationError("predict_ensemble: members use different vocabularies");
    }
    const auto traj = forward_dialog(member.params_for(example.key), example.turns);
    if (mean.empty()) {
      mean.resize(traj.size());
      for (size_t t = 0; t < traj.size(); ++t) mean[t].p.assign(traj[t].belief.p.size(), 0.0);
    }
    for (size_t t = 0; t < traj.size(); ++t) {
      for (size_t c = 0; c < mean[t].p.size(); ++c) mean[t].p[c] += traj[t].belief.p[c];
    }
  }
  if (ensemble.members.size() > 1) {
    for (auto& b : mean) {
      double z = 0.0;
      for (double p : b.p) z += p;
      for (double& p : b.p) p /= z;
    }
  }
  return mean;
}

std::vector<std::vector<BeliefState>> predict_dialog(const EnsembleModel& ensemble, const Dialog& dialog,
                                                     const Ontology& ontology) {
  const Corpus single{ontology, {dialog}};
  const auto examples = make_examples(single, ensemble.vocab());
  std::vector<std::vector<BeliefState>> out(dialog.turns.size(), std::vector<BeliefState>(ontology.slots.size()));
  for (size_t s = 0; s < examples.size(); ++s) {
    const auto beliefs = predict_ensemble(ensemble, examples[s]);
    for (size_t t = 0; t < beliefs.size(); ++t) out[t][s] = beliefs[t];
  }
  return out;
}

}  // namespace mdbt
