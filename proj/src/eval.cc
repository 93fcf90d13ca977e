#include "mdbt/eval.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>
#include <sstream>

#include "mdbt/error.h"
#include "mdbt/rng.h"

namespace mdbt {

AccuracyTally::AccuracyTally(std::vector<std::string> slots)
    : slot_names(std::move(slots)), slot_correct(slot_names.size(), 0) {}

void AccuracyTally::add_turn(std::span<const int> predicted, std::span<const int> gold) {
  if (predicted.size() != slot_names.size() || gold.size() != slot_names.size()) {
    throw ValidationError("add_turn: expected " + std::to_string(slot_names.size()) + " slots");
  }
  bool all = true;
  for (size_t s = 0; s < predicted.size(); ++s) {
    if (predicted[s] == gold[s]) {
      ++slot_correct[s];
    } else {
      all = false;
    }
  }
  ++turns;
  if (all) ++joint_correct;
}

double AccuracyTally::joint() const {
  if (turns == 0) throw ValidationError("accuracy over zero turns");
  return static_cast<double>(joint_correct) / static_cast<double>(turns);
}

double AccuracyTally::slot(size_t index) const {
  if (turns == 0) throw ValidationError("accuracy over zero turns");
  return static_cast<double>(slot_correct.at(index)) / static_cast<double>(turns);
}

namespace {

std::vector<std::string> slot_names_of(const Ontology& o) {
  std::vector<std::string> out;
  for (const auto& s : o.slots) out.push_back(s.name);
  return out;
}

void check_model_ontology(const EnsembleModel& model, const Ontology& ontology) {
  if (model.members.empty()) throw ValidationError("evaluation: empty ensemble");
  for (const auto& member : model.members) {
    std::set<std::string> specialised;
    for (const auto& [key, params] : member.slots) {
      if (key.domain != ontology.domain_name) continue;
      if (!ontology.find_slot(key.slot)) {
        throw ValidationError("ontology mismatch: model has slot '" + key.str() + "' missing from the corpus ontology");
      }
      specialised.insert(key.slot);
    }
    if (specialised.empty()) continue;
    for (const auto& s : ontology.slots) {
      if (!specialised.count(s.name)) {
        throw ValidationError("ontology mismatch: model has no parameters for '" + ontology.domain_name + "/" + s.name +
                              "'");
      }
    }
  }
}

}  // namespace

AccuracyTally tally_beliefs(const Corpus& corpus, const BeliefTrajectories& beliefs) {
  if (beliefs.size() != corpus.dialogs.size()) throw ValidationError("tally_beliefs: dialog count mismatch");
  AccuracyTally tally(slot_names_of(corpus.ontology));
  const size_t n_slots = corpus.ontology.slots.size();
  std::vector<int> predicted(n_slots), gold(n_slots);
  for (size_t d = 0; d < corpus.dialogs.size(); ++d) {
    const Dialog& dialog = corpus.dialogs[d];
    if (beliefs[d].size() != dialog.turns.size()) {
      throw ValidationError("tally_beliefs: turn count mismatch in dialog " + dialog.dialog_id);
    }
    const GoalTrajectory goals = accumulate_goals(dialog, corpus.ontology);
    std::vector<std::vector<int>> gold_by_slot;
    for (const auto& slot : corpus.ontology.slots) gold_by_slot.push_back(gold_indices(goals, slot));
    for (size_t t = 0; t < dialog.turns.size(); ++t) {
      if (beliefs[d][t].size() != n_slots) throw ValidationError("tally_beliefs: slot count mismatch");
      for (size_t s = 0; s < n_slots; ++s) {
        const BeliefState& b = beliefs[d][t][s];
        if (b.p.size() != corpus.ontology.slots[s].values.size() + 1) {
          throw ValidationError("tally_beliefs: belief size mismatch for slot " + corpus.ontology.slots[s].name);
        }
        predicted[s] = static_cast<int>(b.argmax());
        gold[s] = gold_by_slot[s][t];
      }
      tally.add_turn(predicted, gold);
    }
  }
  return tally;
}

AccuracyTally tally_model(const EnsembleModel& model, const Corpus& corpus) {
  validate_corpus(corpus);
  check_model_ontology(model, corpus.ontology);
  BeliefTrajectories beliefs;
  beliefs.reserve(corpus.dialogs.size());
  for (const auto& dialog : corpus.dialogs) beliefs.push_back(predict_dialog(model, dialog, corpus.ontology));
  return tally_beliefs(corpus, beliefs);
}

double joint_goal_accuracy(const EnsembleModel& model, const Corpus& corpus) {
  return tally_model(model, corpus).joint();
}

double slot_accuracy(const EnsembleModel& model, const Corpus& corpus, const std::string& slot) {
  const auto index = corpus.ontology.slot_index(slot);
  if (!index) throw ValidationError("slot_accuracy: unknown slot '" + slot + "'");
  return tally_model(model, corpus).slot(*index);
}

double geometric_mean(std::span<const double> values) {
  if (values.empty()) throw ValidationError("geometric_mean of an empty list");
  double sum = 0.0;
  for (double v : values) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw ValidationError("geometric_mean needs positive finite inputs, got " + std::to_string(v));
    }
    sum += std::log(v);
  }
  return std::exp(sum / static_cast<double>(values.size()));
}

DomainResult evaluate_domain(const EnsembleModel& model, const Corpus& corpus) {
  const AccuracyTally tally = tally_model(model, corpus);
  DomainResult r;
  r.domain = corpus.ontology.domain_name;
  r.n_turns = tally.turns;
  r.joint = tally.joint();
  for (size_t s = 0; s < tally.slot_names.size(); ++s) r.slots.emplace_back(tally.slot_names[s], tally.slot(s));
  return r;
}

std::string format_percent(double fraction) {
  if (!std::isfinite(fraction)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", 100.0 * fraction);
  return buf;
}

double EvalReport::geometric_mean_joint() const {
  std::vector<double> joint;
  for (const auto& d : domains) {
    if (d.joint <= 0.0) return std::numeric_limits<double>::quiet_NaN();
    joint.push_back(d.joint);
  }
  return geometric_mean(joint);
}

std::string EvalReport::to_csv() const {
  std::ostringstream out;
  out << "domain,slot,metric,value,n_turns\n";
  size_t total = 0;
  for (const auto& d : domains) {
    out << d.domain << ",,joint_goal_accuracy," << format_percent(d.joint) << ',' << d.n_turns << '\n';
    for (const auto& [slot, acc] : d.slots) {
      out << d.domain << ',' << slot << ",slot_accuracy," << format_percent(acc) << ',' << d.n_turns << '\n';
    }
    total += d.n_turns;
  }
  if (!domains.empty()) {
    out << "all,,geometric_mean," << format_percent(geometric_mean_joint()) << ',' << total << '\n';
  }
  return out.str();
}

namespace {

std::string dat_series(const std::vector<CurvePoint>& points, double CurvePoint::*field) {
  std::ostringstream out;
  for (const auto& p : points) out << p.n_dialogs << ' ' << format_percent(p.*field) << '\n';
  return out.str();
}

}  // namespace

std::string LearningCurve::in_domain_dat() const { return dat_series(points, &CurvePoint::in_domain); }
std::string LearningCurve::ood_dat() const { return dat_series(points, &CurvePoint::ood); }

std::string LearningCurve::to_csv() const {
  std::ostringstream out;
  out << "n_dialogs,series,seed,joint_goal_accuracy\n";
  for (const auto& p : points) {
    for (size_t i = 0; i < seeds.size(); ++i) {
      out << p.n_dialogs << ",in_domain," << seeds[i] << ',' << format_percent(p.in_domain_runs[i]) << '\n';
      out << p.n_dialogs << ",ood," << seeds[i] << ',' << format_percent(p.ood_runs[i]) << '\n';
    }
    out << p.n_dialogs << ",in_domain,mean," << format_percent(p.in_domain) << '\n';
    out << p.n_dialogs << ",ood,mean," << format_percent(p.ood) << '\n';
  }
  return out.str();
}

void validate_grid(const std::vector<size_t>& grid, size_t available) {
  if (grid.empty()) throw ValidationError("learning curve: empty grid");
  for (size_t i = 0; i < grid.size(); ++i) {
    if (grid[i] == 0) throw ValidationError("learning curve: grid sizes must be positive");
    if (i > 0 && grid[i] <= grid[i - 1]) throw ValidationError("learning curve: grid must be strictly increasing");
    if (grid[i] > available) {
      throw ValidationError("learning curve: grid size " + std::to_string(grid[i]) + " exceeds the " +
                            std::to_string(available) + " training dialogs of the new domain");
    }
  }
}

LearningCurve run_learning_curve(const DomainSplit& new_domain, const std::vector<DomainSplit>& ood,
                                 const std::vector<size_t>& grid, const RunConfig& config, int k,
                                 const std::vector<uint64_t>& seeds, bool parallel) {
  validate_grid(grid, new_domain.train.dialogs.size());
  if (seeds.empty()) throw ValidationError("learning curve: no seeds");
  if (k < 1) throw ValidationError("learning curve: K must be >= 1");
  config.validate();

  std::vector<Ontology> members{new_domain.train.ontology};
  for (const auto& d : ood) members.push_back(d.train.ontology);
  const CombinedOntology in_only = merge_ontologies({new_domain.train.ontology}, "in_domain");
  const CombinedOntology combined = merge_ontologies(members, "ood");

  LearningCurve curve;
  curve.ensemble_k = k;
  curve.seeds = seeds;
  for (size_t n : grid) curve.points.push_back({n, 0.0, 0.0, {}, {}});

  for (uint64_t seed : seeds) {
    const uint64_t subset_seed = derive_seed(seed, "curve/subset");
    const uint64_t member_seed = derive_seed(seed, "curve/members");
    for (auto& point : curve.points) {
      const Corpus subset = nested_subset(new_domain.train, point.n_dialogs, subset_seed);
      const TrainingData special{{&subset}, {&new_domain.dev}};

      const EnsembleModel in_model = train_ensemble(special, special, in_only, config, k, member_seed, parallel);
      point.in_domain_runs.push_back(joint_goal_accuracy(in_model, new_domain.test));

      TrainingData shared{{}, {&new_domain.dev}};
      for (const auto& d : ood) shared.train.push_back(&d.train);
      shared.train.push_back(&subset);
      const EnsembleModel ood_model = train_ensemble(shared, special, combined, config, k, member_seed, parallel);
      point.ood_runs.push_back(joint_goal_accuracy(ood_model, new_domain.test));
    }
  }
  for (auto& point : curve.points) {
    double a = 0.0, b = 0.0;
    for (size_t i = 0; i < seeds.size(); ++i) {
      a += point.in_domain_runs[i];
      b += point.ood_runs[i];
    }
    point.in_domain = a / static_cast<double>(seeds.size());
    point.ood = b / static_cast<double>(seeds.size());
  }
  return curve;
}

}  // namespace mdbt
