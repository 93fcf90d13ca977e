#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mdbt/config.h"
#include "mdbt/corpus.h"
#include "mdbt/training.h"

namespace mdbt {

// Per-turn correctness counts for one domain. A turn counts towards the
// joint figure only when every slot's argmax equals its accumulated gold.
struct AccuracyTally {
  std::vector<std::string> slot_names;
  size_t turns = 0;
  size_t joint_correct = 0;
  std::vector<size_t> slot_correct;

  explicit AccuracyTally(std::vector<std::string> slots = {});

  void add_turn(std::span<const int> predicted, std::span<const int> gold);
  double joint() const;
  double slot(size_t index) const;
};

// beliefs[dialog][turn][slot], slots in ontology order.
using BeliefTrajectories = std::vector<std::vector<std::vector<BeliefState>>>;

AccuracyTally tally_beliefs(const Corpus& corpus, const BeliefTrajectories& beliefs);
AccuracyTally tally_model(const EnsembleModel& model, const Corpus& corpus);

double joint_goal_accuracy(const EnsembleModel& model, const Corpus& corpus);
double slot_accuracy(const EnsembleModel& model, const Corpus& corpus, const std::string& slot);

// exp(mean(log x)). Refuses non-positive inputs.
double geometric_mean(std::span<const double> values);

struct DomainResult {
  std::string domain;
  size_t n_turns = 0;
  double joint = 0.0;
  std::vector<std::pair<std::string, double>> slots;
};

DomainResult evaluate_domain(const EnsembleModel& model, const Corpus& corpus);

struct EvalReport {
  std::vector<DomainResult> domains;

  // NaN when some domain scored exactly zero.
  double geometric_mean_joint() const;
  // Header "domain,slot,metric,value,n_turns"; values are percentages with
  // one decimal. Ends with one geometric-mean row across the domains.
  std::string to_csv() const;
};

struct CurvePoint {
  size_t n_dialogs = 0;
  double in_domain = 0.0;
  double ood = 0.0;
  std::vector<double> in_domain_runs;  // one per seed
  std::vector<double> ood_runs;
};

struct LearningCurve {
  std::vector<CurvePoint> points;
  int ensemble_k = 1;
  std::vector<uint64_t> seeds;

  // "n accuracy" per line, accuracy as a percentage.
  std::string in_domain_dat() const;
  std::string ood_dat() const;
  std::string to_csv() const;
};

struct DomainSplit {
  Corpus train;
  Corpus dev;
  Corpus test;
};

// For every grid size n and seed: the first n dialogs of a seeded
// permutation of the new domain's training split (so subsets are nested),
// then two K-member ensembles. The in-domain one sees only those n dialogs
// in its shared phase, the other sees the out-of-domain training data as
// well. Both specialise on the n dialogs, stop early on the new domain's dev
// split and are scored on its test split.
LearningCurve run_learning_curve(const DomainSplit& new_domain, const std::vector<DomainSplit>& ood,
                                 const std::vector<size_t>& grid, const RunConfig& config, int k,
                                 const std::vector<uint64_t>& seeds, bool parallel = false);

// Checks the new-domain subset sizes before any training.
void validate_grid(const std::vector<size_t>& grid, size_t available);

std::string format_percent(double fraction);

}  // namespace mdbt
