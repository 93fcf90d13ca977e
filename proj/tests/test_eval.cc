#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "doctest.h"
#include "mdbt/error.h"
#include "mdbt/eval.h"
#include "mdbt/hash.h"
#include "mdbt/rng.h"
#include "mdbt/synthetic.h"
#include "test_util.h"

using namespace mdbt;
using namespace mdbt::testing;
using nlohmann::json;

namespace {

BeliefState one_hot(size_t n_values, size_t index) {
  BeliefState b;
  b.p.assign(n_values + 1, 0.0);
  b.p[index] = 1.0;
  return b;
}

BeliefState random_belief(Rng& rng, size_t n_values) {
  BeliefState b;
  double total = 0.0;
  for (size_t i = 0; i <= n_values; ++i) total += b.p.emplace_back(rng.uniform(0.01, 1.0));
  for (double& p : b.p) p /= total;
  return b;
}

// Gold index per slot per turn, walked straight from the turn labels.
std::vector<std::vector<int>> gold_table(const Dialog& d, const Ontology& o) {
  std::vector<int> current;
  for (const auto& s : o.slots) current.push_back(static_cast<int>(s.values.size()));
  std::vector<std::vector<int>> out;
  for (const auto& turn : d.turns) {
    for (size_t s = 0; s < o.slots.size(); ++s) {
      auto it = turn.turn_labels.find(o.slots[s].name);
      if (it == turn.turn_labels.end()) continue;
      const auto& vals = o.slots[s].values;
      current[s] = static_cast<int>(std::find(vals.begin(), vals.end(), it->second) - vals.begin());
    }
    out.push_back(current);
  }
  return out;
}

BeliefTrajectories gold_beliefs(const Corpus& c) {
  BeliefTrajectories out;
  for (const auto& d : c.dialogs) {
    auto& dialog = out.emplace_back();
    for (const auto& row : gold_table(d, c.ontology)) {
      auto& turn = dialog.emplace_back();
      for (size_t s = 0; s < row.size(); ++s) turn.push_back(one_hot(c.ontology.slots[s].values.size(), row[s]));
    }
  }
  return out;
}

SynthDomainSpec toy_spec(const std::string& domain) {
  json j = read_json_file(test_data("toy.synth.json"));
  j["domain"] = domain;
  return parse_synth_spec(j);
}

DomainSplit toy_split(const std::string& domain, size_t n, uint64_t seed) {
  const Corpus c = generate_synthetic(toy_spec(domain), n, 0.2, seed);
  CorpusSplit s = split_corpus(c, 0.6, 0.2, seed);
  return {std::move(s.train), std::move(s.dev), std::move(s.test)};
}

RunConfig tiny_config() {
  RunConfig c;
  c.hidden_dim = 4;
  c.memory_dim = 2;
  c.max_epochs_shared = 2;
  c.max_epochs_specialize = 1;
  return c;
}

}  // namespace

TEST_CASE("gold one-hot beliefs score 1.0") {
  const Corpus c = generate_synthetic(toy_spec("toy"), 20, 0.3, 1);
  const AccuracyTally t = tally_beliefs(c, gold_beliefs(c));
  CHECK(t.joint() == 1.0);
  for (size_t s = 0; s < 3; ++s) CHECK(t.slot(s) == 1.0);
}

TEST_CASE("one wrong slot in one of two turns halves joint accuracy") {
  const Ontology o = make_ontology("d", {{"a", {"x", "y"}}, {"b", {"u", "v"}}});
  const Corpus c{o, {{"d1", "d", {make_turn({{"x u", 1.0}}, {{"a", "x"}, {"b", "u"}}), make_turn({{"y", 1.0}}, {{"a", "y"}})}}}};
  BeliefTrajectories beliefs = gold_beliefs(c);
  beliefs[0][1][1] = one_hot(2, 1);
  const AccuracyTally t = tally_beliefs(c, beliefs);
  CHECK(t.joint() == 0.5);
  CHECK(t.slot(0) == 1.0);
  CHECK(t.slot(1) == 0.5);
}

TEST_CASE("always predicting no constraint while gold changes on the last of 4 turns") {
  const Ontology o = make_ontology("d", {{"a", {"x", "y"}}});
  Dialog d{"d1", "d", {}};
  for (int t = 0; t < 3; ++t) d.turns.push_back(make_turn({{"hi", 1.0}}));
  d.turns.push_back(make_turn({{"x", 1.0}}, {{"a", "x"}}));
  const Corpus c{o, {d}};
  BeliefTrajectories beliefs(1);
  for (int t = 0; t < 4; ++t) beliefs[0].push_back({one_hot(2, 2)});
  CHECK(tally_beliefs(c, beliefs).slot(0) == 0.75);
  CHECK(tally_beliefs(c, beliefs).joint() == 0.75);
}

TEST_CASE("tally matches a hand count on random trajectories") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Corpus c = generate_synthetic(toy_spec("toy"), 5, 0.3, 100 + trial);
    BeliefTrajectories beliefs;
    size_t turns = 0, joint = 0;
    std::vector<size_t> per_slot(c.ontology.slots.size(), 0);
    for (const auto& d : c.dialogs) {
      const auto gold = gold_table(d, c.ontology);
      auto& db = beliefs.emplace_back();
      for (size_t t = 0; t < d.turns.size(); ++t) {
        auto& tb = db.emplace_back();
        bool all = true;
        for (size_t s = 0; s < c.ontology.slots.size(); ++s) {
          const size_t n = c.ontology.slots[s].values.size();
          BeliefState b = rng.bernoulli(0.5) ? one_hot(n, gold[t][s]) : random_belief(rng, n);
          const size_t best = static_cast<size_t>(std::max_element(b.p.begin(), b.p.end()) - b.p.begin());
          const bool ok = static_cast<int>(best) == gold[t][s];
          per_slot[s] += ok;
          all = all && ok;
          tb.push_back(std::move(b));
        }
        ++turns;
        joint += all;
      }
    }
    const AccuracyTally tally = tally_beliefs(c, beliefs);
    CHECK(tally.turns == turns);
    CHECK(tally.joint() == static_cast<double>(joint) / turns);
    for (size_t s = 0; s < per_slot.size(); ++s) CHECK(tally.slot(s) == static_cast<double>(per_slot[s]) / turns);
    for (size_t s = 0; s < per_slot.size(); ++s) CHECK(tally.joint() <= tally.slot(s));
  }
}

TEST_CASE("argmax ties go to the earliest value and no constraint last") {
  CHECK(BeliefState{{0.4, 0.4, 0.2}}.argmax() == 0);
  CHECK(BeliefState{{0.2, 0.4, 0.4}}.argmax() == 1);
  CHECK(BeliefState{{0.0, 0.0, 1.0}}.argmax() == 2);
}

TEST_CASE("scaling a belief before renormalising keeps its argmax") {
  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const BeliefState b = random_belief(rng, 1 + rng.index(6));
    const double k = rng.uniform(0.01, 100.0);
    BeliefState scaled = b;
    double total = 0.0;
    for (double& p : scaled.p) total += (p *= k);
    for (double& p : scaled.p) p /= total;
    CHECK(scaled.argmax() == b.argmax());
  }
}

TEST_CASE("accuracy inputs are validated") {
  const Corpus c = generate_synthetic(toy_spec("toy"), 3, 0.3, 1);
  CHECK_THROWS_AS(tally_beliefs(c, {}), ValidationError);
  BeliefTrajectories b = gold_beliefs(c);
  b[0][0].pop_back();
  CHECK_THROWS_AS(tally_beliefs(c, b), ValidationError);
  CHECK_THROWS_AS(AccuracyTally({"a"}).joint(), ValidationError);
}

TEST_CASE("geometric mean of six per-domain accuracies") {
  const std::vector<double> row_a{75.0, 26.2, 33.1, 48.7, 5.5, 54.1};
  const std::vector<double> row_b{75.5, 49.6, 67.4, 48.2, 19.8, 53.7};
  CHECK(std::abs(geometric_mean(row_a) - 31.3) <= 0.05);
  CHECK(std::abs(geometric_mean(row_b) - 48.5) <= 0.05);
  for (double x : {0.01, 0.5, 31.3, 1000.0}) {
    const std::vector<double> same{x, x, x};
    CHECK(geometric_mean(same) == doctest::Approx(x).epsilon(1e-14));
  }
  CHECK_THROWS_AS(geometric_mean(std::vector<double>{1.0, 0.0}), ValidationError);
  CHECK_THROWS_AS(geometric_mean(std::vector<double>{1.0, -2.0}), ValidationError);
  CHECK_THROWS_AS(geometric_mean(std::vector<double>{}), ValidationError);
}

TEST_CASE("geometric mean is symmetric and bounded by the arithmetic mean") {
  Rng rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> v(1 + rng.index(8));
    for (double& x : v) x = rng.uniform(0.001, 1.0);
    const double g = geometric_mean(v);
    const double a = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
    CHECK(g <= a * (1 + 1e-12));
    CHECK(g <= *std::max_element(v.begin(), v.end()) * (1 + 1e-12));
    rng.shuffle(v);
    CHECK(geometric_mean(v) == doctest::Approx(g).epsilon(1e-12));
  }
}

TEST_CASE("model evaluation is read-only and consistent") {
  const Corpus c = generate_synthetic(toy_spec("toy"), 40, 0.3, 2);
  RunConfig cfg = tiny_config();
  const CombinedOntology o = merge_ontologies({c.ontology}, "toy");
  const TrainingData data{{&c}, {&c}};
  const EnsembleModel model = train_ensemble(data, data, o, cfg, 2, 3);
  std::vector<std::string> prints;
  for (const auto& m : model.members) {
    prints.push_back(m.shared.fingerprint());
    for (const auto& [k, p] : m.slots) prints.push_back(p.fingerprint());
  }
  const std::string corpus_hash = fnv1a_hex(corpus_to_json(c).dump());

  const DomainResult r = evaluate_domain(model, c);
  const double joint = joint_goal_accuracy(model, c);
  CHECK(r.joint == joint);
  CHECK(r.domain == "toy");
  REQUIRE(r.slots.size() == 3);
  for (const auto& [slot, acc] : r.slots) {
    CHECK(acc == slot_accuracy(model, c, slot));
    CHECK(joint <= acc);
    CHECK(acc >= 0.0);
    CHECK(acc <= 1.0);
  }
  CHECK_THROWS_AS(slot_accuracy(model, c, "stars"), ValidationError);

  std::vector<std::string> after;
  for (const auto& m : model.members) {
    after.push_back(m.shared.fingerprint());
    for (const auto& [k, p] : m.slots) after.push_back(p.fingerprint());
  }
  CHECK(after == prints);
  CHECK(fnv1a_hex(corpus_to_json(c).dump()) == corpus_hash);

  // A domain the model never specialised falls back to the shared weights,
  // but a known domain with a different slot set is a mismatch.
  const Corpus unseen = generate_synthetic(parse_synth_spec(read_json_file(synth_data("hotel.json"))), 3, 0.0, 1);
  CHECK_NOTHROW(joint_goal_accuracy(model, unseen));
  const Corpus fewer{make_ontology("toy", {{"food", {"thai"}}}), {{"x", "toy", {make_turn({{"thai", 1.0}})}}}};
  CHECK_THROWS_AS(joint_goal_accuracy(model, fewer), ValidationError);
  CHECK_THROWS_AS(joint_goal_accuracy(EnsembleModel{}, c), ValidationError);
}

TEST_CASE("report CSV layout") {
  EvalReport report;
  report.domains.push_back({"restaurant", 120, 0.75, {{"food", 0.8}, {"area", 0.9}}});
  report.domains.push_back({"hotel", 80, 0.5, {{"stars", 0.625}}});
  const double g = report.geometric_mean_joint();
  CHECK(g == doctest::Approx(std::sqrt(0.75 * 0.5)));
  CHECK(report.to_csv() ==
        "domain,slot,metric,value,n_turns\n"
        "restaurant,,joint_goal_accuracy,75.0,120\n"
        "restaurant,food,slot_accuracy,80.0,120\n"
        "restaurant,area,slot_accuracy,90.0,120\n"
        "hotel,,joint_goal_accuracy,50.0,80\n"
        "hotel,stars,slot_accuracy,62.5,80\n"
        "all,,geometric_mean,61.2,200\n");
  report.domains[1].joint = 0.0;
  CHECK(std::isnan(report.geometric_mean_joint()));
  CHECK(report.to_csv().find("all,,geometric_mean,nan,200\n") != std::string::npos);
  CHECK(format_percent(0.3125) == "31.2");
  CHECK(format_percent(1.0) == "100.0");
}

TEST_CASE("learning curve grids are validated") {
  CHECK_NOTHROW(validate_grid({25, 50, 100, 200}, 200));
  CHECK_THROWS_AS(validate_grid({}, 10), ValidationError);
  CHECK_THROWS_AS(validate_grid({0, 5}, 10), ValidationError);
  CHECK_THROWS_AS(validate_grid({5, 5}, 10), ValidationError);
  CHECK_THROWS_AS(validate_grid({5, 3}, 10), ValidationError);
  CHECK_THROWS_AS(validate_grid({5, 11}, 10), ValidationError);
  const DomainSplit d = toy_split("toy", 20, 1);
  CHECK_THROWS_AS(run_learning_curve(d, {}, {5, 50}, tiny_config(), 1, {1}), ValidationError);
  CHECK_THROWS_AS(run_learning_curve(d, {}, {5}, tiny_config(), 1, {}), ValidationError);
  CHECK_THROWS_AS(run_learning_curve(d, {}, {5}, tiny_config(), 0, {1}), ValidationError);
}

TEST_CASE("nested subsets grow by inclusion") {
  const Corpus c = generate_synthetic(toy_spec("toy"), 200, 0.3, 4);
  const uint64_t seed = derive_seed(7, "curve/subset");
  std::set<std::string> prev;
  for (size_t n : {25, 50, 100, 200}) {
    const Corpus s = nested_subset(c, n, seed);
    std::set<std::string> ids;
    for (const auto& d : s.dialogs) ids.insert(d.dialog_id);
    CHECK(ids.size() == n);
    CHECK(std::includes(ids.begin(), ids.end(), prev.begin(), prev.end()));
    prev = ids;
  }
}

TEST_CASE("learning curve output has one line per grid point") {
  const DomainSplit fresh = toy_split("fresh", 60, 2);
  const std::vector<DomainSplit> ood{toy_split("old", 40, 3)};
  const LearningCurve curve = run_learning_curve(fresh, ood, {4, 8, 16, 32}, tiny_config(), 2, {1, 2});
  REQUIRE(curve.points.size() == 4);
  CHECK(curve.ensemble_k == 2);
  for (const auto& p : curve.points) {
    REQUIRE(p.in_domain_runs.size() == 2);
    REQUIRE(p.ood_runs.size() == 2);
    CHECK(p.in_domain == doctest::Approx((p.in_domain_runs[0] + p.in_domain_runs[1]) / 2));
    CHECK(p.ood == doctest::Approx((p.ood_runs[0] + p.ood_runs[1]) / 2));
    for (double a : {p.in_domain, p.ood}) {
      CHECK(a >= 0.0);
      CHECK(a <= 1.0);
    }
  }
  for (const std::string& dat : {curve.in_domain_dat(), curve.ood_dat()}) {
    std::istringstream in(dat);
    std::string line;
    std::vector<size_t> ns;
    while (std::getline(in, line)) {
      std::istringstream fields(line);
      size_t n;
      double pct;
      REQUIRE(static_cast<bool>(fields >> n >> pct));
      ns.push_back(n);
    }
    CHECK(ns == std::vector<size_t>{4, 8, 16, 32});
  }
  const std::string csv = curve.to_csv();
  CHECK(csv.rfind("n_dialogs,series,seed,joint_goal_accuracy\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 4 * (2 * 2 + 2));

  const LearningCurve again = run_learning_curve(fresh, ood, {4, 8, 16, 32}, tiny_config(), 2, {1, 2});
  CHECK(again.to_csv() == csv);
}
