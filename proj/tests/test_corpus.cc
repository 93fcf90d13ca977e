#include <algorithm>
#include <cstring>
#include <set>

#include "doctest.h"
#include "mdbt/corpus.h"
#include "mdbt/error.h"
#include "mdbt/rng.h"
#include "test_util.h"

using namespace mdbt;
using namespace mdbt::testing;
using nlohmann::json;

namespace {

Ontology restaurants() { return load_ontology(test_data("cambridge_restaurants.ontology.json")); }

Dialog dialog_with_labels(const std::string& id, const std::vector<std::map<std::string, std::string>>& labels) {
  Dialog d{id, "cambridge_restaurants", {}};
  for (const auto& l : labels) d.turns.push_back(make_turn({{"x", 1.0}}, l));
  return d;
}

Corpus numbered_corpus(size_t n) {
  Corpus c{restaurants(), {}};
  for (size_t i = 0; i < n; ++i) c.dialogs.push_back(dialog_with_labels("d" + std::to_string(i), {{}}));
  return c;
}

std::set<std::string> ids(const Corpus& c) {
  std::set<std::string> out;
  for (const auto& d : c.dialogs) out.insert(d.dialog_id);
  return out;
}

std::string validation_message(const Corpus& c) {
  try {
    validate_corpus(c);
  } catch (const ValidationError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("load_corpus parses the schema") {
  const Corpus c = load_corpus(test_data("tiny.corpus.json"), restaurants());
  REQUIRE(c.dialogs.size() == 2);
  const Dialog& d = c.dialogs[0];
  CHECK(d.dialog_id == "d1");
  REQUIRE(d.turns.size() == 3);
  CHECK(d.turns[0].asr.size() == 2);
  CHECK(d.turns[0].asr[0].score == 0.7);
  CHECK(d.turns[1].system_acts[0].act == "request");
  CHECK(d.turns[1].system_acts[0].slot == "area");
  CHECK_FALSE(d.turns[1].system_acts[0].value.has_value());
  CHECK(d.turns[2].system_acts[0].value == "north");
  CHECK(d.turns[2].turn_labels.at("food") == "indian");
  CHECK(c.dialogs[1].turns[0].turn_labels.empty());
}

TEST_CASE("empty dialog list is a valid corpus") {
  const Corpus c = parse_corpus(json::parse(R"({"domain":"cambridge_restaurants","dialogs":[]})"), restaurants());
  CHECK(c.dialogs.empty());
}

TEST_CASE("ASR scores survive save and load bit for bit") {
  Rng rng(5);
  Corpus c{restaurants(), {}};
  for (int i = 0; i < 20; ++i) {
    const double a = rng.uniform(0.0, 0.6), b = rng.uniform(0.0, 0.4);
    c.dialogs.push_back({"d" + std::to_string(i), "cambridge_restaurants", {make_turn({{"one", a}, {"two", b}})}});
  }
  TempDir dir("corpus");
  save_corpus(c, dir.path() / "c.json");
  const Corpus back = load_corpus(dir.path() / "c.json", c.ontology);
  REQUIRE(back.dialogs.size() == c.dialogs.size());
  for (size_t i = 0; i < c.dialogs.size(); ++i) {
    for (size_t h = 0; h < 2; ++h) {
      const double x = c.dialogs[i].turns[0].asr[h].score, y = back.dialogs[i].turns[0].asr[h].score;
      CHECK(std::memcmp(&x, &y, sizeof x) == 0);
    }
  }
  CHECK(back == c);
}

TEST_CASE("labels outside the ontology are rejected with dialog, turn and slot") {
  Corpus c{restaurants(), {dialog_with_labels("bad", {{}, {{"food", "klingon"}}})}};
  const std::string msg = validation_message(c);
  CHECK(msg.find("bad") != std::string::npos);
  CHECK(msg.find("turn 1") != std::string::npos);
  CHECK(msg.find("food") != std::string::npos);

  c.dialogs[0] = dialog_with_labels("bad", {{{"stars", "four"}}});
  CHECK(validation_message(c).find("stars") != std::string::npos);
}

TEST_CASE("turn invariants are enforced") {
  Corpus c{restaurants(), {dialog_with_labels("a", {{}})}};
  CHECK(validation_message(c).empty());

  c.dialogs[0].turns[0].asr.clear();
  CHECK_FALSE(validation_message(c).empty());

  c.dialogs[0].turns[0].asr = {{"x", 0.7}, {"y", 0.4}};
  CHECK_FALSE(validation_message(c).empty());

  c.dialogs[0].turns[0].asr = {{"x", 0.5}, {"y", 0.5 + 1e-7}};
  CHECK(validation_message(c).empty());

  c.dialogs[0].turns[0].asr = {{"x", -0.1}};
  CHECK_FALSE(validation_message(c).empty());

  c.dialogs[0].turns.clear();
  CHECK_FALSE(validation_message(c).empty());

  Corpus dup{restaurants(), {dialog_with_labels("a", {{}}), dialog_with_labels("a", {{}})}};
  CHECK(validation_message(dup).find("duplicate") != std::string::npos);

  Corpus other{restaurants(), {dialog_with_labels("a", {{}})}};
  other.dialogs[0].domain_name = "hotels";
  CHECK_FALSE(validation_message(other).empty());
}

TEST_CASE("malformed corpus files report the file") {
  TempDir dir("corpus_bad");
  write_text_file(dir.path() / "c.json", R"({"domain":"cambridge_restaurants","dialogs":[{"dialog_id":"x","turns":[{"asr":"no"}]}]})");
  try {
    load_corpus(dir.path() / "c.json", restaurants());
    FAIL("expected an error");
  } catch (const ValidationError& e) {
    const std::string what = e.what();
    CHECK(what.find("c.json") != std::string::npos);
    CHECK(what.find("turn 0") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_corpus(json::parse(R"({"domain":"hotels","dialogs":[]})"), restaurants()), ValidationError);
}

TEST_CASE("goals accumulate with the latest mention winning") {
  const Ontology o = restaurants();
  const auto g = accumulate_goals(dialog_with_labels("d", {{{"food", "chinese"}}, {}, {{"food", "indian"}}}), o);
  REQUIRE(g.size() == 3);
  CHECK(g.turns[0].at("food") == "chinese");
  CHECK(g.turns[1].at("food") == "chinese");
  CHECK(g.turns[2].at("food") == "indian");
  CHECK_FALSE(g.turns[2].at("area").has_value());
  CHECK(gold_indices(g, *o.find_slot("food")) == std::vector<int>{0, 0, 1});
  CHECK(gold_indices(g, *o.find_slot("area")) == std::vector<int>{5, 5, 5});
}

TEST_CASE("no labels means no constraint throughout") {
  const Ontology o = restaurants();
  const auto g = accumulate_goals(dialog_with_labels("d", {{}, {}, {}}), o);
  for (const auto& turn : g.turns) {
    CHECK(turn.size() == o.slots.size());
    for (const auto& [slot, v] : turn) CHECK_FALSE(v.has_value());
  }
}

TEST_CASE("constraints on different slots combine") {
  const auto g =
      accumulate_goals(dialog_with_labels("d", {{{"area", "north"}}, {{"food", "thai"}}}), restaurants());
  CHECK(g.turns[1].at("area") == "north");
  CHECK(g.turns[1].at("food") == "thai");
  CHECK_FALSE(g.turns[0].at("food").has_value());
}

TEST_CASE("accumulated goals never return to no constraint") {
  const Ontology o = restaurants();
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::map<std::string, std::string>> labels(1 + rng.index(8));
    for (auto& l : labels) {
      for (const auto& s : o.slots) {
        if (rng.bernoulli(0.3)) l[s.name] = rng.pick(s.values);
      }
    }
    const auto g = accumulate_goals(dialog_with_labels("d", labels), o);
    CHECK(g.size() == labels.size());
    for (size_t t = 1; t < g.size(); ++t) {
      for (const auto& s : o.slots) {
        if (g.turns[t - 1].at(s.name)) CHECK(g.turns[t].at(s.name).has_value());
      }
    }
  }
}

TEST_CASE("split sizes are rounded shares") {
  const Corpus c = numbered_corpus(100);
  const CorpusSplit s = split_corpus(c, 0.8, 0.1, 7);
  CHECK(s.train.dialogs.size() == 80);
  CHECK(s.dev.dialogs.size() == 10);
  CHECK(s.test.dialogs.size() == 10);
  const CorpusSplit again = split_corpus(c, 0.8, 0.1, 7);
  CHECK(ids(again.train) == ids(s.train));
  CHECK(ids(again.dev) == ids(s.dev));
  CHECK(ids(again.test) == ids(s.test));
  CHECK(ids(split_corpus(c, 0.8, 0.1, 8).train) != ids(s.train));
}

TEST_CASE("split partitions the dialogs") {
  for (size_t n : {0, 1, 7, 33, 250}) {
    const Corpus c = numbered_corpus(n);
    for (uint64_t seed = 0; seed < 5; ++seed) {
      const CorpusSplit s = split_corpus(c, 0.6, 0.25, seed);
      std::set<std::string> all;
      size_t total = 0;
      for (const Corpus* part : {&s.train, &s.dev, &s.test}) {
        total += part->dialogs.size();
        for (const auto& id : ids(*part)) all.insert(id);
        CHECK(std::is_sorted(part->dialogs.begin(), part->dialogs.end(), [&](const Dialog& a, const Dialog& b) {
          return std::stoi(a.dialog_id.substr(1)) < std::stoi(b.dialog_id.substr(1));
        }));
      }
      CHECK(total == n);
      CHECK(all == ids(c));
    }
  }
}

TEST_CASE("split rejects invalid fractions") {
  const Corpus c = numbered_corpus(10);
  CHECK_THROWS_AS(split_corpus(c, 0.9, 0.2, 1), ValidationError);
  CHECK_THROWS_AS(split_corpus(c, 0.0, 0.2, 1), ValidationError);
  CHECK_THROWS_AS(split_corpus(c, 0.5, -0.1, 1), ValidationError);
}

TEST_CASE("nested subsets grow monotonically") {
  const Corpus c = numbered_corpus(200);
  const Corpus s25 = nested_subset(c, 25, 3), s50 = nested_subset(c, 50, 3), s200 = nested_subset(c, 200, 3);
  CHECK(s25.dialogs.size() == 25);
  const auto a = ids(s25), b = ids(s50);
  CHECK(std::includes(b.begin(), b.end(), a.begin(), a.end()));
  CHECK(ids(s200) == ids(c));
  CHECK_THROWS_AS(nested_subset(c, 201, 3), ValidationError);
}

TEST_CASE("holdout split is a seeded partition") {
  const Corpus c = numbered_corpus(40);
  const auto [rest, hold] = holdout_split(c, 0.25, 9);
  CHECK(hold.dialogs.size() == 10);
  CHECK(rest.dialogs.size() == 30);
  auto all = ids(rest);
  for (const auto& id : ids(hold)) CHECK(all.insert(id).second);
  CHECK(all == ids(c));
  CHECK_THROWS_AS(holdout_split(c, 1.0, 9), ValidationError);
}
