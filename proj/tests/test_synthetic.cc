#include <set>

#include "doctest.h"
#include "mdbt/error.h"
#include "mdbt/synthetic.h"
#include "test_util.h"

using namespace mdbt;
using namespace mdbt::testing;
using nlohmann::json;

namespace {

SynthDomainSpec toy() { return load_synth_spec(test_data("toy.synth.json")); }

// Values named in a text, found by scanning its tokens; toy values are
// single distinct tokens.
std::multiset<std::string> values_in(const std::string& text, const Ontology& o) {
  std::multiset<std::string> out;
  for (const auto& tok : tokenize(text)) {
    for (const auto& s : o.slots) {
      for (const auto& v : s.values) {
        if (tok == v) out.insert(v);
      }
    }
  }
  return out;
}

std::multiset<std::string> label_values(const Turn& t) {
  std::multiset<std::string> out;
  for (const auto& [slot, value] : t.turn_labels) out.insert(value);
  return out;
}

}  // namespace

TEST_CASE("templates parse into literal and placeholder pieces") {
  const Ontology o = toy().ontology;
  const auto generic = parse_template("the {slot} should be {value}", o);
  CHECK(generic.arity() == 1);
  CHECK(generic.groups[0].kind == UtteranceTemplate::Kind::kGeneric);
  const auto bound = parse_template("somewhere {area}", o);
  REQUIRE(bound.arity() == 1);
  CHECK(bound.groups[0].bound_slot == "area");
  CHECK(parse_template("{value} and {value2}", o).arity() == 2);
  CHECK(parse_template("hello there", o).arity() == 0);
}

TEST_CASE("template errors") {
  const Ontology o = toy().ontology;
  CHECK_THROWS_AS(parse_template("a {stars} hotel", o), ValidationError);
  CHECK_THROWS_AS(parse_template("i want {value", o), ValidationError);
  CHECK_THROWS_AS(parse_template("{slot} only", o), ValidationError);
  CHECK_THROWS_AS(parse_template("{value2} alone", o), ValidationError);
  CHECK_THROWS_AS(parse_template("{value} in {area}", o), ValidationError);

  json j = read_json_file(test_data("toy.synth.json"));
  j["templates"].push_back("a {stars} hotel");
  try {
    parse_synth_spec(j);
    FAIL("expected an error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("stars") != std::string::npos);
  }
  j["templates"] = {"i want {value}"};
  CHECK_THROWS_AS(parse_synth_spec(j), ValidationError);
}

TEST_CASE("noiseless dialogs verbalise the true labels with a single certain hypothesis") {
  const SynthDomainSpec spec = toy();
  const Corpus c = generate_synthetic(spec, 200, 0.0, 3);
  CHECK(c.dialogs.size() == 200);
  validate_corpus(c);
  for (const auto& d : c.dialogs) {
    for (const auto& t : d.turns) {
      REQUIRE(t.asr.size() == 1);
      CHECK(t.asr[0].score == 1.0);
      CHECK(values_in(t.asr[0].text, spec.ontology) == label_values(t));
    }
  }
}

TEST_CASE("generation is deterministic per seed") {
  const SynthDomainSpec spec = toy();
  const std::string a = corpus_to_json(generate_synthetic(spec, 100, 0.3, 42)).dump();
  const std::string b = corpus_to_json(generate_synthetic(spec, 100, 0.3, 42)).dump();
  CHECK(a == b);
  CHECK(a != corpus_to_json(generate_synthetic(spec, 100, 0.3, 43)).dump());
}

TEST_CASE("dialog shape and label validity") {
  const SynthDomainSpec spec = toy();
  const Corpus c = generate_synthetic(spec, 500, 0.3, 9);
  validate_corpus(c);
  std::set<size_t> lengths;
  for (const auto& d : c.dialogs) {
    CHECK(d.turns.size() >= 2);
    CHECK(d.turns.size() <= 6);
    lengths.insert(d.turns.size());
    CHECK(d.turns[0].system_acts.at(0).act == "welcomemsg");
    for (const auto& t : d.turns) {
      CHECK(t.turn_labels.size() <= 2);
      double total = 0.0;
      for (const auto& h : t.asr) total += h.score;
      CHECK(total <= 1.0 + 1e-6);
      for (const auto& [slot, value] : t.turn_labels) CHECK(spec.ontology.find_slot(slot)->value_index(value));
    }
  }
  CHECK(lengths.size() == 5);
}

TEST_CASE("the top hypothesis is correct at the rate set by the noise level") {
  const SynthDomainSpec spec = toy();
  const Corpus c = generate_synthetic(spec, 1000, 0.3, 17);
  size_t turns = 0, correct = 0;
  for (const auto& d : c.dialogs) {
    for (const auto& t : d.turns) {
      ++turns;
      if (values_in(t.asr[0].text, spec.ontology) == label_values(t)) ++correct;
    }
  }
  const double rate = static_cast<double>(correct) / static_cast<double>(turns);
  CHECK(std::abs(rate - 0.7) <= 0.03);
}

TEST_CASE("confusions replace a value with another value of the same slot") {
  const SynthDomainSpec spec = toy();
  const Corpus c = generate_synthetic(spec, 300, 1.0, 5);
  for (const auto& d : c.dialogs) {
    for (const auto& t : d.turns) {
      if (t.turn_labels.size() != 1) continue;
      const auto& [slot, value] = *t.turn_labels.begin();
      const auto said = values_in(t.asr[0].text, spec.ontology);
      REQUIRE(said.size() == 1);
      CHECK(*said.begin() != value);
      CHECK(spec.ontology.find_slot(slot)->value_index(*said.begin()).has_value());
    }
  }
}

TEST_CASE("shipped synthetic domains share their generic templates") {
  std::vector<std::set<std::string>> generic;
  for (const char* name : {"restaurant.json", "hotel.json", "train.json"}) {
    const SynthDomainSpec spec = load_synth_spec(synth_data(name));
    std::set<std::string> g;
    for (const auto& t : spec.templates) {
      if (t.arity() == 0 || t.groups[0].kind == UtteranceTemplate::Kind::kGeneric) g.insert(t.source);
    }
    CHECK(g.size() >= 20);
    generic.push_back(g);
    validate_corpus(generate_synthetic(spec, 50, 0.3, 1));
  }
  CHECK(generic[0] == generic[1]);
  CHECK(generic[1] == generic[2]);
}

TEST_CASE("noise outside [0,1] is rejected") {
  CHECK_THROWS_AS(generate_synthetic(toy(), 5, 1.5, 1), ValidationError);
  CHECK_THROWS_AS(generate_synthetic(toy(), 5, -0.1, 1), ValidationError);
}
