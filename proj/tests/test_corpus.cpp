// SPDX-License-Identifier: Apache-2.0
#include <catch_amalgamated.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "metanlg/corpus/encoding.hpp"
#include "metanlg/corpus/io.hpp"
#include "metanlg/corpus/sampler.hpp"
#include "metanlg/corpus/split.hpp"
#include "metanlg/corpus/synthetic.hpp"

using namespace metanlg;
using namespace metanlg::corpus;

namespace {

ActEntry entry(std::string domain, std::string act, std::vector<std::pair<std::string, std::string>> slots) {
  ActEntry e{std::move(domain), std::move(act), {}};
  for (auto& [k, v] : slots) e.slots.push_back({k, v.empty() ? std::nullopt : std::optional<std::string>(v)});
  return e;
}

Schema tiny_schema() {
  Schema s;
  s.domains = {"restaurant", "train"};
  s.acts = {"inform", "request"};
  s.slots["restaurant"] = {"name", "food"};
  s.slots["train"] = {"time", "ticket", "leave", "arrive"};
  return s;
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("metanlg_test_" + name);
}

std::vector<CorpusExample> synthetic_examples(const SynthSpec& spec, std::uint64_t seed) {
  SyntheticCorpus c = gen_synthetic(spec, seed);
  return build_corpus(c.records, c.schema).examples;
}

std::set<std::size_t> ids(const std::vector<CorpusExample>& v) {
  std::set<std::size_t> out;
  for (const auto& e : v) out.insert(e.id);
  return out;
}

}  // namespace

TEST_CASE("tokenizer lowercases and splits punctuation", "[corpus]") {
  CHECK(tokenize("Hello, World!") == std::vector<std::string>{"hello", ",", "world", "!"});
  CHECK(tokenize("book [slot-train-leave] now.") ==
        std::vector<std::string>{"book", "[slot-train-leave]", "now", "."});
  CHECK(tokenize("   ").empty());
}

TEST_CASE("single value substitution", "[corpus][delex]") {
  DialogueAct da{{entry("restaurant", "inform", {{"food", "British"}})}};
  DelexResult r = delexicalize("It serves British food", da);
  CHECK(r.tokens == std::vector<std::string>{"it", "serves", "[slot-restaurant-food]", "food"});
  CHECK(r.aligned);
}

TEST_CASE("repeated value flags the example", "[corpus][delex]") {
  DialogueAct da{{entry("restaurant", "inform", {{"food", "british"}})}};
  DelexResult r = delexicalize("british food , very british", da);
  CHECK(r.placeholder_counts["[slot-restaurant-food]"] == 2);
  CHECK_FALSE(r.aligned);
}

TEST_CASE("travel time and ticket reference", "[corpus][delex]") {
  DialogueAct da{{entry("train", "inform", {{"time", "79 minutes"}, {"ticket", "17.60 pounds"}})}};
  DelexResult r = delexicalize("The travel time is 79 minutes and the cost is 17.60 pounds", da);
  CHECK(r.aligned);
  CHECK(r.placeholder_counts["[slot-train-time]"] == 1);
  CHECK(r.placeholder_counts["[slot-train-ticket]"] == 1);
  CHECK(r.tokens == std::vector<std::string>{"the", "travel", "time", "is", "[slot-train-time]", "and", "the",
                                             "cost", "is", "[slot-train-ticket]"});
}

TEST_CASE("longest match wins and word boundaries are respected", "[corpus][delex]") {
  DialogueAct da{{entry("restaurant", "inform", {{"name", "the oak"}, {"food", "oak bistro fare"}})}};
  DelexResult r = delexicalize("the oak serves oak bistro fare", da);
  CHECK(r.aligned);
  CHECK(r.tokens == std::vector<std::string>{"[slot-restaurant-name]", "serves", "[slot-restaurant-food]"});

  DialogueAct inner{{entry("restaurant", "inform", {{"food", "thai"}})}};
  DelexResult no = delexicalize("thailand is far", inner);
  CHECK_FALSE(no.aligned);
  CHECK(no.tokens.front() == "thailand");
}

TEST_CASE("missing value flags the example", "[corpus][delex]") {
  DialogueAct da{{entry("restaurant", "inform", {{"food", "korean"}})}};
  CHECK_FALSE(delexicalize("no match here", da).aligned);
  DialogueAct req{{entry("restaurant", "request", {{"food", ""}})}};
  CHECK(delexicalize("what food do you want ?", req).aligned);
}

TEST_CASE("relexicalization inverts delexicalization on aligned examples", "[corpus][delex][property]") {
  SynthSpec spec;
  spec.examples = 300;
  SyntheticCorpus c = gen_synthetic(spec, 5);
  for (const auto& [da, text] : c.records) {
    DelexResult r = delexicalize(text, da);
    REQUIRE(r.aligned);
    CHECK(tokenize(relexicalize(r.tokens, da)) == tokenize(text));
  }
}

TEST_CASE("schema validation", "[corpus]") {
  Schema s = tiny_schema();
  CHECK_NOTHROW(validate(DialogueAct{{entry("train", "inform", {{"time", "x"}})}}, s));
  CHECK_THROWS_AS(validate(DialogueAct{}, s), CorpusError);
  CHECK_THROWS_AS(validate(DialogueAct{{entry("hotel", "inform", {})}}, s), CorpusError);
  CHECK_THROWS_AS(validate(DialogueAct{{entry("train", "greet", {})}}, s), CorpusError);
  CHECK_THROWS_AS(validate(DialogueAct{{entry("train", "inform", {{"food", "x"}})}}, s), CorpusError);
}

TEST_CASE("loading corpus files", "[corpus][io]") {
  const Schema schema = tiny_schema();
  const auto path = temp_file("load.json");

  SECTION("empty record list") {
    std::ofstream(path) << R"({"format": "meta-nlg-corpus-v1", "records": []})";
    LoadedCorpus c = load_corpus(path, schema);
    CHECK(c.examples.empty());
    CHECK(c.non_aligned == 0);
  }
  SECTION("one inform record") {
    std::ofstream(path) << R"({"format": "meta-nlg-corpus-v1", "records": [
      {"da": [{"domain": "restaurant", "act": "inform",
               "slots": [["name", "The Oak Bistro"], ["food", "British"]]}],
       "text": "The Oak Bistro serves British food."}]})";
    LoadedCorpus c = load_corpus(path, schema);
    REQUIRE(c.examples.size() == 1);
    const auto& t = c.examples[0].tokens;
    CHECK(std::count_if(t.begin(), t.end(), is_placeholder) == 2);
    CHECK(c.examples[0].domains == std::vector<std::string>{"restaurant"});
    CHECK(c.examples[0].act_types == std::vector<std::string>{"inform"});
  }
  SECTION("bare list and null values") {
    std::ofstream(path) << R"([{"da": [{"domain": "train", "act": "request", "slots": [["leave", null]]}],
                               "text": "when do you want to leave?"}])";
    LoadedCorpus c = load_corpus(path, schema);
    REQUIRE(c.examples.size() == 1);
    CHECK_FALSE(c.examples[0].da.acts[0].slots[0].value.has_value());
  }
  SECTION("non-aligned examples are counted, not dropped") {
    std::ofstream(path) << R"({"format": "meta-nlg-corpus-v1", "records": [
      {"da": [{"domain": "restaurant", "act": "inform", "slots": [["food", "thai"]]}], "text": "nothing"}]})";
    LoadedCorpus c = load_corpus(path, schema);
    CHECK(c.examples.size() == 1);
    CHECK(c.non_aligned == 1);
  }
  SECTION("errors") {
    std::ofstream(path) << "{ not json";
    CHECK_THROWS_AS(load_corpus(path, schema), CorpusError);
    std::ofstream(path) << R"({"format": "other", "records": []})";
    CHECK_THROWS_AS(load_corpus(path, schema), CorpusError);
    std::ofstream(path) << R"({"format": "meta-nlg-corpus-v1", "records": [
      {"da": [{"domain": "spa", "act": "inform", "slots": []}], "text": "x"}]})";
    CHECK_THROWS_AS(load_corpus(path, schema), CorpusError);
    CHECK_THROWS_AS(load_corpus(temp_file("does_not_exist.json"), schema), CorpusError);
  }
  std::filesystem::remove(path);
}

TEST_CASE("synthetic corpus round-trips through a file", "[corpus][io]") {
  SynthSpec spec;
  spec.examples = 1000;
  SyntheticCorpus c = gen_synthetic(spec, 11);
  const auto path = temp_file("roundtrip.json");
  {
    std::ofstream out(path, std::ios::binary);
    out << synthetic_to_string(c);
  }
  CorpusFile f = read_corpus_file(path);
  REQUIRE(f.schema.has_value());
  CHECK(*f.schema == c.schema);
  LoadedCorpus first = build_corpus(f.records, *f.schema);
  save_corpus(path, first.examples, &c.schema);
  LoadedCorpus second = load_corpus(path, c.schema);
  CHECK(first.examples == second.examples);
  CHECK(first.examples.size() == 1000);

  const auto schema_path = temp_file("schema.json");
  save_schema(schema_path, c.schema);
  CHECK(load_schema(schema_path) == c.schema);
  std::filesystem::remove(path);
  std::filesystem::remove(schema_path);
}

TEST_CASE("synthetic generator", "[corpus][synthetic]") {
  SECTION("default synthetic settings are fully aligned and deterministic") {
    SynthSpec spec;
    SyntheticCorpus a = gen_synthetic(spec, 3);
    SyntheticCorpus b = gen_synthetic(spec, 3);
    CHECK(synthetic_to_string(a) == synthetic_to_string(b));
    CHECK(a.records.size() == 2000);
    CHECK(a.schema.domains.size() == 5);
    CHECK(a.schema.acts.size() == 8);
    std::set<std::string> slot_names;
    for (const auto& [d, list] : a.schema.slots) slot_names.insert(list.begin(), list.end());
    CHECK(slot_names.size() == 20);
    LoadedCorpus c = build_corpus(a.records, a.schema);
    CHECK(c.non_aligned == 0);
    CHECK(synthetic_to_string(gen_synthetic(spec, 4)) != synthetic_to_string(a));
  }
  SECTION("single domain, act, slot and template") {
    SynthSpec spec{1, 1, 1, 1, 50, 6};
    SyntheticCorpus c = gen_synthetic(spec, 1);
    std::set<std::vector<std::string>> patterns;
    for (const auto& ex : build_corpus(c.records, c.schema).examples) {
      CHECK(ex.aligned);
      CHECK(ex.da.acts.size() == 1);
      patterns.insert(ex.tokens);
    }
    CHECK(patterns.size() == 1);
  }
  SECTION("held-out domain-specific slot never reaches the source pool") {
    SynthSpec spec{3, 4, 3, 2, 600, 6};
    SyntheticCorpus c = gen_synthetic(spec, 9);
    for (const auto& [d, list] : c.schema.slots) CHECK(list.size() == 1);
    auto examples = build_corpus(c.records, c.schema).examples;
    for (const std::string& target : c.schema.domains) {
      const std::string held = placeholder(target, c.schema.slots.at(target)[0]);
      Split s = make_split(examples, SplitSpec{SplitMode::Domain, target, 20, 20, 0}, 1);
      for (const auto& ex : s.source) {
        CHECK(std::find(ex.tokens.begin(), ex.tokens.end(), held) == ex.tokens.end());
        for (const auto& a : ex.da.acts) CHECK(a.domain != target);
      }
    }
  }
  SECTION("zero counts are rejected") {
    CHECK_THROWS_AS(gen_synthetic(SynthSpec{0, 1, 1, 1, 1, 1}, 1), CorpusError);
  }
}

TEST_CASE("DA encoding", "[corpus][encoding]") {
  Schema s = tiny_schema();
  DAEncoder enc(s);
  CHECK(enc.dim() == 2 + 6);
  NumericArray v = enc.encode(DialogueAct{{entry("train", "inform", {{"time", "x"}}),
                                           entry("restaurant", "request", {{"food", ""}})}});
  CHECK(v.rows() == 1);
  CHECK(v.values()[0] == 1.0);  // inform
  CHECK(v.values()[1] == 1.0);  // request
  CHECK(v.values()[2 + 1] == 1.0);  // restaurant/food
  CHECK(v.values()[2 + 2] == 1.0);  // train/time
  double sum = 0;
  for (double x : v.values()) sum += x;
  CHECK(sum == 4.0);
  CHECK_THROWS_AS(enc.encode(DialogueAct{}), CorpusError);
  CHECK_THROWS_AS(enc.encode(DialogueAct{{entry("train", "inform", {{"food", "x"}})}}), CorpusError);
}

TEST_CASE("leave-one-out split", "[corpus][split]") {
  SynthSpec spec;
  auto corpus = synthetic_examples(spec, 21);

  SECTION("missing target label") {
    CHECK_THROWS_AS(make_split(corpus, SplitSpec{SplitMode::Domain, "spa", 10, 10, 0}, 1), CorpusError);
  }
  SECTION("too few target examples") {
    SynthSpec small{2, 1, 2, 1, 10, 3};
    auto tiny = synthetic_examples(small, 2);
    CHECK_THROWS_AS(make_split(tiny, SplitSpec{SplitMode::Domain, "restaurant", 20, 2, 0}, 1), CorpusError);
  }
  SECTION("set algebra and determinism") {
    for (SplitMode mode : {SplitMode::Domain, SplitMode::ActType}) {
      const std::string target = mode == SplitMode::Domain ? "hotel" : "inform";
      SplitSpec sp{mode, target, 50, 40, 0};
      Split a = make_split(corpus, sp, 77);
      Split b = make_split(corpus, sp, 77);
      CHECK(a.adaptation == b.adaptation);
      CHECK(a.validation == b.validation);
      CHECK(a.test == b.test);

      std::set<std::size_t> target_ids;
      std::set<std::size_t> source_ids;
      for (const auto& ex : corpus) (has_label(ex, mode, target) ? target_ids : source_ids).insert(ex.id);

      auto ad = ids(a.adaptation), va = ids(a.validation), te = ids(a.test), src = ids(a.source);
      CHECK(ad.size() == 50);
      CHECK(va.size() == 40);
      CHECK(a.target_rest.empty());
      std::set<std::size_t> all;
      for (const auto* part : {&ad, &va, &te}) all.insert(part->begin(), part->end());
      CHECK(all == target_ids);
      CHECK(all.size() == ad.size() + va.size() + te.size());
      CHECK(src == source_ids);
      for (std::size_t id : te) {
        CHECK_FALSE(src.count(id));
        CHECK_FALSE(ad.count(id));
        CHECK_FALSE(va.count(id));
      }
      Split c = make_split(corpus, sp, 78);
      CHECK(c.adaptation != a.adaptation);
    }
  }
  SECTION("bounded test size keeps the rest aside") {
    Split s = make_split(corpus, SplitSpec{SplitMode::Domain, "train", 30, 30, 40}, 5);
    CHECK(s.test.size() == 40);
    CHECK(!s.target_rest.empty());
  }
}

TEST_CASE("meta task sampling", "[corpus][sampler]") {
  // 400 hotel examples and 399 taxi examples, single-domain.
  std::vector<CorpusExample> pool;
  auto add = [&](const std::string& domain, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      CorpusExample ex = make_example(pool.size(), DialogueAct{{entry(domain, "inform", {})}}, "x");
      pool.push_back(ex);
    }
  };
  add("hotel", 400);
  add("taxi", 399);

  SECTION("exact fit partitions the modality") {
    Rng rng(1);
    MetaTask t = sample_meta_task(pool, SplitMode::Domain, "hotel", 200, rng);
    std::set<std::size_t> s(t.support.begin(), t.support.end()), q(t.query.begin(), t.query.end());
    CHECK(s.size() == 200);
    CHECK(q.size() == 200);
    std::set<std::size_t> all = s;
    all.insert(q.begin(), q.end());
    CHECK(all.size() == 400);
    for (std::size_t i : all) CHECK(has_label(pool[i], SplitMode::Domain, "hotel"));
  }
  SECTION("one short is an error") {
    Rng rng(1);
    CHECK_THROWS_AS(sample_meta_task(pool, SplitMode::Domain, "taxi", 200, rng), CorpusError);
  }
  SECTION("sampler shrinks small modalities") {
    TaskSampler sampler(pool, SplitMode::Domain, 200, 3);
    CHECK(sampler.half_size("hotel") == 200);
    CHECK(sampler.half_size("taxi") == 199);
  }
}

TEST_CASE("task sampler invariants on the synthetic corpus", "[corpus][sampler][property]") {
  auto corpus = synthetic_examples(SynthSpec{}, 13);
  Split split = make_split(corpus, SplitSpec{SplitMode::Domain, "attraction", 50, 200, 0}, 1);

  for (SplitMode mode : {SplitMode::Domain, SplitMode::ActType}) {
    TaskSampler a(split.source, mode, 20, 99);
    TaskSampler b(split.source, mode, 20, 99);
    std::map<std::string, int> seen;
    for (int i = 0; i < 1000; ++i) {
      MetaTask t = a.next();
      MetaTask u = b.next();
      REQUIRE(t.support == u.support);
      REQUIRE(t.query == u.query);
      ++seen[t.modality];
      std::set<std::size_t> s(t.support.begin(), t.support.end());
      CHECK(s.size() == t.support.size());
      CHECK(t.support.size() == t.query.size());
      CHECK(t.support.size() == a.half_size(t.modality));
      for (std::size_t q : t.query) CHECK_FALSE(s.count(q));
      for (std::size_t i2 : t.support) CHECK(has_label(split.source[i2], mode, t.modality));
      for (std::size_t i2 : t.query) CHECK(has_label(split.source[i2], mode, t.modality));
    }
    for (const std::string& m : a.modalities()) {
      if (modality_members(split.source, mode, m).size() >= 40) CHECK(seen[m] > 0);
    }
    if (mode == SplitMode::Domain) CHECK_FALSE(seen.count("attraction"));
  }
}
