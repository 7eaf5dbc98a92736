// SPDX-License-Identifier: Apache-2.0
#include <catch_amalgamated.hpp>

#include <algorithm>

#include "bleu_oracle.hpp"
#include "metanlg/corpus/synthetic.hpp"
#include "metanlg/generator/dataset.hpp"
#include "metanlg/metrics/evaluate.hpp"
#include "metanlg/metrics/report.hpp"
#include "metanlg/random.hpp"

using namespace metanlg;
using namespace metanlg::metrics;

namespace {

Tokens random_sentence(Rng& rng, std::size_t vocab, std::size_t min_len, std::size_t max_len) {
  Tokens out;
  const std::size_t len = min_len + rng.below(max_len - min_len + 1);
  for (std::size_t i = 0; i < len; ++i) out.push_back("w" + std::to_string(rng.below(vocab)));
  return out;
}

corpus::DialogueAct da_with(const std::vector<std::string>& slots, const std::string& domain = "train") {
  corpus::ActEntry e{domain, "inform", {}};
  for (const auto& s : slots) e.slots.push_back({s, std::string("v-") + s});
  return corpus::DialogueAct{{e}};
}

}  // namespace

TEST_CASE("bleu4 limits", "[metrics][bleu]") {
  std::vector<Tokens> c{{"the", "cat", "sat", "on", "the", "mat"}, {"a", "b", "c", "d"}};
  CHECK(bleu4(c, c) == 1.0);
  CHECK(bleu4({{"x", "y", "z", "w"}}, {{"a", "b", "c", "d"}}) == 0.0);
  CHECK(bleu4({{"a", "b", "c"}}, {{"a", "b", "c"}}) == 0.0);  // no 4-grams at all
  CHECK(bleu4({{}}, {{"a"}}) == 0.0);
  CHECK_THROWS_AS(bleu4({}, {}), Error);
  CHECK_THROWS_AS(bleu4({{"a"}}, {}), Error);
}

TEST_CASE("bleu4 hand-computed case", "[metrics][bleu]") {
  // Candidate: a b c d e ; reference: a b c d f g
  // p1 = 4/5, p2 = 3/4, p3 = 2/3, p4 = 1/2; BP = exp(1 - 6/5).
  const double expect = std::exp(1.0 - 6.0 / 5.0) * std::pow(0.8 * 0.75 * (2.0 / 3.0) * 0.5, 0.25);
  CHECK(std::abs(bleu4({{"a", "b", "c", "d", "e"}}, {{"a", "b", "c", "d", "f", "g"}}) - expect) < 1e-15);
}

TEST_CASE("bleu4 equals the brute-force oracle", "[metrics][bleu][property]") {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(5);
    std::vector<Tokens> c, r;
    for (std::size_t i = 0; i < n; ++i) {
      r.push_back(random_sentence(rng, 6, 4, 12));
      Tokens cand = r.back();
      // Perturb a copy of the reference so higher-order matches exist.
      for (auto& t : cand)
        if (rng.bernoulli(0.3)) t = "w" + std::to_string(rng.below(6));
      if (rng.bernoulli(0.3)) cand.resize(cand.size() - rng.below(cand.size() / 2 + 1));
      c.push_back(cand);
    }
    const double got = bleu4(c, r);
    const double want = testing_support::brute_bleu4(c, r);
    CHECK(std::abs(got - want) <= 1e-12);
    CHECK(got >= 0.0);
    CHECK(got <= 1.0);

    // Pair order does not matter.
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    rng.shuffle(std::span<std::size_t>(perm));
    std::vector<Tokens> pc, pr;
    for (std::size_t i : perm) {
      pc.push_back(c[i]);
      pr.push_back(r[i]);
    }
    CHECK(std::abs(bleu4(pc, pr) - got) <= 1e-12);
  }
}

TEST_CASE("slot error rate", "[metrics][err]") {
  const std::string time = corpus::placeholder("train", "time");
  const std::string ticket = corpus::placeholder("train", "ticket");
  const std::string leave = corpus::placeholder("train", "leave");
  const std::string arrive = corpus::placeholder("train", "arrive");

  SECTION("both placeholders present once") {
    SlotErrors e = slot_errors({"it", "takes", time, "and", "costs", ticket}, da_with({"time", "ticket"}));
    CHECK(e.missing == 0);
    CHECK(e.redundant == 0);
    CHECK(e.err() == 0.0);
  }
  SECTION("missed ticket and time, redundant leave and arrive") {
    SlotErrors e = slot_errors({"leaves", leave, "arrives", arrive}, da_with({"ticket", "time"}));
    CHECK(e.missing == 2);
    CHECK(e.redundant == 2);
    CHECK(e.total == 2);
    CHECK(e.err() == 2.0);
  }
  SECTION("one missing, one foreign over three slots") {
    SlotErrors e = slot_errors({time, ticket, arrive}, da_with({"time", "ticket", "leave"}));
    CHECK(e.err() == 2.0 / 3.0);
  }
  SECTION("valueless acts carry no slots") {
    corpus::DialogueAct req{{corpus::ActEntry{"train", "reqmore", {}}}};
    CHECK(slot_error_rate({"anything", "else", "?"}, req) == 0.0);
    CHECK(slot_error_rate({time}, req) == 1.0);
    corpus::DialogueAct ask{{corpus::ActEntry{"train", "request", {{"leave", std::nullopt}}}}};
    CHECK(slot_errors({"when", "?"}, ask).total == 0);
  }
  SECTION("duplicates count as redundant") {
    SlotErrors e = slot_errors({time, time, ticket}, da_with({"time", "ticket"}));
    CHECK(e.redundant == 1);
    CHECK(e.err() == 0.5);
  }
}

TEST_CASE("slot error counts match hand arithmetic on perturbations", "[metrics][err][property]") {
  Rng rng(9);
  const std::vector<std::string> names{"a", "b", "c", "d", "e", "f"};
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::string> slots;
    for (const auto& n : names)
      if (rng.bernoulli(0.5)) slots.push_back(n);
    // Keep each DA slot with p 0.6 and add foreign placeholders.
    Tokens gen{"w"};
    long missing = 0, redundant = 0;
    for (const auto& s : slots) {
      if (rng.bernoulli(0.6)) {
        gen.push_back(corpus::placeholder("train", s));
      } else {
        ++missing;
      }
    }
    const long foreign = static_cast<long>(rng.below(3));
    for (long k = 0; k < foreign; ++k) gen.push_back(corpus::placeholder("hotel", "x" + std::to_string(k)));
    redundant += foreign;
    rng.shuffle(std::span<std::string>(gen));
    SlotErrors e = slot_errors(gen, da_with(slots));
    CHECK(e.missing == missing);
    CHECK(e.redundant == redundant);
    CHECK(e.total == static_cast<long>(slots.size()));
    if (!slots.empty()) {
      CHECK(e.err() == static_cast<double>(missing + redundant) / static_cast<double>(slots.size()));
    }
  }
}

TEST_CASE("evaluate aggregates per-example counts", "[metrics][evaluate]") {
  auto c = corpus::gen_synthetic(corpus::SynthSpec{2, 3, 6, 2, 60, 3}, 2);
  auto ex = corpus::build_corpus(c.records, c.schema).examples;
  gen::Vocabulary vocab = gen::Vocabulary::build(ex, c.schema);
  corpus::DAEncoder enc(c.schema);
  gen::GeneratorConfig cfg;
  cfg.hidden = 8;
  cfg.embed = 4;
  gen::Generator model(vocab.size(), enc.dim(), cfg);
  ParameterVector p = model.init(3);
  // Bias towards placeholders so the counts are not all zero.
  for (std::size_t i = 4; i < vocab.size(); ++i)
    if (corpus::is_placeholder(vocab.token(i))) p.segment(gen::kOutB)[i] = 0.5;

  std::vector<corpus::CorpusExample> subset(ex.begin(), ex.begin() + 20);
  EvalResult r = evaluate(model, p, vocab, enc, subset, 3, 12);
  SlotErrors sum;
  std::vector<Tokens> cands, refs;
  for (const auto& e : subset) {
    gen::DecodeOptions opt;
    opt.beam_width = 3;
    opt.max_len = 12;
    Tokens out = vocab.decode(gen::decode(model, p, enc.encode(e.da), opt).front().tokens);
    sum += slot_errors(out, e.da);
    cands.push_back(out);
    refs.push_back(e.tokens);
  }
  CHECK(r.n == 20);
  CHECK(r.counts.missing == sum.missing);
  CHECK(r.counts.redundant == sum.redundant);
  CHECK(r.counts.total == sum.total);
  CHECK(r.err == static_cast<double>(sum.missing + sum.redundant) / static_cast<double>(sum.total));
  CHECK(r.bleu4 == bleu4(cands, refs));

  EvalResult one = evaluate(model, p, vocab, enc, {subset[0]}, 3, 12);
  CHECK(one.err == slot_error_rate(cands[0], subset[0].da));
  CHECK(one.bleu4 == bleu4({cands[0]}, {refs[0]}));
  CHECK_THROWS_AS(evaluate(model, p, vocab, enc, {}, 3), Error);
}

TEST_CASE("report CSV", "[metrics][report]") {
  TrainRunReport r;
  r.add({"source", 1, "train", 2.5, std::nullopt, std::nullopt, std::nullopt});
  r.add({"source", 2, "train", 2.25, std::nullopt, std::nullopt, std::nullopt});
  r.add({"adapt", 0, "validation", 3.0, 0.125, 0.5, 1.5});
  r.add({"adapt", 1, "val,\"x\"", 2.0, 0.25, 0.0, std::nullopt});
  CHECK_THROWS_AS(r.add({"adapt", 1, "validation", 1.0, {}, {}, {}}), Error);
  CHECK_THROWS_AS(r.add({"source", 3, "train", 1.0, {}, {}, {}}), Error);

  const std::string csv = r.to_csv();
  CHECK(csv.rfind("phase,step,split,nll,bleu4,err,seconds\r\n", 0) == 0);
  CHECK(csv.find("adapt,1,\"val,\"\"x\"\"\",2,0.25,0,\r\n") != std::string::npos);
  auto rows = parse_report_csv(csv);
  REQUIRE(rows.size() == 4);
  CHECK(rows[3].split == "val,\"x\"");
  CHECK(rows[2].seconds == 1.5);
  CHECK_FALSE(rows[0].bleu4.has_value());
  CHECK(*rows[1].nll == 2.25);
  CHECK(r.phase("adapt").size() == 2);
}
