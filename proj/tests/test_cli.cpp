// SPDX-License-Identifier: Apache-2.0
#include <catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <sstream>

#include "metanlg/cli/commands.hpp"

using namespace metanlg;
using namespace metanlg::cli;

namespace {

fs::path scratch_root() { return fs::temp_directory_path() / ("metanlg-test-cli-" + std::to_string(::getpid())); }

struct RemoveScratch {
  ~RemoveScratch() {
    std::error_code ec;
    fs::remove_all(scratch_root(), ec);
  }
} remove_scratch;

fs::path scratch_dir(const std::string& name) {
  fs::path p = scratch_root() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string bytes_of(const fs::path& p) { return corpus::read_file(p); }

const fs::path& small_corpus() {
  static const fs::path path = [] {
    fs::path p = scratch_dir("corpus") / "synth.json";
    cmd_synth(corpus::SynthSpec{3, 4, 8, 2, 300, 3}, 4, p);
    return p;
  }();
  return path;
}

RunConfig small_config(const std::string& out, const std::string& regime) {
  RunConfig c;
  c.corpus = small_corpus().string();
  c.target = "hotel";
  c.regime = regime;
  c.adaptation_size = 20;
  c.validation_size = 10;
  c.test_size = 10;
  c.out_dir = out;
  c.seed = 7;
  c.model.hidden = 8;
  c.model.embed = 4;
  c.mtl.max_epochs = 1;
  c.meta.max_outer_steps = 3;
  c.meta.task_half_size = 3;
  c.meta.meta_batch = 2;
  c.ft_max_epochs = 2;
  c.ft_task_half_size = 3;
  c.beam_width = 2;
  c.max_len = 20;
  return c;
}

}  // namespace

TEST_CASE("run configuration", "[cli][config]") {
  RunConfig c;
  json j = to_json(c);
  CHECK(j.size() == fields().size());
  for (const Field& f : fields()) {
    CHECK_FALSE(f.help.empty());
    CHECK(j.contains(f.key));
  }
  CHECK(j["alpha"] == 0.1);
  CHECK(j["hidden_size"] == 100);
  CHECK(j["dropout"] == 0.25);
  CHECK(j["clip_norm"] == 0.5);
  CHECK(j["beam_width"] == 5);
  CHECK(j["repeats"] == 5);

  RunConfig d;
  apply_json(d, {{"alpha", 0.3}, {"sizes", {1, 2}}, {"regimes", {"mtl"}}, {"second_order", false}});
  CHECK(d.meta.alpha == 0.3);
  CHECK(d.sizes == std::vector<std::size_t>{1, 2});
  CHECK_FALSE(d.meta.second_order);
  RunConfig back;
  apply_json(back, to_json(d));
  CHECK(to_json(back) == to_json(d));

  CHECK_THROWS_AS(apply_json(d, {{"alpah", 0.3}}), ConfigError);
  CHECK_THROWS_AS(apply_json(d, {{"hidden_size", -3}}), ConfigError);
  CHECK_THROWS_AS(apply_json(d, {{"hidden_size", "big"}}), ConfigError);
  CHECK_THROWS_AS(apply_json(d, json::array()), ConfigError);

  CHECK(flag_value(find_field("sizes"), "200,100,50") == json({200, 100, 50}));
  CHECK(flag_value(find_field("sizes"), "") == json::array());
  CHECK(flag_value(find_field("regimes"), "meta,mtl") == json({"meta", "mtl"}));
  CHECK(flag_value(find_field("second_order"), "false") == json(false));
  CHECK(flag_value(find_field("beta"), "0.01") == json(0.01));
  CHECK_THROWS_AS(flag_value(find_field("hidden_size"), "-4"), ConfigError);
  CHECK_THROWS_AS(flag_value(find_field("beta"), "0.01x"), ConfigError);

  RunConfig bad;
  bad.regime = "maml";
  CHECK_THROWS_AS(validate(bad), ConfigError);
  bad = RunConfig{};
  bad.split_mode = "slot";
  CHECK_THROWS_AS(validate(bad), ConfigError);
  bad = RunConfig{};
  bad.regimes = {"meta", "meta"};
  CHECK_THROWS_AS(validate(bad), ConfigError);
}

TEST_CASE("checkpoint round trip is bit-exact", "[cli][checkpoint]") {
  auto synth = corpus::gen_synthetic(corpus::SynthSpec{2, 2, 4, 1, 20, 2}, 1);
  auto ex = corpus::build_corpus(synth.records, synth.schema).examples;
  Checkpoint c;
  c.schema = synth.schema;
  c.vocab = gen::Vocabulary::build(ex, synth.schema);
  c.model.hidden = 3;
  c.model.embed = 2;
  c.da_dim = corpus::DAEncoder(synth.schema).dim();
  const std::size_t n = gen::generator_layout(c.vocab.size(), c.da_dim, 3, 2)->total();
  Rng rng(5);
  for (std::size_t i = 0; i < n; ++i) c.params.push_back(rng.uniform(-1.0, 1.0) * std::pow(10.0, rng.uniform(-300, 300)));
  c.params[0] = -0.0;
  c.params[1] = std::numeric_limits<double>::denorm_min();
  c.config = to_json(RunConfig{});
  c.seed = 99;

  auto same_bits = [](const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
  };

  const std::string bytes = checkpoint_to_bytes(c);
  CHECK(bytes.compare(0, 8, "MNLGCKP1") == 0);
  Checkpoint r = checkpoint_from_bytes(bytes);
  CHECK(same_bits(r.params, c.params));
  CHECK(r.schema == c.schema);
  CHECK(r.vocab == c.vocab);
  CHECK(r.config == c.config);
  CHECK(r.seed == 99);
  CHECK_FALSE(r.optimizer.has_value());
  CHECK(checkpoint_to_bytes(r) == bytes);

  OptimizerSnapshot o;
  o.step = 12;
  o.m.assign(n, 0.5);
  o.v.assign(n, 1e-9);
  c.optimizer = o;
  const std::string with_opt = checkpoint_to_bytes(c);
  Checkpoint r2 = checkpoint_from_bytes(with_opt);
  REQUIRE(r2.optimizer.has_value());
  CHECK(r2.optimizer->step == 12);
  CHECK(same_bits(r2.optimizer->v, o.v));
  CHECK(checkpoint_to_bytes(r2) == with_opt);

  CHECK_THROWS_AS(checkpoint_from_bytes("NOTACKPT" + bytes.substr(8)), Error);
  CHECK_THROWS_AS(checkpoint_from_bytes(bytes.substr(0, bytes.size() - 3)), Error);
  CHECK_THROWS_AS(checkpoint_from_bytes(bytes + "x"), Error);
  c.optimizer->m.pop_back();
  CHECK_THROWS_AS(checkpoint_to_bytes(c), Error);
}

TEST_CASE("synth command", "[cli][synth]") {
  fs::path dir = scratch_dir("synth");
  cmd_synth(corpus::SynthSpec{}, 11, dir / "a.json");
  cmd_synth(corpus::SynthSpec{}, 11, dir / "b.json");
  const std::string a = bytes_of(dir / "a.json");
  CHECK(a.find("\"format\": \"meta-nlg-corpus-v1\"") != std::string::npos);
  CHECK(a == bytes_of(dir / "b.json"));
  cmd_synth(corpus::SynthSpec{}, 12, dir / "c.json");
  CHECK(a != bytes_of(dir / "c.json"));

  corpus::SynthSpec one;
  one.domains = 1;
  one.examples = 10;
  cmd_synth(one, 1, dir / "one.json");
  CHECK(corpus::read_corpus_file(dir / "one.json").records.size() == 10);
}

TEST_CASE("train command", "[cli][train]") {
  fs::path dir = scratch_dir("train");

  SECTION("zero-shot writes no adaptation rows") {
    TrainOutcome t = cmd_train(small_config((dir / "zero").string(), "zero"));
    auto rows = metrics::parse_report_csv(bytes_of(t.report));
    CHECK(std::none_of(rows.begin(), rows.end(), [](const auto& r) { return r.phase == "adapt"; }));
    CHECK(std::any_of(rows.begin(), rows.end(), [](const auto& r) { return r.phase == "source"; }));
    CHECK(rows.back().phase == "test");
    CHECK(t.summary_json["adaptation"].is_null());
    CHECK(fs::exists(t.checkpoint));
    CHECK_FALSE(fs::exists(dir / "zero" / ".lock"));
  }
  SECTION("meta writes source and adaptation rows") {
    TrainOutcome t = cmd_train(small_config((dir / "meta").string(), "meta"));
    metrics::TrainRunReport rep;
    for (const auto& r : metrics::parse_report_csv(bytes_of(t.report))) rep.add(r);
    CHECK(rep.phase("source").size() == 3);
    CHECK(rep.phase("adapt").size() >= 2);
    CHECK(rep.phase("test").size() == 1);
    CHECK(t.summary_json["test"]["n"] == 10);
  }
  SECTION("identical invocations give identical artifacts") {
    for (const char* regime : {"meta", "mtl", "scratch", "supervised"}) {
      TrainOutcome a = cmd_train(small_config((dir / "a").string(), regime));
      TrainOutcome b = cmd_train(small_config((dir / "b").string(), regime));
      CHECK(bytes_of(a.report) == bytes_of(b.report));
      CHECK(bytes_of(a.checkpoint) == bytes_of(b.checkpoint));
      CHECK(bytes_of(a.summary) == bytes_of(b.summary));
    }
  }
  SECTION("checkpoint parameters reload into the same evaluation") {
    RunConfig c = small_config((dir / "reload").string(), "mtl");
    TrainOutcome t = cmd_train(c);
    Checkpoint ck = load_checkpoint(t.checkpoint);
    CHECK(ck.optimizer.has_value());
    CHECK(ck.config["regime"] == "mtl");
    CHECK_FALSE(ck.config.contains("out_dir"));
    // Rebuild the same split and compare the decoded test metrics.
    Inputs in = load_inputs(c);
    Workspace w(in.schema, in.examples, c.model);
    meta::SplitData split = make_split_data(w, c, in.examples, c.adaptation_size, split_seed_for(c.seed, 0));
    fs::path test_file = dir / "reload" / "test.json";
    write_text(test_file, corpus::corpus_to_string(split.test.examples, &in.schema));
    json e = cmd_eval(t.checkpoint, test_file, c.beam_width, c.max_len);
    CHECK(e["bleu4"] == t.summary_json["test"]["bleu4"]);
    CHECK(e["err"] == t.summary_json["test"]["err"]);
    CHECK(e["nll"] == t.summary_json["test"]["nll"]);
  }
  SECTION("a locked output directory is refused") {
    fs::create_directories(dir / "locked");
    write_text(dir / "locked" / ".lock", "");
    CHECK_THROWS_AS(cmd_train(small_config((dir / "locked").string(), "zero")), Error);
  }
  SECTION("configuration errors") {
    RunConfig c = small_config((dir / "err").string(), "meta");
    c.target = "spaceport";
    CHECK_THROWS_AS(cmd_train(c), CorpusError);
    c = small_config((dir / "err2").string(), "meta");
    c.corpus = (dir / "missing.json").string();
    CHECK_THROWS_AS(cmd_train(c), CorpusError);
  }
}

TEST_CASE("generate command", "[cli][generate]") {
  fs::path dir = scratch_dir("generate");
  TrainOutcome t = cmd_train(small_config((dir / "run").string(), "mtl"));
  const std::string da =
      R"([{"domain": "hotel", "act": "inform", "slots": [["day", "north side"]]}])";
  auto run = [&](const std::string& d, std::size_t beam, bool relex) {
    std::ostringstream os;
    cmd_generate(t.checkpoint, d, GenerateOptions{beam, 20, relex}, os);
    return os.str();
  };
  const std::string one = run(da, 1, false);
  CHECK(std::count(one.begin(), one.end(), '\n') == 1);
  const std::string five = run(da, 5, false);
  CHECK(std::count(five.begin(), five.end(), '\n') >= 1);
  CHECK(std::count(five.begin(), five.end(), '\n') <= 5);
  CHECK(run(da, 5, false) == five);

  write_text(dir / "da.json", da);
  CHECK(run((dir / "da.json").string(), 5, false) == five);

  // Re-lexicalisation only touches placeholders of the DA.
  std::istringstream lines(run(da, 5, true)), plain(five);
  std::string a, b;
  while (std::getline(lines, a) && std::getline(plain, b)) {
    std::string expect = b;
    const std::string ph = corpus::placeholder("hotel", "day");
    if (auto at = expect.find(ph); at != std::string::npos) expect.replace(at, ph.size(), "north side");
    CHECK(a == expect);
  }

  CHECK_THROWS_AS(run("[]", 1, false), CorpusError);
  CHECK_THROWS_AS(run(R"([{"domain": "hotel", "act": "dance", "slots": []}])", 1, false), CorpusError);
  CHECK_THROWS_AS(run("not json", 1, false), ConfigError);
}

TEST_CASE("sweep command", "[cli][sweep]") {
  fs::path dir = scratch_dir("sweep");

  SECTION("no sizes gives an empty summary") {
    RunConfig c = small_config((dir / "empty").string(), "meta");
    c.sizes = {};
    CHECK(cmd_sweep(c).empty());
    CHECK(bytes_of(dir / "empty" / "summary.csv") == "size,regime,repeats,bleu4,err,nll\r\n");
  }
  SECTION("one size and one repeat gives one row per regime") {
    RunConfig c = small_config((dir / "one").string(), "meta");
    c.sizes = {20};
    c.repeats = 1;
    c.regimes = {"meta", "mtl", "scratch", "zero"};
    auto rows = cmd_sweep(c);
    REQUIRE(rows.size() == 4);
    CHECK(rows[3].regime == "zero");
  }
  SECTION("summary means equal recomputation from the run reports") {
    RunConfig c = small_config((dir / "agg").string(), "meta");
    c.sizes = {20, 10, 6};
    c.repeats = 2;
    c.regimes = {"meta", "mtl", "scratch"};
    auto rows = cmd_sweep(c);
    REQUIRE(rows.size() == 9);
    for (const SweepRow& row : rows) {
      double bleu = 0.0, err = 0.0, nll = 0.0;
      for (std::size_t rep = 0; rep < 2; ++rep) {
        auto rep_rows = metrics::parse_report_csv(bytes_of(sweep_run_path(dir / "agg", row.size, rep, row.regime)));
        REQUIRE(rep_rows.back().phase == "test");
        bleu += *rep_rows.back().bleu4;
        err += *rep_rows.back().err;
        nll += *rep_rows.back().nll;
      }
      CHECK(row.repeats == 2);
      CHECK(std::abs(row.bleu4 - bleu / 2.0) <= 1e-15);
      CHECK(std::abs(row.err - err / 2.0) <= 1e-15);
      CHECK(std::abs(row.nll - nll / 2.0) <= 1e-12);
    }
    const std::string summary = bytes_of(dir / "agg" / "summary.csv");
    cmd_sweep([&] {
      RunConfig again = c;
      again.out_dir = (dir / "agg2").string();
      return again;
    }());
    CHECK(bytes_of(dir / "agg2" / "summary.csv") == summary);
  }
}
