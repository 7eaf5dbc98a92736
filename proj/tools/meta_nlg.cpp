// SPDX-License-Identifier: Apache-2.0
#include <cstdlib>
#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "metanlg/cli/commands.hpp"

using namespace metanlg;
using namespace metanlg::cli;

namespace {

std::string flag_name(const std::string& key) {
  std::string s = key;
  for (char& c : s)
    if (c == '_') c = '-';
  if (key == "target") return "--target,--target-domain";
  return "--" + s;
}

std::string shown_default(const json& v) {
  if (v.is_string()) return v.get<std::string>().empty() ? "\"\"" : v.get<std::string>();
  if (v.is_array()) {
    std::string s;
    for (const json& e : v) s += (s.empty() ? "" : ",") + (e.is_string() ? e.get<std::string>() : e.dump());
    return s;
  }
  return v.dump();
}

std::string type_name(const json& v) {
  if (v.is_boolean()) return "BOOL";
  if (v.is_number_unsigned()) return "UINT";
  if (v.is_number()) return "FLOAT";
  if (v.is_array()) return "LIST";
  return "TEXT";
}

std::optional<std::uint64_t> env_seed() {
  const char* s = std::getenv("META_NLG_SEED");
  if (!s || !*s) return std::nullopt;
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(s, &used);
    if (used == std::strlen(s) && s[0] != '-') return v;
  } catch (const std::exception&) {
  }
  throw ConfigError(std::string("META_NLG_SEED is not a non-negative integer: ") + s);
}

/// Registers one flag per config field and resolves the precedence
/// flags > --config file > META_NLG_SEED (seed only) > defaults.
struct ConfigFlags {
  std::string config_file;
  std::map<std::string, std::string> raw;
  std::map<std::string, CLI::Option*> opts;

  void attach(CLI::App& app) {
    app.add_option("--config", config_file, "JSON run configuration; flags override its values");
    const RunConfig defaults;
    for (const Field& f : fields()) {
      const json d = f.get(defaults);
      opts[f.key] = app.add_option(flag_name(f.key), raw[f.key], f.help)
                        ->default_str(shown_default(d))
                        ->type_name(type_name(d));
    }
  }

  RunConfig resolve() const {
    RunConfig cfg;
    json file = json::object();
    if (!config_file.empty()) file = corpus::parse_json_file(config_file);
    apply_json(cfg, file);
    bool seed_set = file.is_object() && file.contains("seed");
    for (const Field& f : fields()) {
      if (opts.at(f.key)->count() == 0) continue;
      f.set(cfg, flag_value(f, raw.at(f.key)));
      if (f.key == "seed") seed_set = true;
    }
    if (!seed_set)
      if (auto s = env_seed()) cfg.seed = *s;
    return cfg;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Meta-learned low-resource natural language generation"};
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "only log warnings");

  ConfigFlags train_flags, sweep_flags;
  CLI::App* train = app.add_subcommand("train", "train one regime on a leave-one-out split and evaluate on its test part");
  train_flags.attach(*train);
  CLI::App* sweep = app.add_subcommand("sweep", "repeat adaptation over several adaptation sizes and regimes");
  sweep_flags.attach(*sweep);

  std::string ckpt, da;
  GenerateOptions gopt;
  CLI::App* generate = app.add_subcommand("generate", "decode utterances for one dialogue act");
  generate->add_option("--checkpoint", ckpt, "checkpoint file")->required();
  generate->add_option("--da", da, "dialogue act as inline JSON or a JSON file")->required();
  generate->add_option("--beam-width", gopt.beam_width, "number of hypotheses")->capture_default_str();
  generate->add_option("--max-len", gopt.max_len, "maximum length")->capture_default_str();
  generate->add_flag("--relex", gopt.relex, "substitute slot values for placeholders");

  corpus::SynthSpec spec;
  std::string synth_out;
  std::optional<std::uint64_t> synth_seed;
  CLI::App* synth = app.add_subcommand("synth", "write a synthetic corpus");
  synth->add_option("--domains", spec.domains, "number of domains")->capture_default_str();
  synth->add_option("--acts", spec.acts, "number of act types")->capture_default_str();
  synth->add_option("--slots", spec.slots, "number of slots")->capture_default_str();
  synth->add_option("--templates", spec.templates, "templates per (domain, act)")->capture_default_str();
  synth->add_option("--examples", spec.examples, "number of records")->capture_default_str();
  synth->add_option("--values-per-slot", spec.values_per_slot, "distinct values per slot")->capture_default_str();
  synth->add_option("--seed", synth_seed, "seed (env META_NLG_SEED, then 1)");
  synth->add_option("--out", synth_out, "output corpus file")->required();

  std::string eval_ckpt, eval_corpus, eval_out;
  std::size_t eval_beam = 5, eval_len = 40;
  CLI::App* eval = app.add_subcommand("eval", "decode a corpus with a checkpoint and report BLEU-4 and ERR");
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval->add_option("--corpus", eval_corpus, "corpus file (schema must match the checkpoint)")->required();
  eval->add_option("--beam-width", eval_beam, "beam width")->capture_default_str();
  eval->add_option("--max-len", eval_len, "maximum length")->capture_default_str();
  eval->add_option("--out", eval_out, "also write the JSON result here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  if (quiet) log::set_level(log::Level::Warning);

  try {
    if (*train) {
      TrainOutcome t = cmd_train(train_flags.resolve());
      std::cout << t.summary_json.dump(2) << '\n';
    } else if (*sweep) {
      RunConfig cfg = sweep_flags.resolve();
      cmd_sweep(cfg);
      std::cout << corpus::read_file(fs::path(cfg.out_dir) / "summary.csv");
    } else if (*generate) {
      cmd_generate(ckpt, da, gopt, std::cout);
    } else if (*synth) {
      std::uint64_t seed = 1;
      if (synth_seed) {
        seed = *synth_seed;
      } else if (auto s = env_seed()) {
        seed = *s;
      }
      cmd_synth(spec, seed, synth_out);
    } else if (*eval) {
      json j = cmd_eval(eval_ckpt, eval_corpus, eval_beam, eval_len);
      if (!eval_out.empty()) write_text(eval_out, j.dump(2) + "\n");
      std::cout << j.dump(2) << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
