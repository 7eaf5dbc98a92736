// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <fcntl.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <string>

#include <nlohmann/json.hpp>

#include "metanlg/cli/checkpoint.hpp"
#include "metanlg/cli/config.hpp"
#include "metanlg/corpus/delex.hpp"
#include "metanlg/corpus/encoding.hpp"
#include "metanlg/corpus/io.hpp"
#include "metanlg/corpus/split.hpp"
#include "metanlg/corpus/synthetic.hpp"
#include "metanlg/generator/decode.hpp"
#include "metanlg/log.hpp"
#include "metanlg/meta/training.hpp"
#include "metanlg/metrics/evaluate.hpp"
#include "metanlg/metrics/report.hpp"

namespace metanlg::cli {

namespace fs = std::filesystem;

/// Exclusive claim on an output directory for the life of one command.
class OutputLock {
 public:
  explicit OutputLock(const fs::path& dir) : path_(dir / ".lock") {
    fs::create_directories(dir);
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) throw Error("output directory " + dir.string() + " is locked by another run (" + path_.string() + ")");
    ::close(fd);
  }
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;
  ~OutputLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }

 private:
  fs::path path_;
};

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed: " + path.string());
}

struct Inputs {
  corpus::Schema schema;
  std::vector<corpus::CorpusExample> examples;
};

inline Inputs load_inputs(const RunConfig& cfg) {
  if (cfg.corpus.empty()) throw ConfigError("no corpus given (--corpus)");
  corpus::CorpusFile file = corpus::read_corpus_file(cfg.corpus);
  Inputs in;
  if (!cfg.schema.empty()) {
    in.schema = corpus::load_schema(cfg.schema);
  } else if (file.schema) {
    in.schema = *file.schema;
  } else {
    throw ConfigError("corpus has no embedded schema; pass --schema");
  }
  corpus::LoadedCorpus loaded = corpus::build_corpus(file.records, in.schema);
  if (loaded.non_aligned > 0)
    log::warning(std::to_string(loaded.non_aligned) + " records have slot values missing from their text");
  in.examples = std::move(loaded.examples);
  return in;
}

/// Everything needed to train on one split: vocabulary, encoder and model.
struct Workspace {
  corpus::Schema schema;
  gen::Vocabulary vocab;
  corpus::DAEncoder encoder;
  gen::Generator model;

  Workspace(corpus::Schema s, const std::vector<corpus::CorpusExample>& examples, const gen::GeneratorConfig& g)
      : schema(std::move(s)),
        vocab(gen::Vocabulary::build(examples, schema)),
        encoder(schema),
        model(vocab.size(), encoder.dim(), g) {}

  meta::ModelContext ctx() const { return {model, vocab, encoder}; }
};

inline meta::SplitData make_split_data(const Workspace& w, const RunConfig& cfg,
                                       const std::vector<corpus::CorpusExample>& examples, std::size_t adaptation_size,
                                       std::uint64_t split_seed) {
  if (cfg.target.empty()) throw ConfigError("no target given (--target)");
  corpus::SplitSpec spec{parse_split_mode(cfg.split_mode), cfg.target, adaptation_size, cfg.validation_size,
                         cfg.test_size};
  corpus::Split s = corpus::make_split(examples, spec, split_seed);
  auto ctx = w.ctx();
  return meta::SplitData{spec.mode,
                         cfg.target,
                         meta::make_dataset(ctx, std::move(s.source)),
                         meta::make_dataset(ctx, std::move(s.adaptation)),
                         meta::make_dataset(ctx, std::move(s.validation)),
                         meta::make_dataset(ctx, std::move(s.test)),
                         meta::make_dataset(ctx, std::move(s.target_rest))};
}

inline json eval_json(const metrics::EvalResult& e) {
  return {{"bleu4", e.bleu4},
          {"err", e.err},
          {"missing", e.counts.missing},
          {"redundant", e.counts.redundant},
          {"slots", e.counts.total},
          {"n", e.n}};
}

/// Decodes the test split and appends a "test" row to the report.
inline metrics::EvalResult evaluate_test(const Workspace& w, const meta::SplitData& split, const ParameterVector& params,
                                         const RunConfig& cfg, metrics::TrainRunReport& report, double& nll) {
  nll = gen::evaluate_nll(w.model, params, split.test.encoded);
  metrics::EvalResult e =
      metrics::evaluate(w.model, params, w.vocab, w.encoder, split.test.examples, cfg.beam_width, cfg.max_len);
  std::optional<double> seconds;
  report.add({"test", 0, "test", nll, e.bleu4, e.err, seconds});
  return e;
}

inline std::uint64_t split_seed_for(std::uint64_t seed, std::size_t repeat) {
  return meta::sub_seed(seed, 1000 + repeat);
}

struct TrainOutcome {
  fs::path checkpoint;
  fs::path report;
  fs::path summary;
  json summary_json;
};

inline TrainOutcome cmd_train(const RunConfig& cfg) {
  validate(cfg);
  OutputLock lock(cfg.out_dir);
  Inputs in = load_inputs(cfg);
  Workspace w(in.schema, in.examples, cfg.model);
  meta::SplitData split = make_split_data(w, cfg, in.examples, cfg.adaptation_size, split_seed_for(cfg.seed, 0));
  const meta::Regime regime = meta::parse_regime(cfg.regime);
  log::info(std::string("train: regime ") + cfg.regime + ", " + std::to_string(split.source.size()) + " source / " +
            std::to_string(split.adaptation.size()) + " adaptation / " + std::to_string(split.validation.size()) +
            " validation / " + std::to_string(split.test.size()) + " test examples, " +
            std::to_string(w.model.layout()->total()) + " parameters");

  meta::RegimeResult r = meta::run_regime(regime, w.ctx(), split, regime_config(cfg));
  double test_nll = 0.0;
  metrics::EvalResult test = evaluate_test(w, split, r.params, cfg, r.report, test_nll);

  TrainOutcome out;
  const fs::path dir(cfg.out_dir);
  out.checkpoint = dir / "model.ckpt";
  out.report = dir / "report.csv";
  out.summary = dir / "summary.json";

  Checkpoint ck;
  ck.schema = w.schema;
  ck.vocab = w.vocab;
  ck.model = cfg.model;
  ck.da_dim = w.encoder.dim();
  auto pv = r.params.values();
  ck.params.assign(pv.begin(), pv.end());
  if (r.adam.step() > 0) ck.optimizer = snapshot(r.adam);
  ck.config = to_json(cfg);
  ck.config.erase("out_dir");
  ck.seed = cfg.seed;
  save_checkpoint(out.checkpoint, ck);

  r.report.write_csv(out.report);

  json summary = {{"regime", cfg.regime},
                  {"split_mode", cfg.split_mode},
                  {"target", cfg.target},
                  {"seed", cfg.seed},
                  {"test", eval_json(test)}};
  summary["test"]["nll"] = test_nll;
  if (r.adaptation) {
    summary["adaptation"] = {{"best_validation_nll", r.adaptation->best_nll},
                             {"best_epoch", r.adaptation->best_epoch},
                             {"epochs_run", r.adaptation->epochs_run}};
  } else {
    summary["adaptation"] = nullptr;
  }
  write_text(out.summary, summary.dump(2) + "\n");
  out.summary_json = std::move(summary);
  return out;
}

/// Reads a DA given inline as JSON or as a path to a JSON file.
inline corpus::DialogueAct read_da(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error&) {
    if (!fs::exists(text)) throw ConfigError("DA is neither valid JSON nor an existing file: " + text);
    j = corpus::parse_json_file(text);
  }
  // Accept either the bare act list or an object with an "acts" key.
  if (j.is_object() && j.contains("acts")) j = j.at("acts");
  try {
    return corpus::da_from_json(j);
  } catch (const json::exception& e) {
    throw CorpusError(std::string("bad dialogue act: ") + e.what());
  }
}

struct GenerateOptions {
  std::size_t beam_width = 5;
  std::size_t max_len = 40;
  bool relex = false;
};

inline void cmd_generate(const fs::path& checkpoint, const std::string& da_text, const GenerateOptions& opt,
                         std::ostream& out) {
  if (opt.beam_width == 0) throw ConfigError("beam width must be positive");
  Checkpoint ck = load_checkpoint(checkpoint);
  corpus::DialogueAct da = read_da(da_text);
  corpus::validate(da, ck.schema);
  corpus::DAEncoder enc(ck.schema);
  if (enc.dim() != ck.da_dim) throw Error("checkpoint: DA width does not match its schema");
  gen::Generator model(ck.vocab.size(), ck.da_dim, ck.model);
  ParameterVector params(model.layout(), ck.params);
  gen::DecodeOptions d;
  d.beam_width = opt.beam_width;
  d.max_len = opt.max_len;
  for (const gen::Hypothesis& h : gen::decode(model, params, enc.encode(da), d)) {
    std::vector<std::string> toks = ck.vocab.decode(h.tokens);
    std::string text;
    if (opt.relex) {
      text = corpus::relexicalize(toks, da);
    } else {
      for (const auto& t : toks) text += (text.empty() ? "" : " ") + t;
    }
    char score[32];
    std::snprintf(score, sizeof score, "%.6f", h.score);
    out << score << '\t' << text << '\n';
  }
}

inline void cmd_synth(const corpus::SynthSpec& spec, std::uint64_t seed, const fs::path& out_path) {
  corpus::SyntheticCorpus c = corpus::gen_synthetic(spec, seed);
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  write_text(out_path, corpus::synthetic_to_string(c));
}

inline json cmd_eval(const fs::path& checkpoint, const fs::path& corpus_path, std::size_t beam_width,
                     std::size_t max_len) {
  Checkpoint ck = load_checkpoint(checkpoint);
  corpus::LoadedCorpus loaded = corpus::load_corpus(corpus_path, ck.schema);
  if (loaded.examples.empty()) throw CorpusError("eval: corpus is empty");
  corpus::DAEncoder enc(ck.schema);
  gen::Generator model(ck.vocab.size(), ck.da_dim, ck.model);
  ParameterVector params(model.layout(), ck.params);
  metrics::EvalResult e = metrics::evaluate(model, params, ck.vocab, enc, loaded.examples, beam_width, max_len);
  json j = eval_json(e);
  j["nll"] = gen::evaluate_nll(model, params, gen::encode_examples(ck.vocab, enc, loaded.examples));
  return j;
}

struct SweepRow {
  std::size_t size = 0;
  std::string regime;
  std::size_t repeats = 0;
  double bleu4 = 0.0;
  double err = 0.0;
  double nll = 0.0;
};

inline std::string sweep_summary_csv(const std::vector<SweepRow>& rows) {
  std::string out = "size,regime,repeats,bleu4,err,nll\r\n";
  for (const SweepRow& r : rows) {
    out += std::to_string(r.size) + "," + metrics::TrainRunReport::quote(r.regime) + "," + std::to_string(r.repeats) +
           "," + metrics::TrainRunReport::number(r.bleu4) + "," + metrics::TrainRunReport::number(r.err) + "," +
           metrics::TrainRunReport::number(r.nll) + "\r\n";
  }
  return out;
}

inline fs::path sweep_run_path(const fs::path& dir, std::size_t size, std::size_t repeat, const std::string& regime) {
  return dir / ("size-" + std::to_string(size)) / ("repeat-" + std::to_string(repeat)) / (regime + ".csv");
}

/// Adaptation-size sweep. Each repeat draws a fresh target split; source
/// models depend only on the source pool and are trained once.
inline std::vector<SweepRow> cmd_sweep(const RunConfig& cfg) {
  validate(cfg);
  OutputLock lock(cfg.out_dir);
  const fs::path dir(cfg.out_dir);
  std::vector<SweepRow> rows;
  if (!cfg.sizes.empty()) {
    if (cfg.repeats == 0) throw ConfigError("repeats must be positive");
    Inputs in = load_inputs(cfg);
    Workspace w(in.schema, in.examples, cfg.model);
    meta::SourceCache cache;
    const meta::RegimeConfig rc = regime_config(cfg);
    for (std::size_t size : cfg.sizes) {
      std::map<std::string, SweepRow> acc;
      for (std::size_t rep = 0; rep < cfg.repeats; ++rep) {
        meta::SplitData split = make_split_data(w, cfg, in.examples, size, split_seed_for(cfg.seed, rep));
        for (const std::string& name : cfg.regimes) {
          log::info("sweep: size " + std::to_string(size) + ", repeat " + std::to_string(rep) + ", " + name);
          meta::RegimeResult r = meta::run_regime(meta::parse_regime(name), w.ctx(), split, rc, &cache);
          double nll = 0.0;
          metrics::EvalResult e = evaluate_test(w, split, r.params, cfg, r.report, nll);
          const fs::path p = sweep_run_path(dir, size, rep, name);
          fs::create_directories(p.parent_path());
          r.report.write_csv(p);
          SweepRow& a = acc[name];
          a.bleu4 += e.bleu4;
          a.err += e.err;
          a.nll += nll;
          a.repeats += 1;
        }
      }
      for (const std::string& name : cfg.regimes) {
        SweepRow row = acc[name];
        const double n = static_cast<double>(row.repeats);
        row.size = size;
        row.regime = name;
        row.bleu4 /= n;
        row.err /= n;
        row.nll /= n;
        rows.push_back(row);
      }
    }
  }
  write_text(dir / "summary.csv", sweep_summary_csv(rows));
  return rows;
}

}  // namespace metanlg::cli
