// SPDX-License-Identifier: Apache-2.0
//
// Training loops: pooled multi-task training, episodic meta-training,
// fine-tuning with early stopping, and the five regimes built from them.
#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "metanlg/corpus/sampler.hpp"
#include "metanlg/generator/dataset.hpp"
#include "metanlg/log.hpp"
#include "metanlg/meta/optimizer.hpp"
#include "metanlg/metrics/evaluate.hpp"
#include "metanlg/metrics/report.hpp"

namespace metanlg::meta {

using gen::EncodedExample;

struct ModelContext {
  const gen::Generator& model;
  const gen::Vocabulary& vocab;
  const corpus::DAEncoder& encoder;
};

/// Examples with their model encodings, index-aligned.
struct Dataset {
  std::vector<corpus::CorpusExample> examples;
  std::vector<EncodedExample> encoded;

  std::size_t size() const noexcept { return examples.size(); }
  bool empty() const noexcept { return examples.empty(); }
};

inline Dataset make_dataset(const ModelContext& ctx, std::vector<corpus::CorpusExample> examples) {
  Dataset d;
  d.encoded = gen::encode_examples(ctx.vocab, ctx.encoder, examples);
  d.examples = std::move(examples);
  return d;
}

inline std::vector<const EncodedExample*> pick(const Dataset& d, const std::vector<std::size_t>& idx) {
  std::vector<const EncodedExample*> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(&d.encoded.at(i));
  return out;
}

/// Loss builders for one episode: mean sequence NLL over support and query.
inline TaskLosses task_losses(const gen::Generator& model, std::vector<const EncodedExample*> support,
                              std::vector<const EncodedExample*> query, gen::MaskSource masks) {
  TaskLosses t;
  t.support = [&model, support, masks](ad::Tape&, const ad::ParamVars& p) { return model.mean_nll(p, support, masks); };
  t.query = [&model, query, masks](ad::Tape&, const ad::ParamVars& p) { return model.mean_nll(p, query, masks); };
  return t;
}

inline ad::LossBuilder batch_loss(const gen::Generator& model, std::vector<const EncodedExample*> batch,
                                  gen::MaskSource masks) {
  return [&model, batch, masks](ad::Tape&, const ad::ParamVars& p) { return model.mean_nll(p, batch, masks); };
}

/// Independent sub-seeds derived from one run seed.
inline std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t stream) {
  return Rng::splitmix(seed ^ Rng::splitmix(stream + 0x51ed2701));
}

struct Clock {
  bool enabled = false;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  std::optional<double> seconds() const {
    if (!enabled) return std::nullopt;
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

// ---------------------------------------------------------------- source phase

struct SourceConfig {
  double lr = 0.001;
  std::size_t batch_size = 25;
  std::size_t max_epochs = 20;
  double convergence_tol = 1e-3;  // relative epoch-loss improvement
  double clip_norm = 0.5;
};

struct SourceResult {
  ParameterVector params;
  AdamState adam;
  std::size_t steps = 0;
  std::vector<double> losses;  // per epoch (mtl) or per outer step (meta)
};

/// Pooled training: minibatch Adam on mean sequence NLL over the pool.
inline SourceResult mtl_train(const ModelContext& ctx, ParameterVector theta, const Dataset& pool,
                              const SourceConfig& cfg, std::uint64_t seed, metrics::TrainRunReport* report = nullptr,
                              const std::string& phase = "source", const Clock& clock = {}) {
  if (pool.empty()) throw ConfigError("mtl_train: empty training pool");
  if (cfg.batch_size == 0) throw ConfigError("mtl_train: batch size must be positive");
  Rng order_rng(sub_seed(seed, 1));
  Rng mask_rng(sub_seed(seed, 2));
  gen::MaskSource masks = gen::bernoulli_masks(ctx.model.config().dropout, mask_rng);
  SourceResult r{std::move(theta), {}, 0, {}};
  std::vector<std::size_t> order(pool.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    order_rng.shuffle(std::span<std::size_t>(order));
    double sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                   order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + cfg.batch_size)));
      sum += mtl_step(r.params, batch_loss(ctx.model, pick(pool, idx), masks), cfg.lr, cfg.clip_norm, r.adam);
      ++batches;
      ++r.steps;
    }
    const double mean = sum / static_cast<double>(batches);
    r.losses.push_back(mean);
    if (report) report->add({phase, epoch, "train", mean, std::nullopt, std::nullopt, clock.seconds()});
    log::debug("mtl epoch " + std::to_string(epoch) + " loss " + std::to_string(mean));
    if (r.losses.size() >= 2) {
      const double prev = r.losses[r.losses.size() - 2];
      if ((prev - mean) / std::abs(prev) < cfg.convergence_tol) break;
    }
  }
  return r;
}

/// True once the moving average over the last `window` values improves on
/// the previous window by less than `tol` (relative).
inline bool converged(const std::vector<double>& losses, std::size_t window, double tol) {
  if (window == 0 || losses.size() < 2 * window) return false;
  const std::size_t n = losses.size();
  double now = 0.0, before = 0.0;
  for (std::size_t i = 0; i < window; ++i) {
    now += losses[n - 1 - i];
    before += losses[n - 1 - window - i];
  }
  return (before - now) / std::abs(before) < tol;
}

/// Episodic meta-training on the source pool until convergence or
/// max_outer_steps.
inline SourceResult meta_train(const ModelContext& ctx, ParameterVector theta, const Dataset& pool,
                               corpus::SplitMode mode, const MetaConfig& cfg, std::uint64_t seed,
                               metrics::TrainRunReport* report = nullptr, const std::string& phase = "source",
                               const Clock& clock = {}) {
  cfg.validate();
  SourceResult r{std::move(theta), {}, 0, {}};
  if (cfg.max_outer_steps == 0) return r;
  corpus::TaskSampler sampler(pool.examples, mode, cfg.task_half_size, sub_seed(seed, 3));
  Rng mask_rng(sub_seed(seed, 4));
  gen::MaskSource masks = gen::bernoulli_masks(ctx.model.config().dropout, mask_rng);

  for (std::size_t step = 1; step <= cfg.max_outer_steps; ++step) {
    std::vector<TaskLosses> tasks;
    for (const corpus::MetaTask& t : sampler.batch(cfg.meta_batch))
      tasks.push_back(task_losses(ctx.model, pick(pool, t.support), pick(pool, t.query), masks));
    MetaStepResult s = meta_step(r.params, tasks, cfg, r.adam);
    r.losses.push_back(s.query_loss);
    r.steps = step;
    if (report) report->add({phase, step, "query", s.query_loss, std::nullopt, std::nullopt, clock.seconds()});
    if (converged(r.losses, cfg.convergence_window, cfg.convergence_tol)) {
      log::info("meta-training converged after " + std::to_string(step) + " outer steps");
      break;
    }
  }
  return r;
}

// ------------------------------------------------------------- fine-tuning

enum class FineTuneMode { Plain, Episodic };

struct FineTuneConfig {
  FineTuneMode mode = FineTuneMode::Plain;
  double lr = 0.001;
  std::size_t batch_size = 10;  // plain minibatch size; also sets updates per epoch
  std::size_t max_epochs = 50;
  std::size_t patience = 5;
  double clip_norm = 0.5;
  // episodic only
  double alpha = 0.1;
  std::size_t meta_batch = 5;
  std::size_t task_half_size = 200;
  bool second_order = true;
  // validation decoding: every `eval_every` epochs (0: never during training)
  std::size_t eval_every = 0;
  bool final_eval = true;
  std::size_t beam_width = 5;
  std::size_t max_len = 40;
};

/// Best-so-far tracking for early stopping. The best NLL never increases.
struct EarlyStopState {
  double best_nll;
  ParameterVector best;
  std::size_t best_epoch = 0;
  std::size_t bad_epochs = 0;
  std::size_t patience;

  EarlyStopState(double nll, ParameterVector snapshot, std::size_t patience_)
      : best_nll(nll), best(std::move(snapshot)), patience(patience_) {}

  /// Returns true when `nll` is a strict improvement.
  bool observe(double nll, const ParameterVector& params, std::size_t epoch) {
    if (nll < best_nll) {
      best_nll = nll;
      best = params;
      best_epoch = epoch;
      bad_epochs = 0;
      return true;
    }
    ++bad_epochs;
    return false;
  }

  /// Patience 0 stops after the first evaluated epoch.
  bool should_stop(std::size_t epoch) const { return patience == 0 ? epoch >= 1 : bad_epochs >= patience; }
};

struct FineTuneResult {
  ParameterVector params;  // best snapshot
  double best_nll = 0.0;
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
  std::vector<double> history;  // validation NLL, index = epoch (0 = initial)
  std::optional<metrics::EvalResult> final_eval;
  AdamState adam;
};

inline FineTuneResult fine_tune(const ModelContext& ctx, const ParameterVector& init, const Dataset& adaptation,
                                const Dataset& validation, const FineTuneConfig& cfg, corpus::SplitMode mode,
                                const std::string& target, std::uint64_t seed,
                                metrics::TrainRunReport* report = nullptr, const std::string& phase = "adapt",
                                const Clock& clock = {}) {
  if (adaptation.empty()) throw ConfigError("fine_tune: empty adaptation set");
  if (validation.empty()) throw ConfigError("fine_tune: empty validation set");
  if (cfg.batch_size == 0) throw ConfigError("fine_tune: batch size must be positive");

  Rng order_rng(sub_seed(seed, 5));
  Rng task_rng(sub_seed(seed, 6));
  Rng mask_rng(sub_seed(seed, 7));
  gen::MaskSource masks = gen::bernoulli_masks(ctx.model.config().dropout, mask_rng);

  MetaConfig episodic;
  episodic.alpha = cfg.alpha;
  episodic.beta = cfg.lr;
  episodic.meta_batch = cfg.meta_batch;
  episodic.second_order = cfg.second_order;
  episodic.clip_norm = cfg.clip_norm;
  std::size_t half = cfg.task_half_size;
  if (cfg.mode == FineTuneMode::Episodic) {
    const std::size_t members = corpus::modality_members(adaptation.examples, mode, target).size();
    if (members < 2) throw ConfigError("fine_tune: target modality needs at least two adaptation examples");
    if (2 * half > members) {
      half = members / 2;
      log::info("episodic fine-tuning: task half size shrinks to " + std::to_string(half));
    }
    episodic.task_half_size = half;
    episodic.validate();
  }

  auto row = [&](std::size_t epoch, double nll, const ParameterVector& p) {
    std::optional<double> bleu, err;
    if (cfg.eval_every > 0 && epoch % cfg.eval_every == 0) {
      auto e = metrics::evaluate(ctx.model, p, ctx.vocab, ctx.encoder, validation.examples, cfg.beam_width, cfg.max_len);
      bleu = e.bleu4;
      err = e.err;
    }
    if (report) report->add({phase, epoch, "validation", nll, bleu, err, clock.seconds()});
  };

  FineTuneResult r;
  ParameterVector theta = init;
  const double initial = gen::evaluate_nll(ctx.model, theta, validation.encoded);
  r.history.push_back(initial);
  row(0, initial, theta);
  EarlyStopState stop(initial, theta, cfg.patience);

  const std::size_t updates = (adaptation.size() + cfg.batch_size - 1) / cfg.batch_size;
  std::vector<std::size_t> order(adaptation.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    if (cfg.mode == FineTuneMode::Plain) {
      order_rng.shuffle(std::span<std::size_t>(order));
      for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
        std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                     order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + cfg.batch_size)));
        mtl_step(theta, batch_loss(ctx.model, pick(adaptation, idx), masks), cfg.lr, cfg.clip_norm, r.adam);
      }
    } else {
      for (std::size_t u = 0; u < updates; ++u) {
        std::vector<TaskLosses> tasks;
        for (std::size_t k = 0; k < cfg.meta_batch; ++k) {
          corpus::MetaTask t = corpus::sample_meta_task(adaptation.examples, mode, target, half, task_rng);
          tasks.push_back(task_losses(ctx.model, pick(adaptation, t.support), pick(adaptation, t.query), masks));
        }
        meta_step(theta, tasks, episodic, r.adam);
      }
    }
    const double nll = gen::evaluate_nll(ctx.model, theta, validation.encoded);
    r.history.push_back(nll);
    r.epochs_run = epoch;
    stop.observe(nll, theta, epoch);
    row(epoch, nll, theta);
    if (stop.should_stop(epoch)) break;
  }
  r.params = stop.best;
  r.best_nll = stop.best_nll;
  r.best_epoch = stop.best_epoch;
  if (cfg.final_eval) {
    r.final_eval =
        metrics::evaluate(ctx.model, r.params, ctx.vocab, ctx.encoder, validation.examples, cfg.beam_width, cfg.max_len);
  }
  return r;
}

/// First epoch whose validation NLL is at or below `threshold`, if any.
inline std::optional<std::size_t> epochs_to_reach(const std::vector<double>& history, double threshold) {
  for (std::size_t e = 0; e < history.size(); ++e)
    if (history[e] <= threshold) return e;
  return std::nullopt;
}

// ------------------------------------------------------------------ regimes

enum class Regime { Scratch, Mtl, Zero, Supervised, Meta };

inline const char* regime_name(Regime r) {
  switch (r) {
    case Regime::Scratch: return "scratch";
    case Regime::Mtl: return "mtl";
    case Regime::Zero: return "zero";
    case Regime::Supervised: return "supervised";
    case Regime::Meta: return "meta";
  }
  return "?";
}

inline Regime parse_regime(const std::string& s) {
  for (Regime r : {Regime::Scratch, Regime::Mtl, Regime::Zero, Regime::Supervised, Regime::Meta})
    if (s == regime_name(r)) return r;
  throw ConfigError("unknown regime '" + s + "' (expected scratch, mtl, zero, supervised or meta)");
}

struct SplitData {
  corpus::SplitMode mode = corpus::SplitMode::Domain;
  std::string target;
  Dataset source;
  Dataset adaptation;
  Dataset validation;
  Dataset test;
  Dataset target_rest;  // target examples outside the three parts
};

struct RegimeConfig {
  MetaConfig meta;
  SourceConfig mtl;
  FineTuneConfig plain;     // scratch / mtl fine-tuning
  FineTuneConfig episodic;  // meta fine-tuning
  std::uint64_t seed = 1;
  bool wall_clock = false;
};

struct RegimeResult {
  Regime regime = Regime::Meta;
  ParameterVector params;
  std::optional<ParameterVector> source_params;
  std::optional<FineTuneResult> adaptation;
  metrics::TrainRunReport report;
  AdamState adam;  // state of the last optimizer phase
};

/// Source models keyed by regime family, so sweeps can reuse them.
struct SourceCache {
  std::optional<ParameterVector> mtl;
  std::optional<ParameterVector> meta;
};

inline RegimeResult run_regime(Regime regime, const ModelContext& ctx, const SplitData& split, const RegimeConfig& cfg,
                               SourceCache* cache = nullptr) {
  RegimeResult out;
  out.regime = regime;
  Clock clock{cfg.wall_clock};
  const ParameterVector theta0 = ctx.model.init(sub_seed(cfg.seed, 10));
  const std::uint64_t source_seed = sub_seed(cfg.seed, 11);
  const std::uint64_t adapt_seed = sub_seed(cfg.seed, 12);

  auto source_mtl = [&]() {
    if (cache && cache->mtl) return *cache->mtl;
    SourceResult s = mtl_train(ctx, theta0, split.source, cfg.mtl, source_seed, &out.report, "source", clock);
    out.adam = s.adam;
    if (cache) cache->mtl = s.params;
    return s.params;
  };

  switch (regime) {
    case Regime::Scratch: {
      FineTuneResult f = fine_tune(ctx, theta0, split.adaptation, split.validation, cfg.plain, split.mode, split.target,
                                   adapt_seed, &out.report, "adapt", clock);
      out.params = f.params;
      out.adam = f.adam;
      out.adaptation = std::move(f);
      break;
    }
    case Regime::Mtl: {
      ParameterVector src = source_mtl();
      out.source_params = src;
      FineTuneResult f = fine_tune(ctx, src, split.adaptation, split.validation, cfg.plain, split.mode, split.target,
                                   adapt_seed, &out.report, "adapt", clock);
      out.params = f.params;
      out.adam = f.adam;
      out.adaptation = std::move(f);
      break;
    }
    case Regime::Zero: {
      out.params = source_mtl();
      out.source_params = out.params;
      break;
    }
    case Regime::Supervised: {
      Dataset pooled = split.source;
      for (const Dataset* d : {&split.adaptation, &split.target_rest}) {
        pooled.examples.insert(pooled.examples.end(), d->examples.begin(), d->examples.end());
        pooled.encoded.insert(pooled.encoded.end(), d->encoded.begin(), d->encoded.end());
      }
      SourceResult s = mtl_train(ctx, theta0, pooled, cfg.mtl, source_seed, &out.report, "source", clock);
      out.params = s.params;
      out.source_params = s.params;
      out.adam = s.adam;
      break;
    }
    case Regime::Meta: {
      ParameterVector src;
      if (cache && cache->meta) {
        src = *cache->meta;
      } else {
        SourceResult s = meta_train(ctx, theta0, split.source, split.mode, cfg.meta, source_seed, &out.report, "source",
                                    clock);
        src = s.params;
        if (cache) cache->meta = src;
      }
      out.source_params = src;
      FineTuneResult f = fine_tune(ctx, src, split.adaptation, split.validation, cfg.episodic, split.mode,
                                   split.target, adapt_seed, &out.report, "adapt", clock);
      out.params = f.params;
      out.adam = f.adam;
      out.adaptation = std::move(f);
      break;
    }
  }
  return out;
}

}  // namespace metanlg::meta
