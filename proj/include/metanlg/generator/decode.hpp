// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <limits>
#include <optional>
#include <vector>

#include "metanlg/generator/model.hpp"

namespace metanlg::gen {

struct DecodeOptions {
  std::size_t beam_width = 5;
  std::size_t max_len = 40;
  std::size_t bos = kBos;
  std::optional<std::size_t> eos = kEos;
  std::vector<std::size_t> excluded{kPad, kBos, kUnk};  // never emitted
};

struct Hypothesis {
  std::vector<std::size_t> tokens;  // generated ids, EOS included when reached
  double logprob = 0.0;
  double score = 0.0;  // logprob / tokens.size()
  bool finished = false;
};

namespace detail {

inline bool token_order(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

}  // namespace detail

/// Length-normalised beam search. Every step expands all live hypotheses and
/// keeps the best `beam_width` expansions; those ending in EOS are set aside.
/// Hypotheses still live at `max_len` are closed as they are. Ties break
/// towards smaller token ids. Results are sorted by score, best first.
inline std::vector<Hypothesis> decode(const Generator& model, const ParameterVector& params, const NumericArray& da,
                                      const DecodeOptions& opt = {}) {
  if (opt.beam_width == 0) throw Error("decode: beam width must be at least 1");
  if (opt.max_len == 0) throw Error("decode: max_len must be at least 1");
  if (da.rows() != 1) throw ShapeError("decode: expected a single DA row");
  const std::size_t V = model.vocab_size();
  std::vector<bool> allowed(V, true);
  for (std::size_t x : opt.excluded)
    if (x < V) allowed[x] = false;

  Tape tape;
  tape.set_grad_enabled(false);
  ParamVars p = ad::bind_constant(tape, params);
  DecoderState state = model.initial_state(tape, da);

  std::vector<Hypothesis> live{Hypothesis{}};
  std::vector<std::size_t> last{opt.bos};
  std::vector<Hypothesis> done;

  for (std::size_t t = 0; t < opt.max_len && !live.empty(); ++t) {
    auto [next, logits] = model.step(p, state, last);
    const NumericArray lp = ad::log_softmax(logits).value();

    struct Cand {
      std::size_t parent;
      std::size_t token;
      double logprob;
    };
    std::vector<Cand> cands;
    for (std::size_t k = 0; k < live.size(); ++k)
      for (std::size_t v = 0; v < V; ++v)
        if (allowed[v]) cands.push_back({k, v, live[k].logprob + lp(k, v)});
    const std::size_t keep = std::min(opt.beam_width, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(),
                      [&](const Cand& a, const Cand& b) {
                        if (a.logprob != b.logprob) return a.logprob > b.logprob;
                        if (live[a.parent].tokens != live[b.parent].tokens)
                          return detail::token_order(live[a.parent].tokens, live[b.parent].tokens);
                        return a.token < b.token;
                      });

    std::vector<Hypothesis> survivors;
    std::vector<std::size_t> rows;
    std::vector<std::size_t> tokens;
    for (std::size_t i = 0; i < keep; ++i) {
      Hypothesis h = live[cands[i].parent];
      h.tokens.push_back(cands[i].token);
      h.logprob = cands[i].logprob;
      h.score = h.logprob / static_cast<double>(h.tokens.size());
      if (opt.eos && cands[i].token == *opt.eos) {
        h.finished = true;
        done.push_back(std::move(h));
      } else {
        survivors.push_back(std::move(h));
        rows.push_back(cands[i].parent);
        tokens.push_back(cands[i].token);
      }
    }
    live = std::move(survivors);
    if (live.empty()) break;
    // Row k of the state belongs to live[k].
    auto gather = [&](Var v) { return ad::embedding(v, rows); };
    state = DecoderState{gather(next.h), gather(next.c), gather(next.da)};
    last = std::move(tokens);
  }
  for (Hypothesis& h : live) done.push_back(std::move(h));

  std::stable_sort(done.begin(), done.end(), [](const Hypothesis& a, const Hypothesis& b) {
    if (a.score != b.score) return a.score > b.score;
    return detail::token_order(a.tokens, b.tokens);
  });
  if (done.size() > opt.beam_width) done.resize(opt.beam_width);
  return done;
}

}  // namespace metanlg::gen
