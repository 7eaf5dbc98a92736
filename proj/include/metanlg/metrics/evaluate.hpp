// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "metanlg/corpus/encoding.hpp"
#include "metanlg/generator/decode.hpp"
#include "metanlg/metrics/metrics.hpp"

namespace metanlg::metrics {

/// Top-1 beam output per example; corpus BLEU-4 and micro-averaged ERR.
inline EvalResult evaluate(const gen::Generator& model, const ParameterVector& params, const gen::Vocabulary& vocab,
                           const corpus::DAEncoder& encoder, const std::vector<corpus::CorpusExample>& examples,
                           std::size_t beam_width = 5, std::size_t max_len = 40) {
  if (examples.empty()) throw Error("evaluate: no examples");
  gen::DecodeOptions opt;
  opt.beam_width = beam_width;
  opt.max_len = max_len;
  std::vector<Tokens> candidates;
  std::vector<Tokens> references;
  EvalResult r;
  for (const auto& ex : examples) {
    auto beams = gen::decode(model, params, encoder.encode(ex.da), opt);
    Tokens out = vocab.decode(beams.front().tokens);
    r.counts += slot_errors(out, ex.da);
    candidates.push_back(std::move(out));
    references.push_back(ex.tokens);
  }
  r.bleu4 = bleu4(candidates, references);
  r.err = r.counts.err();
  r.n = examples.size();
  return r;
}

}  // namespace metanlg::metrics
