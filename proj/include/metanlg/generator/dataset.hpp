// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "metanlg/corpus/encoding.hpp"
#include "metanlg/generator/model.hpp"
#include "metanlg/generator/vocabulary.hpp"

namespace metanlg::gen {

inline EncodedExample encode_example(const Vocabulary& vocab, const corpus::DAEncoder& enc,
                                     const corpus::CorpusExample& ex) {
  return {enc.encode(ex.da), vocab.encode(ex.tokens)};
}

inline std::vector<EncodedExample> encode_examples(const Vocabulary& vocab, const corpus::DAEncoder& enc,
                                                   const std::vector<corpus::CorpusExample>& examples) {
  std::vector<EncodedExample> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) out.push_back(encode_example(vocab, enc, ex));
  return out;
}

}  // namespace metanlg::gen
