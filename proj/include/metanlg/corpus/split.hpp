// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "metanlg/corpus/types.hpp"
#include "metanlg/random.hpp"

namespace metanlg::corpus {

struct SplitSpec {
  SplitMode mode = SplitMode::Domain;
  std::string target;
  std::size_t adaptation_size = 1000;
  std::size_t validation_size = 200;
  std::size_t test_size = 0;  // 0: every remaining target example
};

/// Leave-one-out split. The source pool holds every example that does not
/// mention the target label; target examples are shuffled and cut into
/// adaptation / validation / test, with anything beyond a bounded test set
/// kept in `target_rest`.
struct Split {
  std::vector<CorpusExample> source;
  std::vector<CorpusExample> adaptation;
  std::vector<CorpusExample> validation;
  std::vector<CorpusExample> test;
  std::vector<CorpusExample> target_rest;
};

inline Split make_split(const std::vector<CorpusExample>& corpus, const SplitSpec& spec, std::uint64_t seed) {
  Split out;
  std::vector<const CorpusExample*> target;
  for (const CorpusExample& ex : corpus) {
    if (has_label(ex, spec.mode, spec.target)) {
      target.push_back(&ex);
    } else {
      out.source.push_back(ex);
    }
  }
  if (target.empty()) throw CorpusError("split: no example carries target label '" + spec.target + "'");
  const std::size_t needed = spec.adaptation_size + spec.validation_size + 1;
  if (target.size() < needed) {
    throw CorpusError("split: target '" + spec.target + "' has " + std::to_string(target.size()) +
                      " examples, need at least " + std::to_string(needed));
  }

  Rng rng(seed);
  rng.shuffle(std::span<const CorpusExample*>(target));
  std::size_t pos = 0;
  auto take = [&](std::vector<CorpusExample>& dst, std::size_t n) {
    for (std::size_t i = 0; i < n && pos < target.size(); ++i) dst.push_back(*target[pos++]);
  };
  take(out.adaptation, spec.adaptation_size);
  take(out.validation, spec.validation_size);
  take(out.test, spec.test_size == 0 ? target.size() - pos : spec.test_size);
  take(out.target_rest, target.size() - pos);
  return out;
}

}  // namespace metanlg::corpus
