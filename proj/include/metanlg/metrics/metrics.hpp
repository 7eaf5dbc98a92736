// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "metanlg/corpus/types.hpp"
#include "metanlg/error.hpp"

namespace metanlg::metrics {

using Tokens = std::vector<std::string>;

/// Corpus-level BLEU-4 with one reference per candidate, uniform weights and
/// no smoothing: any order with zero matches gives 0.
inline double bleu4(const std::vector<Tokens>& candidates, const std::vector<Tokens>& references) {
  if (candidates.size() != references.size()) throw Error("bleu4: candidate and reference counts differ");
  if (candidates.empty()) throw Error("bleu4: empty corpus");
  double matched[4] = {0, 0, 0, 0};
  double possible[4] = {0, 0, 0, 0};
  double cand_len = 0;
  double ref_len = 0;
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    const Tokens& c = candidates[k];
    const Tokens& r = references[k];
    cand_len += static_cast<double>(c.size());
    ref_len += static_cast<double>(r.size());
    for (std::size_t n = 1; n <= 4; ++n) {
      std::map<std::vector<std::string>, int> ref_counts;
      for (std::size_t i = 0; i + n <= r.size(); ++i) ++ref_counts[Tokens(r.begin() + i, r.begin() + i + n)];
      std::map<std::vector<std::string>, int> cand_counts;
      for (std::size_t i = 0; i + n <= c.size(); ++i) ++cand_counts[Tokens(c.begin() + i, c.begin() + i + n)];
      for (const auto& [gram, count] : cand_counts) {
        auto it = ref_counts.find(gram);
        if (it != ref_counts.end()) matched[n - 1] += std::min(count, it->second);
        possible[n - 1] += count;
      }
    }
  }
  double log_sum = 0.0;
  for (int n = 0; n < 4; ++n) {
    if (matched[n] == 0.0) return 0.0;
    log_sum += std::log(matched[n] / possible[n]);
  }
  const double bp = cand_len > ref_len ? 1.0 : std::exp(1.0 - ref_len / cand_len);
  return bp * std::exp(log_sum / 4.0);
}

struct SlotErrors {
  long missing = 0;
  long redundant = 0;
  long total = 0;  // value-bearing slots in the DA

  /// (missing + redundant) / total. With no value-bearing slots the
  /// denominator is taken as 1, so stray placeholders still count.
  double err() const {
    if (total == 0 && missing + redundant == 0) return 0.0;
    return static_cast<double>(missing + redundant) / static_cast<double>(total > 0 ? total : 1);
  }

  SlotErrors& operator+=(const SlotErrors& o) {
    missing += o.missing;
    redundant += o.redundant;
    total += o.total;
    return *this;
  }
};

/// Counts placeholder tokens in a delexicalized generation against the
/// value-bearing slots of `da`.
inline SlotErrors slot_errors(const Tokens& generated, const corpus::DialogueAct& da) {
  std::map<std::string, long> expected;
  SlotErrors out;
  for (const auto& a : da.acts) {
    for (const auto& s : a.slots) {
      if (!s.has_value()) continue;
      ++expected[corpus::placeholder(a.domain, s.name)];
      ++out.total;
    }
  }
  std::map<std::string, long> seen;
  for (const std::string& t : generated)
    if (corpus::is_placeholder(t)) ++seen[t];
  for (const auto& [ph, want] : expected) {
    const long got = seen.count(ph) ? seen.at(ph) : 0;
    if (got < want) out.missing += want - got;
  }
  for (const auto& [ph, got] : seen) {
    const long want = expected.count(ph) ? expected.at(ph) : 0;
    if (got > want) out.redundant += got - want;
  }
  return out;
}

inline double slot_error_rate(const Tokens& generated, const corpus::DialogueAct& da) {
  return slot_errors(generated, da).err();
}

struct EvalResult {
  double bleu4 = 0.0;
  double err = 0.0;
  SlotErrors counts;
  std::size_t n = 0;
};

}  // namespace metanlg::metrics
