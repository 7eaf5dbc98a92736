// SPDX-License-Identifier: Apache-2.0
//
// Episodic task construction: every episode draws a support set and a
// disjoint query set from a single modality (one domain, or one act type) of
// the source pool.
#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "metanlg/corpus/types.hpp"
#include "metanlg/log.hpp"
#include "metanlg/random.hpp"

namespace metanlg::corpus {

/// Indices refer to the pool the task was sampled from.
struct MetaTask {
  std::vector<std::size_t> support;
  std::vector<std::size_t> query;
  std::string modality;
};

inline std::vector<std::size_t> modality_members(std::span<const CorpusExample> pool, SplitMode mode,
                                                 const std::string& label) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < pool.size(); ++i)
    if (has_label(pool[i], mode, label)) out.push_back(i);
  return out;
}

/// Draws 2 * half_size members of the modality without replacement and splits
/// them evenly. Throws CorpusError when the modality is too small.
inline MetaTask sample_meta_task(std::span<const CorpusExample> pool, SplitMode mode, const std::string& modality,
                                 std::size_t half_size, Rng& rng) {
  std::vector<std::size_t> members = modality_members(pool, mode, modality);
  if (half_size == 0) throw CorpusError("sample_meta_task: half size must be positive");
  if (members.size() < 2 * half_size) {
    throw CorpusError("sample_meta_task: modality '" + modality + "' has " + std::to_string(members.size()) +
                      " examples, need " + std::to_string(2 * half_size));
  }
  // Partial Fisher-Yates: the first 2*half positions become the sample.
  for (std::size_t i = 0; i < 2 * half_size; ++i) {
    std::swap(members[i], members[i + rng.below(members.size() - i)]);
  }
  MetaTask t;
  t.modality = modality;
  t.support.assign(members.begin(), members.begin() + static_cast<std::ptrdiff_t>(half_size));
  t.query.assign(members.begin() + static_cast<std::ptrdiff_t>(half_size),
                 members.begin() + static_cast<std::ptrdiff_t>(2 * half_size));
  return t;
}

/// Owns a seed stream and picks modalities uniformly per episode. Modalities
/// smaller than 2 * half_size run with half = floor(count / 2).
class TaskSampler {
 public:
  TaskSampler(std::span<const CorpusExample> pool, SplitMode mode, std::size_t half_size, std::uint64_t seed)
      : pool_(pool), mode_(mode), half_size_(half_size), rng_(seed) {
    std::map<std::string, std::size_t> counts;
    for (const CorpusExample& ex : pool)
      for (const std::string& label : labels_of(ex, mode)) ++counts[label];
    for (const auto& [label, count] : counts) {
      if (count < 2) continue;
      modalities_.push_back(label);
      const std::size_t half = std::min(half_size, count / 2);
      if (half < half_size) {
        log::warning("modality '" + label + "' has " + std::to_string(count) + " examples; task half size " +
                     std::to_string(half_size) + " shrinks to " + std::to_string(half));
      }
      halves_[label] = half;
    }
    if (modalities_.empty()) throw CorpusError("task sampler: no modality has at least two examples");
  }

  MetaTask next() {
    const std::string& m = modalities_[rng_.below(modalities_.size())];
    return sample_meta_task(pool_, mode_, m, halves_.at(m), rng_);
  }

  std::vector<MetaTask> batch(std::size_t k) {
    std::vector<MetaTask> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) out.push_back(next());
    return out;
  }

  const std::vector<std::string>& modalities() const noexcept { return modalities_; }
  std::size_t half_size(const std::string& modality) const { return halves_.at(modality); }
  std::span<const CorpusExample> pool() const noexcept { return pool_; }

 private:
  std::span<const CorpusExample> pool_;
  SplitMode mode_;
  std::size_t half_size_;
  Rng rng_;
  std::vector<std::string> modalities_;
  std::map<std::string, std::size_t> halves_;
};

}  // namespace metanlg::corpus
