// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "metanlg/corpus/types.hpp"
#include "metanlg/numeric_array.hpp"

namespace metanlg::corpus {

/// Multi-hot DA encoding: one entry per act type, then one entry per
/// (domain, slot) pair in schema order. Slots are keyed by domain because
/// placeholders are.
class DAEncoder {
 public:
  DAEncoder() = default;

  explicit DAEncoder(const Schema& schema) {
    for (std::size_t i = 0; i < schema.acts.size(); ++i) act_index_[schema.acts[i]] = i;
    std::size_t next = schema.acts.size();
    for (const std::string& d : schema.domains) {
      auto it = schema.slots.find(d);
      if (it == schema.slots.end()) continue;
      for (const std::string& s : it->second) slot_index_[{d, s}] = next++;
    }
    n_acts_ = schema.acts.size();
    dim_ = next;
  }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t act_count() const noexcept { return n_acts_; }

  /// 1 x dim row. Throws CorpusError on labels outside the schema or an
  /// empty act list.
  NumericArray encode(const DialogueAct& da) const {
    if (da.acts.empty()) throw CorpusError("cannot encode a dialogue act with no act entries");
    NumericArray v = NumericArray::matrix(1, dim_, 0.0);
    for (const ActEntry& a : da.acts) {
      auto ai = act_index_.find(a.act);
      if (ai == act_index_.end()) throw CorpusError("unknown act type '" + a.act + "'");
      v(0, ai->second) = 1.0;
      for (const SlotValue& s : a.slots) {
        auto si = slot_index_.find({a.domain, s.name});
        if (si == slot_index_.end()) {
          throw CorpusError("unknown slot '" + s.name + "' for domain '" + a.domain + "'");
        }
        v(0, si->second) = 1.0;
      }
    }
    return v;
  }

 private:
  std::map<std::string, std::size_t> act_index_;
  std::map<std::pair<std::string, std::string>, std::size_t> slot_index_;
  std::size_t n_acts_ = 0;
  std::size_t dim_ = 0;
};

}  // namespace metanlg::corpus
