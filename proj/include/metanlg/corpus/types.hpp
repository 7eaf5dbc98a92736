// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "metanlg/error.hpp"

namespace metanlg::corpus {

inline constexpr const char* kFormatTag = "meta-nlg-corpus-v1";

/// Declared label sets. Slots are scoped per domain.
struct Schema {
  std::vector<std::string> domains;
  std::vector<std::string> acts;
  std::map<std::string, std::vector<std::string>> slots;

  bool has_domain(const std::string& d) const { return std::find(domains.begin(), domains.end(), d) != domains.end(); }
  bool has_act(const std::string& a) const { return std::find(acts.begin(), acts.end(), a) != acts.end(); }
  bool has_slot(const std::string& domain, const std::string& slot) const {
    auto it = slots.find(domain);
    return it != slots.end() && std::find(it->second.begin(), it->second.end(), slot) != it->second.end();
  }

  friend bool operator==(const Schema&, const Schema&) = default;
};

struct SlotValue {
  std::string name;
  std::optional<std::string> value;  // nullopt: slot mentioned without a value

  bool has_value() const { return value.has_value() && !value->empty(); }
  friend bool operator==(const SlotValue&, const SlotValue&) = default;
};

struct ActEntry {
  std::string domain;
  std::string act;
  std::vector<SlotValue> slots;

  friend bool operator==(const ActEntry&, const ActEntry&) = default;
};

struct DialogueAct {
  std::vector<ActEntry> acts;

  friend bool operator==(const DialogueAct&, const DialogueAct&) = default;
};

inline std::string placeholder(const std::string& domain, const std::string& slot) {
  return "[slot-" + domain + "-" + slot + "]";
}

inline bool is_placeholder(const std::string& token) {
  return token.size() > 7 && token.rfind("[slot-", 0) == 0 && token.back() == ']';
}

/// Throws CorpusError for an empty act list or labels missing from the schema.
inline void validate(const DialogueAct& da, const Schema& schema) {
  if (da.acts.empty()) throw CorpusError("dialogue act has no act entries");
  for (const ActEntry& a : da.acts) {
    if (!schema.has_domain(a.domain)) throw CorpusError("unknown domain '" + a.domain + "'");
    if (!schema.has_act(a.act)) throw CorpusError("unknown act type '" + a.act + "'");
    for (const SlotValue& s : a.slots) {
      if (!schema.has_slot(a.domain, s.name)) {
        throw CorpusError("unknown slot '" + s.name + "' for domain '" + a.domain + "'");
      }
    }
  }
}

struct CorpusExample {
  std::size_t id = 0;  // position in the loaded corpus; identity for set algebra
  DialogueAct da;
  std::vector<std::string> tokens;  // delexicalized, no BOS/EOS
  std::string raw;
  std::vector<std::string> domains;    // sorted, unique
  std::vector<std::string> act_types;  // sorted, unique
  bool aligned = true;

  friend bool operator==(const CorpusExample&, const CorpusExample&) = default;
};

enum class SplitMode { Domain, ActType };

inline bool has_label(const CorpusExample& ex, SplitMode mode, const std::string& label) {
  const auto& labels = mode == SplitMode::Domain ? ex.domains : ex.act_types;
  return std::binary_search(labels.begin(), labels.end(), label);
}

inline const std::vector<std::string>& labels_of(const CorpusExample& ex, SplitMode mode) {
  return mode == SplitMode::Domain ? ex.domains : ex.act_types;
}

}  // namespace metanlg::corpus
