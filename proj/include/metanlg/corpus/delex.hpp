// SPDX-License-Identifier: Apache-2.0
//
// Lower-casing tokenizer and slot-value delexicalization.
#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "metanlg/corpus/types.hpp"

namespace metanlg::corpus {

inline std::string lowercase(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

namespace detail {

inline bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

inline bool splits_off(char c) { return std::ispunct(static_cast<unsigned char>(c)) && c != '-' && c != '_'; }

inline void tokenize_plain(const std::string& text, std::vector<std::string>& out) {
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(cur);
    cur.clear();
  };
  for (char raw : text) {
    const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(raw)));
    if (std::isspace(static_cast<unsigned char>(c))) {
      flush();
    } else if (splits_off(c)) {
      flush();
      out.emplace_back(1, c);
    } else {
      cur.push_back(c);
    }
  }
  flush();
}

}  // namespace detail

/// Lowercases, splits on whitespace and peels punctuation into separate
/// tokens. `[slot-...]` placeholders survive as single tokens.
inline std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t open = text.find("[slot-", pos);
    const std::size_t close = open == std::string::npos ? std::string::npos : text.find(']', open);
    if (open == std::string::npos || close == std::string::npos) {
      detail::tokenize_plain(text.substr(pos), out);
      break;
    }
    detail::tokenize_plain(text.substr(pos, open - pos), out);
    out.push_back(lowercase(text.substr(open, close - open + 1)));
    pos = close + 1;
  }
  return out;
}

struct DelexResult {
  std::vector<std::string> tokens;
  bool aligned = true;
  std::map<std::string, int> placeholder_counts;
};

/// Replaces every valued slot's value (longest first, case-insensitive, on
/// word boundaries) by its `[slot-<domain>-<slot>]` placeholder, then
/// tokenizes. The result is aligned when each valued slot matched exactly once.
inline DelexResult delexicalize(const std::string& utterance, const DialogueAct& da) {
  struct Target {
    std::string value;
    std::string token;
    std::size_t order;
  };
  std::vector<Target> targets;
  for (const ActEntry& a : da.acts) {
    for (const SlotValue& s : a.slots) {
      if (!s.has_value()) continue;
      targets.push_back({lowercase(*s.value), placeholder(a.domain, s.name), targets.size()});
    }
  }
  std::stable_sort(targets.begin(), targets.end(),
                   [](const Target& x, const Target& y) { return x.value.size() > y.value.size(); });

  // Text pieces; placeholders are never searched again.
  struct Piece {
    std::string text;
    bool placeholder;
  };
  std::vector<Piece> pieces{{lowercase(utterance), false}};

  DelexResult result;
  for (const Target& t : targets) {
    int hits = 0;
    std::vector<Piece> next;
    for (Piece& p : pieces) {
      if (p.placeholder) {
        next.push_back(std::move(p));
        continue;
      }
      std::size_t from = 0;
      std::size_t pos = 0;
      while ((pos = p.text.find(t.value, pos)) != std::string::npos) {
        const std::size_t end = pos + t.value.size();
        const bool left_ok = pos == 0 || !detail::is_word_char(p.text[pos - 1]);
        const bool right_ok = end == p.text.size() || !detail::is_word_char(p.text[end]);
        if (!left_ok || !right_ok) {
          ++pos;
          continue;
        }
        if (pos > from) next.push_back({p.text.substr(from, pos - from), false});
        next.push_back({t.token, true});
        ++hits;
        from = pos = end;
      }
      if (from < p.text.size()) next.push_back({p.text.substr(from), false});
    }
    pieces = std::move(next);
    if (hits != 1) result.aligned = false;
  }

  for (const Piece& p : pieces) {
    if (p.placeholder) {
      result.tokens.push_back(p.text);
      ++result.placeholder_counts[p.text];
    } else {
      detail::tokenize_plain(p.text, result.tokens);
    }
  }
  return result;
}

/// Substitutes slot values back into placeholder positions. Repeated
/// placeholders consume the DA's values in order; placeholders without a
/// value in the DA are left as they are.
inline std::string relexicalize(const std::vector<std::string>& tokens, const DialogueAct& da) {
  std::map<std::string, std::vector<std::string>> values;
  for (const ActEntry& a : da.acts)
    for (const SlotValue& s : a.slots)
      if (s.has_value()) values[placeholder(a.domain, s.name)].push_back(*s.value);
  std::map<std::string, std::size_t> used;
  std::string out;
  for (const std::string& tok : tokens) {
    if (!out.empty()) out.push_back(' ');
    auto it = values.find(tok);
    if (it != values.end() && used[tok] < it->second.size()) {
      out += it->second[used[tok]++];
    } else {
      out += tok;
    }
  }
  return out;
}

inline CorpusExample make_example(std::size_t id, DialogueAct da, std::string raw) {
  CorpusExample ex;
  ex.id = id;
  DelexResult d = delexicalize(raw, da);
  ex.tokens = std::move(d.tokens);
  ex.aligned = d.aligned;
  std::set<std::string> domains;
  std::set<std::string> acts;
  for (const ActEntry& a : da.acts) {
    domains.insert(a.domain);
    acts.insert(a.act);
  }
  ex.domains.assign(domains.begin(), domains.end());
  ex.act_types.assign(acts.begin(), acts.end());
  ex.da = std::move(da);
  ex.raw = std::move(raw);
  return ex;
}

}  // namespace metanlg::corpus
