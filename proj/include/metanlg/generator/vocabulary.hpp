// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "metanlg/corpus/types.hpp"
#include "metanlg/error.hpp"

namespace metanlg::gen {

inline constexpr std::size_t kPad = 0;
inline constexpr std::size_t kBos = 1;
inline constexpr std::size_t kEos = 2;
inline constexpr std::size_t kUnk = 3;

/// Token <-> id bijection. Ids 0..3 are PAD, BOS, EOS, UNK; then one id per
/// schema placeholder (sorted); then the remaining corpus words (sorted).
class Vocabulary {
 public:
  Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

  /// `tokens` excludes the reserved entries.
  explicit Vocabulary(const std::vector<std::string>& tokens) {
    for (const char* r : {"<pad>", "<bos>", "<eos>", "<unk>"}) add(r);
    for (const std::string& t : tokens) {
      if (index_.count(t)) throw Error("vocabulary: duplicate token '" + t + "'");
      add(t);
    }
  }

  static Vocabulary build(const std::vector<corpus::CorpusExample>& examples, const corpus::Schema& schema) {
    std::set<std::string> placeholders;
    for (const auto& [domain, slots] : schema.slots)
      for (const std::string& s : slots) placeholders.insert(corpus::placeholder(domain, s));
    std::set<std::string> words;
    for (const auto& ex : examples)
      for (const std::string& t : ex.tokens)
        if (!placeholders.count(t)) words.insert(t);
    std::vector<std::string> tokens(placeholders.begin(), placeholders.end());
    tokens.insert(tokens.end(), words.begin(), words.end());
    return Vocabulary(tokens);
  }

  std::size_t size() const noexcept { return tokens_.size(); }

  std::size_t id(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnk : it->second;
  }
  bool contains(const std::string& token) const { return index_.count(token) != 0; }

  const std::string& token(std::size_t id) const {
    if (id >= tokens_.size()) throw Error("vocabulary: id " + std::to_string(id) + " out of range");
    return tokens_[id];
  }

  /// BOS, ids..., EOS.
  std::vector<std::size_t> encode(const std::vector<std::string>& tokens) const {
    std::vector<std::size_t> out{kBos};
    for (const std::string& t : tokens) out.push_back(id(t));
    out.push_back(kEos);
    return out;
  }

  /// Drops reserved ids other than UNK.
  std::vector<std::string> decode(const std::vector<std::size_t>& ids) const {
    std::vector<std::string> out;
    for (std::size_t i : ids)
      if (i != kPad && i != kBos && i != kEos) out.push_back(token(i));
    return out;
  }

  /// Non-reserved tokens in id order; enough to rebuild the vocabulary.
  std::vector<std::string> entries() const { return {tokens_.begin() + 4, tokens_.end()}; }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  void add(const std::string& t) {
    index_[t] = tokens_.size();
    tokens_.push_back(t);
  }

  std::vector<std::string> tokens_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace metanlg::gen
