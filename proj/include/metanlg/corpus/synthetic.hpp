// SPDX-License-Identifier: Apache-2.0
//
// Template-grammar corpus generator. Produces a multi-domain dialogue-act
// corpus with shared and domain-specific slots, small enough to train on a
// laptop core in minutes.
#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <optional>
#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "metanlg/corpus/delex.hpp"
#include "metanlg/corpus/io.hpp"
#include "metanlg/corpus/types.hpp"
#include "metanlg/random.hpp"

namespace metanlg::corpus {

struct SynthSpec {
  std::size_t domains = 5;
  std::size_t acts = 8;
  std::size_t slots = 20;
  std::size_t templates = 3;
  std::size_t examples = 2000;
  std::size_t values_per_slot = 6;
};

struct SyntheticCorpus {
  Schema schema;
  std::vector<std::pair<DialogueAct, std::string>> records;
};

namespace synth_detail {

inline const std::vector<std::string>& domain_pool() {
  static const std::vector<std::string> v{"restaurant", "hotel", "attraction", "train", "taxi"};
  return v;
}
inline const std::vector<std::string>& noun_pool() {
  static const std::vector<std::string> v{"restaurant", "hotel", "attraction", "train", "taxi"};
  return v;
}
inline const std::vector<std::string>& verb_pool() {
  static const std::vector<std::string> v{"dine", "stay", "visit", "travel", "ride"};
  return v;
}
inline const std::vector<std::string>& act_pool() {
  static const std::vector<std::string> v{"inform",       "request", "recommend", "book", "offer_book",
                                          "offer_booked", "select",  "reqmore"};
  return v;
}
inline const std::vector<std::string>& slot_pool() {
  static const std::vector<std::string> v{"name",     "area",   "price",    "day",     "people",   "time",
                                          "stars",    "type",   "food",     "parking", "internet", "entrance",
                                          "leave",    "arrive", "ticket",   "id",      "dest",     "depart",
                                          "car",      "phone",  "postcode", "address", "ref",      "duration",
                                          "choice",   "stay",   "open",     "fee",     "distance", "rating"};
  return v;
}
inline const std::vector<std::string>& unit_pool() {
  static const std::vector<std::string> v{"minutes", "pounds", "street", "road"};
  return v;
}

enum class ActStyle { Valued, Request, Bare };

inline ActStyle style_of(const std::string& act) {
  if (act == "request") return ActStyle::Request;
  if (act == "offer_book" || act == "reqmore") return ActStyle::Bare;
  return ActStyle::Valued;
}

// Hand-written variants for the named acts; anything beyond is generated.
inline std::vector<std::string> base_templates(const std::string& act) {
  if (act == "inform") return {"the {noun} has {slots} .", "i found a {noun} with {slots} .", "there is a {noun} , {slots} ."};
  if (act == "request")
    return {"what {slots} would you like for the {noun} ?", "could you tell me the {slots} you want to {verb} ?",
            "do you have a preferred {slots} for the {noun} ?"};
  if (act == "recommend")
    return {"i recommend the {noun} with {slots} .", "you might like to {verb} at the {noun} with {slots} .",
            "how about the {noun} with {slots} ?"};
  if (act == "book")
    return {"i have booked the {noun} for {slots} .", "your {noun} is booked with {slots} .",
            "booking done , {noun} with {slots} ."};
  if (act == "offer_book")
    return {"would you like me to book it ?", "shall i make a reservation ?", "do you want me to book that ?"};
  if (act == "offer_booked")
    return {"the booking is confirmed , {slots} .", "i booked the {noun} for you , {slots} .", "all set , {slots} ."};
  if (act == "select")
    return {"which {noun} do you prefer , {slots} ?", "would you rather {verb} with {slots} ?",
            "there are options with {slots} for the {noun} ."};
  if (act == "reqmore")
    return {"is there anything else i can help with ?", "can i help you with anything else ?", "anything else today ?"};
  return {};
}

inline std::vector<std::string> split_words(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ' ') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

class WordMaker {
 public:
  WordMaker(Rng& rng, std::set<std::string> reserved) : rng_(rng), used_(std::move(reserved)) {}

  std::string fresh() {
    static const char* onsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "st", "tr"};
    static const char* vowels[] = {"a", "e", "i", "o", "u"};
    for (;;) {
      const std::size_t syll = 2 + rng_.below(2);
      std::string w;
      for (std::size_t i = 0; i < syll; ++i) {
        w += onsets[rng_.below(std::size(onsets))];
        w += vowels[rng_.below(std::size(vowels))];
      }
      if (rng_.bernoulli(0.5)) w += "n";
      if (used_.insert(w).second) return w;
    }
  }

 private:
  Rng& rng_;
  std::set<std::string> used_;
};

inline std::string render(const std::string& tmpl, const std::string& noun, const std::string& verb,
                          const std::string& slots) {
  std::string out;
  for (std::size_t i = 0; i < tmpl.size();) {
    if (tmpl.compare(i, 6, "{noun}") == 0) {
      out += noun;
      i += 6;
    } else if (tmpl.compare(i, 6, "{verb}") == 0) {
      out += verb;
      i += 6;
    } else if (tmpl.compare(i, 7, "{slots}") == 0) {
      out += slots;
      i += 7;
    } else {
      out.push_back(tmpl[i++]);
    }
  }
  return out;
}

}  // namespace synth_detail

/// Deterministic under `seed`. Every record is aligned: each valued slot's
/// value occurs exactly once in its utterance.
inline SyntheticCorpus gen_synthetic(const SynthSpec& spec, std::uint64_t seed) {
  using namespace synth_detail;
  if (spec.domains == 0 || spec.acts == 0 || spec.slots == 0 || spec.templates == 0 || spec.values_per_slot == 0) {
    throw CorpusError("gen_synthetic: all counts must be at least 1");
  }
  Rng rng(seed);
  SyntheticCorpus out;
  Schema& schema = out.schema;

  for (std::size_t d = 0; d < spec.domains; ++d)
    schema.domains.push_back(d < domain_pool().size() ? domain_pool()[d] : "domain" + std::to_string(d));
  for (std::size_t a = 0; a < spec.acts; ++a)
    schema.acts.push_back(a < act_pool().size() ? act_pool()[a] : "act" + std::to_string(a));
  std::vector<std::string> slot_names;
  for (std::size_t s = 0; s < spec.slots; ++s)
    slot_names.push_back(s < slot_pool().size() ? slot_pool()[s] : "slot" + std::to_string(s));

  // Shared slots come first in the name list; the rest are owned by exactly
  // one domain each.
  const std::size_t shared =
      spec.slots > spec.domains ? std::min(spec.slots - spec.domains, spec.slots / 4) : 0;
  for (const std::string& d : schema.domains) schema.slots[d];
  for (std::size_t k = 0; k < shared; ++k)
    for (std::size_t d = 0; d < spec.domains; ++d)
      if (spec.domains == 1 || (k + d) % 3 != 2) schema.slots[schema.domains[d]].push_back(slot_names[k]);
  for (std::size_t k = shared; k < spec.slots; ++k)
    schema.slots[schema.domains[(k - shared) % spec.domains]].push_back(slot_names[k]);

  // Every word used by a template or a label is reserved so values never
  // collide with surrounding text.
  std::set<std::string> reserved;
  for (const auto& w : noun_pool()) reserved.insert(w);
  for (const auto& w : verb_pool()) reserved.insert(w);
  for (const auto& w : unit_pool()) reserved.insert(w);
  for (const auto& w : slot_names) reserved.insert(w);
  for (const auto& w : schema.domains) reserved.insert(w);
  reserved.insert("and");
  for (const auto& a : act_pool())
    for (const auto& t : base_templates(a))
      for (const auto& w : split_words(t)) reserved.insert(w);
  WordMaker words(rng, reserved);

  std::vector<std::string> nouns;
  std::vector<std::string> verbs;
  for (std::size_t d = 0; d < spec.domains; ++d) {
    nouns.push_back(d < noun_pool().size() ? noun_pool()[d] : words.fresh());
    verbs.push_back(d < verb_pool().size() ? verb_pool()[d] : words.fresh());
  }

  std::vector<std::vector<std::string>> templates(spec.acts);
  for (std::size_t a = 0; a < spec.acts; ++a) {
    std::vector<std::string> base = base_templates(schema.acts[a]);
    const bool bare = style_of(schema.acts[a]) == ActStyle::Bare;
    for (std::size_t t = 0; t < spec.templates; ++t) {
      if (t < base.size()) {
        templates[a].push_back(base[t]);
      } else if (bare) {
        templates[a].push_back(words.fresh() + " " + words.fresh() + " ?");
      } else {
        templates[a].push_back(words.fresh() + " {noun} " + words.fresh() + " {slots} .");
      }
    }
  }

  // Values are unique across the whole corpus: first word is a fresh
  // pseudo-word, sometimes followed by a unit word.
  std::map<std::pair<std::string, std::string>, std::vector<std::string>> values;
  for (const std::string& d : schema.domains) {
    for (const std::string& s : schema.slots[d]) {
      auto& list = values[{d, s}];
      for (std::size_t i = 0; i < spec.values_per_slot; ++i) {
        std::string v = words.fresh();
        if (rng.bernoulli(0.25)) v += " " + unit_pool()[rng.below(unit_pool().size())];
        list.push_back(v);
      }
    }
  }

  auto make_entry = [&](std::size_t d, std::size_t a, std::set<std::string>& used_slots) -> std::optional<ActEntry> {
    ActEntry e;
    e.domain = schema.domains[d];
    e.act = schema.acts[a];
    const ActStyle style = style_of(e.act);
    if (style == ActStyle::Bare) return e;
    std::vector<std::string> avail;
    for (const std::string& s : schema.slots[e.domain])
      if (!used_slots.count(e.domain + "/" + s)) avail.push_back(s);
    if (avail.empty()) return std::nullopt;
    rng.shuffle(std::span<std::string>(avail));
    const std::size_t cap = std::min<std::size_t>(style == ActStyle::Request ? 2 : 3, avail.size());
    const std::size_t n = 1 + rng.below(cap);
    for (std::size_t i = 0; i < n; ++i) {
      SlotValue sv{avail[i], std::nullopt};
      if (style == ActStyle::Valued) {
        const auto& pool = values[{e.domain, avail[i]}];
        sv.value = pool[rng.below(pool.size())];
      }
      used_slots.insert(e.domain + "/" + avail[i]);
      e.slots.push_back(std::move(sv));
    }
    return e;
  };

  auto render_entry = [&](const ActEntry& e, std::size_t d, std::size_t a) {
    std::string slots;
    for (std::size_t i = 0; i < e.slots.size(); ++i) {
      if (i) slots += " and ";
      slots += e.slots[i].name;
      if (e.slots[i].value) slots += " " + *e.slots[i].value;
    }
    const auto& pool = templates[a];
    return render(pool[rng.below(pool.size())], nouns[d], verbs[d], slots);
  };

  for (std::size_t n = 0; n < spec.examples; ++n) {
    std::set<std::string> used_slots;
    DialogueAct da;
    std::string text;
    const std::size_t d0 = rng.below(spec.domains);
    const std::size_t a0 = rng.below(spec.acts);
    auto first = make_entry(d0, a0, used_slots);
    if (!first) {
      // Domain without slots: fall back to the bare form of the act.
      first = ActEntry{schema.domains[d0], schema.acts[a0], {}};
    }
    text = render_entry(*first, d0, a0);
    da.acts.push_back(std::move(*first));

    const bool can_pair = spec.domains > 1 || spec.acts > 1;
    if (can_pair && rng.bernoulli(0.4)) {
      std::size_t d1 = d0;
      if (spec.domains > 1 && rng.bernoulli(0.3)) d1 = (d0 + 1 + rng.below(spec.domains - 1)) % spec.domains;
      std::size_t a1 = rng.below(spec.acts);
      if (d1 == d0 && a1 == a0) a1 = (a0 + 1) % spec.acts;
      if (!(d1 == d0 && a1 == a0)) {
        if (auto second = make_entry(d1, a1, used_slots)) {
          text += " " + render_entry(*second, d1, a1);
          da.acts.push_back(std::move(*second));
        }
      }
    }
    if (!text.empty()) text[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(text[0])));
    out.records.emplace_back(std::move(da), std::move(text));
  }
  return out;
}

inline std::string synthetic_to_string(const SyntheticCorpus& c) { return records_to_string(c.records, &c.schema); }

}  // namespace metanlg::corpus
