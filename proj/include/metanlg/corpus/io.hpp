// SPDX-License-Identifier: Apache-2.0
//
// JSON corpus and schema files.
//
// Corpus file:
//   {"format": "meta-nlg-corpus-v1",
//    "schema": {...},                      (optional)
//    "records": [{"da": [{"domain": d, "act": a, "slots": [[name, value-or-null], ...]}],
//                 "text": utterance}, ...]}
// A bare top-level list of records is also accepted on input.
//
// Schema file:
//   {"format": "meta-nlg-corpus-v1", "domains": [...], "acts": [...],
//    "slots": {"<domain>": [...], ...}}
#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "metanlg/corpus/delex.hpp"
#include "metanlg/corpus/types.hpp"

namespace metanlg::corpus {

using nlohmann::json;

inline json schema_to_json(const Schema& s) {
  json slots = json::object();
  for (const auto& d : s.domains) {
    auto it = s.slots.find(d);
    slots[d] = it == s.slots.end() ? std::vector<std::string>{} : it->second;
  }
  return json{{"format", kFormatTag}, {"domains", s.domains}, {"acts", s.acts}, {"slots", slots}};
}

inline void check_format(const json& j, const std::string& what) {
  if (!j.is_object() || !j.contains("format")) throw CorpusError(what + ": missing \"format\" field");
  if (j.at("format") != kFormatTag) {
    throw CorpusError(what + ": unsupported format " + j.at("format").dump() + ", expected \"" + kFormatTag + "\"");
  }
}

inline Schema schema_from_json(const json& j) {
  check_format(j, "schema");
  try {
    Schema s;
    s.domains = j.at("domains").get<std::vector<std::string>>();
    s.acts = j.at("acts").get<std::vector<std::string>>();
    for (const auto& [domain, list] : j.at("slots").items()) {
      if (!s.has_domain(domain)) throw CorpusError("schema: slots declared for unknown domain '" + domain + "'");
      s.slots[domain] = list.get<std::vector<std::string>>();
    }
    if (s.domains.empty() || s.acts.empty()) throw CorpusError("schema: domains and acts must be non-empty");
    return s;
  } catch (const json::exception& e) {
    throw CorpusError(std::string("schema: ") + e.what());
  }
}

inline json da_to_json(const DialogueAct& da) {
  json acts = json::array();
  for (const ActEntry& a : da.acts) {
    json slots = json::array();
    for (const SlotValue& s : a.slots) {
      slots.push_back(json::array({s.name, s.value ? json(*s.value) : json(nullptr)}));
    }
    acts.push_back(json{{"domain", a.domain}, {"act", a.act}, {"slots", slots}});
  }
  return acts;
}

inline DialogueAct da_from_json(const json& j) {
  try {
    if (!j.is_array()) throw CorpusError("dialogue act must be a JSON array of act entries");
    DialogueAct da;
    for (const json& a : j) {
      ActEntry e;
      e.domain = a.at("domain").get<std::string>();
      e.act = a.at("act").get<std::string>();
      for (const json& s : a.value("slots", json::array())) {
        if (!s.is_array() || s.empty() || s.size() > 2) throw CorpusError("slot must be [name, value-or-null]");
        SlotValue sv;
        sv.name = s.at(0).get<std::string>();
        if (s.size() == 2 && !s.at(1).is_null()) sv.value = s.at(1).get<std::string>();
        e.slots.push_back(std::move(sv));
      }
      da.acts.push_back(std::move(e));
    }
    return da;
  } catch (const json::exception& e) {
    throw CorpusError(std::string("dialogue act: ") + e.what());
  }
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorpusError("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline json parse_json_file(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw CorpusError(path.string() + ": " + e.what());
  }
}

inline Schema load_schema(const std::filesystem::path& path) { return schema_from_json(parse_json_file(path)); }

inline void save_schema(const std::filesystem::path& path, const Schema& schema) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CorpusError("cannot write " + path.string());
  out << schema_to_json(schema).dump(2) << '\n';
}

struct CorpusFile {
  std::optional<Schema> schema;  // present when embedded in the corpus file
  std::vector<std::pair<DialogueAct, std::string>> records;
};

inline CorpusFile read_corpus_file(const std::filesystem::path& path) {
  const json j = parse_json_file(path);
  CorpusFile out;
  const json* records = nullptr;
  if (j.is_array()) {
    records = &j;
  } else {
    check_format(j, path.string());
    if (j.contains("schema")) out.schema = schema_from_json(j.at("schema"));
    if (!j.contains("records") || !j.at("records").is_array()) {
      throw CorpusError(path.string() + ": missing \"records\" list");
    }
    records = &j.at("records");
  }
  for (const json& r : *records) {
    try {
      out.records.emplace_back(da_from_json(r.at("da")), r.at("text").get<std::string>());
    } catch (const json::exception& e) {
      throw CorpusError(path.string() + ": bad record: " + e.what());
    }
  }
  return out;
}

struct LoadedCorpus {
  std::vector<CorpusExample> examples;
  std::size_t non_aligned = 0;
};

inline LoadedCorpus build_corpus(const std::vector<std::pair<DialogueAct, std::string>>& records,
                                 const Schema& schema) {
  LoadedCorpus out;
  out.examples.reserve(records.size());
  for (const auto& [da, text] : records) {
    validate(da, schema);
    out.examples.push_back(make_example(out.examples.size(), da, text));
    if (!out.examples.back().aligned) ++out.non_aligned;
  }
  return out;
}

/// Parses and validates a corpus. Non-aligned examples are kept and counted.
inline LoadedCorpus load_corpus(const std::filesystem::path& path, const Schema& schema) {
  return build_corpus(read_corpus_file(path).records, schema);
}

inline std::string records_to_string(const std::vector<std::pair<DialogueAct, std::string>>& records,
                                     const Schema* schema) {
  std::ostringstream os;
  os << "{\"format\": \"" << kFormatTag << "\",\n";
  if (schema) os << "\"schema\": " << schema_to_json(*schema).dump() << ",\n";
  os << "\"records\": [";
  for (std::size_t i = 0; i < records.size(); ++i) {
    json r{{"da", da_to_json(records[i].first)}, {"text", records[i].second}};
    os << (i ? ",\n" : "\n") << r.dump();
  }
  os << (records.empty() ? "" : "\n") << "]}\n";
  return os.str();
}

inline std::string corpus_to_string(const std::vector<CorpusExample>& examples, const Schema* schema) {
  std::vector<std::pair<DialogueAct, std::string>> records;
  records.reserve(examples.size());
  for (const CorpusExample& ex : examples) records.emplace_back(ex.da, ex.raw);
  return records_to_string(records, schema);
}

inline void save_corpus(const std::filesystem::path& path, const std::vector<CorpusExample>& examples,
                        const Schema* schema = nullptr) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CorpusError("cannot write " + path.string());
  out << corpus_to_string(examples, schema);
}

}  // namespace metanlg::corpus
