// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint file: 8-byte magic "MNLGCKP1", uint64 LE header length, a JSON
// header, then the parameter buffer (and Adam moments when present) as
// little-endian IEEE-754 doubles.
#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "metanlg/corpus/io.hpp"
#include "metanlg/generator/model.hpp"
#include "metanlg/generator/vocabulary.hpp"
#include "metanlg/meta/optimizer.hpp"

namespace metanlg::cli {

using nlohmann::json;

inline constexpr char kCheckpointMagic[9] = "MNLGCKP1";
inline constexpr int kCheckpointVersion = 1;

struct OptimizerSnapshot {
  std::size_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::vector<double> m;
  std::vector<double> v;
};

struct Checkpoint {
  corpus::Schema schema;
  gen::Vocabulary vocab;
  gen::GeneratorConfig model;
  std::size_t da_dim = 0;
  std::vector<double> params;
  std::optional<OptimizerSnapshot> optimizer;
  json config = json::object();
  std::uint64_t seed = 0;
};

/// FNV-1a over the canonical schema JSON.
inline std::string schema_hash(const corpus::Schema& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : corpus::schema_to_json(s).dump()) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace ckpt_detail {

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint64_t get_u64(const std::string& in, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(in[at + static_cast<std::size_t>(i)]);
  return v;
}

inline void put_doubles(std::string& out, const std::vector<double>& xs) {
  for (double x : xs) {
    std::uint64_t bits;
    std::memcpy(&bits, &x, sizeof bits);
    put_u64(out, bits);
  }
}

inline std::vector<double> get_doubles(const std::string& in, std::size_t& at, std::size_t n) {
  if (in.size() < at || (in.size() - at) / 8 < n) throw Error("checkpoint: truncated parameter data");
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i, at += 8) {
    const std::uint64_t bits = get_u64(in, at);
    std::memcpy(&out[i], &bits, sizeof bits);
  }
  return out;
}

}  // namespace ckpt_detail

inline std::string checkpoint_to_bytes(const Checkpoint& c) {
  using namespace ckpt_detail;
  json header = {
      {"format_version", kCheckpointVersion},
      {"schema_hash", schema_hash(c.schema)},
      {"schema", corpus::schema_to_json(c.schema)},
      {"vocabulary", c.vocab.entries()},
      {"model",
       {{"hidden", c.model.hidden},
        {"embed", c.model.embed},
        {"dropout", c.model.dropout},
        {"init_scale", c.model.init_scale},
        {"read_gate_bias", c.model.read_gate_bias},
        {"vocab_size", c.vocab.size()},
        {"da_dim", c.da_dim}}},
      {"param_count", c.params.size()},
      {"config", c.config},
      {"seed", c.seed},
  };
  if (c.optimizer) {
    if (c.optimizer->m.size() != c.params.size() || c.optimizer->v.size() != c.params.size())
      throw Error("checkpoint: optimizer moments do not match the parameter count");
    header["optimizer"] = {{"kind", "adam"},
                           {"step", c.optimizer->step},
                           {"beta1", c.optimizer->beta1},
                           {"beta2", c.optimizer->beta2},
                           {"epsilon", c.optimizer->epsilon}};
  } else {
    header["optimizer"] = nullptr;
  }
  const std::string text = header.dump();
  std::string out(kCheckpointMagic, 8);
  put_u64(out, text.size());
  out += text;
  put_doubles(out, c.params);
  if (c.optimizer) {
    put_doubles(out, c.optimizer->m);
    put_doubles(out, c.optimizer->v);
  }
  return out;
}

inline Checkpoint checkpoint_from_bytes(const std::string& bytes) {
  using namespace ckpt_detail;
  if (bytes.size() < 16 || bytes.compare(0, 8, kCheckpointMagic) != 0) throw Error("checkpoint: bad magic");
  const std::uint64_t len = get_u64(bytes, 8);
  if (len > bytes.size() - 16) throw Error("checkpoint: truncated header");
  json h;
  try {
    h = json::parse(bytes.substr(16, len));
  } catch (const json::parse_error& e) {
    throw Error(std::string("checkpoint: bad header: ") + e.what());
  }
  try {
    if (h.at("format_version").get<int>() != kCheckpointVersion) throw Error("checkpoint: unsupported version");
    Checkpoint c;
    c.schema = corpus::schema_from_json(h.at("schema"));
    if (schema_hash(c.schema) != h.at("schema_hash").get<std::string>()) throw Error("checkpoint: schema hash mismatch");
    c.vocab = gen::Vocabulary(h.at("vocabulary").get<std::vector<std::string>>());
    const json& m = h.at("model");
    c.model.hidden = m.at("hidden").get<std::size_t>();
    c.model.embed = m.at("embed").get<std::size_t>();
    c.model.dropout = m.at("dropout").get<double>();
    c.model.init_scale = m.at("init_scale").get<double>();
    c.model.read_gate_bias = m.at("read_gate_bias").get<double>();
    c.da_dim = m.at("da_dim").get<std::size_t>();
    if (m.at("vocab_size").get<std::size_t>() != c.vocab.size()) throw Error("checkpoint: vocabulary size mismatch");
    const std::size_t n = h.at("param_count").get<std::size_t>();
    if (gen::generator_layout(c.vocab.size(), c.da_dim, c.model.hidden, c.model.embed)->total() != n)
      throw Error("checkpoint: parameter count does not match the model shape");
    c.config = h.at("config");
    c.seed = h.at("seed").get<std::uint64_t>();
    std::size_t at = 16 + len;
    c.params = get_doubles(bytes, at, n);
    if (!h.at("optimizer").is_null()) {
      const json& o = h.at("optimizer");
      OptimizerSnapshot s;
      s.step = o.at("step").get<std::size_t>();
      s.beta1 = o.at("beta1").get<double>();
      s.beta2 = o.at("beta2").get<double>();
      s.epsilon = o.at("epsilon").get<double>();
      s.m = get_doubles(bytes, at, n);
      s.v = get_doubles(bytes, at, n);
      c.optimizer = std::move(s);
    }
    if (at != bytes.size()) throw Error("checkpoint: trailing bytes");
    return c;
  } catch (const json::exception& e) {
    throw Error(std::string("checkpoint: bad header field: ") + e.what());
  }
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  const std::string bytes = checkpoint_to_bytes(c);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed: " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return checkpoint_from_bytes(corpus::read_file(path));
}

inline OptimizerSnapshot snapshot(const meta::AdamState& a) {
  auto mv = a.first_moment().values();
  auto vv = a.second_moment().values();
  return OptimizerSnapshot{a.step(), a.beta1(), a.beta2(), a.epsilon(), {mv.begin(), mv.end()}, {vv.begin(), vv.end()}};
}

}  // namespace metanlg::cli
