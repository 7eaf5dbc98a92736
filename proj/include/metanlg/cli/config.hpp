// SPDX-License-Identifier: Apache-2.0
//
// Run configuration. Every field is listed once in `fields()`; that table
// drives JSON loading, flag parsing, --help defaults and the config snapshot
// stored in checkpoints. Precedence: flags > config file > defaults.
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "metanlg/corpus/split.hpp"
#include "metanlg/error.hpp"
#include "metanlg/generator/model.hpp"
#include "metanlg/meta/training.hpp"

namespace metanlg::cli {

using nlohmann::json;

struct RunConfig {
  std::string corpus;
  std::string schema;  // empty: the schema embedded in the corpus file
  std::string split_mode = "domain";
  std::string target;
  std::size_t adaptation_size = 1000;
  std::size_t validation_size = 200;
  std::size_t test_size = 0;
  std::string regime = "meta";
  std::uint64_t seed = 1;
  std::string out_dir = "out";
  bool wall_clock = false;

  gen::GeneratorConfig model;
  meta::MetaConfig meta;
  meta::SourceConfig mtl;

  // Fine-tuning on the target data.
  double ft_lr = 0.001;
  std::size_t ft_batch_size = 10;
  std::size_t ft_max_epochs = 50;
  std::size_t ft_patience = 5;
  std::size_t ft_eval_every = 0;
  std::size_t ft_task_half_size = 200;

  std::size_t beam_width = 5;
  std::size_t max_len = 40;

  // sweep
  std::vector<std::size_t> sizes{1000, 500, 200};
  std::size_t repeats = 5;
  std::vector<std::string> regimes{"meta", "mtl", "scratch"};
};

struct Field {
  std::string key;
  std::string help;
  std::function<json(const RunConfig&)> get;
  std::function<void(RunConfig&, const json&)> set;
};

namespace config_detail {

template <class T>
T convert(const json& v, const std::string& key) {
  auto bad = [&](const char* want) { return ConfigError("config key '" + key + "' expects " + want); };
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) throw bad("a boolean");
    return v.get<bool>();
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!v.is_string()) throw bad("a string");
    return v.get<std::string>();
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!v.is_number()) throw bad("a number");
    return v.get<T>();
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
      throw bad("a non-negative integer");
    return v.get<T>();
  } else {
    if (!v.is_array()) throw bad("a list");
    T out;
    for (const json& e : v) out.push_back(convert<typename T::value_type>(e, key));
    return out;
  }
}

template <class T, class Access>
Field field(std::string key, std::string help, Access access) {
  return Field{key, std::move(help), [access](const RunConfig& c) {
                 RunConfig copy = c;
                 return json(access(copy));
               },
               [access, key](RunConfig& c, const json& v) { access(c) = convert<T>(v, key); }};
}

}  // namespace config_detail

inline const std::vector<Field>& fields() {
  using config_detail::field;
  using S = std::size_t;
  static const std::vector<Field> table{
      field<std::string>("corpus", "corpus JSON file", [](RunConfig& c) -> auto& { return c.corpus; }),
      field<std::string>("schema", "schema JSON file (default: embedded in the corpus)",
                         [](RunConfig& c) -> auto& { return c.schema; }),
      field<std::string>("split_mode", "leave-one-out over 'domain' or 'act'",
                         [](RunConfig& c) -> auto& { return c.split_mode; }),
      field<std::string>("target", "held-out domain or act type", [](RunConfig& c) -> auto& { return c.target; }),
      field<S>("adaptation_size", "target examples used for adaptation",
               [](RunConfig& c) -> auto& { return c.adaptation_size; }),
      field<S>("validation_size", "target validation examples", [](RunConfig& c) -> auto& { return c.validation_size; }),
      field<S>("test_size", "target test examples (0: all remaining)", [](RunConfig& c) -> auto& { return c.test_size; }),
      field<std::string>("regime", "scratch, mtl, zero, supervised or meta",
                         [](RunConfig& c) -> auto& { return c.regime; }),
      field<std::uint64_t>("seed", "master seed (env META_NLG_SEED when not given)",
                           [](RunConfig& c) -> auto& { return c.seed; }),
      field<std::string>("out_dir", "output directory", [](RunConfig& c) -> auto& { return c.out_dir; }),
      field<bool>("wall_clock", "record elapsed seconds in reports (breaks byte-identity)",
                  [](RunConfig& c) -> auto& { return c.wall_clock; }),
      field<S>("hidden_size", "LSTM hidden units", [](RunConfig& c) -> auto& { return c.model.hidden; }),
      field<S>("embed_size", "word embedding width", [](RunConfig& c) -> auto& { return c.model.embed; }),
      field<double>("dropout", "dropout rate", [](RunConfig& c) -> auto& { return c.model.dropout; }),
      field<double>("init_scale", "uniform initialisation half-width",
                    [](RunConfig& c) -> auto& { return c.model.init_scale; }),
      field<double>("read_gate_bias", "initial reading-gate bias",
                    [](RunConfig& c) -> auto& { return c.model.read_gate_bias; }),
      field<double>("alpha", "inner step size", [](RunConfig& c) -> auto& { return c.meta.alpha; }),
      field<double>("beta", "outer learning rate", [](RunConfig& c) -> auto& { return c.meta.beta; }),
      field<S>("meta_batch", "tasks per outer step", [](RunConfig& c) -> auto& { return c.meta.meta_batch; }),
      field<S>("inner_steps", "inner gradient steps (only 1 is supported)",
               [](RunConfig& c) -> auto& { return c.meta.inner_steps; }),
      field<bool>("second_order", "differentiate through the inner step",
                  [](RunConfig& c) -> auto& { return c.meta.second_order; }),
      field<double>("clip_norm", "global gradient-norm clip (0: off)", [](RunConfig& c) -> auto& { return c.meta.clip_norm; }),
      field<S>("task_half_size", "support (= query) size of a meta task",
               [](RunConfig& c) -> auto& { return c.meta.task_half_size; }),
      field<S>("max_outer_steps", "meta-training step limit", [](RunConfig& c) -> auto& { return c.meta.max_outer_steps; }),
      field<S>("convergence_window", "moving-average window for meta convergence (0: off)",
               [](RunConfig& c) -> auto& { return c.meta.convergence_window; }),
      field<double>("convergence_tol", "relative meta convergence tolerance",
                    [](RunConfig& c) -> auto& { return c.meta.convergence_tol; }),
      field<double>("mtl_lr", "multi-task source learning rate", [](RunConfig& c) -> auto& { return c.mtl.lr; }),
      field<S>("mtl_batch_size", "multi-task batch size", [](RunConfig& c) -> auto& { return c.mtl.batch_size; }),
      field<S>("mtl_max_epochs", "multi-task epoch limit", [](RunConfig& c) -> auto& { return c.mtl.max_epochs; }),
      field<double>("mtl_convergence_tol", "relative epoch-loss improvement that counts as converged",
                    [](RunConfig& c) -> auto& { return c.mtl.convergence_tol; }),
      field<double>("ft_lr", "fine-tuning learning rate", [](RunConfig& c) -> auto& { return c.ft_lr; }),
      field<S>("ft_batch_size", "fine-tuning batch size", [](RunConfig& c) -> auto& { return c.ft_batch_size; }),
      field<S>("ft_max_epochs", "fine-tuning epoch limit", [](RunConfig& c) -> auto& { return c.ft_max_epochs; }),
      field<S>("ft_patience", "early-stopping patience in epochs", [](RunConfig& c) -> auto& { return c.ft_patience; }),
      field<S>("ft_eval_every", "decode validation every N epochs (0: never)",
               [](RunConfig& c) -> auto& { return c.ft_eval_every; }),
      field<S>("ft_task_half_size", "episodic fine-tuning task half size",
               [](RunConfig& c) -> auto& { return c.ft_task_half_size; }),
      field<S>("beam_width", "beam width for decoding", [](RunConfig& c) -> auto& { return c.beam_width; }),
      field<S>("max_len", "maximum decoded length", [](RunConfig& c) -> auto& { return c.max_len; }),
      field<std::vector<S>>("sizes", "sweep: adaptation sizes", [](RunConfig& c) -> auto& { return c.sizes; }),
      field<S>("repeats", "sweep: seeded repeats per size", [](RunConfig& c) -> auto& { return c.repeats; }),
      field<std::vector<std::string>>("regimes", "sweep: regimes to run", [](RunConfig& c) -> auto& { return c.regimes; }),
  };
  return table;
}

inline const Field& find_field(const std::string& key) {
  for (const Field& f : fields())
    if (f.key == key) return f;
  throw ConfigError("unknown config key '" + key + "'");
}

inline json to_json(const RunConfig& c) {
  json j = json::object();
  for (const Field& f : fields()) j[f.key] = f.get(c);
  return j;
}

/// Applies the keys of `j` on top of `c`. Unknown keys are errors.
inline void apply_json(RunConfig& c, const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) find_field(it.key()).set(c, it.value());
}

/// Parses a flag's text according to the JSON type of the field's default.
inline json flag_value(const Field& f, const std::string& text) {
  const json like = f.get(RunConfig{});
  auto number = [&](const std::string& s) -> json {
    try {
      std::size_t used = 0;
      if (like.is_number_unsigned() || (like.is_array())) {
        if (!s.empty() && s[0] == '-') throw ConfigError("");
        const unsigned long long v = std::stoull(s, &used);
        if (used != s.size()) throw ConfigError("");
        return json(static_cast<std::uint64_t>(v));
      }
      const double v = std::stod(s, &used);
      if (used != s.size()) throw ConfigError("");
      return json(v);
    } catch (const std::exception&) {
      throw ConfigError("--" + f.key + ": '" + s + "' is not a valid number");
    }
  };
  if (like.is_boolean()) {
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    throw ConfigError("--" + f.key + ": expected true or false");
  }
  if (like.is_string()) return text;
  if (like.is_number()) return number(text);
  json list = json::array();
  std::size_t start = 0;
  while (start <= text.size() && !text.empty()) {
    const std::size_t comma = text.find(',', start);
    const std::string item = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    if (like.empty() || like[0].is_number()) {
      list.push_back(number(item));
    } else {
      list.push_back(item);
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return list;
}

inline corpus::SplitMode parse_split_mode(const std::string& s) {
  if (s == "domain") return corpus::SplitMode::Domain;
  if (s == "act") return corpus::SplitMode::ActType;
  throw ConfigError("split_mode must be 'domain' or 'act', got '" + s + "'");
}

inline void validate(const RunConfig& c) {
  parse_split_mode(c.split_mode);
  meta::parse_regime(c.regime);
  std::set<std::string> seen;
  for (const auto& r : c.regimes) {
    meta::parse_regime(r);
    if (!seen.insert(r).second) throw ConfigError("regime '" + r + "' listed twice");
  }
  c.meta.validate();
  if (c.model.hidden == 0 || c.model.embed == 0) throw ConfigError("hidden_size and embed_size must be positive");
  if (!(c.model.dropout >= 0.0 && c.model.dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");
  if (c.mtl.batch_size == 0 || c.ft_batch_size == 0) throw ConfigError("batch sizes must be positive");
  if (!(c.mtl.lr > 0.0) || !(c.ft_lr > 0.0)) throw ConfigError("learning rates must be positive");
  if (c.beam_width == 0) throw ConfigError("beam_width must be positive");
  if (c.validation_size == 0) throw ConfigError("validation_size must be positive");
}

inline meta::RegimeConfig regime_config(const RunConfig& c) {
  meta::RegimeConfig r;
  r.meta = c.meta;
  r.mtl = c.mtl;
  r.mtl.clip_norm = c.meta.clip_norm;
  r.plain.mode = meta::FineTuneMode::Plain;
  r.plain.lr = c.ft_lr;
  r.plain.batch_size = c.ft_batch_size;
  r.plain.max_epochs = c.ft_max_epochs;
  r.plain.patience = c.ft_patience;
  r.plain.clip_norm = c.meta.clip_norm;
  r.plain.eval_every = c.ft_eval_every;
  r.plain.final_eval = false;
  r.plain.beam_width = c.beam_width;
  r.plain.max_len = c.max_len;
  r.plain.alpha = c.meta.alpha;
  r.plain.meta_batch = c.meta.meta_batch;
  r.plain.task_half_size = c.ft_task_half_size;
  r.plain.second_order = c.meta.second_order;
  r.episodic = r.plain;
  r.episodic.mode = meta::FineTuneMode::Episodic;
  r.seed = c.seed;
  r.wall_clock = c.wall_clock;
  return r;
}

}  // namespace metanlg::cli
