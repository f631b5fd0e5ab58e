// Copyright 2026 The dweNet Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "dwenet/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace dwenet {

using nlohmann::json;

std::string_view to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::kHeadlines:
      return "headlines";
    case DatasetKind::kSarcPol:
      return "sarc-pol";
    case DatasetKind::kSarcMain:
      return "sarc-main";
  }
  return "headlines";
}

DatasetKind parse_dataset_kind(std::string_view name) {
  if (name == "headlines") return DatasetKind::kHeadlines;
  if (name == "sarc-pol") return DatasetKind::kSarcPol;
  if (name == "sarc-main") return DatasetKind::kSarcMain;
  throw ConfigError("unknown dataset '" + std::string(name) +
                    "' (expected headlines, sarc-pol or sarc-main)");
}

void TrainConfig::validate() const {
  model.validate();
  auto positive = [](double v, const char* key) {
    if (!(v > 0.0)) throw ConfigError(std::string(key) + " must be positive");
  };
  positive(optimizer.lr_max, "optimizer.lr_max");
  positive(optimizer.div, "optimizer.div");
  positive(optimizer.final_div, "optimizer.final_div");
  positive(optimizer.eps, "optimizer.eps");
  if (!(optimizer.weight_decay >= 0.0)) {
    throw ConfigError("optimizer.weight_decay must be >= 0");
  }
  if (!(optimizer.beta2 > 0.0 && optimizer.beta2 < 1.0)) {
    throw ConfigError("optimizer.beta2 must lie in (0, 1)");
  }
  if (!(optimizer.pct_up >= 0.0 && optimizer.pct_up <= 1.0)) {
    throw ConfigError("optimizer.pct_up must lie in [0, 1]");
  }
  for (double m : {optimizer.mom_high, optimizer.mom_low}) {
    if (!(m >= 0.0 && m < 1.0)) {
      throw ConfigError("optimizer momentum bounds must lie in [0, 1)");
    }
  }
  if (!(data.test_frac >= 0.0 && data.test_frac < 1.0)) {
    throw ConfigError("data.test_frac must lie in [0, 1)");
  }
  if (training.batch_size == 0) {
    throw ConfigError("training.batch_size must be positive");
  }
  if (training.runs == 0) throw ConfigError("training.runs must be positive");
}

optim::OneCycleSpec TrainConfig::schedule(std::size_t total_steps) const {
  optim::OneCycleSpec s;
  s.lr_max = optimizer.lr_max;
  s.total_steps = total_steps;
  s.pct_up = optimizer.pct_up;
  s.div = optimizer.div;
  s.final_div = optimizer.final_div;
  s.mom_high = optimizer.mom_high;
  s.mom_low = optimizer.mom_low;
  return s;
}

namespace {

// Reads the keys of one JSON object and rejects whatever is left over.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError("'" + name_ + "' must be an object");
  }

  template <typename V>
  void read(const char* key, V& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    const std::string path = name_ + "." + key;
    try {
      if constexpr (std::is_same_v<V, bool>) {
        if (!it->is_boolean()) throw ConfigError(path + " must be a boolean");
        out = it->template get<bool>();
      } else if constexpr (std::is_integral_v<V>) {
        if (!it->is_number_integer() ||
            (it->is_number_integer() && !it->is_number_unsigned() &&
             it->template get<std::int64_t>() < 0)) {
          throw ConfigError(path + " must be a non-negative integer");
        }
        out = static_cast<V>(it->template get<std::uint64_t>());
      } else if constexpr (std::is_floating_point_v<V>) {
        if (!it->is_number()) throw ConfigError(path + " must be a number");
        out = it->template get<V>();
      } else if constexpr (std::is_same_v<V, std::string>) {
        if (!it->is_string()) throw ConfigError(path + " must be a string");
        out = it->template get<std::string>();
      } else {
        static_assert(sizeof(V) == 0, "unsupported config field type");
      }
    } catch (const json::exception& e) {
      throw ConfigError(path + ": " + e.what());
    }
  }

  template <typename V, typename Parse>
  void read_with(const char* key, V& out, Parse parse) {
    std::string text;
    bool present = j_.contains(key);
    read(key, text);
    if (present) out = parse(text);
  }

  void read_sizes(const char* key, std::vector<std::size_t>& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    const std::string path = name_ + "." + key;
    if (!it->is_array()) throw ConfigError(path + " must be an array");
    out.clear();
    for (const auto& v : *it) {
      if (!v.is_number_unsigned()) {
        throw ConfigError(path + " entries must be non-negative integers");
      }
      out.push_back(v.get<std::size_t>());
    }
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.contains(key)) {
        throw ConfigError("unknown config key '" + name_ + "." + key + "'");
      }
    }
  }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

json to_json_value(const TrainConfig& c) {
  json j;
  const auto& m = c.model;
  j["model"] = {
      {"connectivity", std::string(model::to_string(m.connectivity))},
      {"block_sizes", m.block_sizes},
      {"growth_rate", m.growth_rate},
      {"init_channels", m.init_channels},
      {"embed_dim", m.embed_dim},
      {"max_len", m.max_len},
      {"head_dims", m.head_dims},
      {"leaky_slope", m.leaky_slope},
      {"dropout_rate", m.dropout_rate},
      {"embedding_trainable", m.embedding_trainable},
  };
  const auto& o = c.optimizer;
  j["optimizer"] = {
      {"lr_max", o.lr_max},       {"weight_decay", o.weight_decay},
      {"decoupled_weight_decay", o.decoupled_weight_decay},
      {"beta2", o.beta2},         {"eps", o.eps},
      {"pct_up", o.pct_up},       {"div", o.div},
      {"final_div", o.final_div}, {"mom_high", o.mom_high},
      {"mom_low", o.mom_low},
  };
  const auto& d = c.data;
  j["data"] = {
      {"dataset", std::string(to_string(d.dataset))},
      {"train_path", d.train_path},
      {"test_path", d.test_path},
      {"embeddings_path", d.embeddings_path},
      {"test_frac", d.test_frac},
      {"split_seed", d.split_seed},
      {"min_freq", d.min_freq},
      {"allow_long_run", d.allow_long_run},
  };
  const auto& t = c.training;
  j["training"] = {
      {"epochs", t.epochs},
      {"batch_size", t.batch_size},
      {"seed", t.seed},
      {"runs", t.runs},
  };
  return j;
}

TrainConfig from_json_value(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  TrainConfig c;
  static const json kEmpty = json::object();
  auto sub = [&](const char* key) -> const json& {
    auto it = j.find(key);
    return it == j.end() ? kEmpty : *it;
  };
  {
    auto& m = c.model;
    Section s(sub("model"), "model");
    s.read_with("connectivity", m.connectivity, model::parse_connectivity);
    std::vector<std::size_t> blocks(m.block_sizes.begin(), m.block_sizes.end());
    s.read_sizes("block_sizes", blocks);
    if (blocks.size() != model::kNumBlocks) {
      throw ConfigError("model.block_sizes must list exactly 4 blocks");
    }
    std::copy(blocks.begin(), blocks.end(), m.block_sizes.begin());
    s.read("growth_rate", m.growth_rate);
    s.read("init_channels", m.init_channels);
    s.read("embed_dim", m.embed_dim);
    s.read("max_len", m.max_len);
    s.read_sizes("head_dims", m.head_dims);
    s.read("leaky_slope", m.leaky_slope);
    s.read("dropout_rate", m.dropout_rate);
    s.read("embedding_trainable", m.embedding_trainable);
    s.finish();
  }
  {
    auto& o = c.optimizer;
    Section s(sub("optimizer"), "optimizer");
    s.read("lr_max", o.lr_max);
    s.read("weight_decay", o.weight_decay);
    s.read("decoupled_weight_decay", o.decoupled_weight_decay);
    s.read("beta2", o.beta2);
    s.read("eps", o.eps);
    s.read("pct_up", o.pct_up);
    s.read("div", o.div);
    s.read("final_div", o.final_div);
    s.read("mom_high", o.mom_high);
    s.read("mom_low", o.mom_low);
    s.finish();
  }
  {
    auto& d = c.data;
    Section s(sub("data"), "data");
    s.read_with("dataset", d.dataset, parse_dataset_kind);
    s.read("train_path", d.train_path);
    s.read("test_path", d.test_path);
    s.read("embeddings_path", d.embeddings_path);
    s.read("test_frac", d.test_frac);
    s.read("split_seed", d.split_seed);
    s.read("min_freq", d.min_freq);
    s.read("allow_long_run", d.allow_long_run);
    s.finish();
  }
  {
    auto& t = c.training;
    Section s(sub("training"), "training");
    s.read("epochs", t.epochs);
    s.read("batch_size", t.batch_size);
    s.read("seed", t.seed);
    s.read("runs", t.runs);
    s.finish();
  }
  for (const auto& [key, value] : j.items()) {
    if (key != "model" && key != "optimizer" && key != "data" &&
        key != "training") {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
  c.validate();
  return c;
}

json parse_json(std::string_view text, const std::string& where) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

}  // namespace

std::string to_json(const TrainConfig& config) {
  return to_json_value(config).dump(2) + "\n";
}

TrainConfig config_from_json(std::string_view text) {
  return from_json_value(parse_json(text, "config"));
}

void apply_override(TrainConfig& config, std::string_view assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string_view::npos || dot == std::string_view::npos ||
      dot > eq) {
    throw ConfigError("override '" + std::string(assignment) +
                      "' is not of the form section.key=value");
  }
  const std::string section(assignment.substr(0, dot));
  const std::string key(assignment.substr(dot + 1, eq - dot - 1));
  const std::string raw(assignment.substr(eq + 1));

  json j = to_json_value(config);
  if (!j.contains(section) || !j[section].contains(key)) {
    throw ConfigError("unknown config key '" + section + "." + key + "'");
  }
  json value = json::parse(raw, nullptr, /*allow_exceptions=*/false);
  if (value.is_discarded() || (j[section][key].is_string() && !value.is_string())) {
    value = raw;
  }
  j[section][key] = value;
  config = from_json_value(j);
}

TrainConfig load_config(const std::filesystem::path& path,
                        std::span<const std::string> overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  TrainConfig config = from_json_value(parse_json(text.str(), path.string()));
  for (const auto& o : overrides) apply_override(config, o);
  return config;
}

void save_config(const TrainConfig& config, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << to_json(config);
  if (!out) throw ConfigError("failed writing " + path.string());
}

}  // namespace dwenet
