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

#include "dwenet/data.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"

namespace dwenet::data {

namespace {

bool is_ascii_punct(unsigned char c) { return c < 0x80 && std::ispunct(c); }
bool is_ascii_space(unsigned char c) { return c < 0x80 && std::isspace(c); }

std::ifstream open_or_throw(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  return in;
}

std::string at_line(const std::filesystem::path& path, std::size_t line) {
  return path.filename().string() + ":" + std::to_string(line);
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && is_ascii_space(line[i])) ++i;
    const std::size_t start = i;
    while (i < line.size() && !is_ascii_space(line[i])) ++i;
    if (i > start) fields.push_back(line.substr(start, i - start));
  }
  return fields;
}

template <typename Num>
bool parse_number(std::string_view s, Num& out) {
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) tokens.push_back(std::move(current));
    current.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (is_ascii_space(c)) {
      flush();
    } else if (is_ascii_punct(c)) {
      flush();
      tokens.emplace_back(1, ch);
    } else if (c < 0x80) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else {
      current.push_back(ch);
    }
  }
  flush();
  return tokens;
}

Vocabulary::Vocabulary() {
  tokens_ = {std::string(kPadToken), std::string(kUnkToken)};
  index_ = {{tokens_[0], kPadId}, {tokens_[1], kUnkId}};
}

Vocabulary Vocabulary::build(std::span<const std::vector<std::string>> corpus,
                             std::size_t min_freq) {
  std::map<std::string, std::size_t> counts;
  for (const auto& doc : corpus)
    for (const auto& tok : doc) ++counts[tok];
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (auto& [tok, n] : counts) {
    if (n >= min_freq && tok != kPadToken && tok != kUnkToken)
      ranked.emplace_back(tok, n);
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary vocab;
  for (auto& [tok, n] : ranked) {
    vocab.index_.emplace(tok, static_cast<std::int32_t>(vocab.tokens_.size()));
    vocab.tokens_.push_back(tok);
  }
  return vocab;
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  if (tokens.size() < 2 || tokens[kPadId] != kPadToken ||
      tokens[kUnkId] != kUnkToken) {
    throw DataError("vocabulary must start with the reserved PAD and UNK tokens");
  }
  Vocabulary vocab;
  vocab.tokens_ = std::move(tokens);
  vocab.index_.clear();
  for (std::size_t i = 0; i < vocab.tokens_.size(); ++i) {
    if (!vocab.index_.emplace(vocab.tokens_[i], static_cast<std::int32_t>(i))
             .second) {
      throw DataError("duplicate vocabulary token '" + vocab.tokens_[i] + "'");
    }
  }
  return vocab;
}

bool Vocabulary::contains(std::string_view token) const {
  return index_.find(std::string(token)) != index_.end();
}

std::int32_t Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnkId : it->second;
}

const std::string& Vocabulary::token(std::int32_t id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw DataError("token id " + std::to_string(id) + " outside vocabulary");
  }
  return tokens_[id];
}

std::vector<std::int32_t> Vocabulary::encode(
    std::span<const std::string> tokens) const {
  std::vector<std::int32_t> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

EmbeddingMatrix random_embeddings(const Vocabulary& vocab, std::size_t dim,
                                  Rng& rng) {
  if (dim == 0) throw ConfigError("embedding dimension must be positive");
  EmbeddingMatrix e;
  e.rows = vocab.size();
  e.dim = dim;
  e.values.assign(e.rows * dim, 0.0f);
  std::normal_distribution<double> normal(0.0, kOovStd);
  for (std::size_t i = dim; i < e.values.size(); ++i)
    e.values[i] = static_cast<float>(normal(rng));
  return e;
}

EmbeddingMatrix load_embeddings(const std::filesystem::path& path,
                                const Vocabulary& vocab, std::size_t dim,
                                Rng& rng) {
  auto in = open_or_throw(path);
  EmbeddingMatrix e;
  e.rows = vocab.size();
  e.dim = dim;
  e.values.assign(e.rows * dim, 0.0f);
  std::vector<bool> seen(e.rows, false);

  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    const auto fields = split_ws(line);
    if (fields.empty()) continue;
    if (lineno == 1 && fields.size() == 2) {
      std::size_t count = 0, header_dim = 0;
      if (parse_number(fields[0], count) && parse_number(fields[1], header_dim)) {
        if (header_dim != dim) {
          throw DataError(at_line(path, lineno) + ": header declares dimension " +
                          std::to_string(header_dim) + ", expected " +
                          std::to_string(dim));
        }
        continue;
      }
    }
    if (fields.size() != dim + 1) {
      throw DataError(at_line(path, lineno) + ": expected token plus " +
                      std::to_string(dim) + " values, got " +
                      std::to_string(fields.size() - 1));
    }
    std::vector<float> vec(dim);
    for (std::size_t j = 0; j < dim; ++j) {
      if (!parse_number(fields[j + 1], vec[j]) || !std::isfinite(vec[j])) {
        throw DataError(at_line(path, lineno) + ": malformed value '" +
                        std::string(fields[j + 1]) + "'");
      }
    }
    const std::string token(fields[0]);
    if (!vocab.contains(token)) continue;
    const auto id = vocab.id(token);
    if (id == kPadId || seen[id]) continue;
    seen[id] = true;
    ++e.rows_from_file;
    std::copy(vec.begin(), vec.end(), e.values.begin() + id * dim);
  }

  std::normal_distribution<double> normal(0.0, kOovStd);
  for (std::size_t r = 1; r < e.rows; ++r) {
    if (seen[r]) continue;
    for (std::size_t j = 0; j < dim; ++j)
      e.values[r * dim + j] = static_cast<float>(normal(rng));
  }
  return e;
}

std::vector<Example> load_headlines(const std::filesystem::path& path) {
  auto in = open_or_throw(path);
  std::vector<Example> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& err) {
      throw DataError(at_line(path, lineno) + ": malformed JSON (" +
                      err.what() + ")");
    }
    if (!record.is_object() || !record.contains("headline") ||
        !record["headline"].is_string() || !record.contains("is_sarcastic")) {
      throw DataError(at_line(path, lineno) +
                      ": record needs string 'headline' and 'is_sarcastic'");
    }
    const auto& flag = record["is_sarcastic"];
    int label = -1;
    if (flag.is_boolean()) label = flag.get<bool>() ? 1 : 0;
    if (flag.is_number_integer()) label = flag.get<int>();
    if (label != 0 && label != 1) {
      throw DataError(at_line(path, lineno) + ": is_sarcastic must be 0 or 1");
    }
    out.push_back({record["headline"].get<std::string>(), label, "headlines"});
  }
  return out;
}

std::vector<Example> load_sarc(const std::filesystem::path& path,
                               SarcVariant variant) {
  auto in = open_or_throw(path);
  const std::string source =
      variant == SarcVariant::kMain ? "sarc-main" : "sarc-pol";
  std::vector<Example> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw DataError(at_line(path, lineno) + ": missing tab after label");
    }
    const std::string_view label = std::string_view(line).substr(0, tab);
    if (label != "0" && label != "1") {
      throw DataError(at_line(path, lineno) + ": label must be 0 or 1, got '" +
                      std::string(label) + "'");
    }
    out.push_back({line.substr(tab + 1), label == "1" ? 1 : 0, source});
  }
  return out;
}

Split split_train_test(std::span<const Example> examples, double test_frac,
                       std::uint64_t seed) {
  if (!(test_frac >= 0.0 && test_frac < 1.0)) {
    throw ConfigError("test fraction must lie in [0, 1)");
  }
  std::array<std::vector<std::size_t>, 2> by_class;
  for (std::size_t i = 0; i < examples.size(); ++i)
    by_class[examples[i].label].push_back(i);

  Rng rng(seed);
  std::vector<bool> in_test(examples.size(), false);
  for (int cls = 0; cls < 2; ++cls) {
    auto& idx = by_class[cls];
    if (idx.size() < 2) {
      throw DataError("class " + std::to_string(cls) + " has " +
                      std::to_string(idx.size()) +
                      " examples; stratified split needs at least 2");
    }
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n_test = static_cast<std::size_t>(
        std::llround(test_frac * static_cast<double>(idx.size())));
    for (std::size_t k = 0; k < n_test; ++k) in_test[idx[k]] = true;
  }
  Split split;
  for (std::size_t i = 0; i < examples.size(); ++i)
    (in_test[i] ? split.test : split.train).push_back(examples[i]);
  return split;
}

std::vector<EncodedExample> encode(std::span<const Example> examples,
                                   const Vocabulary& vocab) {
  std::vector<EncodedExample> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) {
    const auto tokens = tokenize(ex.text);
    out.push_back({vocab.encode(tokens), ex.label, ex.text, ex.source});
  }
  return out;
}

std::array<std::size_t, 2> Dataset::class_counts() const {
  std::array<std::size_t, 2> counts{0, 0};
  for (int y : labels) ++counts[y];
  return counts;
}

Dataset pad_and_filter(std::span<const EncodedExample> examples,
                       std::size_t max_len) {
  if (max_len == 0) throw ConfigError("max_len must be positive");
  Dataset ds;
  ds.max_len = max_len;
  for (const auto& ex : examples) {
    if (ex.ids.size() > max_len) {
      ++ds.removed;
      continue;
    }
    ds.ids.insert(ds.ids.end(), ex.ids.begin(), ex.ids.end());
    ds.ids.insert(ds.ids.end(), max_len - ex.ids.size(), kPadId);
    ds.labels.push_back(ex.label);
    ds.texts.push_back(ex.text);
    ds.sources.push_back(ex.source);
  }
  return ds;
}

Dataset make_dataset(std::span<const Example> examples,
                     const Vocabulary& vocab, std::size_t max_len) {
  const auto encoded = encode(examples, vocab);
  return pad_and_filter(encoded, max_len);
}

std::vector<Batch> batches(const Dataset& dataset, std::size_t batch_size,
                           bool shuffle, std::uint64_t seed) {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (shuffle) {
    Rng rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
  }
  std::vector<Batch> out;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    Batch b;
    b.max_len = dataset.max_len;
    b.size = std::min(batch_size, order.size() - start);
    for (std::size_t k = 0; k < b.size; ++k) {
      const auto r = order[start + k];
      const auto ids = dataset.row(r);
      b.ids.insert(b.ids.end(), ids.begin(), ids.end());
      b.labels.push_back(dataset.labels[r]);
      b.rows.push_back(r);
    }
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace dwenet::data
