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

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dwenet/ops.hpp"

namespace dwenet::data {

using ops::Rng;

inline constexpr std::int32_t kPadId = 0;
inline constexpr std::int32_t kUnkId = 1;
inline constexpr std::string_view kPadToken = "<pad>";
inline constexpr std::string_view kUnkToken = "<unk>";

inline constexpr int kNonSarcastic = 0;
inline constexpr int kSarcastic = 1;

// Lowercases ASCII letters, emits every ASCII punctuation character as its
// own token and splits the rest on whitespace. Non-ASCII bytes are kept
// inside words untouched.
std::vector<std::string> tokenize(std::string_view text);

class Vocabulary {
 public:
  // Only the reserved PAD (0) and UNK (1) entries.
  Vocabulary();

  // Tokens with frequency >= min_freq, ordered by descending frequency and
  // then lexicographically.
  static Vocabulary build(std::span<const std::vector<std::string>> corpus,
                          std::size_t min_freq = 1);

  // Restores a vocabulary from its id-ordered token list.
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  bool contains(std::string_view token) const;
  // UNK for tokens outside the vocabulary.
  std::int32_t id(std::string_view token) const;
  const std::string& token(std::int32_t id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::vector<std::int32_t> encode(std::span<const std::string> tokens) const;

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.tokens_ == b.tokens_;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int32_t> index_;
};

// [rows, dim] row-major table; row kPadId is all zeros.
struct EmbeddingMatrix {
  std::size_t rows = 0;
  std::size_t dim = 0;
  std::vector<float> values;
  bool trainable = true;
  std::size_t rows_from_file = 0;

  std::span<const float> row(std::size_t i) const {
    return std::span<const float>(values).subspan(i * dim, dim);
  }
};

inline constexpr double kOovStd = 0.1;

// Every non-PAD row drawn from N(0, kOovStd^2).
EmbeddingMatrix random_embeddings(const Vocabulary& vocab, std::size_t dim,
                                  Rng& rng);

// Reads GloVe-style text vectors ("token v1 ... vd"); a leading
// "count dim" header line (FastText .vec) is skipped. Vocabulary tokens
// missing from the file are drawn from N(0, kOovStd^2).
EmbeddingMatrix load_embeddings(const std::filesystem::path& path,
                                const Vocabulary& vocab, std::size_t dim,
                                Rng& rng);

struct Example {
  std::string text;
  int label = kNonSarcastic;
  std::string source;

  friend bool operator==(const Example&, const Example&) = default;
};

// Newline-delimited JSON with `headline` and `is_sarcastic` fields.
std::vector<Example> load_headlines(const std::filesystem::path& path);

enum class SarcVariant { kMain, kPol };

// Normalized SARC comments, one `label<TAB>text` record per line.
std::vector<Example> load_sarc(const std::filesystem::path& path,
                               SarcVariant variant);

struct Split {
  std::vector<Example> train;
  std::vector<Example> test;
};

inline constexpr std::uint64_t kDefaultSplitSeed = 42;

// Per-class stratified split; each class contributes round(test_frac * n)
// test examples. Both halves keep the input order.
Split split_train_test(std::span<const Example> examples,
                       double test_frac = 0.2,
                       std::uint64_t seed = kDefaultSplitSeed);

struct EncodedExample {
  std::vector<std::int32_t> ids;
  int label = kNonSarcastic;
  std::string text;
  std::string source;
};

std::vector<EncodedExample> encode(std::span<const Example> examples,
                                   const Vocabulary& vocab);

struct Dataset {
  std::size_t max_len = 0;
  std::vector<std::int32_t> ids;  // [size(), max_len]
  std::vector<int> labels;
  std::vector<std::string> texts;
  std::vector<std::string> sources;
  std::size_t removed = 0;  // examples longer than max_len

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }
  std::span<const std::int32_t> row(std::size_t i) const {
    return std::span<const std::int32_t>(ids).subspan(i * max_len, max_len);
  }
  // {non-sarcastic, sarcastic}
  std::array<std::size_t, 2> class_counts() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

// Right-pads with PAD; sequences longer than max_len are dropped.
Dataset pad_and_filter(std::span<const EncodedExample> examples,
                       std::size_t max_len);

// tokenize + encode + pad_and_filter.
Dataset make_dataset(std::span<const Example> examples,
                     const Vocabulary& vocab, std::size_t max_len);

struct Batch {
  std::size_t size = 0;
  std::size_t max_len = 0;
  std::vector<std::int32_t> ids;  // [size, max_len]
  std::vector<int> labels;
  std::vector<std::size_t> rows;  // dataset row of each entry
};

std::vector<Batch> batches(const Dataset& dataset, std::size_t batch_size,
                           bool shuffle, std::uint64_t seed);

}  // namespace dwenet::data
