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

#include "dwenet/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "json.hpp"

namespace dwenet::training {

namespace {

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void str(std::string_view s) {
    if (s.size() > UINT32_MAX) throw CheckpointError("string too long");
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void floats(std::span<const float> v) {
    for (float x : v) f32(x);
  }
  std::vector<std::uint8_t>& buffer() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  std::span<const std::uint8_t> take(std::size_t n) {
    if (n > in_.size() - pos_) throw CheckpointError("unexpected end of data");
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint8_t u8() { return take(1)[0]; }
  std::uint32_t u32() {
    auto b = take(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }
  std::uint64_t u64() {
    auto b = take(8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str() {
    const auto n = u32();
    auto b = take(n);
    return std::string(b.begin(), b.end());
  }
  std::vector<float> floats(std::uint64_t n) {
    if (n > (in_.size() - pos_) / 4) throw CheckpointError("unexpected end of data");
    std::vector<float> v(n);
    for (auto& x : v) x = f32();
    return v;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

std::uint32_t crc(std::span<const std::uint8_t> bytes) {
  uLong c = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large buffers in pieces.
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    const std::size_t n = std::min<std::size_t>(bytes.size() - pos, 1u << 30);
    c = crc32(c, bytes.data() + pos, static_cast<uInt>(n));
    pos += n;
  }
  return static_cast<std::uint32_t>(c);
}

std::string describe_mismatch(const model::ModelConfig& stored,
                              const model::ModelConfig& expected) {
  TrainConfig a, b;
  a.model = stored;
  b.model = expected;
  const auto ja = nlohmann::json::parse(to_json(a))["model"];
  const auto jb = nlohmann::json::parse(to_json(b))["model"];
  std::string diff;
  for (const auto& [key, value] : ja.items()) {
    if (jb[key] != value) {
      if (!diff.empty()) diff += ", ";
      diff += "model." + key + " " + value.dump() + " (checkpoint) vs " +
              jb[key].dump() + " (expected)";
    }
  }
  return diff;
}

}  // namespace

CheckpointContents snapshot(const TrainConfig& config,
                            const data::Vocabulary& vocab,
                            const model::Model<float>& model,
                            const optim::AdamState<float>* optimizer,
                            const ops::Rng* rng) {
  CheckpointContents c{config, vocab, {}, std::nullopt, {}};
  c.config.model = model.config();
  for (const auto& [name, t] : model.named_tensors()) {
    c.tensors.push_back({name, t.shape(), {t.data().begin(), t.data().end()}});
  }
  if (optimizer) c.optimizer = *optimizer;
  if (rng) {
    std::ostringstream s;
    s << *rng;
    c.rng_state = s.str();
  }
  return c;
}

std::vector<std::uint8_t> encode_checkpoint(const CheckpointContents& c) {
  Writer w;
  w.bytes(kCheckpointMagic, sizeof kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.str(to_json(c.config));
  w.u32(static_cast<std::uint32_t>(c.vocab.size()));
  for (const auto& t : c.vocab.tokens()) w.str(t);
  w.u32(static_cast<std::uint32_t>(c.tensors.size()));
  for (const auto& t : c.tensors) {
    if (t.shape.numel() != t.values.size()) {
      throw CheckpointError("tensor '" + t.name + "' shape " + t.shape.str() +
                            " does not match its " +
                            std::to_string(t.values.size()) + " values");
    }
    w.str(t.name);
    w.u32(static_cast<std::uint32_t>(t.shape.rank()));
    for (auto d : t.shape.dims()) w.u64(d);
    w.floats(t.values);
  }
  w.u8(c.optimizer ? 1 : 0);
  if (c.optimizer) {
    w.u64(c.optimizer->step);
    w.u32(static_cast<std::uint32_t>(c.optimizer->moments.size()));
    for (const auto& mo : c.optimizer->moments) {
      w.str(mo.name);
      w.u64(mo.m.size());
      w.floats(mo.m);
      w.floats(mo.v);
    }
  }
  w.str(c.rng_state);
  w.u32(crc(w.buffer()));
  return std::move(w.buffer());
}

CheckpointContents decode_checkpoint(std::span<const std::uint8_t> bytes) {
  constexpr std::size_t kMinSize = sizeof kCheckpointMagic + 4 + 4;
  if (bytes.size() < kMinSize ||
      std::memcmp(bytes.data(), kCheckpointMagic, sizeof kCheckpointMagic) != 0) {
    throw CheckpointError("not a dweNet checkpoint (bad magic or truncated header)");
  }
  const auto body = bytes.first(bytes.size() - 4);
  Reader trailer(bytes.last(4));
  const std::uint32_t stored_crc = trailer.u32();
  const std::uint32_t actual_crc = crc(body);
  if (stored_crc != actual_crc) {
    throw CheckpointError("checksum mismatch (file truncated or corrupted)");
  }

  Reader r(body);
  r.take(sizeof kCheckpointMagic);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " +
                          std::to_string(version) + " (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  CheckpointContents c;
  try {
    c.config = config_from_json(r.str());
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("embedded config is invalid: ") + e.what());
  }
  std::vector<std::string> tokens(r.u32());
  for (auto& t : tokens) t = r.str();
  c.vocab = data::Vocabulary::from_tokens(std::move(tokens));
  const std::uint32_t n_tensors = r.u32();
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    NamedTensor t;
    t.name = r.str();
    std::vector<std::size_t> dims(r.u32());
    for (auto& d : dims) d = static_cast<std::size_t>(r.u64());
    t.shape = Shape(std::move(dims));
    t.values = r.floats(t.shape.numel());
    c.tensors.push_back(std::move(t));
  }
  if (r.u8() != 0) {
    optim::AdamState<float> state;
    state.step = r.u64();
    const std::uint32_t n = r.u32();
    for (std::uint32_t i = 0; i < n; ++i) {
      optim::AdamMoments<float> mo;
      mo.name = r.str();
      const auto len = r.u64();
      mo.m = r.floats(len);
      mo.v = r.floats(len);
      state.moments.push_back(std::move(mo));
    }
    c.optimizer = std::move(state);
  }
  c.rng_state = r.str();
  if (!r.done()) throw CheckpointError("trailing bytes after checkpoint payload");
  return c;
}

void write_checkpoint(const std::filesystem::path& path,
                      const CheckpointContents& c) {
  const auto bytes = encode_checkpoint(c);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      std::error_code ignored;
      std::filesystem::remove(tmp, ignored);
      throw CheckpointError("failed writing " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw CheckpointError("cannot move checkpoint into place at " + path.string());
  }
}

CheckpointContents read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot read " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_checkpoint(bytes);
  } catch (const CheckpointError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path,
                     const TrainConfig& config, const data::Vocabulary& vocab,
                     const model::Model<float>& model,
                     const optim::AdamState<float>* optimizer,
                     const ops::Rng* rng) {
  write_checkpoint(path, snapshot(config, vocab, model, optimizer, rng));
}

LoadedModel instantiate(CheckpointContents c,
                        const model::ModelConfig* expected) {
  if (expected && !(*expected == c.config.model)) {
    throw CheckpointError("config mismatch: " +
                          describe_mismatch(c.config.model, *expected));
  }
  data::EmbeddingMatrix table;
  table.rows = c.vocab.size();
  table.dim = c.config.model.embed_dim;
  table.values.assign(table.rows * table.dim, 0.0f);
  ops::Rng unused(0);
  model::Model<float> m(c.config.model, table, unused);

  const auto targets = m.named_tensors();
  if (targets.size() != c.tensors.size()) {
    throw CheckpointError("config mismatch: checkpoint holds " +
                          std::to_string(c.tensors.size()) +
                          " tensors, model has " +
                          std::to_string(targets.size()));
  }
  std::vector<std::pair<std::string, std::vector<float>>> values;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto& [name, tensor] = targets[i];
    const auto& stored = c.tensors[i];
    if (stored.name != name || !(stored.shape == tensor.shape())) {
      throw CheckpointError("config mismatch: checkpoint tensor '" +
                            stored.name + "' " + stored.shape.str() +
                            " where the model expects '" + name + "' " +
                            tensor.shape().str());
    }
    values.emplace_back(stored.name, std::move(c.tensors[i].values));
  }
  m.load_named_tensors(values);
  return LoadedModel{std::move(c.config), std::move(c.vocab), std::move(m),
                     std::move(c.optimizer), std::move(c.rng_state)};
}

LoadedModel load_checkpoint(const std::filesystem::path& path,
                            const model::ModelConfig* expected) {
  return instantiate(read_checkpoint(path), expected);
}

}  // namespace dwenet::training
