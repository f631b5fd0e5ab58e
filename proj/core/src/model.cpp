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

#include "dwenet/model.hpp"

#include <algorithm>

namespace dwenet::model {

std::string_view to_string(Connectivity c) {
  switch (c) {
    case Connectivity::kDense:
      return "dense";
    case Connectivity::kResidual:
      return "residual";
    case Connectivity::kPlain:
      return "plain";
  }
  return "dense";
}

Connectivity parse_connectivity(std::string_view name) {
  if (name == "dense") return Connectivity::kDense;
  if (name == "residual") return Connectivity::kResidual;
  if (name == "plain") return Connectivity::kPlain;
  throw ConfigError("unknown connectivity '" + std::string(name) +
                    "' (expected dense, residual or plain)");
}

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* what) {
    if (v == 0) throw ConfigError(std::string("model.") + what + " must be positive");
  };
  for (auto b : block_sizes) positive(b, "block_sizes entries");
  positive(growth_rate, "growth_rate");
  positive(init_channels, "init_channels");
  positive(embed_dim, "embed_dim");
  positive(max_len, "max_len");
  for (auto h : head_dims) positive(h, "head_dims entries");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw ConfigError("model.dropout_rate must lie in [0, 1)");
  }
  if (!(leaky_slope >= 0.0)) throw ConfigError("model.leaky_slope must be >= 0");
  // The signal is halved three times on the way to the last block.
  if (max_len < 8) throw ConfigError("model.max_len must be at least 8");
}

ModelConfig dwenet_preset() { return ModelConfig{}; }

std::array<std::size_t, kNumBlocks> depth_preset(int layers) {
  switch (layers) {
    case 8:
      return {1, 1, 1, 1};
    case 16:
      return {4, 4, 4, 4};
    case 28:
      return {3, 4, 6, 3};
    case 56:
      return {6, 12, 24, 16};
    default:
      throw ConfigError("no depth preset for " + std::to_string(layers) +
                        " layers (known: 8, 16, 28, 56)");
  }
}

std::size_t block_output_channels(Connectivity c, std::size_t in_channels,
                                  std::size_t layers, std::size_t growth_rate) {
  if (layers == 0) return in_channels;
  if (c == Connectivity::kDense) return in_channels + layers * growth_rate;
  return growth_rate;
}

template <typename T>
BasicTensor<T> embed_lookup(std::span<const std::int32_t> ids,
                            std::size_t batch, const BasicTensor<T>& table) {
  if (batch == 0 || ids.size() % batch != 0) {
    throw ShapeError("embed_lookup: " + std::to_string(ids.size()) +
                     " ids do not form " + std::to_string(batch) + " rows");
  }
  return ops::embedding<T>(ids, batch, ids.size() / batch, table,
                           data::kPadId);
}

template <typename T>
BasicTensor<T> conv_unit_forward(const BasicTensor<T>& x, ConvUnit<T>& unit,
                                 std::size_t pad, Mode mode) {
  auto y = ops::conv_seq(x, unit.kernel, pad);
  y = ops::batchnorm(y, unit.gamma, unit.beta, unit.bn, mode);
  return ops::relu(y);
}

template <typename T>
BasicTensor<T> initial_conv(const BasicTensor<T>& x, ConvUnit<T>& unit,
                            Mode mode) {
  if (x.rank() != 3 || unit.kernel.dim(2) != x.dim(2) + 2) {
    throw ShapeError("initial_conv: kernel " + unit.kernel.shape().str() +
                     " does not span embedded input " + x.shape().str() +
                     " padded by one on both sides");
  }
  auto y = ops::conv_span(x, unit.kernel, 1, 1);
  y = ops::batchnorm(y, unit.gamma, unit.beta, unit.bn, mode);
  return ops::relu(y);
}

template <typename T>
BasicTensor<T> dense_layer_forward(const BasicTensor<T>& x, ConvUnit<T>& unit,
                                   Mode mode) {
  return conv_unit_forward(x, unit, 1, mode);
}

template <typename T>
BasicTensor<T> dense_block_forward(const BasicTensor<T>& x,
                                   std::span<ConvUnit<T>> layers, Mode mode) {
  std::vector<BasicTensor<T>> features{x};
  BasicTensor<T> running = x;
  for (auto& layer : layers) {
    features.push_back(dense_layer_forward(running, layer, mode));
    running = ops::concat_channels<T>(features);
  }
  return running;
}

template <typename T>
BasicTensor<T> transition_forward(const BasicTensor<T>& x, ConvUnit<T>& unit,
                                  Mode mode) {
  if (x.shape().back() < 2) {
    throw ShapeError("transition: signal of length " +
                     std::to_string(x.shape().back()) + " cannot be halved");
  }
  return ops::pool(conv_unit_forward(x, unit, 0, mode), ops::Pool::kAvgK2);
}

template <typename T>
BasicTensor<T> residual_block_forward(const BasicTensor<T>& x,
                                      BlockParams<T>& block, Mode mode) {
  BasicTensor<T> h = x;
  for (std::size_t l = 0; l < block.layers.size(); ++l) {
    auto branch = conv_unit_forward(h, block.layers[l], 1, mode);
    BasicTensor<T> skip = h;
    if (l < block.projections.size() && block.projections[l]) {
      skip = ops::conv_seq(h, *block.projections[l], 0);
    }
    if (skip.shape() != branch.shape()) {
      throw ShapeError("residual: skip " + skip.shape().str() +
                       " does not match branch " + branch.shape().str());
    }
    h = ops::add(skip, branch);
  }
  return h;
}

template <typename T>
BasicTensor<T> plain_block_forward(const BasicTensor<T>& x,
                                   std::span<ConvUnit<T>> layers, Mode mode) {
  BasicTensor<T> h = x;
  for (auto& layer : layers) h = conv_unit_forward(h, layer, 1, mode);
  return h;
}

template <typename T>
BasicTensor<T> classifier_head_forward(const BasicTensor<T>& x,
                                       std::span<const LinearUnit<T>> head,
                                       double leaky_slope, double dropout_rate,
                                       Mode mode, Rng& rng,
                                       std::size_t* features) {
  if (x.rank() != 3) throw ShapeError("classifier head expects [B, C, S]");
  const std::size_t batch = x.dim(0);
  const std::array<BasicTensor<T>, 2> pooled{
      ops::pool(x, ops::Pool::kGlobalMax), ops::pool(x, ops::Pool::kGlobalAvg)};
  auto joined = ops::concat_channels<T>(pooled);
  const std::size_t m = joined.dim(1);
  if (features) *features = m;
  auto h = ops::reshape(joined, Shape{batch, m});
  for (std::size_t j = 0; j < head.size(); ++j) {
    h = ops::affine(h, head[j].weight, head[j].bias);
    if (j + 1 < head.size()) {
      h = ops::leaky_relu(h, leaky_slope);
      h = ops::dropout(h, dropout_rate, mode, rng);
    }
  }
  return h;
}

namespace {

template <typename T>
ConvUnit<T> make_conv_unit(Shape kernel_shape, std::size_t fan_in, Rng& rng) {
  const std::size_t c_out = kernel_shape[0];
  ConvUnit<T> u;
  u.kernel = optim::he_init<T>(std::move(kernel_shape), fan_in, rng);
  u.gamma = BasicTensor<T>::full(Shape{c_out}, T(1), true);
  u.beta = BasicTensor<T>::zeros(Shape{c_out}, true);
  u.bn = ops::BatchNormState<T>::make(c_out);
  return u;
}

}  // namespace

template <typename T>
Model<T>::Model(const ModelConfig& config,
                const data::EmbeddingMatrix& embedding, Rng& rng)
    : config_(config) {
  config_.validate();
  if (embedding.dim != config_.embed_dim) {
    throw ConfigError("embedding dimension " + std::to_string(embedding.dim) +
                      " does not match model.embed_dim " +
                      std::to_string(config_.embed_dim));
  }
  if (embedding.rows < 2) throw ConfigError("embedding needs PAD and UNK rows");
  std::vector<T> table(embedding.values.begin(), embedding.values.end());
  std::fill_n(table.begin(), embedding.dim, T(0));
  embedding_ = BasicTensor<T>(Shape{embedding.rows, embedding.dim},
                              std::move(table), config_.embedding_trainable);
  params_.push_back({"embedding.weight", embedding_,
                     config_.embedding_trainable, true, true});

  const std::size_t d = config_.embed_dim;
  const std::size_t k = config_.growth_rate;
  stem_ = make_conv_unit<T>(Shape{config_.init_channels, 3, d + 2}, 3 * (d + 2),
                            rng);
  register_conv("stem", stem_);

  std::size_t channels = config_.init_channels;
  for (std::size_t b = 0; b < kNumBlocks; ++b) {
    block_inputs_.push_back(channels);
    BlockParams<T> block;
    const std::string prefix = "block" + std::to_string(b + 1);
    for (std::size_t l = 0; l < config_.block_sizes[b]; ++l) {
      std::size_t c_in = channels;
      if (config_.connectivity == Connectivity::kDense) {
        c_in = channels + l * k;
      } else if (l > 0) {
        c_in = k;
      }
      block.layers.push_back(make_conv_unit<T>(Shape{k, c_in, 3}, c_in * 3, rng));
      register_conv(prefix + ".layer" + std::to_string(l + 1), block.layers.back());
      if (config_.connectivity == Connectivity::kResidual) {
        if (c_in != k) {
          block.projections.emplace_back(
              optim::he_init<T>(Shape{k, c_in, 1}, c_in, rng));
          params_.push_back({prefix + ".layer" + std::to_string(l + 1) +
                                 ".proj.weight",
                             *block.projections.back()});
        } else {
          block.projections.emplace_back(std::nullopt);
        }
      }
    }
    blocks_.push_back(std::move(block));
    channels = block_output_channels(config_.connectivity, channels,
                                     config_.block_sizes[b], k);
    if (b + 1 < kNumBlocks) {
      if (channels < 2) {
        throw ConfigError("transition " + std::to_string(b + 1) +
                          " cannot halve " + std::to_string(channels) +
                          " channel(s)");
      }
      transitions_.push_back(
          make_conv_unit<T>(Shape{channels / 2, channels, 1}, channels, rng));
      register_conv("transition" + std::to_string(b + 1), transitions_.back());
      channels /= 2;
    }
  }

  std::size_t width = 2 * channels;
  std::vector<std::size_t> dims = config_.head_dims;
  dims.push_back(kNumClasses);
  for (std::size_t j = 0; j < dims.size(); ++j) {
    LinearUnit<T> lin{optim::he_init<T>(Shape{dims[j], width}, width, rng),
                      BasicTensor<T>::zeros(Shape{dims[j]}, true)};
    const std::string prefix = "head.linear" + std::to_string(j + 1);
    params_.push_back({prefix + ".weight", lin.weight});
    params_.push_back({prefix + ".bias", lin.bias});
    head_.push_back(std::move(lin));
    width = dims[j];
  }
}

template <typename T>
void Model<T>::register_conv(const std::string& prefix, ConvUnit<T>& unit) {
  params_.push_back({prefix + ".conv.weight", unit.kernel});
  params_.push_back({prefix + ".bn.weight", unit.gamma});
  params_.push_back({prefix + ".bn.bias", unit.beta});
  buffers_.emplace_back(prefix + ".bn.running_mean", unit.bn.running_mean);
  buffers_.emplace_back(prefix + ".bn.running_var", unit.bn.running_var);
}

template <typename T>
BasicTensor<T> Model<T>::forward(std::span<const std::int32_t> ids,
                                 std::size_t batch, Mode mode, Rng& rng,
                                 ForwardTrace* trace) {
  if (batch == 0 || ids.size() != batch * config_.max_len) {
    throw ShapeError("model expects " + std::to_string(batch) + " x " +
                     std::to_string(config_.max_len) + " token ids, got " +
                     std::to_string(ids.size()));
  }
  auto h = initial_conv(embed_lookup(ids, batch, embedding_), stem_, mode);
  if (trace) {
    *trace = ForwardTrace{};
    trace->stem = h.shape();
  }
  for (std::size_t b = 0; b < kNumBlocks; ++b) {
    auto& block = blocks_[b];
    switch (config_.connectivity) {
      case Connectivity::kDense:
        h = dense_block_forward<T>(h, block.layers, mode);
        break;
      case Connectivity::kResidual:
        h = residual_block_forward<T>(h, block, mode);
        break;
      case Connectivity::kPlain:
        h = plain_block_forward<T>(h, block.layers, mode);
        break;
    }
    if (trace) trace->block_outputs.push_back(h.shape());
    if (b < transitions_.size()) {
      h = transition_forward(h, transitions_[b], mode);
      if (trace) trace->transition_outputs.push_back(h.shape());
    }
  }
  std::size_t m = 0;
  auto logits = classifier_head_forward<T>(h, head_, config_.leaky_slope,
                                           config_.dropout_rate, mode, rng, &m);
  if (trace) trace->features = m;
  return logits;
}

template <typename T>
BasicTensor<T> Model<T>::predict_proba(std::span<const std::int32_t> ids,
                                       std::size_t batch) {
  NoGradGuard no_grad;
  Rng unused(0);
  return ops::softmax(forward(ids, batch, Mode::kEval, unused));
}

template <typename T>
std::size_t Model<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

template <typename T>
std::vector<std::pair<std::string, BasicTensor<T>>> Model<T>::named_tensors()
    const {
  std::vector<std::pair<std::string, BasicTensor<T>>> out;
  for (const auto& p : params_) out.emplace_back(p.name, p.value);
  for (const auto& b : buffers_) out.push_back(b);
  return out;
}

template <typename T>
void Model<T>::load_named_tensors(
    const std::vector<std::pair<std::string, std::vector<T>>>& values) {
  auto targets = named_tensors();
  if (values.size() != targets.size()) {
    throw CheckpointError("expected " + std::to_string(targets.size()) +
                          " tensors, got " + std::to_string(values.size()));
  }
  for (auto& [name, tensor] : targets) {
    auto it = std::find_if(values.begin(), values.end(),
                           [&](const auto& v) { return v.first == name; });
    if (it == values.end()) throw CheckpointError("missing tensor '" + name + "'");
    if (it->second.size() != tensor.numel()) {
      throw CheckpointError("tensor '" + name + "' holds " +
                            std::to_string(it->second.size()) +
                            " values, model expects " +
                            std::to_string(tensor.numel()));
    }
    std::ranges::copy(it->second, tensor.mutable_data().begin());
  }
}

template <typename T>
void Model<T>::zero_grad() {
  for (auto& p : params_) p.value.zero_grad();
}

#define DWENET_INSTANTIATE_MODEL(T)                                            \
  template BasicTensor<T> embed_lookup<T>(std::span<const std::int32_t>,       \
                                          std::size_t, const BasicTensor<T>&); \
  template BasicTensor<T> conv_unit_forward<T>(                                \
      const BasicTensor<T>&, ConvUnit<T>&, std::size_t, Mode);                 \
  template BasicTensor<T> initial_conv<T>(const BasicTensor<T>&,               \
                                          ConvUnit<T>&, Mode);                 \
  template BasicTensor<T> dense_layer_forward<T>(const BasicTensor<T>&,        \
                                                 ConvUnit<T>&, Mode);          \
  template BasicTensor<T> dense_block_forward<T>(                              \
      const BasicTensor<T>&, std::span<ConvUnit<T>>, Mode);                    \
  template BasicTensor<T> transition_forward<T>(const BasicTensor<T>&,         \
                                                ConvUnit<T>&, Mode);           \
  template BasicTensor<T> residual_block_forward<T>(const BasicTensor<T>&,     \
                                                    BlockParams<T>&, Mode);    \
  template BasicTensor<T> plain_block_forward<T>(                              \
      const BasicTensor<T>&, std::span<ConvUnit<T>>, Mode);                    \
  template BasicTensor<T> classifier_head_forward<T>(                          \
      const BasicTensor<T>&, std::span<const LinearUnit<T>>, double, double,   \
      Mode, Rng&, std::size_t*);                                               \
  template class Model<T>;

DWENET_INSTANTIATE_MODEL(float)
DWENET_INSTANTIATE_MODEL(double)

#undef DWENET_INSTANTIATE_MODEL

}  // namespace dwenet::model
