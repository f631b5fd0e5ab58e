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

#include "dwenet/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace dwenet::analysis {

double HeatmapMatrix::row_mean(std::size_t r) const {
  double s = 0.0;
  for (std::size_t c = 0; c < cols(); ++c) s += at(r, c);
  return cols() ? s / static_cast<double>(cols()) : 0.0;
}

HeatmapMatrix dependency_matrix(std::span<const float> kernel,
                                std::size_t c_out, std::size_t c_in,
                                std::size_t width, std::size_t block_inputs,
                                std::size_t growth_rate, HeatmapNorm norm,
                                std::size_t col_group) {
  if (kernel.size() != c_out * c_in * width || c_out == 0 || width == 0) {
    throw ShapeError("heatmap: kernel of " + std::to_string(kernel.size()) +
                     " values is not [" + std::to_string(c_out) + ", " +
                     std::to_string(c_in) + ", " + std::to_string(width) + "]");
  }
  if (growth_rate == 0 || col_group == 0 || c_in < block_inputs ||
      (c_in - block_inputs) % growth_rate != 0) {
    throw ShapeError("heatmap: " + std::to_string(c_in) +
                     " input channels are not n + t * k for n = " +
                     std::to_string(block_inputs) +
                     ", k = " + std::to_string(growth_rate));
  }
  HeatmapMatrix m;
  m.row_sizes.push_back(block_inputs);
  m.row_labels.push_back("input");
  const std::size_t earlier = (c_in - block_inputs) / growth_rate;
  for (std::size_t l = 0; l < earlier; ++l) {
    m.row_sizes.push_back(growth_rate);
    m.row_labels.push_back("L" + std::to_string(l + 1));
  }
  for (std::size_t o = 0; o < c_out; o += col_group) {
    m.col_sizes.push_back(std::min(col_group, c_out - o));
    m.col_labels.push_back("C" + std::to_string(m.col_sizes.size()));
  }

  const std::size_t R = m.rows(), C = m.cols();
  m.raw.assign(R * C, 0.0);
  std::size_t o0 = 0;
  for (std::size_t c = 0; c < C; ++c) {
    std::size_t i0 = 0;
    for (std::size_t r = 0; r < R; ++r) {
      double s = 0.0;
      for (std::size_t o = o0; o < o0 + m.col_sizes[c]; ++o) {
        for (std::size_t i = i0; i < i0 + m.row_sizes[r]; ++i) {
          const float* w = kernel.data() + (o * c_in + i) * width;
          for (std::size_t f = 0; f < width; ++f) s += std::fabs(w[f]);
        }
      }
      const std::size_t count = m.col_sizes[c] * m.row_sizes[r] * width;
      m.raw[r * C + c] = count ? s / static_cast<double>(count) : 0.0;
      i0 += m.row_sizes[r];
    }
    o0 += m.col_sizes[c];
  }

  m.values = m.raw;
  if (norm == HeatmapNorm::kGlobal) {
    const double mx = *std::max_element(m.raw.begin(), m.raw.end());
    if (mx > 0.0) {
      for (auto& v : m.values) v /= mx;
    }
  } else {
    for (std::size_t c = 0; c < C; ++c) {
      double mx = 0.0;
      for (std::size_t r = 0; r < R; ++r) mx = std::max(mx, m.raw[r * C + c]);
      if (mx > 0.0) {
        for (std::size_t r = 0; r < R; ++r) m.values[r * C + c] /= mx;
      }
    }
  }
  return m;
}

HeatmapMatrix l1_dependency_matrix(const model::Model<float>& model,
                                   std::size_t block,
                                   std::optional<std::size_t> target_layer,
                                   HeatmapNorm norm, std::size_t col_group) {
  const auto& cfg = model.config();
  if (cfg.connectivity != model::Connectivity::kDense) {
    throw ConfigError("heatmap needs a dense model, got " +
                      std::string(model::to_string(cfg.connectivity)));
  }
  if (block >= model::kNumBlocks) {
    throw ConfigError("heatmap: block " + std::to_string(block) +
                      " out of range (model has 4 blocks)");
  }
  const auto& layers = model.block(block).layers;
  const std::size_t t = target_layer.value_or(layers.size() - 1);
  if (t >= layers.size()) {
    throw ConfigError("heatmap: layer " + std::to_string(t) +
                      " out of range (block has " +
                      std::to_string(layers.size()) + " layers)");
  }
  const auto& kernel = layers[t].kernel;
  auto m = dependency_matrix(kernel.data(), kernel.dim(0), kernel.dim(1),
                             kernel.dim(2), model.block_input_channels(block),
                             cfg.growth_rate, norm, col_group);
  m.block = block;
  m.target_layer = t;
  return m;
}

void write_heatmap_csv(const std::filesystem::path& path,
                       const HeatmapMatrix& m) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << "source,channels";
  for (const auto& l : m.col_labels) out << ',' << l;
  out << '\n';
  char buf[32];
  for (std::size_t r = 0; r < m.rows(); ++r) {
    out << m.row_labels[r] << ',' << m.row_sizes[r];
    for (std::size_t c = 0; c < m.cols(); ++c) {
      std::snprintf(buf, sizeof buf, ",%.9g", m.at(r, c));
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw DataError("failed writing " + path.string());
}

void write_heatmap_pgm(const std::filesystem::path& path,
                       const HeatmapMatrix& m, std::size_t cell) {
  if (cell == 0) throw ConfigError("heatmap cell size must be positive");
  const std::size_t bar = std::max<std::size_t>(1, cell / 4);
  const std::size_t width = m.cols() * cell;
  const std::size_t height = m.rows() * cell + bar;
  std::vector<unsigned char> px(width * height, 0);
  for (std::size_t y = 0; y < height; ++y) {
    const std::size_t boundary_px = m.input_boundary * cell;
    if (y >= boundary_px && y < boundary_px + bar) continue;  // black bar
    const std::size_t ry = y < boundary_px ? y : y - bar;
    const std::size_t r = ry / cell;
    for (std::size_t x = 0; x < width; ++x) {
      const double v = std::clamp(m.at(r, x / cell), 0.0, 1.0);
      px[y * width + x] = static_cast<unsigned char>(std::lround(255.0 * (1.0 - v)));
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << "P5\n" << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(px.data()),
            static_cast<std::streamsize>(px.size()));
  if (!out) throw DataError("failed writing " + path.string());
}

std::vector<CaseRecord> error_set_diff(std::span<const int> preds_a,
                                       std::span<const int> preds_b,
                                       std::span<const int> labels,
                                       std::span<const std::string> texts) {
  if (preds_a.size() != labels.size() || preds_b.size() != labels.size() ||
      texts.size() != labels.size()) {
    throw ShapeError("error_set_diff: lengths differ (a " +
                     std::to_string(preds_a.size()) + ", b " +
                     std::to_string(preds_b.size()) + ", labels " +
                     std::to_string(labels.size()) + ", texts " +
                     std::to_string(texts.size()) + ")");
  }
  std::vector<CaseRecord> out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (preds_a[i] == labels[i] && preds_b[i] != labels[i]) {
      out.push_back({i, texts[i], labels[i], preds_a[i], preds_b[i]});
    }
  }
  return out;
}

namespace {

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + '"';
}

}  // namespace

void write_cases_csv(const std::filesystem::path& path,
                     std::span<const CaseRecord> cases) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << "text,label,pred_a,pred_b\n";
  for (const auto& c : cases) {
    out << csv_field(c.text) << ',' << c.label << ',' << c.pred_a << ','
        << c.pred_b << '\n';
  }
  if (!out) throw DataError("failed writing " + path.string());
}

std::vector<AblationCell> default_ablation_grid() {
  const std::vector<std::string> eight = {"model.block_sizes=[1,1,1,1]",
                                          "model.growth_rate=4"};
  auto with = [&](std::vector<std::string> base,
                  std::initializer_list<std::string> extra) {
    base.insert(base.end(), extra.begin(), extra.end());
    return base;
  };
  return {
      {"8 Layer CNN", with(eight, {"model.connectivity=plain"})},
      {"8 Layer ResNet", with(eight, {"model.connectivity=residual"})},
      {"8 Layer DenseNet", with(eight, {"model.connectivity=dense"})},
      {"28 Layer DenseNet",
       {"model.block_sizes=[3,4,6,3]", "model.growth_rate=4"}},
      {"8 Layer DenseNet GR = 32",
       {"model.block_sizes=[1,1,1,1]", "model.growth_rate=32"}},
      // Point data.embeddings_path at the 300-d vectors through a grid file;
      // without it these cells train on random 300-d rows.
      {"dweNet FastText-1M 300D", {"model.embed_dim=300"}},
      {"dweNet FastText-1M-subword 300D", {"model.embed_dim=300"}},
      {"dweNet GLoVe 50 static", {"model.embedding_trainable=false"}},
      {"dweNet GLoVe 50 non-static", {}},
  };
}

std::vector<AblationCell> load_ablation_grid(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read ablation grid " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  if (!j.is_object() || !j.contains("cells") || !j["cells"].is_array() ||
      j.size() != 1) {
    throw ConfigError(path.string() + ": expected {\"cells\": [...]}");
  }
  std::vector<AblationCell> grid;
  for (const auto& cell : j["cells"]) {
    if (!cell.is_object() || !cell.contains("name") ||
        !cell["name"].is_string()) {
      throw ConfigError(path.string() + ": every cell needs a string name");
    }
    AblationCell c{cell["name"].get<std::string>(), {}};
    for (const auto& [key, value] : cell.items()) {
      if (key != "name" && key != "overrides") {
        throw ConfigError(path.string() + ": unknown cell key '" + key + "'");
      }
    }
    if (cell.contains("overrides")) {
      for (const auto& o : cell["overrides"]) {
        if (!o.is_string()) {
          throw ConfigError(path.string() + ": overrides must be strings");
        }
        c.overrides.push_back(o.get<std::string>());
      }
    }
    grid.push_back(std::move(c));
  }
  return grid;
}

std::vector<AblationRow> ablation_run(const TrainConfig& base,
                                      std::span<const AblationCell> grid,
                                      std::size_t runs, std::size_t threads) {
  std::vector<AblationRow> rows;
  std::optional<training::PreparedData> cached;
  TrainConfig cached_for;
  for (const auto& cell : grid) {
    TrainConfig cfg = base;
    for (const auto& o : cell.overrides) apply_override(cfg, o);
    const bool reuse = cached && cached_for.data == cfg.data &&
                       cached_for.model.embed_dim == cfg.model.embed_dim &&
                       cached_for.model.max_len == cfg.model.max_len &&
                       cached_for.training.seed == cfg.training.seed;
    if (!reuse) {
      cached = training::prepare_data(cfg);
      cached_for = cfg;
    }
    rows.push_back({cell.name, cfg,
                    training::multi_run(cfg, *cached, runs, threads)});
  }
  return rows;
}

void write_ablation_csv(const std::filesystem::path& path,
                        std::span<const AblationRow> rows) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << "name,connectivity,block_sizes,growth_rate,embed_dim,embedding,"
         "embedding_trainable,runs,mean_accuracy,std_accuracy,mean_f1\n";
  char buf[96];
  for (const auto& r : rows) {
    const auto& m = r.config.model;
    std::string blocks;
    for (auto b : m.block_sizes) {
      blocks += (blocks.empty() ? "" : " ") + std::to_string(b);
    }
    const std::string source = r.config.data.embeddings_path.empty()
                                   ? "random"
                                   : r.config.data.embeddings_path;
    out << csv_field(r.name) << ',' << model::to_string(m.connectivity) << ','
        << blocks << ',' << m.growth_rate << ',' << m.embed_dim << ','
        << csv_field(source) << ','
        << (m.embedding_trainable ? "true" : "false") << ','
        << r.result.runs.size();
    std::snprintf(buf, sizeof buf, ",%.17g,%.17g,%.17g\n",
                  r.result.mean.accuracy, r.result.stddev.accuracy,
                  r.result.mean.f1);
    out << buf;
  }
  if (!out) throw DataError("failed writing " + path.string());
}

}  // namespace dwenet::analysis
