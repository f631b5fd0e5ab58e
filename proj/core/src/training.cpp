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

#include "dwenet/training.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>

#include "json.hpp"

namespace dwenet::training {

namespace {

// splitmix64 finalizer; separates the init, dropout and shuffle streams of
// one run seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

enum Stream : std::uint64_t { kInit = 1, kDropout = 2, kEmbedding = 3 };
constexpr std::uint64_t kShuffleBase = 1000;

double safe_div(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

}  // namespace

Metrics Metrics::from_confusion(const Confusion& c) {
  Metrics m;
  m.confusion = c;
  const double tp = static_cast<double>(c.tp);
  m.accuracy = safe_div(static_cast<double>(c.tp + c.tn),
                        static_cast<double>(c.total()));
  m.precision = safe_div(tp, static_cast<double>(c.tp + c.fp));
  m.recall = safe_div(tp, static_cast<double>(c.tp + c.fn));
  m.f1 = safe_div(2.0 * m.precision * m.recall, m.precision + m.recall);
  return m;
}

int decide(double p_non_sarcastic, double p_sarcastic) {
  return p_sarcastic > p_non_sarcastic ? data::kSarcastic : data::kNonSarcastic;
}

Metrics metrics_from_predictions(std::span<const int> predictions,
                                 std::span<const int> labels) {
  if (predictions.size() != labels.size()) {
    throw ShapeError("metrics: " + std::to_string(predictions.size()) +
                     " predictions for " + std::to_string(labels.size()) +
                     " labels");
  }
  Confusion c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool pos = predictions[i] == data::kSarcastic;
    const bool truth = labels[i] == data::kSarcastic;
    if (pos && truth) ++c.tp;
    else if (pos) ++c.fp;
    else if (truth) ++c.fn;
    else ++c.tn;
  }
  return Metrics::from_confusion(c);
}

PreparedData prepare_data(const TrainConfig& config,
                          std::span<const data::Example> train,
                          std::span<const data::Example> test) {
  std::vector<std::vector<std::string>> corpus;
  corpus.reserve(train.size());
  for (const auto& ex : train) corpus.push_back(data::tokenize(ex.text));

  PreparedData out;
  out.vocab = data::Vocabulary::build(corpus, config.data.min_freq);
  Rng rng(derive_seed(config.training.seed, kEmbedding));
  const std::size_t d = config.model.embed_dim;
  out.embedding = config.data.embeddings_path.empty()
                      ? data::random_embeddings(out.vocab, d, rng)
                      : data::load_embeddings(config.data.embeddings_path,
                                              out.vocab, d, rng);
  out.embedding.trainable = config.model.embedding_trainable;
  out.train = data::make_dataset(train, out.vocab, config.model.max_len);
  out.test = data::make_dataset(test, out.vocab, config.model.max_len);
  return out;
}

data::Split load_split(const TrainConfig& config) {
  config.validate();
  const auto& d = config.data;
  if (d.train_path.empty()) throw DataError("data.train_path is not set");
  if (d.dataset == DatasetKind::kHeadlines) {
    return data::split_train_test(data::load_headlines(d.train_path),
                                  d.test_frac, d.split_seed);
  }
  if (d.dataset == DatasetKind::kSarcMain && !d.allow_long_run) {
    throw ConfigError(
        "sarc-main trains for hours per run; set data.allow_long_run=true");
  }
  if (d.test_path.empty()) throw DataError("data.test_path is not set");
  const auto variant = d.dataset == DatasetKind::kSarcMain
                           ? data::SarcVariant::kMain
                           : data::SarcVariant::kPol;
  return {data::load_sarc(d.train_path, variant),
          data::load_sarc(d.test_path, variant)};
}

PreparedData prepare_data(const TrainConfig& config) {
  const auto split = load_split(config);
  return prepare_data(config, split.train, split.test);
}

std::size_t total_steps(std::size_t epochs, std::size_t train_size,
                        std::size_t batch_size) {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  return epochs * ((train_size + batch_size - 1) / batch_size);
}

TrainResult train_model(const TrainConfig& config, const data::Dataset& train,
                        const data::Dataset& test,
                        const data::EmbeddingMatrix& embedding,
                        std::uint64_t seed, const EpochCallback& on_epoch) {
  config.validate();
  if (train.empty() && config.training.epochs > 0) {
    throw DataError("training set is empty");
  }
  for (const auto* ds : {&train, &test}) {
    if (!ds->empty() && ds->max_len != config.model.max_len) {
      throw ShapeError("dataset padded to " + std::to_string(ds->max_len) +
                       ", model expects " +
                       std::to_string(config.model.max_len));
    }
  }

  Rng init_rng(derive_seed(seed, kInit));
  TrainResult result{Model(config.model, embedding, init_rng), {}, {}, {},
                     Rng(derive_seed(seed, kDropout))};
  auto& model = result.model;

  const std::size_t batch_size = config.training.batch_size;
  const std::size_t steps =
      total_steps(config.training.epochs, train.size(), batch_size);
  // Batch i uses step i of a schedule spanning steps - 1 intervals.
  const auto schedule = config.schedule(steps > 1 ? steps - 1 : 1);

  optim::AdamHyper hyper;
  hyper.beta2 = config.optimizer.beta2;
  hyper.eps = config.optimizer.eps;
  hyper.weight_decay = config.optimizer.weight_decay;
  hyper.decoupled = config.optimizer.decoupled_weight_decay;

  std::size_t step = 0;
  std::vector<double> epoch_losses;
  for (std::size_t epoch = 0; epoch < config.training.epochs; ++epoch) {
    const auto epoch_batches =
        data::batches(train, batch_size, /*shuffle=*/true,
                      derive_seed(seed, kShuffleBase + epoch));
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t b = 0; b < epoch_batches.size(); ++b, ++step) {
      const auto& batch = epoch_batches[b];
      const auto sv = optim::one_cycle(
          static_cast<double>(std::min(step, schedule.total_steps)), schedule);
      auto diagnostic = [&](const std::string& what) {
        return what + " at step " + std::to_string(step) + " (epoch " +
               std::to_string(epoch + 1) + ", batch " + std::to_string(b) +
               ", lr " + std::to_string(sv.lr) + ")";
      };
      double loss = 0.0;
      try {
        model.zero_grad();
        auto logits = model.forward(batch.ids, batch.size, Mode::kTrain,
                                    result.rng);
        auto ce = ops::softmax_cross_entropy<float>(logits, batch.labels);
        loss = static_cast<double>(ce.loss.item());
        if (!std::isfinite(loss)) throw NumericError("non-finite loss");
        ce.loss.backward();
      } catch (const NumericError& e) {
        throw NumericError(diagnostic(e.what()));
      }
      hyper.lr = sv.lr;
      hyper.beta1 = sv.momentum;
      optim::adam_step<float>(model.parameters(), result.optimizer, hyper);
      result.step_losses.push_back(loss);
      loss_sum += loss * static_cast<double>(batch.size);
      seen += batch.size;
    }
    model.zero_grad();
    epoch_losses.push_back(seen ? loss_sum / static_cast<double>(seen) : 0.0);
    if (on_epoch) on_epoch({epoch + 1, epoch_losses.back(), step}, model);
  }

  if (!test.empty()) result.metrics = evaluate(model, test);
  result.metrics.loss_curve = std::move(epoch_losses);
  return result;
}

std::vector<std::array<float, 2>> predict_proba(Model& model,
                                                const data::Dataset& dataset,
                                                std::size_t batch_size) {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  if (!dataset.empty() && dataset.max_len != model.config().max_len) {
    throw ShapeError("dataset padded to " + std::to_string(dataset.max_len) +
                     ", model expects " +
                     std::to_string(model.config().max_len));
  }
  std::vector<std::array<float, 2>> out;
  out.reserve(dataset.size());
  const std::size_t s = dataset.max_len;
  for (std::size_t begin = 0; begin < dataset.size(); begin += batch_size) {
    const std::size_t n = std::min(batch_size, dataset.size() - begin);
    const auto ids = std::span<const std::int32_t>(dataset.ids)
                         .subspan(begin * s, n * s);
    const auto probs = model.predict_proba(ids, n);
    const auto p = probs.data();
    for (std::size_t i = 0; i < n; ++i) out.push_back({p[2 * i], p[2 * i + 1]});
  }
  return out;
}

std::vector<int> predict(Model& model, const data::Dataset& dataset,
                         std::size_t batch_size) {
  std::vector<int> out;
  for (const auto& p : predict_proba(model, dataset, batch_size)) {
    out.push_back(decide(p[0], p[1]));
  }
  return out;
}

Metrics evaluate(Model& model, const data::Dataset& dataset) {
  if (dataset.empty()) throw DataError("cannot evaluate on an empty dataset");
  return metrics_from_predictions(predict(model, dataset), dataset.labels);
}

MultiRunResult summarize(std::uint64_t base_seed, std::vector<Metrics> runs) {
  MultiRunResult r;
  r.base_seed = base_seed;
  r.runs = std::move(runs);
  const double n = static_cast<double>(r.runs.size());
  if (r.runs.empty()) return r;
  auto fields = [](const Metrics& m) {
    return std::array<double, 4>{m.accuracy, m.precision, m.recall, m.f1};
  };
  std::array<double, 4> mean{}, var{};
  for (const auto& m : r.runs) {
    const auto f = fields(m);
    for (int i = 0; i < 4; ++i) mean[i] += f[i];
  }
  for (auto& v : mean) v /= n;
  for (const auto& m : r.runs) {
    const auto f = fields(m);
    for (int i = 0; i < 4; ++i) var[i] += (f[i] - mean[i]) * (f[i] - mean[i]);
  }
  std::array<double, 4> sd{};
  for (int i = 0; i < 4; ++i) {
    sd[i] = r.runs.size() > 1 ? std::sqrt(var[i] / (n - 1.0)) : 0.0;
  }
  r.mean = {mean[0], mean[1], mean[2], mean[3]};
  r.stddev = {sd[0], sd[1], sd[2], sd[3]};
  return r;
}

std::size_t thread_budget() {
  if (const char* env = std::getenv("DWENET_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
    throw ConfigError("DWENET_THREADS must be a positive integer, got '" +
                      std::string(env) + "'");
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

MultiRunResult multi_run(const TrainConfig& config, const PreparedData& data,
                         std::size_t runs, std::size_t threads,
                         const RunHook& on_run) {
  if (runs == 0) throw ConfigError("multi_run needs at least one run");
  const std::uint64_t base = config.training.seed;
  std::vector<Metrics> results(runs);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t r = next++; r < runs; r = next++) {
      try {
        auto trained = train_model(config, data.train, data.test,
                                   data.embedding, base + r);
        if (on_run) on_run(r, trained);
        results[r] = std::move(trained.metrics);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = runs;
      }
    }
  };
  const std::size_t n_threads =
      std::min(runs, threads ? threads : thread_budget());
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
  return summarize(base, std::move(results));
}

void write_metrics_csv(const std::filesystem::path& path,
                       const MultiRunResult& result) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << "run,accuracy,precision,recall,f1\n";
  char line[160];
  for (std::size_t r = 0; r < result.runs.size(); ++r) {
    const auto& m = result.runs[r];
    std::snprintf(line, sizeof line, "%zu,%.17g,%.17g,%.17g,%.17g\n", r,
                  m.accuracy, m.precision, m.recall, m.f1);
    out << line;
  }
  if (!out) throw DataError("failed writing " + path.string());
}

void write_summary_json(const std::filesystem::path& path,
                        const MultiRunResult& result,
                        const TrainConfig& config) {
  using nlohmann::json;
  auto stats = [](const MetricStats& s) {
    return json{{"accuracy", s.accuracy},
                {"precision", s.precision},
                {"recall", s.recall},
                {"f1", s.f1}};
  };
  json runs = json::array();
  for (std::size_t r = 0; r < result.runs.size(); ++r) {
    const auto& m = result.runs[r];
    const auto& c = m.confusion;
    runs.push_back({{"run", r},
                    {"seed", result.base_seed + r},
                    {"accuracy", m.accuracy},
                    {"precision", m.precision},
                    {"recall", m.recall},
                    {"f1", m.f1},
                    {"tp", c.tp},
                    {"fp", c.fp},
                    {"tn", c.tn},
                    {"fn", c.fn},
                    {"loss_curve", m.loss_curve}});
  }
  const json j{{"dataset", std::string(to_string(config.data.dataset))},
               {"connectivity",
                std::string(model::to_string(config.model.connectivity))},
               {"base_seed", result.base_seed},
               {"num_runs", result.runs.size()},
               {"mean", stats(result.mean)},
               {"stddev", stats(result.stddev)},
               {"runs", runs}};
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << "\n";
  if (!out) throw DataError("failed writing " + path.string());
}

}  // namespace dwenet::training
