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

#include "cli.hpp"

#include <cstdio>
#include <filesystem>
#include <mutex>
#include <optional>
#include <ostream>

#include "CLI11.hpp"
#include "dwenet/analysis.hpp"
#include "dwenet/checkpoint.hpp"
#include "dwenet/config.hpp"
#include "dwenet/training.hpp"

namespace dwenet::cli {

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir = "dwenet-out";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> runs;
  std::vector<std::string> checkpoints;
  std::vector<std::string> texts;
  std::string examples_path;
  std::string grid_path;
  std::size_t block = model::kNumBlocks;
  std::optional<std::size_t> layer;
  bool per_column = false;
  bool allow_long_run = false;
  bool verbose = false;
};

TrainConfig effective_config(const Options& o) {
  TrainConfig c = o.config_path.empty()
                      ? TrainConfig{}
                      : load_config(o.config_path, o.overrides);
  if (o.config_path.empty()) {
    for (const auto& ov : o.overrides) apply_override(c, ov);
  }
  if (o.seed) c.training.seed = *o.seed;
  if (o.runs) c.training.runs = *o.runs;
  if (o.allow_long_run) c.data.allow_long_run = true;
  c.validate();
  return c;
}

// Data-section settings of a checkpoint's config may be redirected with
// --config/--override; the model section always comes from the checkpoint.
TrainConfig checkpoint_config(const Options& o, const TrainConfig& stored) {
  TrainConfig c = stored;
  if (!o.config_path.empty() || !o.overrides.empty()) {
    const TrainConfig given = effective_config(o);
    c.data = given.data;
  }
  if (o.allow_long_run) c.data.allow_long_run = true;
  return c;
}

fs::path prepare_out(const Options& o) {
  fs::path dir(o.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create output directory " + dir.string());
  return dir;
}

std::vector<data::Example> evaluation_examples(const Options& o,
                                               const TrainConfig& c) {
  if (!o.examples_path.empty()) return data::load_headlines(o.examples_path);
  return training::load_split(c).test;
}

data::Dataset encode_for(const training::LoadedModel& m,
                         std::span<const data::Example> examples) {
  return data::make_dataset(examples, m.vocab, m.config.model.max_len);
}

void write_run_outputs(const fs::path& dir, const training::MultiRunResult& r,
                       const TrainConfig& c) {
  training::write_metrics_csv(dir / "metrics.csv", r);
  training::write_summary_json(dir / "summary.json", r, c);
}

void print_summary(std::ostream& out, const training::MultiRunResult& r) {
  char line[200];
  std::snprintf(line, sizeof line,
                "runs=%zu accuracy=%.4f (sd %.4f) precision=%.4f recall=%.4f "
                "f1=%.4f\n",
                r.runs.size(), r.mean.accuracy, r.stddev.accuracy,
                r.mean.precision, r.mean.recall, r.mean.f1);
  out << line;
}

int cmd_train(const Options& o, std::ostream& out) {
  const TrainConfig c = effective_config(o);
  const fs::path dir = prepare_out(o);
  save_config(c, dir / "config.echo.json");
  const auto data = training::prepare_data(c);
  if (o.verbose) {
    out << "train=" << data.train.size() << " (removed " << data.train.removed
        << ") test=" << data.test.size() << " (removed " << data.test.removed
        << ") vocab=" << data.vocab.size() << "\n";
  }
  std::mutex out_mutex;
  const auto result = training::multi_run(
      c, data, c.training.runs, 0,
      [&](std::size_t run, training::TrainResult& tr) {
        if (run == 0 && !o.checkpoints.empty()) {
          training::save_checkpoint(o.checkpoints.front(), c, data.vocab,
                                    tr.model, &tr.optimizer, &tr.rng);
        }
        if (o.verbose) {
          std::lock_guard lock(out_mutex);
          out << "run " << run << " seed " << c.training.seed + run
              << " accuracy " << tr.metrics.accuracy << "\n";
        }
      });
  write_run_outputs(dir, result, c);
  print_summary(out, result);
  return kExitOk;
}

int cmd_eval(const Options& o, std::ostream& out) {
  auto loaded = training::load_checkpoint(o.checkpoints.front());
  const TrainConfig c = checkpoint_config(o, loaded.config);
  const fs::path dir = prepare_out(o);
  save_config(c, dir / "config.echo.json");
  const auto examples = evaluation_examples(o, c);
  const auto test = encode_for(loaded, examples);
  auto metrics = training::evaluate(loaded.model, test);
  const auto result = training::summarize(c.training.seed, {metrics});
  write_run_outputs(dir, result, c);
  print_summary(out, result);
  return kExitOk;
}

int cmd_predict(const Options& o, std::ostream& out) {
  auto loaded = training::load_checkpoint(o.checkpoints.front());
  if (o.out_dir != "dwenet-out") {
    save_config(loaded.config, prepare_out(o) / "config.echo.json");
  }
  std::vector<data::Example> examples;
  for (const auto& t : o.texts) examples.push_back({t, 0, "cli"});
  const auto ds = encode_for(loaded, examples);
  if (ds.removed > 0) {
    throw DataError("text longer than " +
                    std::to_string(loaded.config.model.max_len) +
                    " tokens cannot be classified");
  }
  const auto probs = training::predict_proba(loaded.model, ds);
  char line[64];
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const int label = training::decide(probs[i][0], probs[i][1]);
    std::snprintf(line, sizeof line, "\t%.6f\t%.6f\t", probs[i][0], probs[i][1]);
    out << (label == data::kSarcastic ? "sarcastic" : "non-sarcastic") << line
        << o.texts[i] << "\n";
  }
  return kExitOk;
}

int cmd_heatmap(const Options& o, std::ostream& out) {
  if (o.block == 0 || o.block > model::kNumBlocks) {
    throw ConfigError("--block must lie in 1..4");
  }
  if (o.layer && *o.layer == 0) throw ConfigError("--layer is 1-based");
  const fs::path dir = prepare_out(o);
  std::optional<training::LoadedModel> loaded;
  if (!o.checkpoints.empty()) {
    loaded.emplace(training::load_checkpoint(o.checkpoints.front()));
    save_config(loaded->config, dir / "config.echo.json");
  } else {
    const TrainConfig c = effective_config(o);
    save_config(c, dir / "config.echo.json");
    const auto data = training::prepare_data(c);
    auto tr = training::train_model(c, data.train, data.test, data.embedding,
                                    c.training.seed);
    write_run_outputs(dir, training::summarize(c.training.seed, {tr.metrics}),
                      c);
    loaded.emplace(training::LoadedModel{c, data.vocab, std::move(tr.model),
                                         std::move(tr.optimizer), {}});
  }
  std::optional<std::size_t> layer;
  if (o.layer) layer = *o.layer - 1;
  const auto m = analysis::l1_dependency_matrix(
      loaded->model, o.block - 1, layer,
      o.per_column ? analysis::HeatmapNorm::kPerColumn
                   : analysis::HeatmapNorm::kGlobal);
  analysis::write_heatmap_csv(dir / "heatmap.csv", m);
  analysis::write_heatmap_pgm(dir / "heatmap.pgm", m);
  out << "block " << o.block << " layer " << m.target_layer + 1 << ":";
  for (std::size_t r = 0; r < m.rows(); ++r) {
    out << " " << m.row_labels[r] << "=" << m.row_mean(r);
  }
  out << "\n";
  return kExitOk;
}

int cmd_diff(const Options& o, std::ostream& out) {
  if (o.checkpoints.size() != 2) {
    throw ConfigError("diff-errors needs exactly two --checkpoint options");
  }
  auto a = training::load_checkpoint(o.checkpoints[0]);
  auto b = training::load_checkpoint(o.checkpoints[1]);
  const TrainConfig c = checkpoint_config(o, a.config);
  const fs::path dir = prepare_out(o);
  save_config(c, dir / "config.echo.json");
  const auto examples = evaluation_examples(o, c);
  const auto da = encode_for(a, examples);
  const auto db = encode_for(b, examples);
  if (da.size() != db.size() || da.labels != db.labels) {
    throw DataError("the two checkpoints keep different test rows (max_len " +
                    std::to_string(a.config.model.max_len) + " vs " +
                    std::to_string(b.config.model.max_len) + ")");
  }
  const auto pa = training::predict(a.model, da);
  const auto pb = training::predict(b.model, db);
  const auto cases = analysis::error_set_diff(pa, pb, da.labels, da.texts);
  analysis::write_cases_csv(dir / "cases.csv", cases);
  out << cases.size() << " of " << da.size()
      << " items are right under A and wrong under B\n";
  return kExitOk;
}

int cmd_ablate(const Options& o, std::ostream& out) {
  const TrainConfig c = effective_config(o);
  const fs::path dir = prepare_out(o);
  save_config(c, dir / "config.echo.json");
  const auto grid = o.grid_path.empty() ? analysis::default_ablation_grid()
                                        : analysis::load_ablation_grid(o.grid_path);
  const auto rows = analysis::ablation_run(c, grid, c.training.runs);
  analysis::write_ablation_csv(dir / "ablation.csv", rows);
  for (const auto& r : rows) {
    out << r.name << ": " << r.result.mean.accuracy << "\n";
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err) {
  CLI::App app{"dweNet: densely connected CNN for sarcasm classification",
               "dwenet"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "JSON config file")
        ->check(CLI::ExistingFile);
    sub->add_option("--override", o.overrides, "section.key=value (repeatable)");
    sub->add_option("--out", o.out_dir, "Output directory");
    sub->add_option("--seed", o.seed, "Base seed (training.seed)");
    sub->add_option("--runs", o.runs, "Number of runs (training.runs)")
        ->check(CLI::PositiveNumber);
    sub->add_flag("--allow-long-run", o.allow_long_run,
                  "Permit SARC-Main training");
    sub->add_flag("-v,--verbose", o.verbose, "Per-run progress");
  };

  auto* train = app.add_subcommand("train", "Train and evaluate over runs");
  common(train);
  train->add_option("--checkpoint", o.checkpoints, "Save run 0 here")
      ->expected(1);

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  common(eval);
  eval->add_option("--checkpoint", o.checkpoints, "Checkpoint file")
      ->required()->expected(1)->check(CLI::ExistingFile);
  eval->add_option("--examples", o.examples_path,
                   "Headlines-format JSONL to evaluate instead of the test split")
      ->check(CLI::ExistingFile);

  auto* predict = app.add_subcommand("predict", "Classify text");
  predict->add_option("--checkpoint", o.checkpoints, "Checkpoint file")
      ->required()->expected(1)->check(CLI::ExistingFile);
  predict->add_option("--text", o.texts, "Text to classify (repeatable)")
      ->required();
  predict->add_option("--out", o.out_dir, "Output directory");

  auto* heatmap = app.add_subcommand("heatmap", "Dense-layer dependency map");
  common(heatmap);
  heatmap->add_option("--checkpoint", o.checkpoints,
                      "Trained dense model (trains one from --config if absent)")
      ->expected(1)->check(CLI::ExistingFile);
  heatmap->add_option("--block", o.block, "Block, 1-based (default 4)");
  heatmap->add_option("--layer", o.layer, "Target layer, 1-based (default last)");
  heatmap->add_flag("--per-column", o.per_column,
                    "Normalize each column by its own maximum");

  auto* diff = app.add_subcommand("diff-errors",
                                  "Items checkpoint A gets right and B wrong");
  common(diff);
  diff->add_option("--checkpoint", o.checkpoints, "A then B")
      ->required()->expected(2)->check(CLI::ExistingFile);
  diff->add_option("--examples", o.examples_path,
                   "Headlines-format JSONL to compare on")
      ->check(CLI::ExistingFile);

  auto* ablate = app.add_subcommand("ablate", "Structural ablation grid");
  common(ablate);
  ablate->add_option("--grid", o.grid_path, "Grid JSON (default: built-in)")
      ->check(CLI::ExistingFile);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  if (!reversed.empty()) reversed.pop_back();  // program name
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: usage: " << e.what() << "\n";
    const auto* failed = app.get_subcommands().empty()
                             ? &app
                             : app.get_subcommands().front();
    err << failed->help();
    return kExitUsage;
  }

  try {
    if (train->parsed()) return cmd_train(o, out);
    if (eval->parsed()) return cmd_eval(o, out);
    if (predict->parsed()) return cmd_predict(o, out);
    if (heatmap->parsed()) return cmd_heatmap(o, out);
    if (diff->parsed()) return cmd_diff(o, out);
    if (ablate->parsed()) return cmd_ablate(o, out);
  } catch (const dwenet::Error& e) {
    err << "error: " << e.kind() << ": " << e.what() << "\n";
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "error: internal: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace dwenet::cli
