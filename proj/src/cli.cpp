// Copyright 2026 The dialeval Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "dialeval/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dialeval/corpus.hpp"
#include "dialeval/embedding_io.hpp"
#include "dialeval/metrics.hpp"
#include "dialeval/model.hpp"
#include "dialeval/stats.hpp"
#include "dialeval/train.hpp"

namespace dialeval::cli {
namespace {

namespace fs = std::filesystem;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Hyperparameters {
  std::size_t batch_size = 128;
  double margin = 0.5;
  double lr = 1e-4;
  double decay = 0.5;
  int patience = 5;
  int early_stop = 20;
  int max_epochs = 200;
  Eigen::Index gru_hidden = 128;
  Eigen::Index gru_layers = 2;
  std::vector<Eigen::Index> mlp_hidden{256, 512, 128};

  void add_to(CLI::App& app) {
    app.add_option("--batch-size", batch_size, "Triples per Adam step")->capture_default_str();
    app.add_option("--margin", margin, "Ranking-loss margin")->capture_default_str();
    app.add_option("--lr", lr, "Initial learning rate")->capture_default_str();
    app.add_option("--decay", decay, "Learning-rate decay factor")->capture_default_str();
    app.add_option("--patience", patience, "Epochs without improvement before decay")
        ->capture_default_str();
    app.add_option("--early-stop", early_stop, "Epochs without improvement before stopping")
        ->capture_default_str();
    app.add_option("--max-epochs", max_epochs)->capture_default_str();
    app.add_option("--gru-hidden", gru_hidden, "GRU units per direction")->capture_default_str();
    app.add_option("--gru-layers", gru_layers)->capture_default_str();
    app.add_option("--mlp-hidden", mlp_hidden, "Three MLP hidden sizes")
        ->expected(3)
        ->capture_default_str();
  }

  TrainConfig train_config(std::uint64_t seed) const {
    TrainConfig c;
    c.seed = seed;
    c.batch_size = batch_size;
    c.margin = margin;
    c.initial_lr = lr;
    c.decay_factor = decay;
    c.patience = patience;
    c.early_stop = early_stop;
    c.max_epochs = max_epochs;
    return c;
  }

  ModelConfig model_config(EncoderKind encoder, Objective objective, EmbeddingKind embedding,
                           std::size_t input_dim, std::uint64_t seed) const {
    ModelConfig c;
    c.encoder = encoder;
    c.objective = objective;
    c.embedding = embedding;
    c.input_dim = static_cast<Eigen::Index>(input_dim);
    c.gru_hidden = gru_hidden;
    c.gru_layers = gru_layers;
    std::copy(mlp_hidden.begin(), mlp_hidden.end(), c.mlp_hidden.begin());
    c.seed = seed;
    return c;
  }

  nlohmann::json to_json() const {
    return {{"batch_size", batch_size}, {"margin", margin},         {"lr", lr},
            {"decay", decay},           {"patience", patience},     {"early_stop", early_stop},
            {"max_epochs", max_epochs}, {"gru_hidden", gru_hidden}, {"gru_layers", gru_layers},
            {"mlp_hidden", mlp_hidden}};
  }
};

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

void require_file(const std::string& path, const char* flag) {
  if (!fs::is_regular_file(path)) {
    throw std::runtime_error(std::string(flag) + ": cannot read '" + path + "'");
  }
}

// Output directory assembled under "<out>.partial" and renamed into place
// when it did not exist beforehand; files are always written via rename.
class OutputDir {
 public:
  explicit OutputDir(fs::path target) : target_(std::move(target)) {
    if (fs::exists(target_)) {
      if (!fs::is_directory(target_)) {
        throw std::runtime_error("--out '" + target_.string() + "' is not a directory");
      }
      staging_ = target_;
    } else {
      staging_ = target_;
      staging_ += ".partial";
      fs::remove_all(staging_);
      fs::create_directories(staging_);
      owns_staging_ = true;
    }
  }
  OutputDir(const OutputDir&) = delete;
  OutputDir& operator=(const OutputDir&) = delete;
  ~OutputDir() {
    if (owns_staging_ && !committed_) {
      std::error_code ec;
      fs::remove_all(staging_, ec);
    }
  }

  void write(const std::string& name, std::string_view bytes) {
    const fs::path final_path = staging_ / name;
    fs::path tmp = final_path;
    tmp += ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary);
      if (!out) throw std::runtime_error("cannot write " + tmp.string());
      out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
      if (!out) throw std::runtime_error("short write to " + tmp.string());
    }
    fs::rename(tmp, final_path);
  }

  void commit() {
    if (owns_staging_) fs::rename(staging_, target_);
    committed_ = true;
  }

  const fs::path& target() const { return target_; }

 private:
  fs::path target_;
  fs::path staging_;
  bool owns_staging_ = false;
  bool committed_ = false;
};

nlohmann::json run_manifest(const std::string& command, std::uint64_t seed,
                            nlohmann::json paths, nlohmann::json cells,
                            const nlohmann::json& config, const fs::path& out) {
  return {{"command", command},
          {"seed", seed},
          {"config_hash", hex64(fnv1a(config.dump()))},
          {"config", config},
          {"paths", std::move(paths)},
          {"cells", std::move(cells)},
          {"out", out.string()}};
}

struct CellSpec {
  EmbeddingKind embedding;
  EncoderKind encoder;
  Objective objective;

  std::string name() const {
    return std::string(to_string(embedding)) + "/" + std::string(to_string(encoder)) + "/" +
           std::string(to_string(objective));
  }
};

struct TrainInputs {
  std::vector<TrainExample> train;
  std::vector<TrainExample> valid;
};

TrainInputs sample_examples(const std::vector<QRPair>& train_pairs,
                            const std::vector<QRPair>& valid_pairs, std::uint64_t seed) {
  return {sample_negatives(train_pairs, derive_seed(seed, "sampling")),
          sample_negatives(valid_pairs, derive_seed(seed, "valid-sampling"))};
}

TrainResult train_cell(const CellSpec& cell, const Hyperparameters& hyper, std::uint64_t seed,
                       const TrainInputs& inputs, const EmbeddingSource& train_source,
                       const EmbeddingSource& valid_source, std::ostream* progress,
                       std::mutex* progress_mutex) {
  if (train_source.dim() != valid_source.dim()) {
    throw std::runtime_error("training and validation embeddings differ in dimension (" +
                             std::to_string(train_source.dim()) + " vs " +
                             std::to_string(valid_source.dim()) + ")");
  }
  const ModelConfig model_config = hyper.model_config(
      cell.encoder, cell.objective, cell.embedding, train_source.dim(), seed);
  const auto train_set = resolve_triples(inputs.train, train_source);
  const auto valid_set = resolve_triples(inputs.valid, valid_source);
  EpochCallback callback;
  if (progress != nullptr) {
    callback = [&](const EpochLog& e) {
      std::lock_guard<std::mutex> lock(*progress_mutex);
      char line[200];
      std::snprintf(line, sizeof line, "[%s] epoch %d train %.6f valid %.6f lr %.3g\n",
                    cell.name().c_str(), e.epoch, e.train_loss, e.valid_loss, e.lr);
      *progress << line;
    };
  }
  return train(model_config, hyper.train_config(seed), train_set, valid_set, callback);
}

// Static tables get their UNK vector from the seed; contextual dumps ignore it.
EmbeddingSource load_source(const std::string& path, std::uint64_t seed) {
  return load_embedding_source(path, derive_seed(seed, "embeddings"));
}

std::string format_grid_row(const CellSpec& cell, const stats::CorrelationReport& r) {
  char buf[320];
  std::snprintf(buf, sizeof buf, "%s\t%s\t%s\t%.6f\t%.6e\t%.6f\t%.6e\t%.6f\n",
                std::string(to_string(cell.embedding)).c_str(),
                std::string(to_string(cell.encoder)).c_str(),
                std::string(to_string(cell.objective)).c_str(), r.pearson_r, r.pearson_p,
                r.spearman_rho, r.spearman_p, r.cosine_sim);
  return buf;
}

// ---------------------------------------------------------------------------

struct TrainCommand {
  std::string pairs, valid_pairs, embeddings, valid_embeddings, out;
  std::string encoder = "bigru";
  std::string objective = "ranking";
  std::uint64_t seed = 0;
  bool verbose = false;
  Hyperparameters hyper;

  void add_to(CLI::App& app) {
    app.add_option("--pairs", pairs, "Training pairs TSV")->required();
    app.add_option("--valid-pairs", valid_pairs, "Validation pairs TSV")->required();
    app.add_option("--embeddings", embeddings,
                   "Static table or contextual dump covering the training pairs")
        ->required();
    app.add_option("--valid-embeddings", valid_embeddings,
                   "Embeddings for the validation pairs (required for contextual dumps)");
    app.add_option("--encoder", encoder)
        ->check(CLI::IsMember({"bigru", "max", "mean"}))
        ->capture_default_str();
    app.add_option("--objective", objective)
        ->check(CLI::IsMember({"ranking", "xent"}))
        ->capture_default_str();
    app.add_option("--seed", seed)->capture_default_str();
    app.add_option("--out", out, "Output directory")->required();
    app.add_flag("-v,--verbose", verbose, "Print per-epoch progress to stderr");
    hyper.add_to(app);
  }

  int run(std::ostream& out_stream, std::ostream& err) const {
    require_file(pairs, "--pairs");
    require_file(valid_pairs, "--valid-pairs");
    require_file(embeddings, "--embeddings");
    if (!valid_embeddings.empty()) require_file(valid_embeddings, "--valid-embeddings");

    const auto train_pairs = load_pairs(pairs);
    const auto valid = load_pairs(valid_pairs);
    const EmbeddingSource source = load_source(embeddings, seed);
    std::optional<EmbeddingSource> valid_source_storage;
    if (!valid_embeddings.empty()) {
      valid_source_storage.emplace(load_source(valid_embeddings, seed));
    } else if (source.kind() == EmbeddingKind::kContextual) {
      throw UsageError(
          "--valid-embeddings is required with a contextual dump (uids are per file)");
    }
    const EmbeddingSource& valid_source =
        valid_source_storage ? *valid_source_storage : source;
    if (valid_source.kind() != source.kind()) {
      throw std::runtime_error("--embeddings and --valid-embeddings are of different kinds");
    }

    const CellSpec cell{source.kind(), parse_encoder_kind(encoder), parse_objective(objective)};
    const TrainInputs inputs = sample_examples(train_pairs, valid, seed);
    std::mutex mutex;
    const TrainResult result = train_cell(cell, hyper, seed, inputs, source, valid_source,
                                          verbose ? &err : nullptr, &mutex);

    nlohmann::json config = hyper.to_json();
    config["encoder"] = encoder;
    config["objective"] = objective;
    config["embedding_kind"] = to_string(source.kind());
    OutputDir dir(out);
    dir.write(kCheckpointFile, serialize_checkpoint(result.model));
    dir.write(kTrainLogFile, serialize_training_log(result.log));
    dir.write(kRunManifestFile,
              run_manifest("train", seed,
                           {{"pairs", pairs},
                            {"valid_pairs", valid_pairs},
                            {"embeddings", embeddings},
                            {"valid_embeddings", valid_embeddings}},
                           {cell.name()}, config, out)
                      .dump(2) +
                  "\n");
    dir.commit();
    out_stream << "trained " << cell.name() << ": " << result.log.size() << " epochs, best epoch "
               << result.best_epoch << ", best validation loss "
               << result.log.at(static_cast<std::size_t>(result.best_epoch - 1)).valid_loss
               << "\n";
    return kExitOk;
  }
};

struct EvalCommand {
  std::string model, eval_records, embeddings, ref_embeddings, out;
  std::string blend = "max";
  std::string ref_pooling = "minmax";

  void add_to(CLI::App& app) {
    app.add_option("--model", model, "Checkpoint written by `train`")->required();
    app.add_option("--eval-records", eval_records, "Rated evaluation records TSV")->required();
    app.add_option("--embeddings", embeddings,
                   "Embeddings for the unreferenced model (and referenced metric by default)")
        ->required();
    app.add_option("--ref-embeddings", ref_embeddings,
                   "Separate embeddings for the referenced metric");
    app.add_option("--blend", blend)
        ->check(CLI::IsMember({"min", "max", "mean", "none"}))
        ->capture_default_str();
    app.add_option("--ref-pooling", ref_pooling)
        ->check(CLI::IsMember({"minmax", "max", "mean"}))
        ->capture_default_str();
    app.add_option("--out", out, "Output directory")->required();
  }

  int run(std::ostream& out_stream, std::ostream&) const {
    require_file(model, "--model");
    require_file(eval_records, "--eval-records");
    require_file(embeddings, "--embeddings");
    if (!ref_embeddings.empty()) require_file(ref_embeddings, "--ref-embeddings");

    const UnrefModel<double> unref = load_checkpoint(model);
    const auto records = load_eval_records(eval_records);
    const EmbeddingSource source = load_source(embeddings, unref.config.seed);
    if (source.kind() != unref.config.embedding) {
      throw std::runtime_error("model was trained on " +
                               std::string(to_string(unref.config.embedding)) +
                               " embeddings but --embeddings is " +
                               std::string(to_string(source.kind())));
    }
    std::optional<EmbeddingSource> ref_source;
    if (!ref_embeddings.empty()) ref_source.emplace(load_source(ref_embeddings, unref.config.seed));

    MetricConfig config;
    config.model = &unref;
    config.unref_source = &source;
    config.ref_source = ref_source ? &*ref_source : &source;
    config.blend = parse_blend_strategy(blend);
    config.ref_pooling = parse_ref_pooling(ref_pooling);
    const auto scored = score_records(config, records);
    const auto report = stats::correlate(metric_scores(scored), human_scores(scored));

    OutputDir dir(out);
    dir.write(kScoredFile, serialize_scored_tsv(scored));
    dir.write(kReportFile, serialize_report(report));
    dir.commit();
    out_stream << "pearson " << report.pearson_r << " (p=" << report.pearson_p << ") spearman "
               << report.spearman_rho << " (p=" << report.spearman_p << ") cosine "
               << report.cosine_sim << " n=" << report.n << "\n";
    return kExitOk;
  }
};

struct GridCommand {
  std::string static_table, contextual_dump, contextual_valid_dump, contextual_eval_dump;
  std::string pairs, valid_pairs, eval_records, out;
  std::uint64_t seed = 0;
  bool verbose = false;
  Hyperparameters hyper;

  void add_to(CLI::App& app) {
    app.add_option("--static-table", static_table, "Static word-vector table")->required();
    app.add_option("--contextual-dump", contextual_dump,
                   "Contextual dump for the training pairs")
        ->required();
    app.add_option("--contextual-valid-dump", contextual_valid_dump,
                   "Contextual dump for the validation pairs")
        ->required();
    app.add_option("--contextual-eval-dump", contextual_eval_dump,
                   "Contextual dump for the evaluation records")
        ->required();
    app.add_option("--pairs", pairs, "Training pairs TSV")->required();
    app.add_option("--valid-pairs", valid_pairs, "Validation pairs TSV")->required();
    app.add_option("--eval-records", eval_records, "Rated evaluation records TSV")->required();
    app.add_option("--seed", seed)->capture_default_str();
    app.add_option("--out", out, "Output directory")->required();
    app.add_flag("-v,--verbose", verbose, "Print per-epoch progress to stderr");
    hyper.add_to(app);
  }

  int run(std::ostream& out_stream, std::ostream& err) const {
    for (const auto& [path, flag] :
         {std::pair{static_table, "--static-table"}, {contextual_dump, "--contextual-dump"},
          {contextual_valid_dump, "--contextual-valid-dump"},
          {contextual_eval_dump, "--contextual-eval-dump"}, {pairs, "--pairs"},
          {valid_pairs, "--valid-pairs"}, {eval_records, "--eval-records"}}) {
      require_file(path, flag);
    }
    const auto train_pairs = load_pairs(pairs);
    const auto valid = load_pairs(valid_pairs);
    const auto records = load_eval_records(eval_records);
    const EmbeddingSource table(load_static_table(static_table, derive_seed(seed, "embeddings")));
    const EmbeddingSource train_dump(load_contextual_dump(contextual_dump));
    const EmbeddingSource valid_dump(load_contextual_dump(contextual_valid_dump));
    const EmbeddingSource eval_dump(load_contextual_dump(contextual_eval_dump));
    if (train_dump.dim() != valid_dump.dim() || train_dump.dim() != eval_dump.dim()) {
      throw std::runtime_error("contextual dumps disagree on vector dimension");
    }
    const TrainInputs inputs = sample_examples(train_pairs, valid, seed);

    std::vector<CellSpec> cells;
    for (EmbeddingKind embedding : {EmbeddingKind::kStatic, EmbeddingKind::kContextual}) {
      for (EncoderKind encoder :
           {EncoderKind::kBiGru, EncoderKind::kMaxPool, EncoderKind::kMeanPool}) {
        for (Objective objective : {Objective::kRanking, Objective::kCrossEntropy}) {
          cells.push_back({embedding, encoder, objective});
        }
      }
    }

    std::vector<std::optional<stats::CorrelationReport>> reports(cells.size());
    std::vector<std::string> failures(cells.size());
    std::atomic<std::size_t> next{0};
    std::mutex progress_mutex;
    const auto worker = [&] {
      for (std::size_t i = next++; i < cells.size(); i = next++) {
        const CellSpec& cell = cells[i];
        try {
          const bool is_static = cell.embedding == EmbeddingKind::kStatic;
          const TrainResult trained =
              train_cell(cell, hyper, seed, inputs, is_static ? table : train_dump,
                         is_static ? table : valid_dump, verbose ? &err : nullptr,
                         &progress_mutex);
          MetricConfig config;
          config.model = &trained.model;
          config.unref_source = is_static ? &table : &eval_dump;
          config.ref_source = config.unref_source;
          config.blend = BlendStrategy::kNone;
          const auto scored = score_records(config, records);
          reports[i] = stats::correlate(metric_scores(scored), human_scores(scored));
        } catch (const std::exception& e) {
          failures[i] = e.what();
        }
      }
    };
    const unsigned threads =
        std::max(1u, std::min<unsigned>(thread_budget(), static_cast<unsigned>(cells.size())));
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (!reports[i]) {
        throw std::runtime_error("grid cell " + cells[i].name() + " failed: " + failures[i]);
      }
    }

    std::string table_text =
        "embedding\trepresentation\tobjective\tpearson\tpearson_p\tspearman\tspearman_p\tcosine\n";
    nlohmann::json cell_names = nlohmann::json::array();
    for (std::size_t i = 0; i < cells.size(); ++i) {
      table_text += format_grid_row(cells[i], *reports[i]);
      cell_names.push_back(cells[i].name());
    }
    OutputDir dir(out);
    dir.write(kGridFile, table_text);
    dir.write(kRunManifestFile,
              run_manifest("grid", seed,
                           {{"static_table", static_table},
                            {"contextual_dump", contextual_dump},
                            {"contextual_valid_dump", contextual_valid_dump},
                            {"contextual_eval_dump", contextual_eval_dump},
                            {"pairs", pairs},
                            {"valid_pairs", valid_pairs},
                            {"eval_records", eval_records}},
                           cell_names, hyper.to_json(), out)
                      .dump(2) +
                  "\n");
    dir.commit();
    out_stream << table_text;
    return kExitOk;
  }
};

}  // namespace

unsigned thread_budget() {
  if (const char* env = std::getenv("DIALEVAL_THREADS")) {
    try {
      const long value = std::stol(env);
      if (value >= 1) return static_cast<unsigned>(value);
    } catch (const std::exception&) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Referenced/unreferenced dialogue response evaluation", "dialeval"};
  app.require_subcommand(1);
  TrainCommand train_cmd;
  EvalCommand eval_cmd;
  GridCommand grid_cmd;
  CLI::App* train_app = app.add_subcommand("train", "Train an unreferenced relatedness model");
  CLI::App* eval_app = app.add_subcommand("eval", "Score rated records and correlate with humans");
  CLI::App* grid_app = app.add_subcommand("grid", "Train and evaluate all 12 grid cells");
  train_cmd.add_to(*train_app);
  eval_cmd.add_to(*eval_app);
  grid_cmd.add_to(*grid_app);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    if (*train_app) return train_cmd.run(out, err);
    if (*eval_app) return eval_cmd.run(out, err);
    return grid_cmd.run(out, err);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace dialeval::cli
