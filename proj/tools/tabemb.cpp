// tabemb command-line interface: synthetic data generation, embedding
// precompute, training, prediction and analysis reports.

#include "tabemb/eval.hpp"
#include "tabemb/pipeline.hpp"
#include "tabemb/synth.hpp"
#include "tabemb/util.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using namespace tabemb;
using json = nlohmann::ordered_json;

namespace {

struct BackendFlags {
  std::string kind = "local";
  int dim = 64;
  std::string base_url;
  std::string model;
  std::string cache_dir;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--backend", kind, "Embedding backend: local or remote")
        ->check(CLI::IsMember({"local", "remote"}));
    cmd->add_option("--dim", dim, "Embedding width (remote: expected width)");
    cmd->add_option("--base-url", base_url, "Remote embeddings service base URL");
    cmd->add_option("--embed-model", model, "Remote embedding model name");
    cmd->add_option("--cache-dir", cache_dir,
                    "Embedding cache directory (default: $TABEMB_CACHE_DIR or <pools>/cache)");
  }

  std::unique_ptr<EmbeddingBackend> make() const {
    const char* key = std::getenv("TABEMB_EMBED_API_KEY");
    return make_backend_from_flags(kind, dim, base_url, model, key ? key : "");
  }

  fs::path resolve_cache_dir(const fs::path& pools_dir) const {
    if (!cache_dir.empty()) return cache_dir;
    const char* env = std::getenv("TABEMB_CACHE_DIR");
    if (env && *env) return env;
    return pools_dir / "cache";
  }
};

struct TrainFlags {
  std::string task = "cta";
  TrainConfig config;
  std::string variant = "gat";
  int block_size = -1;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--task", task, "Task: cta, cpa or tta")
        ->check(CLI::IsMember({"cta", "cpa", "tta"}));
    cmd->add_option("--epochs", config.epochs, "Training epochs");
    cmd->add_option("--batch-size", config.batch_size, "Mini-batch size (graphs)");
    cmd->add_option("--lr", config.lr, "Adam learning rate");
    cmd->add_option("--weight-decay", config.weight_decay, "L2 weight decay");
    cmd->add_option("--m", config.m, "Sampled non-null cells per column");
    cmd->add_option("--depth", config.num_layers, "GNN layers (S)");
    cmd->add_option("--heads", config.heads, "GAT attention heads (K)");
    cmd->add_option("--hidden", config.hidden, "Hidden width (h)");
    cmd->add_option("--variant", variant, "GNN variant: none, gat, gcn or ggnn")
        ->check(CLI::IsMember({"none", "gat", "gcn", "ggnn"}));
    cmd->add_option("--seed", config.seed, "Global RNG seed");
    cmd->add_option("--block-size", block_size, "Column block size for wide tables (-1: off)");
  }

  TrainConfig resolve() const {
    TrainConfig out = config;
    out.task = task_from_string(task);
    out.variant = nn::gnn_variant_from_string(variant);
    if (block_size >= 0) out.block_size = block_size;
    out.validate();
    return out;
  }
};

std::optional<int> block_of(int flag) {
  return flag >= 0 ? std::optional<int>(flag) : std::nullopt;
}

int run_synth(const fs::path& out_dir, SynthConfig& config) {
  Dataset ds = generate_synthetic(config);
  save_dataset(ds, out_dir);
  std::cout << "wrote " << ds.train.size() << " train / " << ds.valid.size() << " valid / "
            << ds.test.size() << " test tables to " << out_dir.string() << "\n";
  return 0;
}

int run_embed(const fs::path& data_dir, const fs::path& pools_dir, const BackendFlags& backend_flags,
              int m, uint64_t seed, int block_size, int jobs) {
  Dataset ds = load_dataset(data_dir, Task::Cta);
  auto backend = backend_flags.make();
  EmbeddingCache cache(backend_flags.resolve_cache_dir(pools_dir), backend->id());
  fs::create_directories(pools_dir);

  int64_t calls_before = backend->calls();
  size_t cached_before = cache.size();
  for (const auto& [name, split] :
       std::initializer_list<std::pair<const char*, const std::vector<AnnotatedTable>*>>{
           {"train", &ds.train}, {"valid", &ds.valid}, {"test", &ds.test}}) {
    if (split->empty()) {
      std::cout << name << ": empty split, skipped\n";
      continue;
    }
    GraphPool pool = build_graph_pool(*split, ds.label_spaces, *backend, m, seed, &cache,
                                      block_of(block_size), jobs);
    fs::path path = pools_dir / pool_file_name(name, pool);
    save_pool(pool, path);
    std::cout << name << ": " << pool.size() << " graphs -> " << path.filename().string()
              << "\n";
  }
  int64_t computed = backend->calls() - calls_before;
  if (computed == 0)
    std::cout << "cache hit, 0 embeddings computed\n";
  else
    std::cout << "computed " << computed << " embeddings (" << cached_before
              << " were already cached)\n";
  return 0;
}

GraphPool load_pool_for(const fs::path& pools_dir, const std::string& split,
                        const std::string& backend_id, int dim, int m, uint64_t seed,
                        std::optional<int> block_size, bool required) {
  fs::path path = pools_dir / pool_file_name(split, backend_id, dim, m, seed, block_size);
  if (!fs::exists(path)) {
    if (required)
      throw ValidationError("missing graph pool " + path.string() +
                            " for this configuration; run `tabemb embed` first");
    return {};
  }
  return load_pool(path);
}

int run_train(const fs::path& data_dir, const fs::path& pools_dir, const TrainFlags& train_flags,
              const BackendFlags& backend_flags, const fs::path& out_path,
              const fs::path& log_path) {
  TrainConfig config = train_flags.resolve();
  Dataset ds = load_dataset(data_dir, config.task);
  auto backend = backend_flags.make();

  GraphPool pool = load_pool_for(pools_dir, "train", backend->id(), backend->dim(), config.m,
                                 config.seed, config.block_size, true);
  GraphPool valid = load_pool_for(pools_dir, "valid", backend->id(), backend->dim(), config.m,
                                  config.seed, config.block_size, false);
  if (config.variant == nn::GnnVariant::None)
    std::cout << "ablation mode: no message passing (variant none)\n";

  TrainResult result = train(*ds.space(config.task), config, pool, valid.empty() ? nullptr : &valid);
  save_model(result.model, out_path);

  std::ostringstream log;
  log << "# tabemb training log\n";
  log << "# task=" << to_string(config.task) << " variant=" << nn::to_string(config.variant)
      << " config=" << to_hex16(config.config_hash(backend->id(), backend->dim())) << "\n";
  if (config.variant == nn::GnnVariant::None) log << "# ablation: no message passing\n";
  log << "epoch,mean_loss,valid_micro_f1,param_hash\n";
  for (const auto& stat : result.log.epochs) {
    log << stat.epoch << "," << stat.mean_loss << ",";
    if (stat.valid_micro_f1.has_value()) log << *stat.valid_micro_f1;
    log << "," << to_hex16(stat.param_hash) << "\n";
  }
  if (result.log.best_epoch.has_value())
    log << "# selected epoch " << *result.log.best_epoch << " (best validation micro-F1)\n";
  else
    log << "# selected final epoch (no validation split)\n";
  write_text_file(log_path, log.str());

  std::cout << "checkpoint: " << out_path.string() << "\n";
  std::cout << "log: " << log_path.string() << "\n";
  if (result.log.best_epoch.has_value())
    std::cout << "selected epoch " << *result.log.best_epoch << " of " << config.epochs << "\n";
  return 0;
}

std::map<std::string, std::vector<std::pair<int, int>>> load_pairs_file(const fs::path& path) {
  std::map<std::string, std::vector<std::pair<int, int>>> out;
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open pairs file " + path.string());
  std::string line;
  int line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(line_number) + ": " + e.what());
    }
    auto& pairs = out[rec.at("table_id").get<std::string>()];
    for (const auto& p : rec.at("pairs"))
      pairs.emplace_back(p.at(0).get<int>(), p.at(1).get<int>());
  }
  return out;
}

int run_predict(const fs::path& model_path, const fs::path& input_path, const fs::path& out_path,
                const fs::path& pairs_path, const fs::path& logits_path,
                const BackendFlags& backend_flags, bool allow_mismatch) {
  TrainedModel model = load_model(model_path);
  auto backend = backend_flags.make();
  EmbeddingCache cache(backend_flags.resolve_cache_dir(out_path.parent_path()), backend->id());

  std::map<std::string, std::vector<std::pair<int, int>>> pairs_by_table;
  if (!pairs_path.empty()) pairs_by_table = load_pairs_file(pairs_path);

  auto tables = load_tables_jsonl(input_path);
  std::ostringstream out, logits_out;
  for (const auto& at : tables) {
    PredictOptions options;
    options.allow_backend_mismatch = allow_mismatch;
    options.want_logits = !logits_path.empty();
    if (model.config.task == Task::Cpa) {
      auto it = pairs_by_table.find(at.table.table_id);
      if (it != pairs_by_table.end()) {
        options.cpa_pairs = it->second;
      } else if (at.cpa_labels.has_value()) {
        for (const auto& [i, j, l] : *at.cpa_labels) options.cpa_pairs.emplace_back(i, j);
      } else {
        throw ValidationError("table '" + at.table.table_id +
                              "': CPA prediction needs --pairs or cpa entries in the input");
      }
    }
    Prediction pred = predict(at.table, model, *backend, &cache, options);
    json rec;
    rec["table_id"] = at.table.table_id;
    switch (pred.task) {
      case Task::Cta: rec["cta"] = pred.column_labels; break;
      case Task::Cpa: {
        json cpa = json::array();
        for (size_t p = 0; p < options.cpa_pairs.size(); ++p)
          cpa.push_back(json::array(
              {options.cpa_pairs[p].first, options.cpa_pairs[p].second, pred.pair_labels[p]}));
        rec["cpa"] = std::move(cpa);
        break;
      }
      case Task::Tta: rec["tta"] = pred.table_label; break;
    }
    out << rec.dump() << "\n";
    if (!logits_path.empty()) {
      json lrec;
      lrec["table_id"] = at.table.table_id;
      json rows = json::array();
      for (const auto& l : pred.logits)
        rows.push_back(std::vector<double>(l.data(), l.data() + l.size()));
      lrec["logits"] = std::move(rows);
      logits_out << lrec.dump() << "\n";
    }
  }
  write_text_file(out_path, out.str());
  if (!logits_path.empty()) write_text_file(logits_path, logits_out.str());
  std::cout << "predictions: " << out_path.string() << " (" << tables.size() << " tables)\n";
  return 0;
}

// A prediction record: table_id plus whichever label fields were emitted.
struct PredictionRecord {
  std::string table_id;
  std::vector<std::optional<std::string>> cta;
  std::map<std::pair<int, int>, std::string> cpa;
  std::optional<std::string> tta;
};

std::vector<PredictionRecord> load_prediction_records(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open predictions file " + path.string());
  std::vector<PredictionRecord> out;
  std::string line;
  int line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(line_number) + ": " + e.what());
    }
    PredictionRecord p;
    p.table_id = rec.at("table_id").get<std::string>();
    if (rec.contains("cta") && rec["cta"].is_array()) {
      for (const auto& l : rec["cta"])
        p.cta.push_back(l.is_null() ? std::nullopt
                                    : std::optional<std::string>(l.get<std::string>()));
    }
    if (rec.contains("cpa") && rec["cpa"].is_array()) {
      for (const auto& t : rec["cpa"])
        p.cpa[{t.at(0).get<int>(), t.at(1).get<int>()}] = t.at(2).get<std::string>();
    }
    if (rec.contains("tta") && rec["tta"].is_string()) p.tta = rec["tta"].get<std::string>();
    out.push_back(std::move(p));
  }
  return out;
}

int run_eval(const fs::path& pred_path, const fs::path& data_dir, const std::string& split,
             const std::string& task_name, const fs::path& out_dir, bool freq_strata) {
  Task task = task_from_string(task_name);
  Dataset ds = load_dataset(data_dir, task);
  const auto& gold_split = ds.split(split);
  std::map<std::string, const AnnotatedTable*> golds;
  for (const auto& at : gold_split) golds[at.table.table_id] = &at;

  std::vector<std::string> pred_labels, gold_labels;
  for (const auto& pred : load_prediction_records(pred_path)) {
    auto it = golds.find(pred.table_id);
    if (it == golds.end())
      throw ValidationError("prediction for unknown table '" + pred.table_id + "'");
    const AnnotatedTable& gold = *it->second;
    switch (task) {
      case Task::Cta: {
        if (!gold.cta_labels.has_value()) break;
        if (pred.cta.size() != gold.cta_labels->size())
          throw ValidationError("table '" + pred.table_id +
                                "': prediction column count differs from gold");
        for (size_t c = 0; c < gold.cta_labels->size(); ++c) {
          const auto& g = (*gold.cta_labels)[c];
          const auto& p = pred.cta[c];
          if (g.has_value() && p.has_value()) {
            gold_labels.push_back(*g);
            pred_labels.push_back(*p);
          }
        }
        break;
      }
      case Task::Cpa: {
        if (!gold.cpa_labels.has_value()) break;
        for (const auto& [i, j, l] : *gold.cpa_labels) {
          auto pit = pred.cpa.find({i, j});
          if (pit != pred.cpa.end()) {
            gold_labels.push_back(l);
            pred_labels.push_back(pit->second);
          }
        }
        break;
      }
      case Task::Tta:
        if (pred.tta.has_value() && gold.tta_label.has_value()) {
          gold_labels.push_back(*gold.tta_label);
          pred_labels.push_back(*pred.tta);
        }
        break;
    }
  }
  EvalReport report = evaluate(pred_labels, gold_labels);

  fs::create_directories(out_dir);
  std::ostringstream csv;
  csv.precision(6);
  csv << "metric,value\nmicro_f1," << report.micro_f1 << "\ntargets," << report.total
      << "\ncorrect," << report.correct << "\n";
  for (const auto& [label, f1] : report.per_class_f1)
    csv << "f1_" << label << "," << f1 << "\n";
  write_text_file(out_dir / "report.csv", csv.str());

  std::ostringstream md;
  md.precision(4);
  md << "| metric | value |\n|--------|-------|\n";
  md << "| micro-F1 | " << report.micro_f1 << " |\n";
  md << "| targets | " << report.total << " |\n";
  if (freq_strata) {
    std::map<std::string, int> train_freq;
    for (const auto& at : ds.train) {
      if (task == Task::Cta && at.cta_labels.has_value()) {
        for (const auto& l : *at.cta_labels)
          if (l.has_value()) ++train_freq[*l];
      } else if (task == Task::Cpa && at.cpa_labels.has_value()) {
        for (const auto& [i, j, l] : *at.cpa_labels) ++train_freq[l];
      } else if (task == Task::Tta && at.tta_label.has_value()) {
        ++train_freq[*at.tta_label];
      }
    }
    for (const auto& label : gold_labels)
      train_freq.emplace(label, 0);  // classes unseen in train still need a frequency
    auto strata = freq_stratified_f1(pred_labels, gold_labels, train_freq);
    const char* names[3] = {"high", "medium", "low"};
    for (int bin = 0; bin < 3; ++bin) {
      md << "| mean F1 (" << names[bin] << " freq) | ";
      if (strata.bin_mean_f1[static_cast<size_t>(bin)].has_value())
        md << *strata.bin_mean_f1[static_cast<size_t>(bin)];
      else
        md << "n/a";
      md << " |\n";
    }
    if (!strata.excluded.empty()) {
      md << "\nExcluded (no test support): ";
      for (size_t i = 0; i < strata.excluded.size(); ++i)
        md << (i ? ", " : "") << strata.excluded[i];
      md << "\n";
    }
  }
  write_text_file(out_dir / "report.md", md.str());
  std::cout << "micro-F1 " << report.micro_f1 << " over " << report.total << " targets\n";
  std::cout << "reports: " << (out_dir / "report.csv").string() << ", "
            << (out_dir / "report.md").string() << "\n";
  return 0;
}

int run_sweep(const fs::path& data_dir, const TrainFlags& train_flags,
              const BackendFlags& backend_flags, const std::string& axes_csv,
              const std::string& tasks_csv, const fs::path& out_dir, int jobs) {
  TrainConfig base = train_flags.resolve();
  Dataset ds = load_dataset(data_dir, base.task);
  auto backend = backend_flags.make();
  EmbeddingCache cache(backend_flags.resolve_cache_dir(out_dir), backend->id());

  SweepAxes axes;
  std::stringstream axes_stream(axes_csv);
  std::string axis;
  while (std::getline(axes_stream, axis, ',')) {
    if (axis == "variant")
      axes.variants = {nn::GnnVariant::None, nn::GnnVariant::Gat, nn::GnnVariant::Gcn,
                       nn::GnnVariant::Ggnn};
    else if (axis == "depth")
      axes.depths = {1, 2, 3, 4};
    else if (axis == "m")
      axes.ms = {5, 15, 25};
    else
      throw ValidationError("unknown sweep axis '" + axis + "' (expected variant, depth or m)");
  }
  axes.tasks.clear();
  std::stringstream tasks_stream(tasks_csv);
  std::string task_name;
  while (std::getline(tasks_stream, task_name, ','))
    axes.tasks.push_back(task_from_string(task_name));
  if (axes.tasks.empty()) throw ValidationError("sweep: no tasks selected");

  SweepReport report = run_ablation_sweep(ds, base, *backend, &cache, axes, jobs);
  fs::create_directories(out_dir);
  write_text_file(out_dir / "sweep.csv", report.to_csv());
  write_text_file(out_dir / "sweep.md", report.to_markdown());
  int failed = 0;
  for (const auto& cell : report.cells) failed += cell.failed ? 1 : 0;
  std::cout << report.cells.size() << " cells (" << failed << " failed) -> "
            << (out_dir / "sweep.csv").string() << "\n";
  return failed == 0 ? 0 : 1;
}

int run_heatmap(const fs::path& model_path, const fs::path& pools_dir, const std::string& split,
                const fs::path& out_path) {
  TrainedModel model = load_model(model_path);
  GraphPool pool = load_pool_for(pools_dir, split, model.backend_id, model.embed_dim,
                                 model.config.m, model.config.seed, model.config.block_size,
                                 true);
  HeatmapMatrix heatmap = attention_heatmap(model, pool);
  write_text_file(out_path, heatmap_to_csv(heatmap));
  std::cout << "heatmap over " << heatmap.classes.size() << " classes -> " << out_path.string()
            << "\n";
  return 0;
}

int run_export(const fs::path& model_path, const fs::path& pools_dir, const std::string& split,
               const fs::path& out_path) {
  TrainedModel model = load_model(model_path);
  GraphPool pool = load_pool_for(pools_dir, split, model.backend_id, model.embed_dim,
                                 model.config.m, model.config.seed, model.config.block_size,
                                 true);
  write_text_file(out_path, embeddings_tsv(model, pool));
  std::cout << "embeddings -> " << out_path.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tabemb: structure-aware column embeddings for table annotation"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Config file (TOML-like sections per command)");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic benchmark dataset");
  std::string synth_out;
  SynthConfig synth_config;
  synth->add_option("--out", synth_out, "Output dataset directory")->required();
  synth->add_option("--train", synth_config.train_tables, "Training tables");
  synth->add_option("--valid", synth_config.valid_tables, "Validation tables");
  synth->add_option("--test", synth_config.test_tables, "Test tables");
  synth->add_option("--cols-min", synth_config.min_columns, "Min columns per table");
  synth->add_option("--cols-max", synth_config.max_columns, "Max columns per table");
  synth->add_option("--rows-min", synth_config.min_rows, "Min rows per table");
  synth->add_option("--rows-max", synth_config.max_rows, "Max rows per table");
  synth->add_option("--types", synth_config.num_base_types, "Base type count (0 = all)");
  synth->add_option("--ambiguity", synth_config.ambiguity_rate,
                    "Fraction of columns resolvable only via a companion column");
  synth->add_option("--seed", synth_config.seed, "Generator seed");

  // embed
  auto* embed = app.add_subcommand("embed", "Precompute graph pools for a dataset");
  std::string embed_data, embed_pools;
  BackendFlags embed_backend;
  int embed_m = 25, embed_block = -1, embed_jobs = 1;
  uint64_t embed_seed = 0;
  embed->add_option("--data", embed_data, "Dataset directory")->required();
  embed->add_option("--pools", embed_pools, "Pool output directory (default: <data>/pools)");
  embed_backend.add_to(embed);
  embed->add_option("--m", embed_m, "Sampled non-null cells per column");
  embed->add_option("--seed", embed_seed, "Sampling seed");
  embed->add_option("--block-size", embed_block, "Column block size (-1: off)");
  embed->add_option("--jobs", embed_jobs, "Parallel workers");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a GNN and task head on pooled graphs");
  std::string train_data, train_pools, train_out = "model.ckpt", train_log = "train_log.csv";
  TrainFlags train_flags;
  BackendFlags train_backend;
  train_cmd->add_option("--data", train_data, "Dataset directory")->required();
  train_cmd->add_option("--pools", train_pools, "Pool directory (default: <data>/pools)");
  train_flags.add_to(train_cmd);
  train_backend.add_to(train_cmd);
  train_cmd->add_option("--out", train_out, "Checkpoint output path");
  train_cmd->add_option("--log", train_log, "Training log output path");

  // predict
  auto* predict_cmd = app.add_subcommand("predict", "Annotate tables with a trained model");
  std::string pred_model, pred_input, pred_out = "predictions.jsonl", pred_pairs, pred_logits;
  BackendFlags pred_backend;
  bool pred_allow_mismatch = false;
  predict_cmd->add_option("--model", pred_model, "Checkpoint path")->required();
  predict_cmd->add_option("--input", pred_input, "Input tables (.jsonl)")->required();
  predict_cmd->add_option("--out", pred_out, "Predictions output path");
  predict_cmd->add_option("--pairs", pred_pairs, "CPA pairs file (.jsonl)");
  predict_cmd->add_option("--logits-out", pred_logits, "Optional logits dump (.jsonl)");
  pred_backend.add_to(predict_cmd);
  predict_cmd->add_flag("--allow-backend-mismatch", pred_allow_mismatch,
                        "Proceed when the backend id differs from the checkpoint");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Score predictions against gold labels");
  std::string eval_pred, eval_data, eval_split = "test", eval_task = "cta",
              eval_out = "reports";
  bool eval_freq = false;
  eval_cmd->add_option("--pred", eval_pred, "Predictions (.jsonl)")->required();
  eval_cmd->add_option("--data", eval_data, "Dataset directory")->required();
  eval_cmd->add_option("--split", eval_split, "Gold split: train, valid or test");
  eval_cmd->add_option("--task", eval_task, "Task: cta, cpa or tta");
  eval_cmd->add_option("--out-dir", eval_out, "Report output directory");
  eval_cmd->add_flag("--freq-strata", eval_freq, "Add frequency-stratified per-class F1 bins");

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "Ablation/sensitivity sweep with reports");
  std::string sweep_data, sweep_axes = "variant", sweep_tasks = "cta,cpa,tta",
              sweep_out = "reports";
  TrainFlags sweep_flags;
  BackendFlags sweep_backend;
  int sweep_jobs = 1;
  sweep_cmd->add_option("--data", sweep_data, "Dataset directory")->required();
  sweep_cmd->add_option("--axes", sweep_axes, "Comma list of axes: variant, depth, m");
  sweep_cmd->add_option("--tasks", sweep_tasks, "Comma list of tasks");
  sweep_flags.add_to(sweep_cmd);
  sweep_backend.add_to(sweep_cmd);
  sweep_cmd->add_option("--out-dir", sweep_out, "Report output directory");
  sweep_cmd->add_option("--jobs", sweep_jobs, "Parallel workers");

  // heatmap
  auto* heatmap_cmd =
      app.add_subcommand("heatmap", "Class-class attention heatmap from a GAT checkpoint");
  std::string hm_model, hm_pools, hm_split = "train", hm_out = "heatmap.csv";
  heatmap_cmd->add_option("--model", hm_model, "GAT checkpoint")->required();
  heatmap_cmd->add_option("--pools", hm_pools, "Pool directory")->required();
  heatmap_cmd->add_option("--split", hm_split, "Pool split");
  heatmap_cmd->add_option("--out", hm_out, "CSV output path");

  // export
  auto* export_cmd =
      app.add_subcommand("export", "Export initial and refined embeddings as TSV");
  std::string ex_model, ex_pools, ex_split = "test", ex_out = "embeddings.tsv";
  export_cmd->add_option("--model", ex_model, "Checkpoint")->required();
  export_cmd->add_option("--pools", ex_pools, "Pool directory")->required();
  export_cmd->add_option("--split", ex_split, "Pool split");
  export_cmd->add_option("--out", ex_out, "TSV output path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*synth) return run_synth(synth_out, synth_config);
    if (*embed) {
      fs::path pools = embed_pools.empty() ? fs::path(embed_data) / "pools" : fs::path(embed_pools);
      return run_embed(embed_data, pools, embed_backend, embed_m, embed_seed, embed_block,
                       embed_jobs);
    }
    if (*train_cmd) {
      fs::path pools = train_pools.empty() ? fs::path(train_data) / "pools" : fs::path(train_pools);
      return run_train(train_data, pools, train_flags, train_backend, train_out, train_log);
    }
    if (*predict_cmd)
      return run_predict(pred_model, pred_input, pred_out, pred_pairs, pred_logits, pred_backend,
                         pred_allow_mismatch);
    if (*eval_cmd) return run_eval(eval_pred, eval_data, eval_split, eval_task, eval_out, eval_freq);
    if (*sweep_cmd) return run_sweep(sweep_data, sweep_flags, sweep_backend, sweep_axes,
                                     sweep_tasks, sweep_out, sweep_jobs);
    if (*heatmap_cmd) return run_heatmap(hm_model, hm_pools, hm_split, hm_out);
    if (*export_cmd) return run_export(ex_model, ex_pools, ex_split, ex_out);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
