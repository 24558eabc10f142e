#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tabemb/colgraph.hpp"
#include "tabemb/embed.hpp"
#include "tabemb/nn.hpp"
#include "tabemb/table.hpp"

namespace tabemb {

struct TrainConfig {
  Task task = Task::Cta;
  int epochs = 100;
  int batch_size = 256;
  double lr = 1e-3;
  double weight_decay = 5e-4;
  int m = 25;
  int num_layers = 2;   // S
  int heads = 4;        // K, GAT only
  int hidden = 256;     // h
  nn::GnnVariant variant = nn::GnnVariant::Gat;
  uint64_t seed = 0;
  std::optional<int> block_size;

  void validate() const;
  uint64_t config_hash(const std::string& backend_id, int dim) const;
};

struct EpochStat {
  int epoch = 0;  // 1-based
  double mean_loss = 0.0;
  std::optional<double> valid_micro_f1;
  uint64_t param_hash = 0;
};

struct TrainLog {
  std::vector<EpochStat> epochs;
  std::optional<int> best_epoch;  // 1-based; set when a validation pool was used
  int64_t optimizer_steps = 0;
};

struct TrainedModel {
  TrainConfig config;
  nn::GnnModel gnn;
  nn::TaskHead head;
  std::string backend_id;
  int embed_dim = 0;
  std::vector<std::string> labels;
  uint64_t label_fingerprint = 0;
};

struct TrainResult {
  TrainedModel model;
  TrainLog log;
};

// Runs the training loop over a precomputed graph pool: per epoch, the pool
// is reshuffled (reseeded from config.seed and the epoch index) and split
// into mini-batches; each batch takes one Adam step on the mean loss over
// all supervised targets in the batch. When a validation pool is given, the
// snapshot with the best validation micro-F1 is returned (ties keep the
// earlier epoch); otherwise the final epoch. Deterministic in sequential
// mode: identical inputs produce identical parameters. The embedding
// backend is never touched; the pool suffices.
TrainResult train(const LabelSpace& space, const TrainConfig& config, const GraphPool& pool,
                  const GraphPool* valid_pool = nullptr);

// Micro-F1 of argmax predictions over every supervised target in a pool.
double evaluate_pool_micro_f1(const TrainedModel& model, const GraphPool& pool);

struct PredictOptions {
  std::vector<std::pair<int, int>> cpa_pairs;  // required for CPA
  bool allow_backend_mismatch = false;
  bool want_logits = false;
};

struct Prediction {
  Task task = Task::Cta;
  std::vector<std::string> column_labels;          // CTA
  std::vector<std::string> pair_labels;            // CPA, aligned with cpa_pairs
  std::string table_label;                         // TTA
  std::vector<Vector> logits;                      // when want_logits
};

// Algorithm: embed columns, build the graph, refine, classify.
Prediction predict(const Table& table, const TrainedModel& model, EmbeddingBackend& backend,
                   EmbeddingCache* cache = nullptr, const PredictOptions& options = {});

// Versioned binary checkpoint; byte-exact round trip. Loading refuses
// version or label-fingerprint mismatches and truncated files.
void save_model(const TrainedModel& model, const std::filesystem::path& path);
TrainedModel load_model(const std::filesystem::path& path);

}  // namespace tabemb
