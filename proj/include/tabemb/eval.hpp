#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tabemb/pipeline.hpp"
#include "tabemb/types.hpp"

namespace tabemb {

struct EvalReport {
  double micro_f1 = 0.0;
  std::map<std::string, double> per_class_f1;   // classes with support or predictions
  std::map<std::string, int> support;           // gold count per class
  int total = 0;
  int correct = 0;
};

// Micro-averaged F1 = 2*TP / (2*TP + FP + FN) over globally pooled counts.
// For single-label multiclass input this equals accuracy, which the
// implementation asserts as a cross-check.
double micro_f1(const std::vector<std::string>& predictions,
                const std::vector<std::string>& golds);
double micro_f1_ordinal(const std::vector<int>& predictions, const std::vector<int>& golds);

EvalReport evaluate(const std::vector<std::string>& predictions,
                    const std::vector<std::string>& golds);

struct FreqStratifiedReport {
  // High / Medium / Low train-frequency bins; a bin mean is absent when no
  // class in the bin has test support.
  std::array<std::optional<double>, 3> bin_mean_f1;
  std::array<std::vector<std::string>, 3> bin_classes;
  std::vector<std::string> excluded;  // classes with no test support
};

// Sorts classes by descending train frequency (ties by label), splits them
// into three bins whose sizes differ by at most one, and reports the
// unweighted mean per-class F1 per bin.
FreqStratifiedReport freq_stratified_f1(const std::vector<std::string>& predictions,
                                        const std::vector<std::string>& golds,
                                        const std::map<std::string, int>& train_frequencies);

struct HeatmapMatrix {
  std::vector<std::string> classes;
  Matrix mean_mass;            // C x C; meaningful only where observed
  Eigen::MatrixXi edge_events; // number of contributing edges; 0 = absent cell
};

// Aggregates first-layer, head-averaged GAT attention into class-class
// cells: entry (a, b) is the mean attention mass sent from a column of gold
// class a to columns of gold class b, normalized by the number of class-a
// column occurrences. Rows restricted to observed co-occurrences sum to 1
// when every column in the pool is labeled.
HeatmapMatrix attention_heatmap(const TrainedModel& model, const GraphPool& pool);
std::string heatmap_to_csv(const HeatmapMatrix& heatmap);

struct SweepCell {
  std::string axis;      // "variant" | "depth" | "m"
  std::string setting;
  Task task = Task::Cta;
  uint64_t seed = 0;
  double micro_f1 = 0.0;
  double train_seconds = 0.0;
  bool failed = false;
  std::string error;
};

struct SweepReport {
  std::vector<SweepCell> cells;
  std::string to_csv() const;
  std::string to_markdown() const;
};

struct SweepAxes {
  std::vector<nn::GnnVariant> variants;  // "variant" axis
  std::vector<int> depths;               // "depth" axis (S)
  std::vector<int> ms;                   // "m" axis
  std::vector<Task> tasks = {Task::Cta, Task::Cpa, Task::Tta};
};

// Trains and evaluates one configuration per (axis setting, task). A failed
// cell is recorded and the sweep continues.
SweepReport run_ablation_sweep(const Dataset& dataset, const TrainConfig& base,
                               EmbeddingBackend& backend, EmbeddingCache* cache,
                               const SweepAxes& axes, int jobs = 1);

// psi0 / psi export for external plotting: one row per column with table
// id, column index, gold label when present, and both vectors.
std::string embeddings_tsv(const TrainedModel& model, const GraphPool& pool);

}  // namespace tabemb
