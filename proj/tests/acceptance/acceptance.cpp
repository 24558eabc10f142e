// Acceptance suite: runs every release criterion end to end and prints one
// pass/fail line per criterion. Exits nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dense_oracle.hpp"
#include "tabemb/eval.hpp"
#include "tabemb/pipeline.hpp"
#include "tabemb/synth.hpp"
#include "tabemb/util.hpp"
#include "test_support.hpp"

using namespace tabemb;
using namespace tabemb::testing;

namespace {

struct CriterionResult {
  bool pass = false;
  std::string detail;
};

struct Check {
  bool ok = true;
  std::ostringstream detail;

  void require(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      if (detail.tellp() > 0) detail << "; ";
      detail << what;
    }
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Shared desk-scale benchmark: ambiguity 0.5, 320 train / 80 valid / 100
// test tables, fixed seed, 64-wide local embedder.
struct Benchmark {
  Dataset dataset;
  LocalHashEmbedder backend{64};
  GraphPool train_pool;
  GraphPool valid_pool;
  GraphPool test_pool;
  static constexpr uint64_t kSeed = 42;

  Benchmark() {
    SynthConfig config;
    config.train_tables = 320;
    config.valid_tables = 80;
    config.test_tables = 100;
    config.ambiguity_rate = 0.5;
    config.seed = kSeed;
    dataset = generate_synthetic(config);
    train_pool = build_graph_pool(dataset.train, dataset.label_spaces, backend, 25, kSeed);
    valid_pool = build_graph_pool(dataset.valid, dataset.label_spaces, backend, 25, kSeed);
    test_pool = build_graph_pool(dataset.test, dataset.label_spaces, backend, 25, kSeed);
  }

  TrainConfig default_config(nn::GnnVariant variant) const {
    TrainConfig config;  // paper defaults: 100 epochs, B=256, lr 1e-3, wd 5e-4, S=2, K=4, h=256
    config.task = Task::Cta;
    config.variant = variant;
    config.seed = kSeed;
    return config;
  }
};

PoolLabels labels_for(Task task, int n, int num_labels, Rng& rng) {
  switch (task) {
    case Task::Cta: return random_cta_labels(n, num_labels, rng);
    case Task::Cpa: return random_cpa_labels(n, num_labels, rng);
    case Task::Tta: return tta_label(static_cast<int>(rng.below(num_labels)));
  }
  return {};
}

// --- 1. gradient correctness ------------------------------------------------

CriterionResult criterion_gradients() {
  auto t0 = std::chrono::steady_clock::now();
  Check check;
  Rng rng(1);
  double worst = 0.0;
  for (auto variant : {nn::GnnVariant::Gat, nn::GnnVariant::Gcn, nn::GnnVariant::Ggnn}) {
    for (Task task : {Task::Cta, Task::Cpa, Task::Tta}) {
      ColumnGraph graph = make_complete_graph(5, 32, rng);
      nn::GnnModel model = nn::make_gnn_model(variant, 32, 16, 2,
                                              variant == nn::GnnVariant::Gat ? 4 : 0, rng);
      nn::TaskHead head = nn::make_task_head(task, 16, 6, rng);
      PoolLabels labels = labels_for(task, 5, 6, rng);
      auto report = nn::grad_check(model, head, graph, labels, 1e-4);
      worst = std::max(worst, report.max_rel_error);
      check.require(report.max_rel_error <= 1e-4,
                    nn::to_string(variant) + "+" + to_string(task) + " rel err " +
                        std::to_string(report.max_rel_error) + " at " + report.worst_param);
    }
  }
  double elapsed = seconds_since(t0);
  check.require(elapsed < 60.0, "runtime " + std::to_string(elapsed) + "s >= 60s");
  if (check.ok) {
    std::ostringstream d;
    d << "9 variant+head combos, max rel err " << worst << ", " << elapsed << "s";
    return {true, d.str()};
  }
  return {false, check.detail.str()};
}

// --- 2. attention normalization ----------------------------------------------

CriterionResult criterion_attention_normalization() {
  Check check;
  Rng rng(2);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    int n = 1 + static_cast<int>(rng.below(10));
    ColumnGraph graph = make_random_graph(n, 12, rng);
    nn::GnnModel model = nn::make_gnn_model(nn::GnnVariant::Gat, 12, 16, 2, 4, rng);
    nn::AttentionCapture capture;
    nn::struct_embedding(model, graph, &capture);
    for (const auto& layer : capture.alpha) {
      for (const auto& head : layer) {
        std::vector<double> sums(static_cast<size_t>(n), 0.0);
        for (size_t e = 0; e < graph.topo.edges.size(); ++e)
          sums[static_cast<size_t>(graph.topo.edges[e].dst)] +=
              head[static_cast<Eigen::Index>(e)];
        for (int node = 0; node < n; ++node) {
          double err = std::abs(sums[static_cast<size_t>(node)] - 1.0);
          worst = std::max(worst, err);
          check.require(err <= 1e-6, "node sum off by " + std::to_string(err));
        }
      }
    }
  }
  if (check.ok) {
    std::ostringstream d;
    d << "100 graphs, worst |sum-1| = " << worst;
    return {true, d.str()};
  }
  return {false, check.detail.str()};
}

// --- 3. permutation equivariance ----------------------------------------------

CriterionResult criterion_permutation_equivariance() {
  Check check;
  Rng rng(3);
  for (int trial = 0; trial < 50 && check.ok; ++trial) {
    int n = 2 + static_cast<int>(rng.below(7));
    ColumnGraph graph = make_random_graph(n, 16, rng);
    nn::GnnVariant variant = trial % 3 == 0   ? nn::GnnVariant::Gat
                             : trial % 3 == 1 ? nn::GnnVariant::Gcn
                                              : nn::GnnVariant::Ggnn;
    nn::GnnModel model =
        nn::make_gnn_model(variant, 16, 16, 2, variant == nn::GnnVariant::Gat ? 4 : 0, rng);
    nn::TaskHead head = nn::make_task_head(Task::Cta, 16, 5, rng);
    std::vector<int> perm = random_permutation(n, rng);
    ColumnGraph permuted = permute_graph(graph, perm);

    Matrix psi = nn::struct_embedding(model, graph);
    Matrix psi_perm = nn::struct_embedding(model, permuted);
    for (int i = 0; i < n; ++i) {
      bool bitwise =
          std::memcmp(Matrix(psi.row(i)).data(), Matrix(psi_perm.row(perm[static_cast<size_t>(i)])).data(),
                      sizeof(double) * static_cast<size_t>(psi.cols())) == 0;
      check.require(bitwise, "psi row mismatch at trial " + std::to_string(trial));
      int pred = nn::argmax_logits(nn::head_logits_column(head, psi, i));
      int pred_perm = nn::argmax_logits(
          nn::head_logits_column(head, psi_perm, perm[static_cast<size_t>(i)]));
      check.require(pred == pred_perm, "prediction mismatch at trial " + std::to_string(trial));
    }
  }
  return {check.ok, check.ok ? "50 graphs, bitwise psi and identical CTA argmax"
                             : check.detail.str()};
}

// --- 4. dense-oracle equivalence ----------------------------------------------

CriterionResult criterion_dense_oracle() {
  Check check;
  Rng rng(4);
  double worst = 0.0;
  for (int trial = 0; trial < 24; ++trial) {
    int n = 2 + static_cast<int>(rng.below(7));  // n <= 8
    ColumnGraph graph = make_random_graph(n, 10, rng);
    for (auto variant : {nn::GnnVariant::Gat, nn::GnnVariant::Gcn, nn::GnnVariant::Ggnn}) {
      nn::GnnModel model =
          nn::make_gnn_model(variant, 10, 12, 2, variant == nn::GnnVariant::Gat ? 3 : 0, rng);
      Matrix ours = nn::struct_embedding(model, graph);
      Matrix oracle = dense_struct_embedding(model, graph);
      double err = (ours - oracle).cwiseAbs().maxCoeff();
      worst = std::max(worst, err);
      check.require(err <= 1e-12,
                    nn::to_string(variant) + " deviates by " + std::to_string(err));
    }
  }
  if (check.ok) {
    std::ostringstream d;
    d << "24 graphs x 3 variants, worst |diff| = " << worst;
    return {true, d.str()};
  }
  return {false, check.detail.str()};
}

// --- 5 & 6. structure ablation + training sanity -------------------------------

struct AblationOutcome {
  std::map<nn::GnnVariant, double> test_f1;
  std::map<nn::GnnVariant, double> seconds;
  TrainResult gat;  // reused by criterion 6
};

AblationOutcome run_ablation(const Benchmark& bench) {
  AblationOutcome outcome;
  for (auto variant : {nn::GnnVariant::None, nn::GnnVariant::Gat, nn::GnnVariant::Gcn,
                       nn::GnnVariant::Ggnn}) {
    auto t0 = std::chrono::steady_clock::now();
    TrainResult result =
        train(*bench.dataset.space(Task::Cta), bench.default_config(variant), bench.train_pool);
    outcome.seconds[variant] = seconds_since(t0);
    outcome.test_f1[variant] = evaluate_pool_micro_f1(result.model, bench.test_pool);
    if (variant == nn::GnnVariant::Gat) outcome.gat = std::move(result);
  }
  return outcome;
}

CriterionResult criterion_structure_ablation(const AblationOutcome& outcome) {
  Check check;
  double none = outcome.test_f1.at(nn::GnnVariant::None);
  double gat = outcome.test_f1.at(nn::GnnVariant::Gat);
  double gcn = outcome.test_f1.at(nn::GnnVariant::Gcn);
  double ggnn = outcome.test_f1.at(nn::GnnVariant::Ggnn);
  check.require(gat >= none + 0.10, "GAT margin over no-GNN below 10 points");
  check.require(gcn >= none + 0.05, "GCN margin over no-GNN below 5 points");
  check.require(ggnn >= none + 0.05, "GGNN margin over no-GNN below 5 points");
  for (const auto& [variant, secs] : outcome.seconds)
    check.require(secs <= 600.0, nn::to_string(variant) + " exceeded 10 min");
  std::ostringstream d;
  d.precision(4);
  d << "CTA micro-F1 none " << none << ", gat " << gat << ", gcn " << gcn << ", ggnn " << ggnn;
  return {check.ok, check.ok ? d.str() : check.detail.str() + " (" + d.str() + ")"};
}

CriterionResult criterion_training_sanity(const Benchmark& bench,
                                          const AblationOutcome& outcome) {
  Check check;
  double train_f1 = evaluate_pool_micro_f1(outcome.gat.model, bench.train_pool);
  check.require(train_f1 >= 0.95,
                "train micro-F1 " + std::to_string(train_f1) + " below 0.95");

  // Instrumented run with a validation pool: the returned snapshot must be
  // the first epoch attaining the maximum validation micro-F1.
  TrainConfig config = bench.default_config(nn::GnnVariant::Gat);
  config.epochs = 25;
  TrainResult instrumented = train(*bench.dataset.space(Task::Cta), config, bench.train_pool,
                                   &bench.valid_pool);
  check.require(instrumented.log.best_epoch.has_value(), "no best epoch recorded");
  int expected = 1;
  double best = -1.0;
  for (const auto& stat : instrumented.log.epochs) {
    if (stat.valid_micro_f1.has_value() && *stat.valid_micro_f1 > best) {
      best = *stat.valid_micro_f1;
      expected = stat.epoch;
    }
  }
  check.require(instrumented.log.best_epoch == expected, "selection is not the argmax epoch");
  uint64_t returned = nn::param_hash(instrumented.model.gnn, instrumented.model.head);
  check.require(returned ==
                    instrumented.log.epochs[static_cast<size_t>(expected - 1)].param_hash,
                "returned parameters differ from the argmax epoch snapshot");
  std::ostringstream d;
  d.precision(4);
  d << "train micro-F1 " << train_f1 << " after 100 epochs; selection picked epoch " << expected
    << " (valid F1 " << best << ")";
  return {check.ok, check.ok ? d.str() : check.detail.str() + " (" + d.str() + ")"};
}

// --- 7. micro-F1 oracle ---------------------------------------------------------

CriterionResult criterion_micro_f1_oracle() {
  Check check;
  Rng rng(7);
  std::vector<int> preds, golds;
  int correct = 0;
  for (int i = 0; i < 1000; ++i) {
    int classes = 2 + static_cast<int>(rng.below(12));
    preds.push_back(static_cast<int>(rng.below(static_cast<uint64_t>(classes))));
    golds.push_back(static_cast<int>(rng.below(static_cast<uint64_t>(classes))));
    correct += preds.back() == golds.back() ? 1 : 0;
  }
  // Counting oracle over per-class tallies.
  std::map<int, std::array<int64_t, 3>> tally;
  for (size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] == golds[i]) {
      ++tally[golds[i]][0];
    } else {
      ++tally[preds[i]][1];
      ++tally[golds[i]][2];
    }
  }
  int64_t tp = 0, fp = 0, fn = 0;
  for (const auto& [cls, t] : tally) {
    tp += t[0];
    fp += t[1];
    fn += t[2];
  }
  double oracle = 2.0 * static_cast<double>(tp) /
                  (2.0 * static_cast<double>(tp) + static_cast<double>(fp) +
                   static_cast<double>(fn));
  double ours = micro_f1_ordinal(preds, golds);
  double accuracy = static_cast<double>(correct) / 1000.0;
  check.require(ours == oracle, "differs from the counting oracle");
  check.require(ours == accuracy, "differs from accuracy");
  std::ostringstream d;
  d << "1000 pairs, micro-F1 " << ours << " == oracle == accuracy (exact)";
  return {check.ok, check.ok ? d.str() : check.detail.str()};
}

// --- 8. end-to-end determinism ---------------------------------------------------

CriterionResult criterion_determinism() {
  auto run_once = [](const std::filesystem::path& dir) {
    SynthConfig sc;
    sc.train_tables = 60;
    sc.valid_tables = 0;
    sc.test_tables = 20;
    sc.ambiguity_rate = 0.5;
    sc.seed = 77;
    Dataset ds = generate_synthetic(sc);
    save_dataset(ds, dir / "data");
    Dataset loaded = load_dataset(dir / "data", Task::Cta);

    LocalHashEmbedder backend(64);
    EmbeddingCache cache(dir / "cache", backend.id());
    GraphPool pool =
        build_graph_pool(loaded.train, loaded.label_spaces, backend, 25, 77, &cache);
    save_pool(pool, dir / "pool_train.bin");

    TrainConfig config;
    config.task = Task::Cta;
    config.epochs = 10;
    config.hidden = 64;
    config.seed = 77;
    TrainResult result = train(*loaded.space(Task::Cta), config, pool);
    save_model(result.model, dir / "model.ckpt");

    std::ostringstream preds;
    for (const auto& at : loaded.test) {
      Prediction p = predict(at.table, result.model, backend, &cache);
      preds << at.table.table_id;
      for (const auto& label : p.column_labels) preds << "," << label;
      preds << "\n";
    }
    write_text_file(dir / "predictions.csv", preds.str());
  };

  TempDir a("accept_det_a"), b("accept_det_b");
  run_once(a.path());
  run_once(b.path());

  Check check;
  for (const char* file : {"model.ckpt", "predictions.csv", "pool_train.bin"}) {
    bool same = read_text_file(a.path() / file) == read_text_file(b.path() / file);
    check.require(same, std::string(file) + " differs between runs");
  }
  return {check.ok,
          check.ok ? "checkpoint, pool and prediction bytes identical across two runs"
                   : check.detail.str()};
}

// --- 9. sweep harness -------------------------------------------------------------

CriterionResult criterion_sweep(const Benchmark& bench) {
  Check check;
  TrainConfig base = bench.default_config(nn::GnnVariant::Gat);
  base.epochs = 30;  // the criterion asserts completion and finiteness only
  SweepAxes axes;
  axes.depths = {1, 2, 3, 4};
  axes.ms = {5, 15, 25};
  EmbeddingCache cache;
  SweepReport report = run_ablation_sweep(bench.dataset, base,
                                          const_cast<Benchmark&>(bench).backend, &cache, axes);
  size_t expected_cells = (4 + 3) * 3;  // settings x tasks
  check.require(report.cells.size() == expected_cells, "unexpected cell count");
  for (const auto& cell : report.cells) {
    check.require(!cell.failed, cell.axis + "=" + cell.setting + "/" + to_string(cell.task) +
                                    " failed: " + cell.error);
    if (!cell.failed)
      check.require(std::isfinite(cell.micro_f1),
                    cell.axis + "=" + cell.setting + " non-finite micro-F1");
  }
  if (check.ok) {
    double lo = 1.0, hi = 0.0;
    for (const auto& cell : report.cells) {
      lo = std::min(lo, cell.micro_f1);
      hi = std::max(hi, cell.micro_f1);
    }
    std::ostringstream d;
    d.precision(4);
    d << expected_cells << " cells finite, micro-F1 range [" << lo << ", " << hi << "]";
    return {true, d.str()};
  }
  return {false, check.detail.str()};
}

// --- 10. heatmap -------------------------------------------------------------------

CriterionResult criterion_heatmap() {
  Check check;
  Rng rng(10);
  TrainedModel model;
  model.config.task = Task::Cta;
  model.config.variant = nn::GnnVariant::Gat;
  model.config.hidden = 16;
  model.config.heads = 4;
  model.config.num_layers = 2;
  model.gnn = nn::make_gnn_model(nn::GnnVariant::Gat, 8, 16, 2, 4, rng);
  model.head = nn::make_task_head(Task::Cta, 16, 3, rng);
  model.labels = {"first", "second", "third"};
  model.embed_dim = 8;

  GraphPool pool;
  auto add_table = [&](int n, std::vector<int> cta) {
    PoolEntry entry;
    entry.graph = make_complete_graph(n, 8, rng);
    entry.labels.cta = std::move(cta);
    pool.entries.push_back(std::move(entry));
  };
  add_table(2, {0, 1});
  add_table(3, {0, 1, 1});
  add_table(2, {1, 2});

  // Hand aggregation from the dense oracle's first-layer attention.
  Matrix mass = Matrix::Zero(3, 3);
  Vector occurrences = Vector::Zero(3);
  for (const auto& entry : pool.entries) {
    Matrix h0 = entry.graph.features * model.gnn.proj_weight;
    h0.rowwise() += model.gnn.proj_bias.row(0);
    std::vector<Matrix> alpha;
    dense_gat_forward(model.gnn.gat[0], entry.graph.topo, h0, nn::Activation::Elu, &alpha);
    Matrix mean_alpha = Matrix::Zero(entry.graph.num_nodes(), entry.graph.num_nodes());
    for (const auto& head : alpha) mean_alpha += head;
    mean_alpha /= static_cast<double>(alpha.size());
    for (int node = 0; node < entry.graph.num_nodes(); ++node)
      occurrences[entry.labels.cta[static_cast<size_t>(node)]] += 1.0;
    for (int u = 0; u < entry.graph.num_nodes(); ++u)
      for (int v = 0; v < entry.graph.num_nodes(); ++v)
        mass(entry.labels.cta[static_cast<size_t>(u)],
             entry.labels.cta[static_cast<size_t>(v)]) += mean_alpha(u, v);
  }

  HeatmapMatrix heatmap = attention_heatmap(model, pool);
  double worst_cell = 0.0, worst_row = 0.0;
  for (int a = 0; a < 3; ++a) {
    double row_sum = 0.0;
    bool any = false;
    for (int b = 0; b < 3; ++b) {
      if (heatmap.edge_events(a, b) == 0) {
        check.require(mass(a, b) == 0.0, "library marked an observed cell absent");
        continue;
      }
      any = true;
      double expected = mass(a, b) / occurrences[a];
      worst_cell = std::max(worst_cell, std::abs(heatmap.mean_mass(a, b) - expected));
      row_sum += heatmap.mean_mass(a, b);
    }
    if (any) worst_row = std::max(worst_row, std::abs(row_sum - 1.0));
  }
  check.require(worst_cell <= 1e-6, "cell deviates from hand aggregation by " +
                                        std::to_string(worst_cell));
  check.require(worst_row <= 1e-6, "row sum off by " + std::to_string(worst_row));
  std::ostringstream d;
  d << "worst cell err " << worst_cell << ", worst row-sum err " << worst_row;
  return {check.ok, check.ok ? d.str() : check.detail.str()};
}

}  // namespace

int main() {
  auto started = std::chrono::steady_clock::now();
  std::printf("building shared synthetic benchmark (ambiguity 0.5, 320/80/100 tables)...\n");
  Benchmark bench;
  std::printf("training 4 variants at the default configuration...\n");
  AblationOutcome ablation = run_ablation(bench);

  struct Entry {
    int id;
    const char* name;
    std::function<CriterionResult()> run;
  };
  std::vector<Entry> criteria = {
      {1, "gradient correctness (autodiff vs central differences)", criterion_gradients},
      {2, "attention normalization", criterion_attention_normalization},
      {3, "permutation equivariance", criterion_permutation_equivariance},
      {4, "dense-oracle equivalence", criterion_dense_oracle},
      {5, "structure ablation margins", [&] { return criterion_structure_ablation(ablation); }},
      {6, "training sanity and checkpoint selection",
       [&] { return criterion_training_sanity(bench, ablation); }},
      {7, "micro-F1 counting oracle", criterion_micro_f1_oracle},
      {8, "end-to-end determinism", criterion_determinism},
      {9, "depth and m sweep harness", [&] { return criterion_sweep(bench); }},
      {10, "attention heatmap aggregation", criterion_heatmap},
  };

  int failures = 0;
  for (const auto& entry : criteria) {
    auto t0 = std::chrono::steady_clock::now();
    CriterionResult result;
    try {
      result = entry.run();
    } catch (const std::exception& e) {
      result = {false, std::string("exception: ") + e.what()};
    }
    failures += result.pass ? 0 : 1;
    std::printf("[%s] %2d. %s: %s (%.1fs)\n", result.pass ? "PASS" : "FAIL", entry.id,
                entry.name, result.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed in %.1fs\n", static_cast<int>(criteria.size()) - failures,
              criteria.size(), seconds_since(started));
  return failures == 0 ? 0 : 1;
}
