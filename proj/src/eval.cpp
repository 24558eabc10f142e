#include "tabemb/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>
#include <sstream>

#include "tabemb/util.hpp"

namespace tabemb {

namespace {

struct Counts {
  int64_t tp = 0, fp = 0, fn = 0;
};

template <typename Label>
double micro_f1_impl(const std::vector<Label>& predictions, const std::vector<Label>& golds) {
  if (predictions.empty()) throw ValidationError("micro_f1: empty input");
  if (predictions.size() != golds.size())
    throw ValidationError("micro_f1: prediction/gold length mismatch");
  int64_t tp = 0, fp = 0, fn = 0;
  int64_t correct = 0;
  for (size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i] == golds[i]) {
      ++tp;
      ++correct;
    } else {
      ++fp;  // predicted class gains a false positive
      ++fn;  // gold class gains a false negative
    }
  }
  double f1 = (2.0 * static_cast<double>(tp)) /
              (2.0 * static_cast<double>(tp) + static_cast<double>(fp) + static_cast<double>(fn));
  // Single-label multiclass micro-F1 is accuracy; keep the cross-check hot.
  double accuracy = static_cast<double>(correct) / static_cast<double>(predictions.size());
  if (f1 != accuracy)
    throw std::logic_error("micro_f1 internal cross-check failed (f1 != accuracy)");
  return f1;
}

}  // namespace

double micro_f1(const std::vector<std::string>& predictions,
                const std::vector<std::string>& golds) {
  return micro_f1_impl(predictions, golds);
}

double micro_f1_ordinal(const std::vector<int>& predictions, const std::vector<int>& golds) {
  return micro_f1_impl(predictions, golds);
}

EvalReport evaluate(const std::vector<std::string>& predictions,
                    const std::vector<std::string>& golds) {
  EvalReport report;
  report.micro_f1 = micro_f1(predictions, golds);
  report.total = static_cast<int>(golds.size());
  std::map<std::string, Counts> counts;
  for (size_t i = 0; i < predictions.size(); ++i) {
    ++report.support[golds[i]];
    if (predictions[i] == golds[i]) {
      ++counts[golds[i]].tp;
      ++report.correct;
    } else {
      ++counts[predictions[i]].fp;
      ++counts[golds[i]].fn;
    }
  }
  for (const auto& [label, c] : counts) {
    double denom = 2.0 * static_cast<double>(c.tp) + static_cast<double>(c.fp) +
                   static_cast<double>(c.fn);
    report.per_class_f1[label] = denom == 0.0 ? 0.0 : 2.0 * static_cast<double>(c.tp) / denom;
  }
  return report;
}

FreqStratifiedReport freq_stratified_f1(const std::vector<std::string>& predictions,
                                        const std::vector<std::string>& golds,
                                        const std::map<std::string, int>& train_frequencies) {
  if (train_frequencies.size() < 3)
    throw ValidationError("freq_stratified_f1: need at least 3 classes");
  for (const auto& g : golds)
    if (!train_frequencies.count(g))
      throw ValidationError("freq_stratified_f1: gold class '" + g +
                            "' has no training frequency");

  EvalReport report = evaluate(predictions, golds);

  // Descending frequency, ties by label ordinal (map order is lexical, so
  // sort stably on frequency only).
  std::vector<std::pair<std::string, int>> classes(train_frequencies.begin(),
                                                   train_frequencies.end());
  std::stable_sort(classes.begin(), classes.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  FreqStratifiedReport out;
  size_t total = classes.size();
  size_t base = total / 3, extra = total % 3;
  size_t at = 0;
  for (int bin = 0; bin < 3; ++bin) {
    size_t size = base + (static_cast<size_t>(bin) < extra ? 1 : 0);
    double sum = 0.0;
    int counted = 0;
    for (size_t k = 0; k < size; ++k, ++at) {
      const std::string& label = classes[at].first;
      out.bin_classes[static_cast<size_t>(bin)].push_back(label);
      if (report.support.count(label)) {
        sum += report.per_class_f1.count(label) ? report.per_class_f1[label] : 0.0;
        ++counted;
      } else {
        out.excluded.push_back(label);
      }
    }
    if (counted > 0)
      out.bin_mean_f1[static_cast<size_t>(bin)] = sum / static_cast<double>(counted);
  }
  return out;
}

HeatmapMatrix attention_heatmap(const TrainedModel& model, const GraphPool& pool) {
  if (model.config.variant != nn::GnnVariant::Gat)
    throw ValidationError("attention_heatmap requires a GAT model");

  // Class set = CTA labels observed in the pool, in ordinal order.
  std::set<int> observed;
  for (const auto& entry : pool.entries)
    for (int l : entry.labels.cta)
      if (l >= 0) observed.insert(l);
  if (observed.empty()) throw ValidationError("attention_heatmap: pool carries no CTA labels");

  std::vector<int> ordinal_of_class(observed.begin(), observed.end());
  std::unordered_map<int, int> class_of_ordinal;
  for (size_t i = 0; i < ordinal_of_class.size(); ++i)
    class_of_ordinal[ordinal_of_class[i]] = static_cast<int>(i);
  int num_classes = static_cast<int>(ordinal_of_class.size());

  Matrix mass = Matrix::Zero(num_classes, num_classes);
  Eigen::MatrixXi events = Eigen::MatrixXi::Zero(num_classes, num_classes);
  Eigen::VectorXd occurrences = Eigen::VectorXd::Zero(num_classes);

  for (const auto& entry : pool.entries) {
    nn::AttentionCapture capture;
    nn::struct_embedding(model.gnn, entry.graph, &capture);
    if (capture.alpha.empty() || capture.alpha.front().empty())
      throw std::logic_error("attention_heatmap: no attention captured");
    const auto& heads = capture.alpha.front();  // first layer
    const auto& edges = entry.graph.topo.edges;
    Vector mean_alpha = Vector::Zero(static_cast<Eigen::Index>(edges.size()));
    for (const auto& head : heads) mean_alpha += head;
    mean_alpha /= static_cast<double>(heads.size());

    const auto& cta = entry.labels.cta;
    for (int node = 0; node < entry.graph.num_nodes(); ++node)
      if (node < static_cast<int>(cta.size()) && cta[static_cast<size_t>(node)] >= 0)
        occurrences[class_of_ordinal[cta[static_cast<size_t>(node)]]] += 1.0;
    for (size_t e = 0; e < edges.size(); ++e) {
      int dst_label = cta.empty() ? -1 : cta[static_cast<size_t>(edges[e].dst)];
      int src_label = cta.empty() ? -1 : cta[static_cast<size_t>(edges[e].src)];
      if (dst_label < 0 || src_label < 0) continue;
      int a = class_of_ordinal[dst_label];
      int b = class_of_ordinal[src_label];
      mass(a, b) += mean_alpha[static_cast<Eigen::Index>(e)];
      events(a, b) += 1;
    }
  }

  HeatmapMatrix heatmap;
  for (int ord : ordinal_of_class)
    heatmap.classes.push_back(model.labels[static_cast<size_t>(ord)]);
  heatmap.edge_events = events;
  heatmap.mean_mass = Matrix::Zero(num_classes, num_classes);
  // Mean attention mass per occurrence of the attending class; rows over
  // observed co-occurrences then sum to 1 on fully labeled pools.
  for (int a = 0; a < num_classes; ++a)
    for (int b = 0; b < num_classes; ++b)
      if (events(a, b) > 0) heatmap.mean_mass(a, b) = mass(a, b) / occurrences[a];
  return heatmap;
}

std::string heatmap_to_csv(const HeatmapMatrix& heatmap) {
  std::ostringstream out;
  out.precision(10);
  out << "class";
  for (const auto& c : heatmap.classes) out << "," << c;
  out << "\n";
  for (size_t a = 0; a < heatmap.classes.size(); ++a) {
    out << heatmap.classes[a];
    for (size_t b = 0; b < heatmap.classes.size(); ++b) {
      out << ",";
      if (heatmap.edge_events(static_cast<int>(a), static_cast<int>(b)) > 0)
        out << heatmap.mean_mass(static_cast<int>(a), static_cast<int>(b));
      // absent cells stay empty, distinguishing "never co-occurred" from 0
    }
    out << "\n";
  }
  return out.str();
}

namespace {

// Test-split micro-F1 of one trained model, predicted graph-by-graph from
// the pooled features.
double test_micro_f1(const TrainedModel& model, const GraphPool& test_pool) {
  std::vector<int> preds, golds;
  for (const auto& entry : test_pool.entries) {
    Matrix psi = nn::struct_embedding(model.gnn, entry.graph);
    switch (model.config.task) {
      case Task::Cta:
        for (size_t i = 0; i < entry.labels.cta.size(); ++i) {
          if (entry.labels.cta[i] < 0) continue;
          preds.push_back(nn::argmax_logits(
              nn::head_logits_column(model.head, psi, static_cast<int>(i))));
          golds.push_back(entry.labels.cta[i]);
        }
        break;
      case Task::Cpa:
        for (const auto& [i, j, l] : entry.labels.cpa) {
          preds.push_back(nn::argmax_logits(nn::head_logits_pair(model.head, psi, i, j)));
          golds.push_back(l);
        }
        break;
      case Task::Tta:
        if (entry.labels.tta >= 0) {
          preds.push_back(nn::argmax_logits(nn::head_logits_table(model.head, psi)));
          golds.push_back(entry.labels.tta);
        }
        break;
    }
  }
  if (golds.empty()) throw ValidationError("sweep: test pool has no supervised targets");
  return micro_f1_ordinal(preds, golds);
}

struct SweepSetting {
  std::string axis;
  std::string value;
  TrainConfig config;  // base with the axis applied
};

}  // namespace

std::string SweepReport::to_csv() const {
  std::ostringstream out;
  out.precision(6);
  out << "axis,setting,task,seed,micro_f1,train_seconds,status,error\n";
  for (const auto& c : cells) {
    out << c.axis << "," << c.setting << "," << to_string(c.task) << "," << c.seed << ",";
    if (c.failed)
      out << ",";
    else
      out << c.micro_f1 << ",";
    out << c.train_seconds << "," << (c.failed ? "failed" : "ok") << "," << c.error << "\n";
  }
  return out.str();
}

std::string SweepReport::to_markdown() const {
  std::ostringstream out;
  out.precision(4);
  out << "| axis | setting | task | seed | micro-F1 | train (s) |\n";
  out << "|------|---------|------|------|----------|-----------|\n";
  for (const auto& c : cells) {
    out << "| " << c.axis << " | " << c.setting << " | " << to_string(c.task) << " | " << c.seed
        << " | ";
    if (c.failed)
      out << "failed: " << c.error;
    else
      out << c.micro_f1;
    out << " | " << c.train_seconds << " |\n";
  }
  return out.str();
}

SweepReport run_ablation_sweep(const Dataset& dataset, const TrainConfig& base,
                               EmbeddingBackend& backend, EmbeddingCache* cache,
                               const SweepAxes& axes, int jobs) {
  std::vector<SweepSetting> settings;
  for (auto variant : axes.variants) {
    TrainConfig c = base;
    c.variant = variant;
    settings.push_back({"variant", nn::to_string(variant), c});
  }
  for (int depth : axes.depths) {
    TrainConfig c = base;
    c.num_layers = depth;
    settings.push_back({"depth", std::to_string(depth), c});
  }
  for (int m : axes.ms) {
    TrainConfig c = base;
    c.m = m;
    settings.push_back({"m", std::to_string(m), c});
  }

  // Pools depend on m only (given one backend/seed); build each once.
  std::set<int> unique_ms;
  for (const auto& s : settings) unique_ms.insert(s.config.m);
  std::map<int, std::array<GraphPool, 3>> pools_by_m;
  for (int m : unique_ms) {
    pools_by_m[m] = {build_graph_pool(dataset.train, dataset.label_spaces, backend, m, base.seed,
                                      cache, base.block_size, jobs),
                     dataset.valid.empty()
                         ? GraphPool{}
                         : build_graph_pool(dataset.valid, dataset.label_spaces, backend, m,
                                            base.seed, cache, base.block_size, jobs),
                     dataset.test.empty()
                         ? GraphPool{}
                         : build_graph_pool(dataset.test, dataset.label_spaces, backend, m,
                                            base.seed, cache, base.block_size, jobs)};
  }

  SweepReport report;
  std::vector<std::pair<size_t, Task>> grid;
  for (size_t s = 0; s < settings.size(); ++s)
    for (Task task : axes.tasks) grid.emplace_back(s, task);
  report.cells.resize(grid.size());

  parallel_for(grid.size(), jobs, [&](size_t idx) {
    auto [s, task] = grid[idx];
    const SweepSetting& setting = settings[s];
    SweepCell& cell = report.cells[idx];
    cell.axis = setting.axis;
    cell.setting = setting.value;
    cell.task = task;
    cell.seed = setting.config.seed;
    auto started = std::chrono::steady_clock::now();
    try {
      const auto& space = dataset.space(task);
      if (!space.has_value()) throw ValidationError("label space missing for " + to_string(task));
      TrainConfig config = setting.config;
      config.task = task;
      const auto& pools = pools_by_m.at(config.m);
      const GraphPool* valid = pools[1].empty() ? nullptr : &pools[1];
      TrainResult trained = train(*space, config, pools[0], valid);
      const GraphPool& eval_pool = pools[2].empty() ? pools[0] : pools[2];
      cell.micro_f1 = test_micro_f1(trained.model, eval_pool);
    } catch (const std::exception& e) {
      cell.failed = true;
      cell.error = e.what();
    }
    cell.train_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  });
  return report;
}

std::string embeddings_tsv(const TrainedModel& model, const GraphPool& pool) {
  std::ostringstream out;
  out.precision(8);
  out << "table_id\tcolumn\tcta_label\tstage\tvector\n";
  auto write_vector = [&](const Eigen::Ref<const Eigen::RowVectorXd>& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      if (i > 0) out << " ";
      out << v[i];
    }
  };
  for (const auto& entry : pool.entries) {
    Matrix psi = nn::struct_embedding(model.gnn, entry.graph);
    for (int node = 0; node < entry.graph.num_nodes(); ++node) {
      std::string label = "";
      if (node < static_cast<int>(entry.labels.cta.size()) &&
          entry.labels.cta[static_cast<size_t>(node)] >= 0)
        label = model.labels[static_cast<size_t>(entry.labels.cta[static_cast<size_t>(node)])];
      out << entry.graph.table_id << "\t" << node << "\t" << label << "\tinitial\t";
      write_vector(entry.graph.features.row(node));
      out << "\n";
      out << entry.graph.table_id << "\t" << node << "\t" << label << "\trefined\t";
      write_vector(psi.row(node));
      out << "\n";
    }
  }
  return out.str();
}

}  // namespace tabemb
