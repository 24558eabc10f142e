#include "tabemb/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <numeric>
#include <sstream>

#include "tabemb/rng.hpp"
#include "tabemb/util.hpp"

namespace tabemb {

void TrainConfig::validate() const {
  if (epochs < 1 || batch_size < 1 || m < 1 || num_layers < 1 || hidden < 1)
    throw ValidationError("train config: counts must be >= 1");
  if (variant == nn::GnnVariant::Gat && (heads < 1 || hidden % heads != 0))
    throw ValidationError("train config: hidden must be divisible by heads for GAT");
  if (block_size.has_value() && *block_size < 2)
    throw ValidationError("train config: block size must be >= 2");
  if (lr <= 0.0) throw ValidationError("train config: learning rate must be positive");
  if (weight_decay < 0.0) throw ValidationError("train config: weight decay must be >= 0");
}

uint64_t TrainConfig::config_hash(const std::string& backend_id, int dim) const {
  std::ostringstream canon;
  canon << "task=" << to_string(task) << ";epochs=" << epochs << ";batch=" << batch_size
        << ";lr=" << lr << ";wd=" << weight_decay << ";m=" << m << ";S=" << num_layers
        << ";K=" << heads << ";h=" << hidden << ";variant=" << nn::to_string(variant)
        << ";seed=" << seed << ";block=" << (block_size.has_value() ? *block_size : -1)
        << ";backend=" << backend_id << ";d=" << dim;
  return fnv1a64(canon.str());
}

namespace {

// Disjoint union of a batch of graphs: one feature matrix, offset edge
// list, node -> graph map. Lets a whole mini-batch run as a single forward.
struct BatchedGraphs {
  Matrix features;
  GraphTopology topo;
  std::vector<int> node_graph;
  std::vector<int> offsets;
  int num_graphs = 0;
};

BatchedGraphs assemble_batch(const GraphPool& pool, std::span<const size_t> indices) {
  BatchedGraphs batch;
  batch.num_graphs = static_cast<int>(indices.size());
  int total_nodes = 0;
  size_t total_edges = 0;
  for (size_t idx : indices) {
    total_nodes += pool.entries[idx].graph.num_nodes();
    total_edges += pool.entries[idx].graph.topo.edges.size();
  }
  int d = pool.entries[indices.front()].graph.dim();
  batch.features.resize(total_nodes, d);
  batch.topo.num_nodes = total_nodes;
  batch.topo.edges.reserve(total_edges);
  batch.node_graph.resize(static_cast<size_t>(total_nodes));
  int at = 0;
  for (size_t g = 0; g < indices.size(); ++g) {
    const ColumnGraph& graph = pool.entries[indices[g]].graph;
    batch.offsets.push_back(at);
    batch.features.middleRows(at, graph.num_nodes()) = graph.features;
    for (const Edge& e : graph.topo.edges)
      batch.topo.edges.push_back({e.src + at, e.dst + at});
    for (int i = 0; i < graph.num_nodes(); ++i)
      batch.node_graph[static_cast<size_t>(at + i)] = static_cast<int>(g);
    at += graph.num_nodes();
  }
  return batch;
}

struct BatchTargets {
  std::vector<int> rows_lhs;  // CTA rows / CPA subject rows / TTA graph ids
  std::vector<int> rows_rhs;  // CPA object rows
  std::vector<int> golds;
};

BatchTargets collect_targets(const GraphPool& pool, std::span<const size_t> indices,
                             const std::vector<int>& offsets, Task task) {
  BatchTargets t;
  for (size_t g = 0; g < indices.size(); ++g) {
    const PoolLabels& labels = pool.entries[indices[g]].labels;
    int off = offsets[g];
    switch (task) {
      case Task::Cta:
        for (size_t i = 0; i < labels.cta.size(); ++i)
          if (labels.cta[i] >= 0) {
            t.rows_lhs.push_back(off + static_cast<int>(i));
            t.golds.push_back(labels.cta[i]);
          }
        break;
      case Task::Cpa:
        for (const auto& [i, j, l] : labels.cpa) {
          t.rows_lhs.push_back(off + i);
          t.rows_rhs.push_back(off + j);
          t.golds.push_back(l);
        }
        break;
      case Task::Tta:
        if (labels.tta >= 0) {
          t.rows_lhs.push_back(static_cast<int>(g));
          t.golds.push_back(labels.tta);
        }
        break;
    }
  }
  return t;
}

// Logits for every supervised target in the batch (forward only when tape
// has no grad leaves).
nn::Var batch_logits_node(ad::Tape& tape, const nn::ParamBinding& bind,
                          const nn::GnnModel& gnn, const nn::TaskHead& head,
                          const BatchedGraphs& batch, const BatchTargets& targets) {
  nn::Var psi = nn::struct_embedding_node(tape, bind, gnn, batch.topo, batch.features);
  nn::Var inputs{};
  switch (head.task) {
    case Task::Cta:
      inputs = ad::gather_rows(psi, targets.rows_lhs);
      break;
    case Task::Cpa:
      inputs = ad::hconcat(ad::gather_rows(psi, targets.rows_lhs),
                           ad::gather_rows(psi, targets.rows_rhs));
      break;
    case Task::Tta: {
      nn::Var pooled = ad::segment_mean_rows(psi, batch.node_graph, batch.num_graphs);
      inputs = ad::gather_rows(pooled, targets.rows_lhs);
      break;
    }
  }
  return ad::add_rowvec(ad::matmul(inputs, bind(head.weight)), bind(head.bias));
}

void validate_pool_for_task(const GraphPool& pool, const LabelSpace& space, Task task) {
  uint64_t fp = pool.label_fingerprints[static_cast<size_t>(task)];
  if (fp != 0 && fp != space.fingerprint())
    throw ValidationError("pool was built against a different " + to_string(task) +
                          " label space");
  int num_labels = space.size();
  bool any = false;
  for (const auto& entry : pool.entries) {
    for (int l : entry.labels.cta)
      if (task == Task::Cta && l >= num_labels)
        throw ValidationError("pool CTA label ordinal out of range");
    for (const auto& [i, j, l] : entry.labels.cpa)
      if (task == Task::Cpa && l >= num_labels)
        throw ValidationError("pool CPA label ordinal out of range");
    if (task == Task::Tta && entry.labels.tta >= num_labels)
      throw ValidationError("pool TTA label ordinal out of range");
    any = any || entry.labels.has_any(task);
  }
  if (!any)
    throw ValidationError("pool has no supervised " + to_string(task) + " targets");
}

double pool_micro_f1(const nn::GnnModel& gnn, const nn::TaskHead& head, const GraphPool& pool,
                     int batch_size) {
  auto& gnn_mut = const_cast<nn::GnnModel&>(gnn);
  auto& head_mut = const_cast<nn::TaskHead&>(head);
  nn::ParamList params = nn::parameters(gnn_mut, head_mut);
  int correct = 0, total = 0;
  std::vector<size_t> order(pool.size());
  std::iota(order.begin(), order.end(), size_t{0});
  for (size_t begin = 0; begin < order.size(); begin += static_cast<size_t>(batch_size)) {
    size_t end = std::min(order.size(), begin + static_cast<size_t>(batch_size));
    std::span<const size_t> indices(order.data() + begin, end - begin);
    BatchedGraphs batch = assemble_batch(pool, indices);
    BatchTargets targets = collect_targets(pool, indices, batch.offsets, head.task);
    if (targets.golds.empty()) continue;
    ad::Tape tape;
    nn::ParamBinding bind = nn::bind_parameters(tape, params);
    Matrix logits = batch_logits_node(tape, bind, gnn, head, batch, targets).value();
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
      int pred = nn::argmax_logits(logits.row(r).transpose());
      correct += (pred == targets.golds[static_cast<size_t>(r)]) ? 1 : 0;
      ++total;
    }
  }
  // Single-label multiclass micro-F1 equals accuracy.
  return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace

TrainResult train(const LabelSpace& space, const TrainConfig& config, const GraphPool& pool,
                  const GraphPool* valid_pool) {
  config.validate();
  if (config.task != space.task)
    throw ValidationError("train: label space task does not match config task");
  if (pool.empty()) throw ValidationError("train: empty graph pool");
  validate_pool_for_task(pool, space, config.task);
  if (valid_pool && !valid_pool->empty()) validate_pool_for_task(*valid_pool, space, config.task);

  int dim = pool.entries.front().graph.dim();
  Rng init_rng = Rng::keyed(config.seed, "init");
  nn::GnnModel gnn = nn::make_gnn_model(config.variant, dim, config.hidden, config.num_layers,
                                        config.heads, init_rng);
  nn::TaskHead head = nn::make_task_head(config.task, config.hidden, space.size(), init_rng);
  nn::ParamList params = nn::parameters(gnn, head);

  nn::AdamState adam;
  adam.config.lr = config.lr;
  adam.config.weight_decay = config.weight_decay;

  TrainResult result;
  bool use_valid = valid_pool != nullptr && !valid_pool->empty();
  double best_valid = -1.0;
  nn::GnnModel best_gnn;
  nn::TaskHead best_head;

  std::vector<size_t> order(pool.size());
  std::iota(order.begin(), order.end(), size_t{0});

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    Rng shuffle_rng = Rng::keyed(config.seed, "shuffle", static_cast<uint64_t>(epoch));
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    int64_t target_count = 0;
    for (size_t begin = 0; begin < order.size(); begin += static_cast<size_t>(config.batch_size)) {
      size_t end = std::min(order.size(), begin + static_cast<size_t>(config.batch_size));
      std::span<const size_t> indices(order.data() + begin, end - begin);
      BatchedGraphs batch = assemble_batch(pool, indices);
      BatchTargets targets = collect_targets(pool, indices, batch.offsets, config.task);
      if (targets.golds.empty()) continue;

      ad::Tape tape;
      nn::ParamBinding bind = nn::bind_parameters(tape, params);
      nn::Var logits = batch_logits_node(tape, bind, gnn, head, batch, targets);
      double inv = 1.0 / static_cast<double>(targets.golds.size());
      nn::Var loss = ad::scale(ad::cross_entropy_sum(logits, targets.golds), inv);

      double loss_value = loss.value()(0, 0);
      if (!std::isfinite(loss_value)) {
        std::ostringstream msg;
        msg << "non-finite loss at epoch " << epoch << ", batch "
            << (begin / static_cast<size_t>(config.batch_size) + 1);
        throw std::runtime_error(msg.str());
      }
      loss_sum += loss_value * static_cast<double>(targets.golds.size());
      target_count += static_cast<int64_t>(targets.golds.size());

      tape.backward(loss);
      std::vector<Matrix> grads = bind.gradients();
      nn::adam_step(adam, params, grads);
      ++result.log.optimizer_steps;
    }

    EpochStat stat;
    stat.epoch = epoch;
    stat.mean_loss = target_count > 0 ? loss_sum / static_cast<double>(target_count) : 0.0;
    stat.param_hash = nn::param_hash(gnn, head);
    if (use_valid) {
      stat.valid_micro_f1 = pool_micro_f1(gnn, head, *valid_pool, config.batch_size);
      if (*stat.valid_micro_f1 > best_valid) {
        best_valid = *stat.valid_micro_f1;
        best_gnn = gnn;
        best_head = head;
        result.log.best_epoch = epoch;
      }
    }
    result.log.epochs.push_back(std::move(stat));
  }

  result.model.config = config;
  result.model.gnn = use_valid ? std::move(best_gnn) : std::move(gnn);
  result.model.head = use_valid ? std::move(best_head) : std::move(head);
  result.model.backend_id = pool.backend_id;
  result.model.embed_dim = dim;
  result.model.labels = space.labels;
  result.model.label_fingerprint = space.fingerprint();
  if (!use_valid) result.log.best_epoch = std::nullopt;
  return result;
}

double evaluate_pool_micro_f1(const TrainedModel& model, const GraphPool& pool) {
  return pool_micro_f1(model.gnn, model.head, pool, model.config.batch_size);
}

Prediction predict(const Table& table, const TrainedModel& model, EmbeddingBackend& backend,
                   EmbeddingCache* cache, const PredictOptions& options) {
  if (!model.backend_id.empty() && backend.id() != model.backend_id) {
    if (!options.allow_backend_mismatch)
      throw ValidationError("backend '" + backend.id() + "' does not match the checkpoint's '" +
                            model.backend_id + "' (pass allow_backend_mismatch to override)");
    std::cerr << "warning: predicting with backend '" << backend.id()
              << "' but the model was trained with '" << model.backend_id << "'\n";
  }
  auto psi0 = column_embeddings(table, backend, model.config.m, model.config.seed, cache);
  ColumnGraph graph = construct_graph(table, psi0, model.config.block_size);
  Matrix psi = nn::struct_embedding(model.gnn, graph);

  auto label_of = [&](int ordinal) { return model.labels[static_cast<size_t>(ordinal)]; };
  Prediction out;
  out.task = model.config.task;
  switch (model.config.task) {
    case Task::Cta:
      for (int i = 0; i < graph.num_nodes(); ++i) {
        Vector logits = nn::head_logits_column(model.head, psi, i);
        out.column_labels.push_back(label_of(nn::argmax_logits(logits)));
        if (options.want_logits) out.logits.push_back(std::move(logits));
      }
      break;
    case Task::Cpa: {
      if (options.cpa_pairs.empty())
        throw ValidationError("CPA prediction requires the ordered pairs to label");
      for (auto [i, j] : options.cpa_pairs) {
        if (i < 0 || i >= graph.num_nodes() || j < 0 || j >= graph.num_nodes() || i == j)
          throw ValidationError("CPA pair (" + std::to_string(i) + ", " + std::to_string(j) +
                                ") out of range for table '" + table.table_id + "'");
        Vector logits = nn::head_logits_pair(model.head, psi, i, j);
        out.pair_labels.push_back(label_of(nn::argmax_logits(logits)));
        if (options.want_logits) out.logits.push_back(std::move(logits));
      }
      break;
    }
    case Task::Tta: {
      Vector logits = nn::head_logits_table(model.head, psi);
      out.table_label = label_of(nn::argmax_logits(logits));
      if (options.want_logits) out.logits.push_back(std::move(logits));
      break;
    }
  }
  return out;
}

namespace {
constexpr uint64_t kCheckpointMagic = 0x54414245'4d42434bull;  // "TABEMBCK"
constexpr uint32_t kCheckpointVersion = 1;
}  // namespace

void save_model(const TrainedModel& model, const std::filesystem::path& path) {
  auto& m = const_cast<TrainedModel&>(model);
  BinaryWriter w(path);
  w.u64(kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.u64(model.config.config_hash(model.backend_id, model.embed_dim));
  w.u8(static_cast<uint8_t>(model.config.task));
  w.u8(static_cast<uint8_t>(model.config.variant));
  w.u32(static_cast<uint32_t>(model.config.epochs));
  w.u32(static_cast<uint32_t>(model.config.batch_size));
  w.f64(model.config.lr);
  w.f64(model.config.weight_decay);
  w.u32(static_cast<uint32_t>(model.config.m));
  w.u32(static_cast<uint32_t>(model.config.num_layers));
  w.u32(static_cast<uint32_t>(model.config.heads));
  w.u32(static_cast<uint32_t>(model.config.hidden));
  w.u64(model.config.seed);
  w.i32(model.config.block_size.has_value() ? *model.config.block_size : -1);
  w.str(model.backend_id);
  w.u32(static_cast<uint32_t>(model.embed_dim));
  w.u64(model.label_fingerprint);
  w.u32(static_cast<uint32_t>(model.labels.size()));
  for (const auto& label : model.labels) w.str(label);

  nn::ParamList params = nn::parameters(m.gnn, m.head);
  w.u32(static_cast<uint32_t>(params.size()));
  for (const auto& [name, mat] : params) {
    w.str(name);
    w.u32(static_cast<uint32_t>(mat->rows()));
    w.u32(static_cast<uint32_t>(mat->cols()));
    w.f64_array({mat->data(), static_cast<size_t>(mat->size())});
  }
  w.close();
}

TrainedModel load_model(const std::filesystem::path& path) {
  BinaryReader r(path);
  if (r.u64() != kCheckpointMagic) throw ParseError("not a checkpoint file: " + path.string());
  uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw ParseError("unsupported checkpoint version " + std::to_string(version) + " in " +
                     path.string());
  TrainedModel model;
  uint64_t stored_hash = r.u64();
  model.config.task = static_cast<Task>(r.u8());
  model.config.variant = static_cast<nn::GnnVariant>(r.u8());
  model.config.epochs = static_cast<int>(r.u32());
  model.config.batch_size = static_cast<int>(r.u32());
  model.config.lr = r.f64();
  model.config.weight_decay = r.f64();
  model.config.m = static_cast<int>(r.u32());
  model.config.num_layers = static_cast<int>(r.u32());
  model.config.heads = static_cast<int>(r.u32());
  model.config.hidden = static_cast<int>(r.u32());
  model.config.seed = r.u64();
  int32_t bs = r.i32();
  if (bs >= 0) model.config.block_size = bs;
  model.backend_id = r.str();
  model.embed_dim = static_cast<int>(r.u32());
  model.label_fingerprint = r.u64();
  uint32_t num_labels = r.u32();
  model.labels.resize(num_labels);
  for (auto& label : model.labels) label = r.str();

  if (model.config.config_hash(model.backend_id, model.embed_dim) != stored_hash)
    throw ParseError("checkpoint config hash mismatch in " + path.string());
  LabelSpace space = make_label_space(model.config.task, model.labels);
  if (space.fingerprint() != model.label_fingerprint)
    throw ParseError("checkpoint label fingerprint mismatch in " + path.string());

  // Rebuild parameter storage with the right shapes, then overwrite.
  Rng dummy(0);
  model.gnn = nn::make_gnn_model(model.config.variant, model.embed_dim, model.config.hidden,
                                 model.config.num_layers, model.config.heads, dummy);
  model.head = nn::make_task_head(model.config.task, model.config.hidden,
                                  static_cast<int>(num_labels), dummy);
  nn::ParamList params = nn::parameters(model.gnn, model.head);
  uint32_t count = r.u32();
  if (count != params.size())
    throw ParseError("checkpoint parameter count mismatch in " + path.string());
  for (auto& [name, mat] : params) {
    std::string stored_name = r.str();
    if (stored_name != name)
      throw ParseError("checkpoint parameter order mismatch at '" + stored_name + "' in " +
                       path.string());
    uint32_t rows = r.u32(), cols = r.u32();
    if (static_cast<int>(rows) != mat->rows() || static_cast<int>(cols) != mat->cols())
      throw ParseError("checkpoint parameter shape mismatch at '" + name + "' in " +
                       path.string());
    r.f64_array({mat->data(), static_cast<size_t>(mat->size())});
  }
  return model;
}

}  // namespace tabemb
