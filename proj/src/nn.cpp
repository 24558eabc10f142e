#include "tabemb/nn.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "tabemb/util.hpp"

namespace tabemb::nn {

namespace {
constexpr double kLeakySlope = 0.2;
}

std::string to_string(GnnVariant variant) {
  switch (variant) {
    case GnnVariant::None: return "none";
    case GnnVariant::Gat: return "gat";
    case GnnVariant::Gcn: return "gcn";
    case GnnVariant::Ggnn: return "ggnn";
  }
  throw std::logic_error("unknown variant");
}

GnnVariant gnn_variant_from_string(const std::string& name) {
  if (name == "none") return GnnVariant::None;
  if (name == "gat" || name == "GAT") return GnnVariant::Gat;
  if (name == "gcn" || name == "GCN") return GnnVariant::Gcn;
  if (name == "ggnn" || name == "GGNN") return GnnVariant::Ggnn;
  throw ValidationError("unknown GNN variant '" + name + "' (expected none, gat, gcn or ggnn)");
}

namespace {

Matrix xavier_uniform(int rows, int cols, Rng& rng) {
  double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix w(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) w(r, c) = rng.uniform(-limit, limit);
  return w;
}

}  // namespace

GnnModel make_gnn_model(GnnVariant variant, int input_dim, int hidden, int num_layers,
                        int heads, Rng& rng) {
  if (input_dim < 1 || hidden < 1) throw ValidationError("model widths must be >= 1");
  if (variant != GnnVariant::None && num_layers < 1)
    throw ValidationError("number of GNN layers must be >= 1");
  if (variant == GnnVariant::Gat) {
    if (heads < 1) throw ValidationError("GAT heads must be >= 1");
    if (hidden % heads != 0)
      throw ValidationError("hidden width " + std::to_string(hidden) +
                            " must be divisible by heads " + std::to_string(heads));
  }
  GnnModel model;
  model.variant = variant;
  model.input_dim = input_dim;
  model.hidden = hidden;
  model.num_layers = variant == GnnVariant::None ? 0 : num_layers;
  model.heads = variant == GnnVariant::Gat ? heads : 0;
  model.proj_weight = xavier_uniform(input_dim, hidden, rng);
  model.proj_bias = Matrix::Zero(1, hidden);
  for (int s = 0; s < model.num_layers; ++s) {
    switch (variant) {
      case GnnVariant::Gat: {
        GatLayer layer;
        int head_width = hidden / heads;
        for (int k = 0; k < heads; ++k) {
          layer.weight.push_back(xavier_uniform(hidden, head_width, rng));
          layer.attn_dst.push_back(xavier_uniform(head_width, 1, rng));
          layer.attn_src.push_back(xavier_uniform(head_width, 1, rng));
        }
        layer.bias = Matrix::Zero(1, hidden);
        model.gat.push_back(std::move(layer));
        break;
      }
      case GnnVariant::Gcn: {
        GcnLayer layer;
        layer.weight = xavier_uniform(hidden, hidden, rng);
        layer.bias = Matrix::Zero(1, hidden);
        model.gcn.push_back(std::move(layer));
        break;
      }
      case GnnVariant::Ggnn: {
        GgnnLayer layer;
        layer.msg_weight = xavier_uniform(hidden, hidden, rng);
        layer.msg_bias = Matrix::Zero(1, hidden);
        layer.update_w = xavier_uniform(hidden, hidden, rng);
        layer.update_u = xavier_uniform(hidden, hidden, rng);
        layer.update_b = Matrix::Zero(1, hidden);
        layer.reset_w = xavier_uniform(hidden, hidden, rng);
        layer.reset_u = xavier_uniform(hidden, hidden, rng);
        layer.reset_b = Matrix::Zero(1, hidden);
        layer.cand_w = xavier_uniform(hidden, hidden, rng);
        layer.cand_u = xavier_uniform(hidden, hidden, rng);
        layer.cand_b = Matrix::Zero(1, hidden);
        model.ggnn.push_back(std::move(layer));
        break;
      }
      case GnnVariant::None:
        break;
    }
  }
  return model;
}

int head_input_width(Task task, int hidden) {
  return task == Task::Cpa ? 2 * hidden : hidden;
}

TaskHead make_task_head(Task task, int hidden, int num_labels, Rng& rng) {
  if (num_labels < 1) throw ValidationError("task head needs at least one label");
  TaskHead head;
  head.task = task;
  head.weight = xavier_uniform(head_input_width(task, hidden), num_labels, rng);
  head.bias = Matrix::Zero(1, num_labels);
  return head;
}

ParamList parameters(GnnModel& model) {
  ParamList out;
  out.emplace_back("proj.weight", &model.proj_weight);
  out.emplace_back("proj.bias", &model.proj_bias);
  auto layer_name = [](int s, const std::string& rest) {
    return "layer" + std::to_string(s) + "." + rest;
  };
  for (int s = 0; s < model.num_layers; ++s) {
    switch (model.variant) {
      case GnnVariant::Gat: {
        auto& l = model.gat[static_cast<size_t>(s)];
        for (int k = 0; k < l.heads(); ++k) {
          std::string h = "head" + std::to_string(k) + ".";
          out.emplace_back(layer_name(s, h + "weight"), &l.weight[static_cast<size_t>(k)]);
          out.emplace_back(layer_name(s, h + "attn_dst"), &l.attn_dst[static_cast<size_t>(k)]);
          out.emplace_back(layer_name(s, h + "attn_src"), &l.attn_src[static_cast<size_t>(k)]);
        }
        out.emplace_back(layer_name(s, "bias"), &l.bias);
        break;
      }
      case GnnVariant::Gcn: {
        auto& l = model.gcn[static_cast<size_t>(s)];
        out.emplace_back(layer_name(s, "weight"), &l.weight);
        out.emplace_back(layer_name(s, "bias"), &l.bias);
        break;
      }
      case GnnVariant::Ggnn: {
        auto& l = model.ggnn[static_cast<size_t>(s)];
        out.emplace_back(layer_name(s, "msg_weight"), &l.msg_weight);
        out.emplace_back(layer_name(s, "msg_bias"), &l.msg_bias);
        out.emplace_back(layer_name(s, "update_w"), &l.update_w);
        out.emplace_back(layer_name(s, "update_u"), &l.update_u);
        out.emplace_back(layer_name(s, "update_b"), &l.update_b);
        out.emplace_back(layer_name(s, "reset_w"), &l.reset_w);
        out.emplace_back(layer_name(s, "reset_u"), &l.reset_u);
        out.emplace_back(layer_name(s, "reset_b"), &l.reset_b);
        out.emplace_back(layer_name(s, "cand_w"), &l.cand_w);
        out.emplace_back(layer_name(s, "cand_u"), &l.cand_u);
        out.emplace_back(layer_name(s, "cand_b"), &l.cand_b);
        break;
      }
      case GnnVariant::None:
        break;
    }
  }
  return out;
}

ParamList parameters(TaskHead& head) {
  ParamList out;
  out.emplace_back("task_head.weight", &head.weight);
  out.emplace_back("task_head.bias", &head.bias);
  return out;
}

ParamList parameters(GnnModel& model, TaskHead& head) {
  ParamList out = parameters(model);
  ParamList h = parameters(head);
  out.insert(out.end(), h.begin(), h.end());
  return out;
}

uint64_t param_hash(GnnModel& model, TaskHead& head) {
  uint64_t h = kFnvOffset;
  for (auto& [name, mat] : parameters(model, head)) {
    h = fnv1a64(name, h);
    h = fnv1a64_bytes(mat->data(), sizeof(double) * static_cast<size_t>(mat->size()), h);
  }
  return h;
}

Var ParamBinding::operator()(const Matrix& param) const {
  auto it = by_param_.find(&param);
  if (it == by_param_.end()) throw std::logic_error("parameter not bound on this tape");
  return it->second;
}

std::vector<Matrix> ParamBinding::gradients() const {
  std::vector<Matrix> out;
  out.reserve(ordered.size());
  for (const Var& v : ordered) out.push_back(v.grad());
  return out;
}

ParamBinding bind_parameters(ad::Tape& tape, const ParamList& params) {
  ParamBinding binding;
  binding.tape = &tape;
  for (const auto& [name, mat] : params) {
    Var v = tape.leaf(*mat, /*requires_grad=*/true);
    binding.ordered.push_back(v);
    binding.by_param_.emplace(mat, v);
  }
  return binding;
}

namespace {

Var apply_activation(Var x, Activation act) {
  return act == Activation::Elu ? ad::elu(x) : x;
}

std::pair<std::vector<int>, std::vector<int>> edge_endpoints(const GraphTopology& topo) {
  std::vector<int> src(topo.edges.size()), dst(topo.edges.size());
  for (size_t e = 0; e < topo.edges.size(); ++e) {
    src[e] = topo.edges[e].src;
    dst[e] = topo.edges[e].dst;
  }
  return {std::move(src), std::move(dst)};
}

void require_self_coverage(const GraphTopology& topo) {
  auto deg = topo.in_degrees();
  for (int i = 0; i < topo.num_nodes; ++i)
    if (deg[static_cast<size_t>(i)] == 0)
      throw std::runtime_error("graph node " + std::to_string(i) +
                               " has no in-edges (self-loop missing)");
}

}  // namespace

Var gat_layer_node(ad::Tape&, const ParamBinding& bind, const GatLayer& layer,
                   const GraphTopology& topo, Var H, Activation act,
                   std::vector<Vector>* attn_out) {
  require_self_coverage(topo);
  auto [src, dst] = edge_endpoints(topo);
  std::vector<Var> heads;
  heads.reserve(layer.weight.size());
  if (attn_out) attn_out->clear();
  for (size_t k = 0; k < layer.weight.size(); ++k) {
    Var hw = ad::matmul(H, bind(layer.weight[k]));                 // n x f
    Var score_dst = ad::matmul(hw, bind(layer.attn_dst[k]));       // n x 1
    Var score_src = ad::matmul(hw, bind(layer.attn_src[k]));       // n x 1
    Var logits = ad::leaky_relu(
        ad::add(ad::gather_rows(score_dst, dst), ad::gather_rows(score_src, src)), kLeakySlope);
    Var alpha = ad::segment_softmax(logits, dst, topo.num_nodes);  // per edge
    if (attn_out) attn_out->push_back(alpha.value().col(0));
    Var messages = ad::scale_rows(ad::gather_rows(hw, src), alpha);
    heads.push_back(ad::scatter_sum_rows(messages, dst, topo.num_nodes));
  }
  Var combined = heads.size() == 1 ? heads.front() : ad::hconcat(heads);
  return apply_activation(ad::add_rowvec(combined, bind(layer.bias)), act);
}

Var gcn_layer_node(ad::Tape& tape, const ParamBinding& bind, const GcnLayer& layer,
                   const GraphTopology& topo, Var H, Activation act) {
  require_self_coverage(topo);
  auto [src, dst] = edge_endpoints(topo);
  auto deg = topo.in_degrees();
  Matrix norm(static_cast<Eigen::Index>(topo.edges.size()), 1);
  for (size_t e = 0; e < topo.edges.size(); ++e)
    norm(static_cast<Eigen::Index>(e), 0) =
        1.0 / std::sqrt(static_cast<double>(deg[static_cast<size_t>(src[e])]) *
                        static_cast<double>(deg[static_cast<size_t>(dst[e])]));
  Var hw = ad::matmul(H, bind(layer.weight));
  Var messages = ad::scale_rows(ad::gather_rows(hw, src), tape.constant(std::move(norm)));
  Var agg = ad::scatter_sum_rows(messages, dst, topo.num_nodes);
  return apply_activation(ad::add_rowvec(agg, bind(layer.bias)), act);
}

Var ggnn_layer_node(ad::Tape& tape, const ParamBinding& bind, const GgnnLayer& layer,
                    const GraphTopology& topo, Var H, Activation act) {
  require_self_coverage(topo);
  auto [src, dst] = edge_endpoints(topo);
  auto deg = topo.in_degrees();
  Matrix inv_deg(topo.num_nodes, 1);
  for (int i = 0; i < topo.num_nodes; ++i)
    inv_deg(i, 0) = 1.0 / static_cast<double>(deg[static_cast<size_t>(i)]);
  Var hw = ad::matmul(H, bind(layer.msg_weight));
  Var summed = ad::scatter_sum_rows(ad::gather_rows(hw, src), dst, topo.num_nodes);
  Var msg = ad::add_rowvec(ad::scale_rows(summed, tape.constant(std::move(inv_deg))),
                           bind(layer.msg_bias));
  Var update = ad::sigmoid(ad::add_rowvec(
      ad::add(ad::matmul(msg, bind(layer.update_w)), ad::matmul(H, bind(layer.update_u))),
      bind(layer.update_b)));
  Var reset = ad::sigmoid(ad::add_rowvec(
      ad::add(ad::matmul(msg, bind(layer.reset_w)), ad::matmul(H, bind(layer.reset_u))),
      bind(layer.reset_b)));
  Var candidate = ad::tanh(ad::add_rowvec(
      ad::add(ad::matmul(msg, bind(layer.cand_w)),
              ad::matmul(ad::hadamard(reset, H), bind(layer.cand_u))),
      bind(layer.cand_b)));
  Var next = ad::add(ad::hadamard(ad::one_minus(update), H), ad::hadamard(update, candidate));
  return apply_activation(next, act);
}

Var struct_embedding_node(ad::Tape& tape, const ParamBinding& bind, const GnnModel& model,
                          const GraphTopology& topo, const Matrix& features,
                          AttentionCapture* capture) {
  if (features.cols() != model.input_dim)
    throw ValidationError("struct_embedding: features width " +
                          std::to_string(features.cols()) + " != model input dim " +
                          std::to_string(model.input_dim));
  Var H = ad::add_rowvec(ad::matmul(tape.constant(features), bind(model.proj_weight)),
                         bind(model.proj_bias));
  if (model.variant == GnnVariant::None) return H;
  if (capture) capture->alpha.assign(static_cast<size_t>(model.num_layers), {});
  for (int s = 0; s < model.num_layers; ++s) {
    Activation act = (s + 1 == model.num_layers) ? Activation::Identity : Activation::Elu;
    Var out{};
    switch (model.variant) {
      case GnnVariant::Gat:
        out = gat_layer_node(tape, bind, model.gat[static_cast<size_t>(s)], topo, H, act,
                             capture ? &capture->alpha[static_cast<size_t>(s)] : nullptr);
        break;
      case GnnVariant::Gcn:
        out = gcn_layer_node(tape, bind, model.gcn[static_cast<size_t>(s)], topo, H, act);
        break;
      case GnnVariant::Ggnn:
        out = ggnn_layer_node(tape, bind, model.ggnn[static_cast<size_t>(s)], topo, H, act);
        break;
      case GnnVariant::None:
        break;
    }
    H = ad::add(out, H);  // residual
  }
  return H;
}

namespace {

// Shared scaffolding for the plain (inference) wrappers: a throwaway
// row-stable tape with the needed parameters bound.
template <typename Fn>
Matrix run_inference(const ParamList& params, Fn&& fn) {
  ad::Tape tape(ad::Tape::MatmulMode::RowStable);
  ParamBinding bind = bind_parameters(tape, params);
  return fn(tape, bind);
}

}  // namespace

Matrix gat_layer_forward(const GatLayer& layer, const GraphTopology& topo, const Matrix& H,
                         Activation act, std::vector<Vector>* attn_out) {
  auto& l = const_cast<GatLayer&>(layer);
  ParamList params;
  for (size_t k = 0; k < l.weight.size(); ++k) {
    params.emplace_back("w", &l.weight[k]);
    params.emplace_back("ad", &l.attn_dst[k]);
    params.emplace_back("as", &l.attn_src[k]);
  }
  params.emplace_back("b", &l.bias);
  return run_inference(params, [&](ad::Tape& tape, const ParamBinding& bind) {
    return gat_layer_node(tape, bind, layer, topo, tape.constant(H), act, attn_out).value();
  });
}

Matrix gcn_layer_forward(const GcnLayer& layer, const GraphTopology& topo, const Matrix& H,
                         Activation act) {
  auto& l = const_cast<GcnLayer&>(layer);
  ParamList params{{"w", &l.weight}, {"b", &l.bias}};
  return run_inference(params, [&](ad::Tape& tape, const ParamBinding& bind) {
    return gcn_layer_node(tape, bind, layer, topo, tape.constant(H), act).value();
  });
}

Matrix ggnn_layer_forward(const GgnnLayer& layer, const GraphTopology& topo, const Matrix& H,
                          Activation act) {
  auto& l = const_cast<GgnnLayer&>(layer);
  ParamList params{{"mw", &l.msg_weight}, {"mb", &l.msg_bias},   {"uw", &l.update_w},
                   {"uu", &l.update_u},   {"ub", &l.update_b},   {"rw", &l.reset_w},
                   {"ru", &l.reset_u},    {"rb", &l.reset_b},    {"cw", &l.cand_w},
                   {"cu", &l.cand_u},     {"cb", &l.cand_b}};
  return run_inference(params, [&](ad::Tape& tape, const ParamBinding& bind) {
    return ggnn_layer_node(tape, bind, layer, topo, tape.constant(H), act).value();
  });
}

Matrix struct_embedding(const GnnModel& model, const ColumnGraph& graph,
                        AttentionCapture* capture) {
  auto& m = const_cast<GnnModel&>(model);
  return run_inference(parameters(m), [&](ad::Tape& tape, const ParamBinding& bind) {
    return struct_embedding_node(tape, bind, model, graph.topo, graph.features, capture)
        .value();
  });
}

Vector head_logits_column(const TaskHead& head, const Matrix& psi, int column) {
  if (head.task != Task::Cta && head.task != Task::Tta)
    throw ValidationError("per-column logits require a CTA-style head");
  if (column < 0 || column >= psi.rows()) throw ValidationError("column index out of range");
  return (psi.row(column) * head.weight + head.bias).transpose();
}

Vector head_logits_pair(const TaskHead& head, const Matrix& psi, int i, int j) {
  if (head.task != Task::Cpa) throw ValidationError("pair logits require a CPA head");
  if (i == j) throw ValidationError("CPA pair must have distinct columns");
  if (i < 0 || i >= psi.rows() || j < 0 || j >= psi.rows())
    throw ValidationError("CPA pair index out of range");
  Matrix x(1, 2 * psi.cols());
  x << psi.row(i), psi.row(j);
  return (x * head.weight + head.bias).transpose();
}

Vector head_logits_table(const TaskHead& head, const Matrix& psi) {
  if (head.task != Task::Tta) throw ValidationError("table logits require a TTA head");
  Matrix pooled = psi.colwise().mean();
  return (pooled * head.weight + head.bias).transpose();
}

int argmax_logits(const Vector& logits) {
  int best = 0;
  for (int i = 1; i < logits.size(); ++i)
    if (logits[i] > logits[best]) best = i;
  return best;
}

LossAndGrad cross_entropy(const Vector& logits, int gold) {
  if (gold < 0 || gold >= logits.size())
    throw ValidationError("cross_entropy: gold ordinal out of range");
  double mx = logits.maxCoeff();
  Eigen::ArrayXd shifted = logits.array() - mx;
  double lse = mx + std::log(shifted.exp().sum());
  LossAndGrad out;
  out.loss = lse - logits[gold];
  out.grad = (logits.array() - lse).exp().matrix();
  out.grad[gold] -= 1.0;
  return out;
}

void adam_step(AdamState& state, const ParamList& params, std::span<const Matrix> grads) {
  if (params.size() != grads.size())
    throw std::logic_error("adam_step: parameter/gradient count mismatch");
  if (state.m.empty()) {
    state.m.reserve(params.size());
    state.v.reserve(params.size());
    for (const auto& [name, mat] : params) {
      state.m.push_back(Matrix::Zero(mat->rows(), mat->cols()));
      state.v.push_back(Matrix::Zero(mat->rows(), mat->cols()));
    }
  }
  if (state.m.size() != params.size())
    throw std::logic_error("adam_step: state was initialized for a different parameter set");
  ++state.step;
  const auto& c = state.config;
  double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (size_t p = 0; p < params.size(); ++p) {
    Matrix& theta = *params[p].second;
    if (!grads[p].allFinite())
      throw std::runtime_error("non-finite gradient for parameter '" + params[p].first + "'");
    // L2 term coupled into the gradient, then standard bias-corrected Adam.
    Matrix g = grads[p] + c.weight_decay * theta;
    state.m[p] = c.beta1 * state.m[p] + (1.0 - c.beta1) * g;
    state.v[p] = c.beta2 * state.v[p] + (1.0 - c.beta2) * g.cwiseProduct(g);
    Matrix m_hat = state.m[p] / bc1;
    Matrix v_hat = state.v[p] / bc2;
    theta.array() -= c.lr * m_hat.array() / (v_hat.array().sqrt() + c.eps);
  }
}

Var supervised_loss_node(ad::Tape& tape, const ParamBinding& bind, const GnnModel& model,
                         const TaskHead& head, const GraphTopology& topo,
                         const Matrix& features, const PoolLabels& labels) {
  Var psi = struct_embedding_node(tape, bind, model, topo, features);
  Var head_w = bind(head.weight);
  Var head_b = bind(head.bias);
  std::vector<int> golds;
  Var inputs{};
  switch (head.task) {
    case Task::Cta: {
      std::vector<int> rows;
      for (size_t i = 0; i < labels.cta.size(); ++i) {
        if (labels.cta[i] < 0) continue;
        rows.push_back(static_cast<int>(i));
        golds.push_back(labels.cta[i]);
      }
      if (rows.empty()) throw ValidationError("no supervised CTA targets in graph");
      inputs = ad::gather_rows(psi, std::move(rows));
      break;
    }
    case Task::Cpa: {
      std::vector<int> lhs, rhs;
      for (const auto& [i, j, l] : labels.cpa) {
        lhs.push_back(i);
        rhs.push_back(j);
        golds.push_back(l);
      }
      if (golds.empty()) throw ValidationError("no supervised CPA targets in graph");
      inputs = ad::hconcat(ad::gather_rows(psi, std::move(lhs)),
                           ad::gather_rows(psi, std::move(rhs)));
      break;
    }
    case Task::Tta: {
      if (labels.tta < 0) throw ValidationError("no supervised TTA target in graph");
      golds.push_back(labels.tta);
      inputs = ad::mean_rows(psi);
      break;
    }
  }
  Var logits = ad::add_rowvec(ad::matmul(inputs, head_w), head_b);
  double inv = 1.0 / static_cast<double>(golds.size());
  return ad::scale(ad::cross_entropy_sum(logits, std::move(golds)), inv);
}

GradCheckReport grad_check(GnnModel& model, TaskHead& head, const ColumnGraph& graph,
                           const PoolLabels& labels, double fd_step) {
  ParamList params = parameters(model, head);

  auto loss_value = [&]() {
    ad::Tape tape;
    ParamBinding bind = bind_parameters(tape, params);
    return supervised_loss_node(tape, bind, model, head, graph.topo, graph.features, labels)
        .value()(0, 0);
  };

  std::vector<Matrix> analytic;
  {
    ad::Tape tape;
    ParamBinding bind = bind_parameters(tape, params);
    Var loss = supervised_loss_node(tape, bind, model, head, graph.topo, graph.features, labels);
    tape.backward(loss);
    analytic = bind.gradients();
  }

  GradCheckReport report;
  for (size_t p = 0; p < params.size(); ++p) {
    Matrix& theta = *params[p].second;
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      double saved = theta.data()[i];
      theta.data()[i] = saved + fd_step;
      double up = loss_value();
      theta.data()[i] = saved - fd_step;
      double down = loss_value();
      theta.data()[i] = saved;
      double fd = (up - down) / (2.0 * fd_step);
      double an = analytic[p].data()[i];
      double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-3});
      ++report.params_checked;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = params[p].first;
      }
    }
  }
  return report;
}

}  // namespace tabemb::nn
