#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "tabemb/autodiff.hpp"
#include "tabemb/colgraph.hpp"
#include "tabemb/rng.hpp"
#include "tabemb/types.hpp"

namespace tabemb::nn {

using ad::Var;

enum class GnnVariant { None, Gat, Gcn, Ggnn };

std::string to_string(GnnVariant variant);
GnnVariant gnn_variant_from_string(const std::string& name);

// One multi-head attention layer. Per head k: alpha_uv = softmax over
// in-neighbors v of LeakyReLU(attn_dst_k . (W_k h_u) + attn_src_k . (W_k h_v)),
// head output = sum_v alpha_uv W_k h_v; heads are concatenated and a shared
// bias row is added. Head width = layer width / heads.
struct GatLayer {
  std::vector<Matrix> weight;    // K of (w x w/K)
  std::vector<Matrix> attn_dst;  // K of (w/K x 1)
  std::vector<Matrix> attn_src;  // K of (w/K x 1)
  Matrix bias;                   // 1 x w

  int heads() const { return static_cast<int>(weight.size()); }
};

// Symmetric-normalized convolution: H' = D^-1/2 (A incl. self-loops) D^-1/2 H W + b.
struct GcnLayer {
  Matrix weight;  // w x w
  Matrix bias;    // 1 x w
};

// Gated update: m_u = mean over in-neighbors of (H W_msg) + b_msg, then a
// GRU step on (h_u, m_u). Update/reset gates are logistic, the candidate is
// tanh; an update gate of 0 copies the previous state.
struct GgnnLayer {
  Matrix msg_weight, msg_bias;
  Matrix update_w, update_u, update_b;
  Matrix reset_w, reset_u, reset_b;
  Matrix cand_w, cand_u, cand_b;
};

// Input projection d -> h followed by S message-passing layers, each added
// to its input (residual). ELU between layers, identity after the last.
// With variant None the projection output is returned directly and edges
// are ignored.
struct GnnModel {
  GnnVariant variant = GnnVariant::Gat;
  int input_dim = 0;
  int hidden = 0;
  int num_layers = 0;
  int heads = 0;  // GAT only

  Matrix proj_weight;  // d x h
  Matrix proj_bias;    // 1 x h
  std::vector<GatLayer> gat;
  std::vector<GcnLayer> gcn;
  std::vector<GgnnLayer> ggnn;
};

GnnModel make_gnn_model(GnnVariant variant, int input_dim, int hidden, int num_layers,
                        int heads, Rng& rng);

// Single linear projection from the embedding space to task logits.
// Input width is h for CTA/TTA and 2h for CPA (ordered concatenation).
struct TaskHead {
  Task task = Task::Cta;
  Matrix weight;  // in_width x |labels|
  Matrix bias;    // 1 x |labels|

  int in_width() const { return static_cast<int>(weight.rows()); }
  int num_labels() const { return static_cast<int>(weight.cols()); }
};

TaskHead make_task_head(Task task, int hidden, int num_labels, Rng& rng);
int head_input_width(Task task, int hidden);

// Canonical parameter enumeration; the single source of truth for init
// order, Adam state layout, checkpoints and tape binding.
using ParamList = std::vector<std::pair<std::string, Matrix*>>;
ParamList parameters(GnnModel& model);
ParamList parameters(TaskHead& head);
ParamList parameters(GnnModel& model, TaskHead& head);
uint64_t param_hash(GnnModel& model, TaskHead& head);

// Leaf Vars for every parameter on a tape, addressable by parameter
// identity so forward builders can stay oblivious to enumeration order.
struct ParamBinding {
  ad::Tape* tape = nullptr;
  std::vector<Var> ordered;  // aligned with the ParamList used to build it

  Var operator()(const Matrix& param) const;
  std::vector<Matrix> gradients() const;  // after backward()

 private:
  std::unordered_map<const Matrix*, Var> by_param_;
  friend ParamBinding bind_parameters(ad::Tape& tape, const ParamList& params);
};

ParamBinding bind_parameters(ad::Tape& tape, const ParamList& params);

// Attention weights extracted during a GAT forward: alpha[layer][head] is
// one coefficient per edge, aligned with the topology's edge list.
struct AttentionCapture {
  std::vector<std::vector<Vector>> alpha;
};

enum class Activation { Elu, Identity };

// Tape builders. H is the current node-feature Var (rows = nodes).
Var gat_layer_node(ad::Tape& tape, const ParamBinding& bind, const GatLayer& layer,
                   const GraphTopology& topo, Var H, Activation act,
                   std::vector<Vector>* attn_out = nullptr);
Var gcn_layer_node(ad::Tape& tape, const ParamBinding& bind, const GcnLayer& layer,
                   const GraphTopology& topo, Var H, Activation act);
Var ggnn_layer_node(ad::Tape& tape, const ParamBinding& bind, const GgnnLayer& layer,
                    const GraphTopology& topo, Var H, Activation act);

// Full structural embedding on a tape: projection, S residual layers.
Var struct_embedding_node(ad::Tape& tape, const ParamBinding& bind, const GnnModel& model,
                          const GraphTopology& topo, const Matrix& features,
                          AttentionCapture* capture = nullptr);

// Plain (inference) wrappers. These run on a row-stable tape so outputs are
// invariant, bitwise, under consistent node permutation.
Matrix gat_layer_forward(const GatLayer& layer, const GraphTopology& topo, const Matrix& H,
                         Activation act, std::vector<Vector>* attn_out = nullptr);
Matrix gcn_layer_forward(const GcnLayer& layer, const GraphTopology& topo, const Matrix& H,
                         Activation act);
Matrix ggnn_layer_forward(const GgnnLayer& layer, const GraphTopology& topo, const Matrix& H,
                          Activation act);
Matrix struct_embedding(const GnnModel& model, const ColumnGraph& graph,
                        AttentionCapture* capture = nullptr);

// Plain head evaluation on refined embeddings.
Vector head_logits_column(const TaskHead& head, const Matrix& psi, int column);
Vector head_logits_pair(const TaskHead& head, const Matrix& psi, int i, int j);
Vector head_logits_table(const TaskHead& head, const Matrix& psi);

// argmax with ties broken by lowest ordinal.
int argmax_logits(const Vector& logits);

// Stabilized softmax cross-entropy for one target.
struct LossAndGrad {
  double loss;
  Vector grad;  // d loss / d logits = softmax - onehot
};
LossAndGrad cross_entropy(const Vector& logits, int gold);

// Classic Adam with bias correction; weight decay is coupled into the
// gradient (g += wd * theta) before the moment updates.
struct AdamConfig {
  double lr = 1e-3;
  double weight_decay = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  int64_t step = 0;
  std::vector<Matrix> m;
  std::vector<Matrix> v;
};

void adam_step(AdamState& state, const ParamList& params, std::span<const Matrix> grads);

// Mean cross-entropy over this graph's supervised targets, built on a tape;
// shared by training and grad_check.
Var supervised_loss_node(ad::Tape& tape, const ParamBinding& bind, const GnnModel& model,
                         const TaskHead& head, const GraphTopology& topo,
                         const Matrix& features, const PoolLabels& labels);

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  size_t params_checked = 0;
};

// Compares reverse-mode gradients of the full loss against central finite
// differences for every parameter of model + head. Intended for desk-scale
// instances.
GradCheckReport grad_check(GnnModel& model, TaskHead& head, const ColumnGraph& graph,
                           const PoolLabels& labels, double fd_step = 1e-4);

}  // namespace tabemb::nn
