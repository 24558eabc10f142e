#pragma once

// Independent dense references for the message-passing layers. Everything
// here materializes full n x n masked matrices and never touches the
// edge-list code paths, so agreement with the library is a real check.

#include <cmath>
#include <limits>
#include <vector>

#include "tabemb/colgraph.hpp"
#include "tabemb/nn.hpp"
#include "tabemb/types.hpp"

namespace tabemb::testing {

inline Matrix adjacency_of(const GraphTopology& topo) {
  // A(u, v) = 1 iff the edge v -> u exists (v feeds u's aggregation).
  Matrix a = Matrix::Zero(topo.num_nodes, topo.num_nodes);
  for (const Edge& e : topo.edges) a(e.dst, e.src) = 1.0;
  return a;
}

inline Matrix dense_activation(const Matrix& x, nn::Activation act) {
  if (act == nn::Activation::Identity) return x;
  return x.unaryExpr([](double v) { return v > 0.0 ? v : std::expm1(v); });
}

inline Matrix dense_gat_forward(const nn::GatLayer& layer, const GraphTopology& topo,
                                const Matrix& h, nn::Activation act,
                                std::vector<Matrix>* alpha_out = nullptr) {
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  Matrix adjacency = adjacency_of(topo);
  int n = topo.num_nodes;
  Matrix out(n, static_cast<Eigen::Index>(layer.weight.size()) * layer.weight[0].cols());
  Eigen::Index at = 0;
  if (alpha_out) alpha_out->clear();
  for (size_t k = 0; k < layer.weight.size(); ++k) {
    Matrix hw = h * layer.weight[k];
    Vector dst_score = hw * layer.attn_dst[k];
    Vector src_score = hw * layer.attn_src[k];
    Matrix logits(n, n);
    for (int u = 0; u < n; ++u)
      for (int v = 0; v < n; ++v) {
        if (adjacency(u, v) == 0.0) {
          logits(u, v) = kNegInf;
          continue;
        }
        double raw = dst_score[u] + src_score[v];
        logits(u, v) = raw > 0.0 ? raw : 0.2 * raw;
      }
    Matrix alpha = Matrix::Zero(n, n);
    for (int u = 0; u < n; ++u) {
      double mx = logits.row(u).maxCoeff();
      double denom = 0.0;
      for (int v = 0; v < n; ++v)
        if (logits(u, v) != kNegInf) denom += std::exp(logits(u, v) - mx);
      for (int v = 0; v < n; ++v)
        if (logits(u, v) != kNegInf) alpha(u, v) = std::exp(logits(u, v) - mx) / denom;
    }
    if (alpha_out) alpha_out->push_back(alpha);  // alpha(u, v): v's weight in u's update
    out.middleCols(at, hw.cols()) = alpha * hw;
    at += hw.cols();
  }
  out.rowwise() += layer.bias.row(0);
  return dense_activation(out, act);
}

inline Matrix dense_gcn_forward(const nn::GcnLayer& layer, const GraphTopology& topo,
                                const Matrix& h, nn::Activation act) {
  Matrix adjacency = adjacency_of(topo);
  Vector degree = adjacency.rowwise().sum();
  Matrix norm = adjacency;
  for (int u = 0; u < topo.num_nodes; ++u)
    for (int v = 0; v < topo.num_nodes; ++v)
      if (adjacency(u, v) != 0.0) norm(u, v) = 1.0 / std::sqrt(degree[u] * degree[v]);
  Matrix out = norm * (h * layer.weight);
  out.rowwise() += layer.bias.row(0);
  return dense_activation(out, act);
}

inline Matrix dense_ggnn_forward(const nn::GgnnLayer& layer, const GraphTopology& topo,
                                 const Matrix& h, nn::Activation act) {
  Matrix adjacency = adjacency_of(topo);
  Vector degree = adjacency.rowwise().sum();
  Matrix mean_adj = adjacency;
  for (int u = 0; u < topo.num_nodes; ++u) mean_adj.row(u) /= degree[u];
  Matrix msg = mean_adj * (h * layer.msg_weight);
  msg.rowwise() += layer.msg_bias.row(0);
  auto logistic = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  Matrix update = ((msg * layer.update_w + h * layer.update_u).rowwise() + layer.update_b.row(0))
                      .unaryExpr(logistic);
  Matrix reset = ((msg * layer.reset_w + h * layer.reset_u).rowwise() + layer.reset_b.row(0))
                     .unaryExpr(logistic);
  Matrix candidate =
      ((msg * layer.cand_w + reset.cwiseProduct(h) * layer.cand_u).rowwise() +
       layer.cand_b.row(0))
          .array()
          .tanh();
  Matrix out = (1.0 - update.array()) * h.array() + update.array() * candidate.array();
  return dense_activation(out, act);
}

inline Matrix dense_struct_embedding(const nn::GnnModel& model, const ColumnGraph& graph) {
  Matrix h = graph.features * model.proj_weight;
  h.rowwise() += model.proj_bias.row(0);
  if (model.variant == nn::GnnVariant::None) return h;
  for (int s = 0; s < model.num_layers; ++s) {
    nn::Activation act =
        (s + 1 == model.num_layers) ? nn::Activation::Identity : nn::Activation::Elu;
    Matrix out;
    switch (model.variant) {
      case nn::GnnVariant::Gat:
        out = dense_gat_forward(model.gat[static_cast<size_t>(s)], graph.topo, h, act);
        break;
      case nn::GnnVariant::Gcn:
        out = dense_gcn_forward(model.gcn[static_cast<size_t>(s)], graph.topo, h, act);
        break;
      case nn::GnnVariant::Ggnn:
        out = dense_ggnn_forward(model.ggnn[static_cast<size_t>(s)], graph.topo, h, act);
        break;
      case nn::GnnVariant::None:
        break;
    }
    h = out + h;
  }
  return h;
}

}  // namespace tabemb::testing
