#pragma once

#include <functional>
#include <span>
#include <vector>

#include "tabemb/types.hpp"

namespace tabemb::ad {

using tabemb::Matrix;

class Tape;

// Handle to a matrix-valued node on a tape. Cheap to copy; the tape owns
// the storage.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Matrix& value() const;
  const Matrix& grad() const;
  bool valid() const { return tape != nullptr && id >= 0; }
};

// Reverse-mode tape over dense f64 matrices. Nodes are created by the free
// functions below; backward() seeds a 1x1 root with 1 and accumulates
// gradients into every node with requires_grad.
//
// MatmulMode::RowStable computes matrix products row by row so that each
// output row depends only on its own input row. Under that mode a row
// permutation of the inputs permutes every downstream value bitwise, which
// the single-graph inference path relies on. Training uses the default
// blocked GEMM.
class Tape {
 public:
  enum class MatmulMode { Fast, RowStable };

  explicit Tape(MatmulMode mode = MatmulMode::Fast) : mode_(mode) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Matrix value, bool requires_grad);
  Var constant(Matrix value) { return leaf(std::move(value), false); }

  void backward(Var root);

  MatmulMode matmul_mode() const { return mode_; }
  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;  // allocated only when requires_grad
    bool requires_grad = false;
    std::function<void(Tape&)> backprop;  // null for leaves
  };

  Var emplace(Matrix value, bool requires_grad, std::function<void(Tape&)> backprop);
  Node& node(int id) { return nodes_[static_cast<size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<size_t>(id)]; }

  MatmulMode mode_;
  std::vector<Node> nodes_;

  friend struct Var;
  friend struct detail_access;
};

// --- elementwise / linear algebra -----------------------------------------

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
Var scale(Var a, double s);
Var one_minus(Var a);                // 1 - x, elementwise
Var add_rowvec(Var m, Var row);      // broadcast a 1 x w row over every row of m

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return matmul(a, b); }

// --- nonlinearities --------------------------------------------------------

Var leaky_relu(Var a, double negative_slope);
Var elu(Var a);
Var sigmoid(Var a);
Var tanh(Var a);

// --- indexed / graph ops ---------------------------------------------------

// out.row(e) = a.row(rows[e])
Var gather_rows(Var a, std::vector<int> rows);
// out.row(rows[e]) += a.row(e), out has out_rows rows
Var scatter_sum_rows(Var a, std::vector<int> rows, int out_rows);
// Softmax of a column vector within each segment, in input order.
Var segment_softmax(Var col, std::vector<int> segment, int num_segments);
// out.row(e) = a.row(e) * col(e)
Var scale_rows(Var a, Var col);
// Mean over all rows -> 1 x w
Var mean_rows(Var a);
// Per-segment mean of rows -> num_segments x w; every segment must be
// non-empty.
Var segment_mean_rows(Var a, std::vector<int> segment, int num_segments);
Var hconcat(std::span<const Var> parts);
inline Var hconcat(Var a, Var b) {
  const Var parts[] = {a, b};
  return hconcat(parts);
}

// Sum over rows of -log softmax(logits.row(t))[golds[t]], stabilized via
// log-sum-exp. Returns a 1x1 node.
Var cross_entropy_sum(Var logits, std::vector<int> golds);

}  // namespace tabemb::ad
