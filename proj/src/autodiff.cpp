#include "tabemb/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace tabemb::ad {

// Node internals are private to Tape; ops go through this accessor.
struct detail_access {
  static const Matrix& value(const Tape& t, int id) { return t.node(id).value; }
  static Matrix& grad(Tape& t, int id) { return t.nodes_[static_cast<size_t>(id)].grad; }
  static bool requires_grad(const Tape& t, int id) { return t.node(id).requires_grad; }
  static Var emplace(Tape& t, Matrix v, bool rg) { return t.emplace(std::move(v), rg, nullptr); }
  static void set_backprop(Tape& t, int id, std::function<void(Tape&)> bp) {
    t.nodes_[static_cast<size_t>(id)].backprop = std::move(bp);
  }
};

namespace {

const Matrix& val(const Tape& t, int id) { return detail_access::value(t, id); }
Matrix& grd(Tape& t, int id) { return detail_access::grad(t, id); }
bool needs(const Tape& t, int id) { return detail_access::requires_grad(t, id); }

void check_same_tape(Var a, Var b) {
  if (a.tape != b.tape) throw std::logic_error("autodiff: vars belong to different tapes");
}

// Creates a node and installs its backward closure (which may capture the
// new node's id).
template <typename MakeBackprop>
Var make_node(Tape& t, Matrix value, bool requires_grad, MakeBackprop&& make_bp) {
  Var v = detail_access::emplace(t, std::move(value), requires_grad);
  if (requires_grad) detail_access::set_backprop(t, v.id, make_bp(v.id));
  return v;
}

}  // namespace

const Matrix& Var::value() const { return detail_access::value(*tape, id); }

const Matrix& Var::grad() const {
  if (!detail_access::requires_grad(*tape, id))
    throw std::logic_error("autodiff: node does not require gradients");
  const Matrix& g = detail_access::grad(*tape, id);
  if (g.size() == 0) throw std::logic_error("autodiff: backward() has not run");
  return g;
}

Var Tape::emplace(Matrix value, bool requires_grad, std::function<void(Tape&)> backprop) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::leaf(Matrix value, bool requires_grad) {
  return emplace(std::move(value), requires_grad, nullptr);
}

void Tape::backward(Var root) {
  if (root.tape != this) throw std::logic_error("autodiff: root from another tape");
  const Matrix& rv = node(root.id).value;
  if (rv.rows() != 1 || rv.cols() != 1)
    throw std::logic_error("autodiff: backward root must be 1x1");
  for (int id = 0; id <= root.id; ++id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.requires_grad) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  }
  nodes_[static_cast<size_t>(root.id)].grad(0, 0) = 1.0;
  for (int id = root.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.requires_grad && n.backprop) n.backprop(*this);
  }
}

Var matmul(Var a, Var b) {
  check_same_tape(a, b);
  Tape& t = *a.tape;
  const Matrix& av = val(t, a.id);
  const Matrix& bv = val(t, b.id);
  if (av.cols() != bv.rows()) throw std::logic_error("matmul: inner dimensions differ");
  Matrix out(av.rows(), bv.cols());
  if (t.matmul_mode() == Tape::MatmulMode::RowStable) {
    // One output row at a time: each row's arithmetic then depends only on
    // that row's data, so permuting the rows of `a` permutes the product
    // bitwise. The blocked GEMM below does not have that property.
    for (Eigen::Index i = 0; i < av.rows(); ++i) out.row(i).noalias() = av.row(i) * bv;
  } else {
    out.noalias() = av * bv;
  }
  return make_node(t, std::move(out), needs(t, a.id) || needs(t, b.id), [&](int self) {
    return [a, b, self](Tape& tp) {
      const Matrix& g = grd(tp, self);
      if (needs(tp, a.id)) grd(tp, a.id).noalias() += g * val(tp, b.id).transpose();
      if (needs(tp, b.id)) grd(tp, b.id).noalias() += val(tp, a.id).transpose() * g;
    };
  });
}

namespace {

void check_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::logic_error(std::string(op) + ": shape mismatch");
}

}  // namespace

Var add(Var a, Var b) {
  check_same_tape(a, b);
  Tape& t = *a.tape;
  check_same_shape(val(t, a.id), val(t, b.id), "add");
  return make_node(t, val(t, a.id) + val(t, b.id), needs(t, a.id) || needs(t, b.id),
                   [&](int self) {
                     return [a, b, self](Tape& tp) {
                       if (needs(tp, a.id)) grd(tp, a.id) += grd(tp, self);
                       if (needs(tp, b.id)) grd(tp, b.id) += grd(tp, self);
                     };
                   });
}

Var sub(Var a, Var b) {
  check_same_tape(a, b);
  Tape& t = *a.tape;
  check_same_shape(val(t, a.id), val(t, b.id), "sub");
  return make_node(t, val(t, a.id) - val(t, b.id), needs(t, a.id) || needs(t, b.id),
                   [&](int self) {
                     return [a, b, self](Tape& tp) {
                       if (needs(tp, a.id)) grd(tp, a.id) += grd(tp, self);
                       if (needs(tp, b.id)) grd(tp, b.id) -= grd(tp, self);
                     };
                   });
}

Var hadamard(Var a, Var b) {
  check_same_tape(a, b);
  Tape& t = *a.tape;
  check_same_shape(val(t, a.id), val(t, b.id), "hadamard");
  Matrix out = val(t, a.id).cwiseProduct(val(t, b.id));
  return make_node(t, std::move(out), needs(t, a.id) || needs(t, b.id), [&](int self) {
    return [a, b, self](Tape& tp) {
      const Matrix& g = grd(tp, self);
      if (needs(tp, a.id)) grd(tp, a.id).array() += g.array() * val(tp, b.id).array();
      if (needs(tp, b.id)) grd(tp, b.id).array() += g.array() * val(tp, a.id).array();
    };
  });
}

Var scale(Var a, double s) {
  Tape& t = *a.tape;
  return make_node(t, val(t, a.id) * s, needs(t, a.id), [&](int self) {
    return [a, s, self](Tape& tp) { grd(tp, a.id) += grd(tp, self) * s; };
  });
}

Var one_minus(Var a) {
  Tape& t = *a.tape;
  Matrix out = 1.0 - val(t, a.id).array();
  return make_node(t, std::move(out), needs(t, a.id), [&](int self) {
    return [a, self](Tape& tp) { grd(tp, a.id) -= grd(tp, self); };
  });
}

Var add_rowvec(Var m, Var row) {
  check_same_tape(m, row);
  Tape& t = *m.tape;
  const Matrix& mv = val(t, m.id);
  const Matrix& rv = val(t, row.id);
  if (rv.rows() != 1 || rv.cols() != mv.cols())
    throw std::logic_error("add_rowvec: bias must be 1 x cols");
  Matrix out = mv.rowwise() + rv.row(0);
  return make_node(t, std::move(out), needs(t, m.id) || needs(t, row.id), [&](int self) {
    return [m, row, self](Tape& tp) {
      const Matrix& g = grd(tp, self);
      if (needs(tp, m.id)) grd(tp, m.id) += g;
      if (needs(tp, row.id)) grd(tp, row.id).row(0) += g.colwise().sum();
    };
  });
}

Var leaky_relu(Var a, double negative_slope) {
  Tape& t = *a.tape;
  Matrix out = val(t, a.id).unaryExpr(
      [negative_slope](double x) { return x > 0.0 ? x : negative_slope * x; });
  return make_node(t, std::move(out), needs(t, a.id), [&](int self) {
    return [a, negative_slope, self](Tape& tp) {
      grd(tp, a.id).array() +=
          grd(tp, self).array() *
          val(tp, a.id).unaryExpr([negative_slope](double x) {
            return x > 0.0 ? 1.0 : negative_slope;
          }).array();
    };
  });
}

Var elu(Var a) {
  Tape& t = *a.tape;
  Matrix out = val(t, a.id).unaryExpr([](double x) { return x > 0.0 ? x : std::expm1(x); });
  return make_node(t, std::move(out), needs(t, a.id), [&](int self) {
    return [a, self](Tape& tp) {
      // d/dx elu = 1 for x > 0, exp(x) = out + 1 otherwise.
      const Matrix& y = val(tp, self);
      const Matrix& x = val(tp, a.id);
      Matrix deriv = x.binaryExpr(y, [](double xv, double yv) {
        return xv > 0.0 ? 1.0 : yv + 1.0;
      });
      grd(tp, a.id).array() += grd(tp, self).array() * deriv.array();
    };
  });
}

Var sigmoid(Var a) {
  Tape& t = *a.tape;
  Matrix out = val(t, a.id).unaryExpr([](double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  });
  return make_node(t, std::move(out), needs(t, a.id), [&](int self) {
    return [a, self](Tape& tp) {
      const Matrix& y = val(tp, self);
      grd(tp, a.id).array() += grd(tp, self).array() * y.array() * (1.0 - y.array());
    };
  });
}

Var tanh(Var a) {
  Tape& t = *a.tape;
  Matrix out = val(t, a.id).array().tanh();
  return make_node(t, std::move(out), needs(t, a.id), [&](int self) {
    return [a, self](Tape& tp) {
      const Matrix& y = val(tp, self);
      grd(tp, a.id).array() += grd(tp, self).array() * (1.0 - y.array().square());
    };
  });
}

Var gather_rows(Var a, std::vector<int> rows) {
  Tape& t = *a.tape;
  const Matrix& av = val(t, a.id);
  Matrix out(static_cast<Eigen::Index>(rows.size()), av.cols());
  for (size_t e = 0; e < rows.size(); ++e) {
    if (rows[e] < 0 || rows[e] >= av.rows()) throw std::logic_error("gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(e)) = av.row(rows[e]);
  }
  return make_node(t, std::move(out), needs(t, a.id), [&](int self) {
    return [a, rows = std::move(rows), self](Tape& tp) {
      const Matrix& g = grd(tp, self);
      Matrix& ga = grd(tp, a.id);
      for (size_t e = 0; e < rows.size(); ++e)
        ga.row(rows[e]) += g.row(static_cast<Eigen::Index>(e));
    };
  });
}

Var scatter_sum_rows(Var a, std::vector<int> rows, int out_rows) {
  Tape& t = *a.tape;
  const Matrix& av = val(t, a.id);
  if (static_cast<Eigen::Index>(rows.size()) != av.rows())
    throw std::logic_error("scatter_sum_rows: index count must equal row count");
  Matrix out = Matrix::Zero(out_rows, av.cols());
  for (size_t e = 0; e < rows.size(); ++e) {
    if (rows[e] < 0 || rows[e] >= out_rows)
      throw std::logic_error("scatter_sum_rows: index out of range");
    out.row(rows[e]) += av.row(static_cast<Eigen::Index>(e));
  }
  return make_node(t, std::move(out), needs(t, a.id), [&](int self) {
    return [a, rows = std::move(rows), self](Tape& tp) {
      const Matrix& g = grd(tp, self);
      Matrix& ga = grd(tp, a.id);
      for (size_t e = 0; e < rows.size(); ++e)
        ga.row(static_cast<Eigen::Index>(e)) += g.row(rows[e]);
    };
  });
}

Var segment_softmax(Var col, std::vector<int> segment, int num_segments) {
  Tape& t = *col.tape;
  const Matrix& x = val(t, col.id);
  if (x.cols() != 1) throw std::logic_error("segment_softmax: input must be a column");
  if (static_cast<Eigen::Index>(segment.size()) != x.rows())
    throw std::logic_error("segment_softmax: segment ids must match rows");
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  std::vector<double> seg_max(static_cast<size_t>(num_segments), kNegInf);
  for (size_t e = 0; e < segment.size(); ++e)
    seg_max[static_cast<size_t>(segment[e])] =
        std::max(seg_max[static_cast<size_t>(segment[e])], x(static_cast<Eigen::Index>(e), 0));
  Matrix out(x.rows(), 1);
  std::vector<double> seg_sum(static_cast<size_t>(num_segments), 0.0);
  for (size_t e = 0; e < segment.size(); ++e) {
    double ex = std::exp(x(static_cast<Eigen::Index>(e), 0) - seg_max[static_cast<size_t>(segment[e])]);
    out(static_cast<Eigen::Index>(e), 0) = ex;
    seg_sum[static_cast<size_t>(segment[e])] += ex;
  }
  for (size_t e = 0; e < segment.size(); ++e)
    out(static_cast<Eigen::Index>(e), 0) /= seg_sum[static_cast<size_t>(segment[e])];
  return make_node(t, std::move(out), needs(t, col.id), [&](int self) {
    return [col, segment = std::move(segment), num_segments, self](Tape& tp) {
      // d/dx_e = alpha_e * (g_e - sum over the segment of g alpha)
      const Matrix& alpha = val(tp, self);
      const Matrix& g = grd(tp, self);
      std::vector<double> seg_dot(static_cast<size_t>(num_segments), 0.0);
      for (size_t e = 0; e < segment.size(); ++e)
        seg_dot[static_cast<size_t>(segment[e])] +=
            g(static_cast<Eigen::Index>(e), 0) * alpha(static_cast<Eigen::Index>(e), 0);
      Matrix& gx = grd(tp, col.id);
      for (size_t e = 0; e < segment.size(); ++e) {
        auto i = static_cast<Eigen::Index>(e);
        gx(i, 0) += alpha(i, 0) * (g(i, 0) - seg_dot[static_cast<size_t>(segment[e])]);
      }
    };
  });
}

Var scale_rows(Var a, Var col) {
  check_same_tape(a, col);
  Tape& t = *a.tape;
  const Matrix& av = val(t, a.id);
  const Matrix& cv = val(t, col.id);
  if (cv.cols() != 1 || cv.rows() != av.rows())
    throw std::logic_error("scale_rows: scaler must be rows x 1");
  Matrix out = av.array().colwise() * cv.col(0).array();
  return make_node(t, std::move(out), needs(t, a.id) || needs(t, col.id), [&](int self) {
    return [a, col, self](Tape& tp) {
      const Matrix& g = grd(tp, self);
      if (needs(tp, a.id))
        grd(tp, a.id).array() += g.array().colwise() * val(tp, col.id).col(0).array();
      if (needs(tp, col.id))
        grd(tp, col.id).col(0).array() +=
            (g.array() * val(tp, a.id).array()).rowwise().sum();
    };
  });
}

Var mean_rows(Var a) {
  Tape& t = *a.tape;
  const Matrix& av = val(t, a.id);
  Matrix out = av.colwise().mean();
  return make_node(t, std::move(out), needs(t, a.id), [&](int self) {
    return [a, self](Tape& tp) {
      Matrix share = grd(tp, self) / static_cast<double>(val(tp, a.id).rows());
      grd(tp, a.id).rowwise() += share.row(0);
    };
  });
}

Var segment_mean_rows(Var a, std::vector<int> segment, int num_segments) {
  Tape& t = *a.tape;
  const Matrix& av = val(t, a.id);
  if (static_cast<Eigen::Index>(segment.size()) != av.rows())
    throw std::logic_error("segment_mean_rows: segment ids must match rows");
  std::vector<double> counts(static_cast<size_t>(num_segments), 0.0);
  for (int s : segment) counts[static_cast<size_t>(s)] += 1.0;
  for (double c : counts)
    if (c == 0.0) throw std::logic_error("segment_mean_rows: empty segment");
  Matrix out = Matrix::Zero(num_segments, av.cols());
  for (size_t e = 0; e < segment.size(); ++e)
    out.row(segment[e]) += av.row(static_cast<Eigen::Index>(e));
  for (int s = 0; s < num_segments; ++s) out.row(s) /= counts[static_cast<size_t>(s)];
  return make_node(t, std::move(out), needs(t, a.id), [&](int self) {
    return [a, segment = std::move(segment), counts = std::move(counts), self](Tape& tp) {
      const Matrix& g = grd(tp, self);
      Matrix& ga = grd(tp, a.id);
      for (size_t e = 0; e < segment.size(); ++e)
        ga.row(static_cast<Eigen::Index>(e)) +=
            g.row(segment[e]) / counts[static_cast<size_t>(segment[e])];
    };
  });
}

Var hconcat(std::span<const Var> parts) {
  if (parts.empty()) throw std::logic_error("hconcat: no parts");
  Tape& t = *parts.front().tape;
  Eigen::Index rows = val(t, parts.front().id).rows();
  Eigen::Index cols = 0;
  bool rg = false;
  for (const Var& p : parts) {
    check_same_tape(parts.front(), p);
    if (val(t, p.id).rows() != rows) throw std::logic_error("hconcat: row counts differ");
    cols += val(t, p.id).cols();
    rg = rg || needs(t, p.id);
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  std::vector<Var> part_vec(parts.begin(), parts.end());
  std::vector<Eigen::Index> offsets;
  for (const Var& p : parts) {
    offsets.push_back(at);
    out.middleCols(at, val(t, p.id).cols()) = val(t, p.id);
    at += val(t, p.id).cols();
  }
  return make_node(t, std::move(out), rg, [&](int self) {
    return [part_vec = std::move(part_vec), offsets = std::move(offsets), self](Tape& tp) {
      const Matrix& g = grd(tp, self);
      for (size_t k = 0; k < part_vec.size(); ++k) {
        const Var& p = part_vec[k];
        if (needs(tp, p.id))
          grd(tp, p.id) += g.middleCols(offsets[k], val(tp, p.id).cols());
      }
    };
  });
}

Var cross_entropy_sum(Var logits, std::vector<int> golds) {
  Tape& t = *logits.tape;
  const Matrix& lv = val(t, logits.id);
  if (static_cast<Eigen::Index>(golds.size()) != lv.rows())
    throw std::logic_error("cross_entropy_sum: one gold per row required");
  double total = 0.0;
  for (Eigen::Index r = 0; r < lv.rows(); ++r) {
    int gold = golds[static_cast<size_t>(r)];
    if (gold < 0 || gold >= lv.cols())
      throw std::logic_error("cross_entropy_sum: gold ordinal out of range");
    double mx = lv.row(r).maxCoeff();
    double lse = mx + std::log((lv.row(r).array() - mx).exp().sum());
    total += lse - lv(r, gold);
  }
  Matrix out(1, 1);
  out(0, 0) = total;
  return make_node(t, std::move(out), needs(t, logits.id), [&](int self) {
    return [logits, golds = std::move(golds), self](Tape& tp) {
      const Matrix& lv = val(tp, logits.id);
      double coeff = grd(tp, self)(0, 0);
      Matrix& gl = grd(tp, logits.id);
      for (Eigen::Index r = 0; r < lv.rows(); ++r) {
        double mx = lv.row(r).maxCoeff();
        Eigen::ArrayXd p = (lv.row(r).array() - mx).exp();
        p /= p.sum();
        gl.row(r) += coeff * p.matrix().transpose();
        gl(r, golds[static_cast<size_t>(r)]) -= coeff;
      }
    };
  });
}

}  // namespace tabemb::ad
