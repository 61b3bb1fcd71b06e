#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include <Eigen/Dense>

#include "layoutgraph/error.hpp"
#include "layoutgraph/rng.hpp"

// Reverse-mode autodiff over dense double matrices. The tape is implicit:
// every op node keeps shared ownership of its parents, and backward() walks
// the reachable subgraph in reverse creation order. Creation order strictly
// dominates dataflow order (an op is created after its inputs), so sorting by
// id is a valid topological order even when leaves are reused across steps.
namespace layoutgraph::ad {

using Matrix = Eigen::MatrixXd;

class Node;
using Var = std::shared_ptr<Node>;

class Node {
public:
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  std::vector<Var> parents;
  std::function<void()> backprop;
  std::int64_t id = 0;

  void ensure_grad() {
    if (grad.rows() != value.rows() || grad.cols() != value.cols())
      grad = Matrix::Zero(value.rows(), value.cols());
  }

  void zero_grad() { grad = Matrix::Zero(value.rows(), value.cols()); }
};

namespace detail {
inline std::int64_t next_id() {
  // Atomic so concurrent per-document forward passes can share constants.
  static std::atomic<std::int64_t> counter{0};
  return ++counter;
}

inline void accumulate(Node* target, const Matrix& g) {
  if (!target->requires_grad) return;
  target->ensure_grad();
  target->grad += g;
}
}  // namespace detail

inline Var make_var(Matrix value, bool requires_grad = false) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  n->id = detail::next_id();
  return n;
}

inline Var constant(Matrix value) { return make_var(std::move(value), false); }

inline Var op_node(Matrix value, std::vector<Var> parents) {
  auto n = make_var(std::move(value), false);
  for (const auto& p : parents) n->requires_grad = n->requires_grad || p->requires_grad;
  n->parents = std::move(parents);
  return n;
}

// Backpropagate from a 1x1 scalar root.
inline void backward(const Var& root) {
  if (root->value.rows() != 1 || root->value.cols() != 1)
    throw Error("internal", "backward: root must be a 1x1 scalar");
  std::vector<Node*> reachable;
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{root.get()};
  seen.insert(root.get());
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    reachable.push_back(n);
    for (const auto& p : n->parents) {
      if (seen.insert(p.get()).second) stack.push_back(p.get());
    }
  }
  std::sort(reachable.begin(), reachable.end(),
            [](const Node* a, const Node* b) { return a->id > b->id; });
  root->ensure_grad();
  root->grad(0, 0) += 1.0;
  for (Node* n : reachable) {
    if (n->requires_grad && n->backprop) n->backprop();
  }
}

// ---------------------------------------------------------------------------
// Elementwise and linear-algebra ops
// ---------------------------------------------------------------------------

inline Var matmul(const Var& a, const Var& b) {
  if (a->value.cols() != b->value.rows())
    throw Error("internal", "matmul: inner dimensions disagree");
  auto out = op_node(a->value * b->value, {a, b});
  Node* pa = a.get();
  Node* pb = b.get();
  Node* po = out.get();
  out->backprop = [pa, pb, po] {
    detail::accumulate(pa, po->grad * pb->value.transpose());
    detail::accumulate(pb, pa->value.transpose() * po->grad);
  };
  return out;
}

inline Var add(const Var& a, const Var& b) {
  auto out = op_node(a->value + b->value, {a, b});
  Node* pa = a.get();
  Node* pb = b.get();
  Node* po = out.get();
  out->backprop = [pa, pb, po] {
    detail::accumulate(pa, po->grad);
    detail::accumulate(pb, po->grad);
  };
  return out;
}

inline Var sub(const Var& a, const Var& b) {
  auto out = op_node(a->value - b->value, {a, b});
  Node* pa = a.get();
  Node* pb = b.get();
  Node* po = out.get();
  out->backprop = [pa, pb, po] {
    detail::accumulate(pa, po->grad);
    detail::accumulate(pb, -po->grad);
  };
  return out;
}

// Broadcast a 1xC row vector over every row of m.
inline Var add_rowvec(const Var& m, const Var& row) {
  if (row->value.rows() != 1 || row->value.cols() != m->value.cols())
    throw Error("internal", "add_rowvec: expected 1xC row vector");
  Matrix v = m->value;
  v.rowwise() += row->value.row(0);
  auto out = op_node(std::move(v), {m, row});
  Node* pm = m.get();
  Node* pr = row.get();
  Node* po = out.get();
  out->backprop = [pm, pr, po] {
    detail::accumulate(pm, po->grad);
    detail::accumulate(pr, po->grad.colwise().sum());
  };
  return out;
}

inline Var hadamard(const Var& a, const Var& b) {
  auto out = op_node(a->value.cwiseProduct(b->value), {a, b});
  Node* pa = a.get();
  Node* pb = b.get();
  Node* po = out.get();
  out->backprop = [pa, pb, po] {
    detail::accumulate(pa, po->grad.cwiseProduct(pb->value));
    detail::accumulate(pb, po->grad.cwiseProduct(pa->value));
  };
  return out;
}

inline Var scale(const Var& a, double s) {
  auto out = op_node(a->value * s, {a});
  Node* pa = a.get();
  Node* po = out.get();
  out->backprop = [pa, po, s] { detail::accumulate(pa, po->grad * s); };
  return out;
}

inline Var add_scalar(const Var& a, double s) {
  auto out = op_node(a->value.array() + s, {a});
  Node* pa = a.get();
  Node* po = out.get();
  out->backprop = [pa, po] { detail::accumulate(pa, po->grad); };
  return out;
}

inline Var relu(const Var& a) {
  auto out = op_node(a->value.cwiseMax(0.0), {a});
  Node* pa = a.get();
  Node* po = out.get();
  out->backprop = [pa, po] {
    detail::accumulate(
        pa, po->grad.cwiseProduct((pa->value.array() > 0.0).cast<double>().matrix()));
  };
  return out;
}

inline Var leaky_relu(const Var& a, double slope) {
  Matrix v = a->value.unaryExpr([slope](double x) { return x > 0.0 ? x : slope * x; });
  auto out = op_node(std::move(v), {a});
  Node* pa = a.get();
  Node* po = out.get();
  out->backprop = [pa, po, slope] {
    Matrix mask =
        pa->value.unaryExpr([slope](double x) { return x > 0.0 ? 1.0 : slope; });
    detail::accumulate(pa, po->grad.cwiseProduct(mask));
  };
  return out;
}

inline Var elu(const Var& a, double alpha = 1.0) {
  Matrix v = a->value.unaryExpr(
      [alpha](double x) { return x > 0.0 ? x : alpha * (std::exp(x) - 1.0); });
  auto out = op_node(std::move(v), {a});
  Node* pa = a.get();
  Node* po = out.get();
  out->backprop = [pa, po, alpha] {
    Matrix mask = pa->value.unaryExpr(
        [alpha](double x) { return x > 0.0 ? 1.0 : alpha * std::exp(x); });
    detail::accumulate(pa, po->grad.cwiseProduct(mask));
  };
  return out;
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

inline Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw Error("internal", "concat_cols: no inputs");
  const auto rows = parts.front()->value.rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    if (p->value.rows() != rows) throw Error("internal", "concat_cols: row counts disagree");
    cols += p->value.cols();
  }
  Matrix v(rows, cols);
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    v.middleCols(off, p->value.cols()) = p->value;
    off += p->value.cols();
  }
  auto out = op_node(std::move(v), parts);
  Node* po = out.get();
  std::vector<Node*> raw;
  raw.reserve(parts.size());
  for (const auto& p : parts) raw.push_back(p.get());
  out->backprop = [raw, po] {
    Eigen::Index off = 0;
    for (Node* p : raw) {
      detail::accumulate(p, po->grad.middleCols(off, p->value.cols()));
      off += p->value.cols();
    }
  };
  return out;
}

inline Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  auto out = op_node(a->value.middleCols(start, count), {a});
  Node* pa = a.get();
  Node* po = out.get();
  out->backprop = [pa, po, start, count] {
    Matrix g = Matrix::Zero(pa->value.rows(), pa->value.cols());
    g.middleCols(start, count) = po->grad;
    detail::accumulate(pa, g);
  };
  return out;
}

// Row gather; repeated indices accumulate on backprop.
inline Var gather_rows(const Var& a, std::vector<int> idx) {
  Matrix v(static_cast<Eigen::Index>(idx.size()), a->value.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) v.row(static_cast<Eigen::Index>(i)) = a->value.row(idx[i]);
  auto out = op_node(std::move(v), {a});
  Node* pa = a.get();
  Node* po = out.get();
  auto indices = std::make_shared<std::vector<int>>(std::move(idx));
  out->backprop = [pa, po, indices] {
    if (!pa->requires_grad) return;
    pa->ensure_grad();
    for (std::size_t i = 0; i < indices->size(); ++i)
      pa->grad.row((*indices)[i]) += po->grad.row(static_cast<Eigen::Index>(i));
  };
  return out;
}

// out.row(s) = sum of a's rows with segment id s.
inline Var segment_sum(const Var& a, std::vector<int> seg, int num_segments) {
  if (static_cast<Eigen::Index>(seg.size()) != a->value.rows())
    throw Error("internal", "segment_sum: segment ids must match rows");
  Matrix v = Matrix::Zero(num_segments, a->value.cols());
  for (std::size_t i = 0; i < seg.size(); ++i)
    v.row(seg[i]) += a->value.row(static_cast<Eigen::Index>(i));
  auto out = op_node(std::move(v), {a});
  Node* pa = a.get();
  Node* po = out.get();
  auto segments = std::make_shared<std::vector<int>>(std::move(seg));
  out->backprop = [pa, po, segments] {
    if (!pa->requires_grad) return;
    pa->ensure_grad();
    for (std::size_t i = 0; i < segments->size(); ++i)
      pa->grad.row(static_cast<Eigen::Index>(i)) += po->grad.row((*segments)[i]);
  };
  return out;
}

// out.row(i) = col(i) * m.row(i), with col an Nx1 vector.
inline Var scale_rows(const Var& m, const Var& col) {
  if (col->value.cols() != 1 || col->value.rows() != m->value.rows())
    throw Error("internal", "scale_rows: expected Nx1 scaling vector");
  Matrix v = m->value.array().colwise() * col->value.col(0).array();
  auto out = op_node(std::move(v), {m, col});
  Node* pm = m.get();
  Node* pc = col.get();
  Node* po = out.get();
  out->backprop = [pm, pc, po] {
    detail::accumulate(pm, po->grad.array().colwise() * pc->value.col(0).array());
    detail::accumulate(pc, (po->grad.cwiseProduct(pm->value)).rowwise().sum());
  };
  return out;
}

// ---------------------------------------------------------------------------
// Normalization and softmax
// ---------------------------------------------------------------------------

// Row-wise layer normalization with learned 1xC gamma/beta.
inline Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5) {
  const Eigen::Index n = x->value.rows();
  const Eigen::Index c = x->value.cols();
  if (gamma->value.rows() != 1 || gamma->value.cols() != c || beta->value.rows() != 1 ||
      beta->value.cols() != c)
    throw Error("internal", "layer_norm: gamma/beta must be 1xC");
  Matrix xhat(n, c);
  Eigen::VectorXd inv_std(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mu = x->value.row(i).mean();
    const double var = (x->value.row(i).array() - mu).square().mean();
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (x->value.row(i).array() - mu) * inv_std(i);
  }
  Matrix v = (xhat.array().rowwise() * gamma->value.row(0).array()).rowwise() +
             beta->value.row(0).array();
  auto out = op_node(std::move(v), {x, gamma, beta});
  Node* px = x.get();
  Node* pg = gamma.get();
  Node* pb = beta.get();
  Node* po = out.get();
  auto cache_xhat = std::make_shared<Matrix>(std::move(xhat));
  auto cache_inv = std::make_shared<Eigen::VectorXd>(std::move(inv_std));
  out->backprop = [px, pg, pb, po, cache_xhat, cache_inv] {
    const Matrix& xh = *cache_xhat;
    const Eigen::VectorXd& is = *cache_inv;
    const Eigen::Index n = xh.rows();
    const Eigen::Index c = xh.cols();
    detail::accumulate(pg, (po->grad.cwiseProduct(xh)).colwise().sum());
    detail::accumulate(pb, po->grad.colwise().sum());
    if (px->requires_grad) {
      px->ensure_grad();
      for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::RowVectorXd dy = po->grad.row(i).cwiseProduct(pg->value.row(0));
        const double m1 = dy.mean();
        const double m2 = dy.cwiseProduct(xh.row(i)).mean();
        px->grad.row(i) +=
            is(i) * (dy.array() - m1 - xh.row(i).array() * m2).matrix();
        (void)c;
      }
    }
  };
  return out;
}

inline Var softmax_rows(const Var& x) {
  Matrix v(x->value.rows(), x->value.cols());
  for (Eigen::Index i = 0; i < x->value.rows(); ++i) {
    const double mx = x->value.row(i).maxCoeff();
    Eigen::RowVectorXd e = (x->value.row(i).array() - mx).exp();
    v.row(i) = e / e.sum();
  }
  auto out = op_node(std::move(v), {x});
  Node* px = x.get();
  Node* po = out.get();
  out->backprop = [px, po] {
    if (!px->requires_grad) return;
    px->ensure_grad();
    for (Eigen::Index i = 0; i < po->value.rows(); ++i) {
      const Eigen::RowVectorXd s = po->value.row(i);
      const double dot = po->grad.row(i).dot(s);
      px->grad.row(i) += (po->grad.row(i).array() - dot).matrix().cwiseProduct(s);
    }
  };
  return out;
}

// Softmax over groups of an Ex1 score column; group g collects the entries
// whose segment id is g. Empty groups contribute nothing.
inline Var segment_softmax(const Var& scores, std::vector<int> seg, int num_segments) {
  if (scores->value.cols() != 1) throw Error("internal", "segment_softmax: expected Ex1 scores");
  if (static_cast<Eigen::Index>(seg.size()) != scores->value.rows())
    throw Error("internal", "segment_softmax: segment ids must match rows");
  std::vector<double> max_per(static_cast<std::size_t>(num_segments),
                              -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < seg.size(); ++i)
    max_per[static_cast<std::size_t>(seg[i])] =
        std::max(max_per[static_cast<std::size_t>(seg[i])],
                 scores->value(static_cast<Eigen::Index>(i), 0));
  std::vector<double> denom(static_cast<std::size_t>(num_segments), 0.0);
  Matrix v(scores->value.rows(), 1);
  for (std::size_t i = 0; i < seg.size(); ++i) {
    v(static_cast<Eigen::Index>(i), 0) = std::exp(scores->value(static_cast<Eigen::Index>(i), 0) -
                                                  max_per[static_cast<std::size_t>(seg[i])]);
    denom[static_cast<std::size_t>(seg[i])] += v(static_cast<Eigen::Index>(i), 0);
  }
  for (std::size_t i = 0; i < seg.size(); ++i)
    v(static_cast<Eigen::Index>(i), 0) /= denom[static_cast<std::size_t>(seg[i])];
  auto out = op_node(std::move(v), {scores});
  Node* ps = scores.get();
  Node* po = out.get();
  auto segments = std::make_shared<std::vector<int>>(std::move(seg));
  out->backprop = [ps, po, segments, num_segments] {
    if (!ps->requires_grad) return;
    ps->ensure_grad();
    std::vector<double> dot(static_cast<std::size_t>(num_segments), 0.0);
    for (std::size_t i = 0; i < segments->size(); ++i)
      dot[static_cast<std::size_t>((*segments)[i])] +=
          po->grad(static_cast<Eigen::Index>(i), 0) * po->value(static_cast<Eigen::Index>(i), 0);
    for (std::size_t i = 0; i < segments->size(); ++i) {
      const double a = po->value(static_cast<Eigen::Index>(i), 0);
      ps->grad(static_cast<Eigen::Index>(i), 0) +=
          a * (po->grad(static_cast<Eigen::Index>(i), 0) -
               dot[static_cast<std::size_t>((*segments)[i])]);
    }
  };
  return out;
}

// Inverted dropout; identity when not training or rate == 0.
inline Var dropout(const Var& x, double rate, Rng& rng, bool training) {
  if (!training || rate <= 0.0) return x;
  if (rate >= 1.0) throw Error("config", "dropout rate must be < 1");
  const double keep = 1.0 - rate;
  Matrix mask(x->value.rows(), x->value.cols());
  for (Eigen::Index i = 0; i < mask.rows(); ++i)
    for (Eigen::Index j = 0; j < mask.cols(); ++j)
      mask(i, j) = rng.uniform() < rate ? 0.0 : 1.0 / keep;
  auto out = op_node(x->value.cwiseProduct(mask), {x});
  Node* px = x.get();
  Node* po = out.get();
  auto cache = std::make_shared<Matrix>(std::move(mask));
  out->backprop = [px, po, cache] { detail::accumulate(px, po->grad.cwiseProduct(*cache)); };
  return out;
}

// ---------------------------------------------------------------------------
// Reductions and losses
// ---------------------------------------------------------------------------

inline Var sum(const Var& x) {
  Matrix v(1, 1);
  v(0, 0) = x->value.sum();
  auto out = op_node(std::move(v), {x});
  Node* px = x.get();
  Node* po = out.get();
  out->backprop = [px, po] {
    detail::accumulate(
        px, Matrix::Constant(px->value.rows(), px->value.cols(), po->grad(0, 0)));
  };
  return out;
}

inline Var mean(const Var& x) {
  const double n = static_cast<double>(x->value.size());
  return scale(sum(x), 1.0 / n);
}

// Row-wise p-norm of x, returning Nx1. Zero rows get a zero subgradient.
inline Var row_pnorm(const Var& x, double p) {
  if (p < 1.0) throw Error("config", "p-norm order must be >= 1");
  const Eigen::Index n = x->value.rows();
  Matrix v(n, 1);
  for (Eigen::Index i = 0; i < n; ++i)
    v(i, 0) = std::pow(x->value.row(i).array().abs().pow(p).sum(), 1.0 / p);
  auto out = op_node(std::move(v), {x});
  Node* px = x.get();
  Node* po = out.get();
  out->backprop = [px, po, p] {
    if (!px->requires_grad) return;
    px->ensure_grad();
    for (Eigen::Index i = 0; i < px->value.rows(); ++i) {
      const double norm = po->value(i, 0);
      if (norm <= 0.0) continue;
      const Eigen::ArrayXd xi = px->value.row(i).array();
      const Eigen::ArrayXd d =
          xi.sign() * xi.abs().pow(p - 1.0) / std::pow(norm, p - 1.0);
      px->grad.row(i) += (po->grad(i, 0) * d).matrix().transpose();
    }
  };
  return out;
}

// Sum-convention cross entropy from logits. Optional per-class weights apply
// multiplicatively per sample; empty weights mean uniform.
inline Var cross_entropy_sum(const Var& logits, const std::vector<int>& labels,
                             const std::vector<double>& class_weights = {}) {
  const Eigen::Index n = logits->value.rows();
  const Eigen::Index c = logits->value.cols();
  if (static_cast<Eigen::Index>(labels.size()) != n)
    throw Error("internal", "cross_entropy: label count must match rows");
  for (int y : labels)
    if (y < 0 || y >= c) throw Error("internal", "cross_entropy: label out of range");
  if (!class_weights.empty() && static_cast<Eigen::Index>(class_weights.size()) != c)
    throw Error("internal", "cross_entropy: weight count must match classes");
  Matrix softmax(n, c);
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mx = logits->value.row(i).maxCoeff();
    Eigen::RowVectorXd e = (logits->value.row(i).array() - mx).exp();
    const double z = e.sum();
    softmax.row(i) = e / z;
    const double w =
        class_weights.empty() ? 1.0 : class_weights[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
    total += w * (std::log(z) + mx - logits->value(i, labels[static_cast<std::size_t>(i)]));
  }
  Matrix v(1, 1);
  v(0, 0) = total;
  auto out = op_node(std::move(v), {logits});
  Node* pl = logits.get();
  Node* po = out.get();
  auto cache_softmax = std::make_shared<Matrix>(std::move(softmax));
  auto cache_labels = std::make_shared<std::vector<int>>(labels);
  auto cache_weights = std::make_shared<std::vector<double>>(class_weights);
  out->backprop = [pl, po, cache_softmax, cache_labels, cache_weights] {
    if (!pl->requires_grad) return;
    pl->ensure_grad();
    const double g = po->grad(0, 0);
    for (Eigen::Index i = 0; i < pl->value.rows(); ++i) {
      const int y = (*cache_labels)[static_cast<std::size_t>(i)];
      const double w = cache_weights->empty() ? 1.0 : (*cache_weights)[static_cast<std::size_t>(y)];
      Eigen::RowVectorXd d = cache_softmax->row(i);
      d(y) -= 1.0;
      pl->grad.row(i) += g * w * d;
    }
  };
  return out;
}

}  // namespace layoutgraph::ad
