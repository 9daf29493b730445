#pragma once

// Reverse-mode autodiff tape over Eigen matrices. Nodes are created in
// forward order; backward() walks the tape in reverse and accumulates
// gradients into Parameter::grad for every parameter leaf it reaches.
// Everything is double precision and single threaded, so a fixed seed
// gives a bit-identical training trajectory.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace bitag::ad {

using Mat = Eigen::MatrixXd;
using RowVec = Eigen::RowVectorXd;

// A trainable tensor. Optimizer state lives here so that parameters can be
// shared by many graphs over their lifetime.
struct Parameter {
  std::string name;
  Mat value;
  Mat grad;
  Mat adam_m;
  Mat adam_v;

  Parameter() = default;
  Parameter(std::string n, Mat v) : name(std::move(n)), value(std::move(v)) {
    grad = Mat::Zero(value.rows(), value.cols());
    adam_m = grad;
    adam_v = grad;
  }

  void zero_grad() { grad.setZero(); }
  void reset_optimizer_state() {
    adam_m.setZero();
    adam_v.setZero();
  }
  Eigen::Index size() const { return value.size(); }
};

class Graph;

// Lightweight handle to a node in a Graph.
class Expr {
 public:
  Expr() = default;
  Expr(Graph* g, int id) : graph_(g), id_(id) {}

  bool valid() const { return graph_ != nullptr; }
  int id() const { return id_; }
  Graph* graph() const { return graph_; }
  const Mat& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const;

 private:
  Graph* graph_ = nullptr;
  int id_ = -1;
};

class Graph {
 public:
  // ---- leaves ----------------------------------------------------------

  Expr constant(Mat v) { return make(std::move(v), false, {}); }

  Expr scalar_constant(double v) {
    Mat m(1, 1);
    m(0, 0) = v;
    return constant(std::move(m));
  }

  // One leaf per distinct Parameter per graph; repeated calls return the
  // same node so gradients accumulate in a single place.
  Expr param(Parameter& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return Expr(this, it->second);
    Expr e = make(p.value, true, {});
    nodes_[e.id()].param = &p;
    param_nodes_.emplace(&p, e.id());
    return e;
  }

  // ---- elementwise / structural ops ------------------------------------

  Expr add(Expr a, Expr b) {
    check_same_shape(a, b, "add");
    return make(val(a) + val(b), needs(a) || needs(b),
                [ia = a.id(), ib = b.id()](Graph& g, int self) {
                  g.accumulate(ia, g.grad(self));
                  g.accumulate(ib, g.grad(self));
                });
  }

  Expr sub(Expr a, Expr b) {
    check_same_shape(a, b, "sub");
    return make(val(a) - val(b), needs(a) || needs(b),
                [ia = a.id(), ib = b.id()](Graph& g, int self) {
                  g.accumulate(ia, g.grad(self));
                  g.accumulate(ib, -g.grad(self));
                });
  }

  Expr scale(Expr a, double s) {
    return make(val(a) * s, needs(a), [ia = a.id(), s](Graph& g, int self) {
      g.accumulate(ia, g.grad(self) * s);
    });
  }

  Expr matmul(Expr a, Expr b) {
    if (val(a).cols() != val(b).rows())
      throw std::invalid_argument("graph: matmul inner dimensions disagree");
    return make(val(a) * val(b), needs(a) || needs(b),
                [ia = a.id(), ib = b.id()](Graph& g, int self) {
                  g.accumulate(ia, g.grad(self) * g.val_of(ib).transpose());
                  g.accumulate(ib, g.val_of(ia).transpose() * g.grad(self));
                });
  }

  Expr hadamard(Expr a, Expr b) {
    check_same_shape(a, b, "hadamard");
    return make(val(a).cwiseProduct(val(b)), needs(a) || needs(b),
                [ia = a.id(), ib = b.id()](Graph& g, int self) {
                  g.accumulate(ia, g.grad(self).cwiseProduct(g.val_of(ib)));
                  g.accumulate(ib, g.grad(self).cwiseProduct(g.val_of(ia)));
                });
  }

  // Every row of a multiplied elementwise by the 1 x d row r.
  Expr rowwise_mul(Expr a, Expr r) {
    check_rowvec(a, r, "rowwise_mul");
    Mat out = val(a).array().rowwise() * val(r).row(0).array();
    return make(std::move(out), needs(a) || needs(r),
                [ia = a.id(), ir = r.id()](Graph& g, int self) {
                  const Mat& go = g.grad(self);
                  g.accumulate(ia, go.array().rowwise() * g.val_of(ir).row(0).array());
                  g.accumulate(ir, (go.cwiseProduct(g.val_of(ia))).colwise().sum());
                });
  }

  // Every row of a plus the 1 x d row r.
  Expr rowwise_add(Expr a, Expr r) {
    check_rowvec(a, r, "rowwise_add");
    Mat out = val(a).array().rowwise() + val(r).row(0).array();
    return make(std::move(out), needs(a) || needs(r),
                [ia = a.id(), ir = r.id()](Graph& g, int self) {
                  g.accumulate(ia, g.grad(self));
                  g.accumulate(ir, g.grad(self).colwise().sum());
                });
  }

  Expr transpose(Expr a) {
    return make(val(a).transpose(), needs(a), [ia = a.id()](Graph& g, int self) {
      g.accumulate(ia, g.grad(self).transpose());
    });
  }

  Expr sigmoid(Expr a) {
    Mat out = val(a).unaryExpr([](double z) { return 1.0 / (1.0 + std::exp(-z)); });
    return make(std::move(out), needs(a), [ia = a.id()](Graph& g, int self) {
      const Mat& y = g.val_of(self);
      g.accumulate(ia, g.grad(self).cwiseProduct(
                           y.cwiseProduct(Mat::Ones(y.rows(), y.cols()) - y)));
    });
  }

  Expr tanh(Expr a) {
    Mat out = val(a).array().tanh();
    return make(std::move(out), needs(a), [ia = a.id()](Graph& g, int self) {
      const Mat& y = g.val_of(self);
      Mat one = Mat::Ones(y.rows(), y.cols());
      g.accumulate(ia, g.grad(self).cwiseProduct(one - y.cwiseProduct(y)));
    });
  }

  // Exact gelu: x * Phi(x) with Phi the standard normal cdf.
  Expr gelu(Expr a) {
    Mat out = val(a).unaryExpr([](double x) { return x * normal_cdf(x); });
    return make(std::move(out), needs(a), [ia = a.id()](Graph& g, int self) {
      const Mat& x = g.val_of(ia);
      Mat d = x.unaryExpr([](double v) { return normal_cdf(v) + v * normal_pdf(v); });
      g.accumulate(ia, g.grad(self).cwiseProduct(d));
    });
  }

  Expr softmax_rows(Expr a) {
    Mat out = val(a);
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
      RowVec row = out.row(i);
      double m = row.maxCoeff();
      row = (row.array() - m).exp();
      out.row(i) = row / row.sum();
    }
    return make(std::move(out), needs(a), [ia = a.id()](Graph& g, int self) {
      const Mat& y = g.val_of(self);
      const Mat& go = g.grad(self);
      Mat gi(y.rows(), y.cols());
      for (Eigen::Index i = 0; i < y.rows(); ++i) {
        double dot = go.row(i).dot(y.row(i));
        gi.row(i) = (go.row(i).array() - dot) * y.row(i).array();
      }
      g.accumulate(ia, gi);
    });
  }

  // Per-row layer normalization with scale gamma and shift beta (both 1 x d).
  Expr layer_norm_rows(Expr a, Expr gamma, Expr beta, double eps = 1e-12) {
    check_rowvec(a, gamma, "layer_norm_rows");
    check_rowvec(a, beta, "layer_norm_rows");
    const Mat& x = val(a);
    const double d = static_cast<double>(x.cols());
    Mat xhat(x.rows(), x.cols());
    Eigen::VectorXd inv_sd(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      double mu = x.row(i).mean();
      double var = (x.row(i).array() - mu).square().sum() / d;
      inv_sd(i) = 1.0 / std::sqrt(var + eps);
      xhat.row(i) = (x.row(i).array() - mu) * inv_sd(i);
    }
    Mat out = (xhat.array().rowwise() * val(gamma).row(0).array()).rowwise() +
              val(beta).row(0).array();
    return make(std::move(out), needs(a) || needs(gamma) || needs(beta),
                [ia = a.id(), ig = gamma.id(), ib = beta.id(), xhat, inv_sd,
                 d](Graph& g, int self) {
                  const Mat& go = g.grad(self);
                  g.accumulate(ib, go.colwise().sum());
                  g.accumulate(ig, go.cwiseProduct(xhat).colwise().sum());
                  Mat dxhat = go.array().rowwise() * g.val_of(ig).row(0).array();
                  Mat gi(go.rows(), go.cols());
                  for (Eigen::Index i = 0; i < go.rows(); ++i) {
                    double m1 = dxhat.row(i).mean();
                    double m2 = dxhat.row(i).cwiseProduct(xhat.row(i)).mean();
                    gi.row(i) =
                        (dxhat.row(i).array() - m1 - xhat.row(i).array() * m2) * inv_sd(i);
                  }
                  g.accumulate(ia, gi);
                });
  }

  // Elementwise max over rows r0..r1 inclusive -> 1 x d. Gradient routes to
  // the argmax row of each column.
  Expr maxpool_rows(Expr a, int r0, int r1) {
    const Mat& x = val(a);
    if (r0 < 0 || r1 >= x.rows() || r0 > r1)
      throw std::invalid_argument("graph: maxpool_rows range out of bounds");
    Mat out(1, x.cols());
    std::vector<int> argmax(static_cast<size_t>(x.cols()));
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      int best = r0;
      for (int r = r0 + 1; r <= r1; ++r)
        if (x(r, c) > x(best, c)) best = r;
      argmax[static_cast<size_t>(c)] = best;
      out(0, c) = x(best, c);
    }
    return make(std::move(out), needs(a),
                [ia = a.id(), argmax](Graph& g, int self) {
                  const Mat& go = g.grad(self);
                  Mat gi = Mat::Zero(g.val_of(ia).rows(), g.val_of(ia).cols());
                  for (Eigen::Index c = 0; c < go.cols(); ++c)
                    gi(argmax[static_cast<size_t>(c)], c) = go(0, c);
                  g.accumulate(ia, gi);
                });
  }

  Expr mean_rows(Expr a) {
    const Mat& x = val(a);
    Mat out = x.colwise().mean();
    return make(std::move(out), needs(a), [ia = a.id()](Graph& g, int self) {
      const Mat& x2 = g.val_of(ia);
      Mat gi = g.grad(self).replicate(x2.rows(), 1) / static_cast<double>(x2.rows());
      g.accumulate(ia, gi);
    });
  }

  // Replicate a 1 x d row l times -> l x d.
  Expr broadcast_rows(Expr r, int l) {
    if (val(r).rows() != 1) throw std::invalid_argument("graph: broadcast_rows needs a row");
    return make(val(r).replicate(l, 1), needs(r), [ir = r.id()](Graph& g, int self) {
      g.accumulate(ir, g.grad(self).colwise().sum());
    });
  }

  // Rows shifted down (offset > 0) or up (offset < 0); vacated rows are zero.
  Expr shift_rows(Expr a, int offset) {
    const Mat& x = val(a);
    Mat out = Mat::Zero(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      Eigen::Index src = r - offset;
      if (src >= 0 && src < x.rows()) out.row(r) = x.row(src);
    }
    return make(std::move(out), needs(a), [ia = a.id(), offset](Graph& g, int self) {
      const Mat& go = g.grad(self);
      Mat gi = Mat::Zero(go.rows(), go.cols());
      for (Eigen::Index r = 0; r < go.rows(); ++r) {
        Eigen::Index src = r - offset;
        if (src >= 0 && src < go.rows()) gi.row(src) += go.row(r);
      }
      g.accumulate(ia, gi);
    });
  }

  Expr concat_cols(const std::vector<Expr>& parts) {
    if (parts.empty()) throw std::invalid_argument("graph: concat_cols of nothing");
    Eigen::Index rows = val(parts[0]).rows(), cols = 0;
    bool ng = false;
    for (const Expr& p : parts) {
      if (val(p).rows() != rows)
        throw std::invalid_argument("graph: concat_cols row mismatch");
      cols += val(p).cols();
      ng = ng || needs(p);
    }
    Mat out(rows, cols);
    std::vector<int> ids;
    std::vector<Eigen::Index> widths;
    Eigen::Index at = 0;
    for (const Expr& p : parts) {
      out.middleCols(at, val(p).cols()) = val(p);
      ids.push_back(p.id());
      widths.push_back(val(p).cols());
      at += val(p).cols();
    }
    return make(std::move(out), ng, [ids, widths](Graph& g, int self) {
      const Mat& go = g.grad(self);
      Eigen::Index at2 = 0;
      for (size_t k = 0; k < ids.size(); ++k) {
        g.accumulate(ids[k], go.middleCols(at2, widths[k]));
        at2 += widths[k];
      }
    });
  }

  Expr slice_cols(Expr a, int c0, int width) {
    const Mat& x = val(a);
    if (c0 < 0 || c0 + width > x.cols())
      throw std::invalid_argument("graph: slice_cols out of bounds");
    return make(x.middleCols(c0, width), needs(a),
                [ia = a.id(), c0, width](Graph& g, int self) {
                  Mat gi = Mat::Zero(g.val_of(ia).rows(), g.val_of(ia).cols());
                  gi.middleCols(c0, width) = g.grad(self);
                  g.accumulate(ia, gi);
                });
  }

  Expr slice_rows(Expr a, int r0, int height) {
    const Mat& x = val(a);
    if (r0 < 0 || r0 + height > x.rows())
      throw std::invalid_argument("graph: slice_rows out of bounds");
    return make(x.middleRows(r0, height), needs(a),
                [ia = a.id(), r0, height](Graph& g, int self) {
                  Mat gi = Mat::Zero(g.val_of(ia).rows(), g.val_of(ia).cols());
                  gi.middleRows(r0, height) = g.grad(self);
                  g.accumulate(ia, gi);
                });
  }

  // 1 x d -> 1 x (d+1) with a trailing constant 1.
  Expr append_one(Expr v) {
    if (val(v).rows() != 1) throw std::invalid_argument("graph: append_one needs a row");
    Mat out(1, val(v).cols() + 1);
    out.leftCols(val(v).cols()) = val(v);
    out(0, val(v).cols()) = 1.0;
    return make(std::move(out), needs(v), [iv = v.id()](Graph& g, int self) {
      const Mat& go = g.grad(self);
      g.accumulate(iv, go.leftCols(go.cols() - 1));
    });
  }

  // Gather rows of a table by index (embedding lookup). Backward scatter-adds.
  Expr lookup_rows(Expr table, std::vector<int> ids) {
    const Mat& t = val(table);
    Mat out(static_cast<Eigen::Index>(ids.size()), t.cols());
    for (size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] < 0 || ids[i] >= t.rows())
        throw std::invalid_argument("graph: lookup_rows index out of range");
      out.row(static_cast<Eigen::Index>(i)) = t.row(ids[i]);
    }
    return make(std::move(out), needs(table),
                [it = table.id(), ids = std::move(ids)](Graph& g, int self) {
                  const Mat& go = g.grad(self);
                  Mat gi = Mat::Zero(g.val_of(it).rows(), g.val_of(it).cols());
                  for (size_t i = 0; i < ids.size(); ++i)
                    gi.row(ids[i]) += go.row(static_cast<Eigen::Index>(i));
                  g.accumulate(it, gi);
                });
  }

  // ---- reductions and losses -------------------------------------------

  Expr sum(Expr a) {
    Mat out(1, 1);
    out(0, 0) = val(a).sum();
    return make(std::move(out), needs(a), [ia = a.id()](Graph& g, int self) {
      const Mat& x = g.val_of(ia);
      g.accumulate(ia, Mat::Constant(x.rows(), x.cols(), g.grad(self)(0, 0)));
    });
  }

  Expr mean(Expr a) { return scale(sum(a), 1.0 / static_cast<double>(val(a).size())); }

  Expr add_scalars(const std::vector<Expr>& xs) {
    if (xs.empty()) throw std::invalid_argument("graph: add_scalars of nothing");
    Expr acc = xs[0];
    for (size_t i = 1; i < xs.size(); ++i) acc = add(acc, xs[i]);
    return acc;
  }

  // Mean binary cross entropy between probabilities and 0/1 targets.
  // Probabilities are clamped to [kProbEps, 1 - kProbEps] before the log.
  static constexpr double kProbEps = 1e-7;

  Expr binary_cross_entropy_mean(Expr probs, Mat targets) {
    const Mat& p = val(probs);
    if (p.rows() != targets.rows() || p.cols() != targets.cols())
      throw std::invalid_argument("graph: bce shape mismatch");
    const double n = static_cast<double>(p.size());
    double total = 0.0;
    for (Eigen::Index r = 0; r < p.rows(); ++r)
      for (Eigen::Index c = 0; c < p.cols(); ++c) {
        double pc = clamp_prob(p(r, c));
        double t = targets(r, c);
        total -= t * std::log(pc) + (1.0 - t) * std::log(1.0 - pc);
      }
    Mat out(1, 1);
    out(0, 0) = total / n;
    return make(std::move(out), needs(probs),
                [ip = probs.id(), targets = std::move(targets), n](Graph& g, int self) {
                  const Mat& p2 = g.val_of(ip);
                  double gs = g.grad(self)(0, 0);
                  Mat gi(p2.rows(), p2.cols());
                  for (Eigen::Index r = 0; r < p2.rows(); ++r)
                    for (Eigen::Index c = 0; c < p2.cols(); ++c) {
                      double raw = p2(r, c);
                      if (raw <= kProbEps || raw >= 1.0 - kProbEps) {
                        gi(r, c) = 0.0;  // clamp active: flat
                      } else {
                        gi(r, c) = gs * (raw - targets(r, c)) / (raw * (1.0 - raw)) / n;
                      }
                    }
                  g.accumulate(ip, gi);
                });
  }

  // Mean categorical cross entropy of row-wise softmax against integer labels.
  Expr softmax_cross_entropy_rows(Expr logits, std::vector<int> labels) {
    const Mat& z = val(logits);
    if (static_cast<size_t>(z.rows()) != labels.size())
      throw std::invalid_argument("graph: xent label count mismatch");
    Mat sm(z.rows(), z.cols());
    double total = 0.0;
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      double m = z.row(i).maxCoeff();
      RowVec e = (z.row(i).array() - m).exp();
      double s = e.sum();
      sm.row(i) = e / s;
      total -= std::log(std::max(sm(i, labels[static_cast<size_t>(i)]), kProbEps));
    }
    Mat out(1, 1);
    out(0, 0) = total / static_cast<double>(z.rows());
    return make(std::move(out), needs(logits),
                [iz = logits.id(), sm, labels = std::move(labels)](Graph& g, int self) {
                  double gs = g.grad(self)(0, 0);
                  Mat gi = sm;
                  for (Eigen::Index i = 0; i < gi.rows(); ++i)
                    gi(i, labels[static_cast<size_t>(i)]) -= 1.0;
                  g.accumulate(iz, gi * (gs / static_cast<double>(gi.rows())));
                });
  }

  // ---- engine ------------------------------------------------------------

  void backward(Expr loss) {
    if (loss.graph() != this) throw std::invalid_argument("graph: foreign expr");
    if (val(loss).size() != 1) throw std::invalid_argument("graph: backward needs a scalar");
    for (Node& n : nodes_)
      if (n.needs_grad) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    nodes_[static_cast<size_t>(loss.id())].grad = Mat::Constant(1, 1, 1.0);
    for (int i = loss.id(); i >= 0; --i) {
      Node& n = nodes_[static_cast<size_t>(i)];
      if (!n.needs_grad) continue;
      if (n.back) n.back(*this, i);
      if (n.param) n.param->grad += n.grad;
    }
  }

  const Mat& val_of(int id) const { return nodes_[static_cast<size_t>(id)].value; }
  const Mat& grad(int id) const { return nodes_[static_cast<size_t>(id)].grad; }
  size_t size() const { return nodes_.size(); }

 private:
  friend class Expr;

  struct Node {
    Mat value;
    Mat grad;
    bool needs_grad = false;
    std::function<void(Graph&, int)> back;
    Parameter* param = nullptr;
  };

  static double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }
  static double normal_pdf(double x) {
    return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
  }
  static double clamp_prob(double p) {
    return std::min(std::max(p, kProbEps), 1.0 - kProbEps);
  }

  Expr make(Mat v, bool needs_grad, std::function<void(Graph&, int)> back) {
    Node n;
    n.value = std::move(v);
    n.needs_grad = needs_grad;
    if (needs_grad) n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Expr(this, static_cast<int>(nodes_.size()) - 1);
  }

  const Mat& val(Expr e) const {
    if (e.graph() != this) throw std::invalid_argument("graph: foreign expr");
    return nodes_[static_cast<size_t>(e.id())].value;
  }
  bool needs(Expr e) const { return nodes_[static_cast<size_t>(e.id())].needs_grad; }

  void accumulate(int id, const Mat& g) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.needs_grad) return;
    n.grad += g;
  }

  void check_same_shape(Expr a, Expr b, const char* op) const {
    if (val(a).rows() != val(b).rows() || val(a).cols() != val(b).cols())
      throw std::invalid_argument(std::string("graph: ") + op + " shape mismatch");
  }
  void check_rowvec(Expr a, Expr r, const char* op) const {
    if (val(r).rows() != 1 || val(r).cols() != val(a).cols())
      throw std::invalid_argument(std::string("graph: ") + op + " needs a 1 x cols row");
  }

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, int> param_nodes_;
};

inline const Mat& Expr::value() const {
  if (!graph_) throw std::logic_error("graph: empty expr");
  return graph_->val_of(id_);
}

inline double Expr::scalar() const {
  const Mat& v = value();
  if (v.size() != 1) throw std::logic_error("graph: expr is not a scalar");
  return v(0, 0);
}

using Rng = std::mt19937_64;

inline Mat normal_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  Mat m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = dist(rng);
  return m;
}

}  // namespace bitag::ad
