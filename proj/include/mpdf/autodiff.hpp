#pragma once

// Reverse-mode automatic differentiation over dense Eigen matrices.
// A Tape owns a sequence of Nodes created in topological order by the op
// functions below; backward() replays the sequence in reverse. All sequence
// data is laid out rows = time, cols = channels.

#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace mpdf::ad {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

template <typename S>
struct Node {
  Mat<S> val;
  Mat<S> grad;  // allocated on first accumulation
  std::function<void()> back;
  bool rg = false;  // requires grad (self or any ancestor)

  void add_grad(const Mat<S>& g) {
    if (grad.size() == 0) {
      grad = g;
    } else {
      grad += g;
    }
  }
  template <typename Expr>
  void add_grad_expr(const Expr& g) {
    if (grad.size() == 0) {
      grad = g;
    } else {
      grad += g;
    }
  }
  bool has_grad() const { return grad.size() != 0; }
};

template <typename S>
class Tape {
 public:
  using NodeT = Node<S>;

  NodeT* alloc(Mat<S> v) {
    nodes_.emplace_back();
    NodeT* n = &nodes_.back();
    n->val = std::move(v);
    return n;
  }

  NodeT* leaf(Mat<S> v, bool requires_grad = false) {
    NodeT* n = alloc(std::move(v));
    n->rg = requires_grad;
    return n;
  }

  // Runs the reverse sweep from a scalar root.
  void backward(NodeT* root) {
    if (root->val.rows() != 1 || root->val.cols() != 1) {
      throw std::invalid_argument("backward root must be a 1x1 scalar node");
    }
    root->add_grad(Mat<S>::Ones(1, 1));
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      if (it->rg && it->has_grad() && it->back) it->back();
    }
  }

  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }

 private:
  std::deque<NodeT> nodes_;
};

template <typename S>
using Var = Node<S>*;

namespace detail {
template <typename S>
Var<S> unary(Tape<S>& t, Var<S> a, Mat<S> v, std::function<void(Node<S>*, Node<S>*)> pull) {
  Node<S>* n = t.alloc(std::move(v));
  n->rg = a->rg;
  if (n->rg) n->back = [n, a, pull = std::move(pull)] { pull(n, a); };
  return n;
}
}  // namespace detail

// ---- arithmetic ----

template <typename S>
Var<S> add(Tape<S>& t, Var<S> a, Var<S> b) {
  Node<S>* n = t.alloc(a->val + b->val);
  n->rg = a->rg || b->rg;
  if (n->rg)
    n->back = [n, a, b] {
      if (a->rg) a->add_grad(n->grad);
      if (b->rg) b->add_grad(n->grad);
    };
  return n;
}

template <typename S>
Var<S> sub(Tape<S>& t, Var<S> a, Var<S> b) {
  Node<S>* n = t.alloc(a->val - b->val);
  n->rg = a->rg || b->rg;
  if (n->rg)
    n->back = [n, a, b] {
      if (a->rg) a->add_grad(n->grad);
      if (b->rg) b->add_grad_expr(-n->grad);
    };
  return n;
}

template <typename S>
Var<S> mul(Tape<S>& t, Var<S> a, Var<S> b) {
  Node<S>* n = t.alloc(a->val.cwiseProduct(b->val));
  n->rg = a->rg || b->rg;
  if (n->rg)
    n->back = [n, a, b] {
      if (a->rg) a->add_grad_expr(n->grad.cwiseProduct(b->val));
      if (b->rg) b->add_grad_expr(n->grad.cwiseProduct(a->val));
    };
  return n;
}

template <typename S>
Var<S> div(Tape<S>& t, Var<S> a, Var<S> b) {
  Node<S>* n = t.alloc(a->val.cwiseQuotient(b->val));
  n->rg = a->rg || b->rg;
  if (n->rg)
    n->back = [n, a, b] {
      if (a->rg) a->add_grad_expr(n->grad.cwiseQuotient(b->val));
      if (b->rg)
        b->add_grad_expr(-n->grad.cwiseProduct(n->val).cwiseQuotient(b->val));
    };
  return n;
}

// alpha * x + beta, elementwise constants
template <typename S>
Var<S> affine(Tape<S>& t, Var<S> a, S alpha, S beta) {
  return detail::unary<S>(t, a, (a->val.array() * alpha + beta).matrix(),
                          [alpha](Node<S>* n, Node<S>* a) { a->add_grad_expr(n->grad * alpha); });
}

template <typename S>
Var<S> scale(Tape<S>& t, Var<S> a, S alpha) {
  return affine<S>(t, a, alpha, S(0));
}

template <typename S>
Var<S> add_const(Tape<S>& t, Var<S> a, const Mat<S>& c) {
  return detail::unary<S>(t, a, a->val + c,
                          [](Node<S>* n, Node<S>* a) { a->add_grad(n->grad); });
}

template <typename S>
Var<S> cmul_const(Tape<S>& t, Var<S> a, const Mat<S>& c) {
  return detail::unary<S>(t, a, a->val.cwiseProduct(c),
                          [c](Node<S>* n, Node<S>* a) { a->add_grad_expr(n->grad.cwiseProduct(c)); });
}

// x * s where s is a learnable 1x1 scalar node
template <typename S>
Var<S> scale_by(Tape<S>& t, Var<S> x, Var<S> s) {
  Node<S>* n = t.alloc(x->val * s->val(0, 0));
  n->rg = x->rg || s->rg;
  if (n->rg)
    n->back = [n, x, s] {
      if (x->rg) x->add_grad_expr(n->grad * s->val(0, 0));
      if (s->rg) {
        Mat<S> g(1, 1);
        g(0, 0) = n->grad.cwiseProduct(x->val).sum();
        s->add_grad(g);
      }
    };
  return n;
}

// x + s broadcast, s a learnable 1x1 scalar node
template <typename S>
Var<S> add_scalar_var(Tape<S>& t, Var<S> x, Var<S> s) {
  Node<S>* n = t.alloc((x->val.array() + s->val(0, 0)).matrix());
  n->rg = x->rg || s->rg;
  if (n->rg)
    n->back = [n, x, s] {
      if (x->rg) x->add_grad(n->grad);
      if (s->rg) {
        Mat<S> g(1, 1);
        g(0, 0) = n->grad.sum();
        s->add_grad(g);
      }
    };
  return n;
}

// ---- matrix products ----

template <typename S>
Var<S> matmul(Tape<S>& t, Var<S> a, Var<S> b) {
  Node<S>* n = t.alloc(a->val * b->val);
  n->rg = a->rg || b->rg;
  if (n->rg)
    n->back = [n, a, b] {
      if (a->rg) {
        Mat<S> g = n->grad * b->val.transpose();
        a->add_grad(g);
      }
      if (b->rg) {
        Mat<S> g = a->val.transpose() * n->grad;
        b->add_grad(g);
      }
    };
  return n;
}

// a * b^T
template <typename S>
Var<S> matmul_nt(Tape<S>& t, Var<S> a, Var<S> b) {
  Node<S>* n = t.alloc(a->val * b->val.transpose());
  n->rg = a->rg || b->rg;
  if (n->rg)
    n->back = [n, a, b] {
      if (a->rg) {
        Mat<S> g = n->grad * b->val;
        a->add_grad(g);
      }
      if (b->rg) {
        Mat<S> g = n->grad.transpose() * a->val;
        b->add_grad(g);
      }
    };
  return n;
}

// x (T x d) + bias (1 x d) broadcast over rows
template <typename S>
Var<S> add_row_bias(Tape<S>& t, Var<S> x, Var<S> bias) {
  Node<S>* n = t.alloc(x->val.rowwise() + bias->val.row(0));
  n->rg = x->rg || bias->rg;
  if (n->rg)
    n->back = [n, x, bias] {
      if (x->rg) x->add_grad(n->grad);
      if (bias->rg) bias->add_grad_expr(n->grad.colwise().sum());
    };
  return n;
}

// ---- elementwise nonlinearities ----

template <typename S>
Var<S> relu(Tape<S>& t, Var<S> a) {
  return detail::unary<S>(t, a, a->val.cwiseMax(S(0)), [](Node<S>* n, Node<S>* a) {
    a->add_grad_expr(
        (a->val.array() > S(0)).template cast<S>().matrix().cwiseProduct(n->grad));
  });
}

template <typename S>
Var<S> sigmoid(Tape<S>& t, Var<S> a) {
  Mat<S> y = (S(1) / (S(1) + (-a->val.array()).exp())).matrix();
  Node<S>* n = t.alloc(std::move(y));
  n->rg = a->rg;
  if (n->rg)
    n->back = [n, a] {
      a->add_grad_expr(
          n->grad.cwiseProduct((n->val.array() * (S(1) - n->val.array())).matrix()));
    };
  return n;
}

// log(1 + e^x), numerically stable
template <typename S>
Var<S> softplus(Tape<S>& t, Var<S> a) {
  Mat<S> y = a->val.unaryExpr([](S x) {
    if (x > S(30)) return x;
    if (x < S(-30)) return std::exp(x);
    return std::log1p(std::exp(x));
  });
  Node<S>* n = t.alloc(std::move(y));
  n->rg = a->rg;
  if (n->rg)
    n->back = [n, a] {
      Mat<S> sig = (S(1) / (S(1) + (-a->val.array()).exp())).matrix();
      a->add_grad_expr(n->grad.cwiseProduct(sig));
    };
  return n;
}

template <typename S>
Var<S> sqrt_elem(Tape<S>& t, Var<S> a) {
  Node<S>* n = t.alloc(a->val.cwiseSqrt());
  n->rg = a->rg;
  if (n->rg)
    n->back = [n, a] {
      // subgradient 0 at exactly 0
      Mat<S> d = n->val.unaryExpr([](S y) { return y > S(0) ? S(1) / (S(2) * y) : S(0); });
      a->add_grad_expr(n->grad.cwiseProduct(d));
    };
  return n;
}

// x^p for x >= 0; p == 0 gives constant ones
template <typename S>
Var<S> pow_elem(Tape<S>& t, Var<S> a, S p) {
  if (p == S(0)) {
    Node<S>* n = t.alloc(Mat<S>::Ones(a->val.rows(), a->val.cols()));
    n->rg = false;
    return n;
  }
  Node<S>* n = t.alloc(a->val.array().pow(p).matrix());
  n->rg = a->rg;
  if (n->rg)
    n->back = [n, a, p] {
      Mat<S> d = (a->val.array().pow(p - S(1)) * p).matrix();
      a->add_grad_expr(n->grad.cwiseProduct(d));
    };
  return n;
}

// elementwise min(x, c) with a constant matrix; gradient passes where x <= c
template <typename S>
Var<S> min_const(Tape<S>& t, Var<S> a, const Mat<S>& c) {
  return detail::unary<S>(t, a, a->val.cwiseMin(c), [c](Node<S>* n, Node<S>* a) {
    a->add_grad_expr(
        (a->val.array() <= c.array()).template cast<S>().matrix().cwiseProduct(n->grad));
  });
}

template <typename S>
Var<S> max_const(Tape<S>& t, Var<S> a, const Mat<S>& c) {
  return detail::unary<S>(t, a, a->val.cwiseMax(c), [c](Node<S>* n, Node<S>* a) {
    a->add_grad_expr(
        (a->val.array() >= c.array()).template cast<S>().matrix().cwiseProduct(n->grad));
  });
}

// ---- shape ops ----

template <typename S>
Var<S> concat_cols(Tape<S>& t, const std::vector<Var<S>>& xs) {
  Eigen::Index rows = xs.front()->val.rows();
  Eigen::Index cols = 0;
  bool rg = false;
  for (auto* x : xs) {
    if (x->val.rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
    cols += x->val.cols();
    rg = rg || x->rg;
  }
  Mat<S> v(rows, cols);
  Eigen::Index off = 0;
  for (auto* x : xs) {
    v.middleCols(off, x->val.cols()) = x->val;
    off += x->val.cols();
  }
  Node<S>* n = t.alloc(std::move(v));
  n->rg = rg;
  if (rg) {
    std::vector<Var<S>> parents(xs);
    n->back = [n, parents] {
      Eigen::Index off = 0;
      for (auto* x : parents) {
        if (x->rg) x->add_grad_expr(n->grad.middleCols(off, x->val.cols()));
        off += x->val.cols();
      }
    };
  }
  return n;
}

template <typename S>
Var<S> slice_cols(Tape<S>& t, Var<S> a, Eigen::Index start, Eigen::Index ncols) {
  Node<S>* n = t.alloc(a->val.middleCols(start, ncols));
  n->rg = a->rg;
  if (n->rg)
    n->back = [n, a, start, ncols] {
      if (!a->has_grad()) a->grad = Mat<S>::Zero(a->val.rows(), a->val.cols());
      a->grad.middleCols(start, ncols) += n->grad;
    };
  return n;
}

// Rows become [E[0]; P_raw[0]; ...; P_raw[T-2]] -- the one-frame shift that
// aligns next-frame predictions with their target frames.
template <typename S>
Var<S> shift_align(Tape<S>& t, Var<S> p_raw, Var<S> e) {
  if (p_raw->val.rows() != e->val.rows() || p_raw->val.cols() != e->val.cols())
    throw std::invalid_argument("shift_align: shape mismatch");
  Eigen::Index T = p_raw->val.rows();
  Mat<S> v(T, p_raw->val.cols());
  v.row(0) = e->val.row(0);
  if (T > 1) v.bottomRows(T - 1) = p_raw->val.topRows(T - 1);
  Node<S>* n = t.alloc(std::move(v));
  n->rg = p_raw->rg || e->rg;
  if (n->rg)
    n->back = [n, p_raw, e, T] {
      if (e->rg) {
        if (!e->has_grad()) e->grad = Mat<S>::Zero(e->val.rows(), e->val.cols());
        e->grad.row(0) += n->grad.row(0);
      }
      if (p_raw->rg && T > 1) {
        if (!p_raw->has_grad())
          p_raw->grad = Mat<S>::Zero(p_raw->val.rows(), p_raw->val.cols());
        p_raw->grad.topRows(T - 1) += n->grad.bottomRows(T - 1);
      }
    };
  return n;
}

// Flatten to 1 x (T*d), row-major over (t, c).
template <typename S>
Var<S> flatten_rows(Tape<S>& t, Var<S> a) {
  Eigen::Index T = a->val.rows(), d = a->val.cols();
  Mat<S> v(1, T * d);
  for (Eigen::Index i = 0; i < T; ++i) v.middleCols(i * d, d) = a->val.row(i);
  Node<S>* n = t.alloc(std::move(v));
  n->rg = a->rg;
  if (n->rg)
    n->back = [n, a, T, d] {
      if (!a->has_grad()) a->grad = Mat<S>::Zero(T, d);
      for (Eigen::Index i = 0; i < T; ++i) a->grad.row(i) += n->grad.middleCols(i * d, d);
    };
  return n;
}

// ---- reductions ----

template <typename S>
Var<S> sum_all(Tape<S>& t, Var<S> a) {
  Mat<S> v(1, 1);
  v(0, 0) = a->val.sum();
  Node<S>* n = t.alloc(std::move(v));
  n->rg = a->rg;
  if (n->rg)
    n->back = [n, a] {
      a->add_grad_expr(Mat<S>::Constant(a->val.rows(), a->val.cols(), n->grad(0, 0)));
    };
  return n;
}

template <typename S>
Var<S> mean_all(Tape<S>& t, Var<S> a) {
  return scale<S>(t, sum_all(t, a), S(1) / S(a->val.size()));
}

template <typename S>
Var<S> row_sum(Tape<S>& t, Var<S> a) {
  Node<S>* n = t.alloc(a->val.rowwise().sum());
  n->rg = a->rg;
  if (n->rg)
    n->back = [n, a] {
      a->add_grad_expr(n->grad * Mat<S>::Ones(1, a->val.cols()));
    };
  return n;
}

template <typename S>
Var<S> max_all(Tape<S>& t, Var<S> a) {
  Eigen::Index r, c;
  Mat<S> v(1, 1);
  v(0, 0) = a->val.maxCoeff(&r, &c);
  Node<S>* n = t.alloc(std::move(v));
  n->rg = a->rg;
  if (n->rg)
    n->back = [n, a, r, c] {
      if (!a->has_grad()) a->grad = Mat<S>::Zero(a->val.rows(), a->val.cols());
      a->grad(r, c) += n->grad(0, 0);
    };
  return n;
}

// Mean over consecutive groups of `r` rows: (G*r) x d -> G x d.
template <typename S>
Var<S> group_mean_rows(Tape<S>& t, Var<S> a, int r) {
  Eigen::Index Ta = a->val.rows(), d = a->val.cols();
  if (Ta % r != 0) throw std::invalid_argument("group_mean_rows: rows not divisible by r");
  Eigen::Index G = Ta / r;
  Mat<S> v = Mat<S>::Zero(G, d);
  for (Eigen::Index g = 0; g < G; ++g)
    for (int j = 0; j < r; ++j) v.row(g) += a->val.row(g * r + j);
  v /= S(r);
  Node<S>* n = t.alloc(std::move(v));
  n->rg = a->rg;
  if (n->rg)
    n->back = [n, a, r, G] {
      if (!a->has_grad()) a->grad = Mat<S>::Zero(a->val.rows(), a->val.cols());
      for (Eigen::Index g = 0; g < G; ++g)
        for (int j = 0; j < r; ++j) a->grad.row(g * r + j) += n->grad.row(g) / S(r);
    };
  return n;
}

// ---- softmax / normalization ----

// Row-wise softmax of (x + additive_mask). Masked entries (-inf) get weight 0.
template <typename S>
Var<S> row_softmax(Tape<S>& t, Var<S> x, const Mat<S>* additive_mask = nullptr) {
  Mat<S> s = additive_mask ? Mat<S>(x->val + *additive_mask) : x->val;
  Mat<S> y(s.rows(), s.cols());
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    S m = s.row(i).maxCoeff();
    Eigen::Array<S, 1, Eigen::Dynamic> e = (s.row(i).array() - m).exp();
    y.row(i) = (e / e.sum()).matrix();
  }
  Node<S>* n = t.alloc(std::move(y));
  n->rg = x->rg;
  if (n->rg)
    n->back = [n, x] {
      Mat<S> gy = n->grad.cwiseProduct(n->val);
      Eigen::Matrix<S, Eigen::Dynamic, 1> rowdot = gy.rowwise().sum();
      x->add_grad_expr(gy - n->val.cwiseProduct(rowdot * Mat<S>::Ones(1, n->val.cols())));
    };
  return n;
}

// Per-row group normalization with affine (gamma, beta are 1 x d).
// groups == 1 gives LayerNorm over the row.
template <typename S>
Var<S> group_norm(Tape<S>& t, Var<S> x, Var<S> gamma, Var<S> beta, int groups, S eps) {
  Eigen::Index T = x->val.rows(), d = x->val.cols();
  if (d % groups != 0) throw std::invalid_argument("group_norm: groups must divide channels");
  Eigen::Index k = d / groups;
  Mat<S> xhat(T, d), inv_std(T, groups);
  for (Eigen::Index i = 0; i < T; ++i) {
    for (int g = 0; g < groups; ++g) {
      auto seg = x->val.row(i).segment(g * k, k);
      S mu = seg.mean();
      S var = (seg.array() - mu).square().sum() / S(k);
      S is = S(1) / std::sqrt(var + eps);
      inv_std(i, g) = is;
      xhat.row(i).segment(g * k, k) = ((seg.array() - mu) * is).matrix();
    }
  }
  Mat<S> v = (xhat.array().rowwise() * gamma->val.row(0).array()).matrix();
  v.rowwise() += beta->val.row(0);
  Node<S>* n = t.alloc(std::move(v));
  n->rg = x->rg || gamma->rg || beta->rg;
  if (n->rg)
    n->back = [n, x, gamma, beta, groups, k, xhat = std::move(xhat),
               inv_std = std::move(inv_std)] {
      Eigen::Index T = n->val.rows();
      if (gamma->rg) gamma->add_grad_expr(n->grad.cwiseProduct(xhat).colwise().sum());
      if (beta->rg) beta->add_grad_expr(n->grad.colwise().sum());
      if (x->rg) {
        Mat<S> gx(T, n->val.cols());
        for (Eigen::Index i = 0; i < T; ++i) {
          for (int g = 0; g < groups; ++g) {
            auto gout = n->grad.row(i).segment(g * k, k).array() *
                        gamma->val.row(0).segment(g * k, k).array();
            auto xh = xhat.row(i).segment(g * k, k).array();
            S sum_g = gout.sum();
            S sum_gx = (gout * xh).sum();
            gx.row(i).segment(g * k, k) =
                ((gout - sum_g / S(k) - xh * (sum_gx / S(k))) * inv_std(i, g)).matrix();
          }
        }
        x->add_grad(gx);
      }
    };
  return n;
}

template <typename S>
Var<S> layer_norm(Tape<S>& t, Var<S> x, Var<S> gamma, Var<S> beta, S eps) {
  return group_norm<S>(t, x, gamma, beta, 1, eps);
}

// ---- temporal convolutions ----

// Depthwise 1D convolution along rows (time), symmetric zero padding, odd
// kernel. x: T x d, kernel: w x d (one column per channel), bias: 1 x d.
template <typename S>
Var<S> depthwise_conv1d(Tape<S>& t, Var<S> x, Var<S> kernel, Var<S> bias) {
  Eigen::Index T = x->val.rows(), d = x->val.cols(), w = kernel->val.rows();
  if (w % 2 == 0) throw std::invalid_argument("depthwise_conv1d: kernel size must be odd");
  if (kernel->val.cols() != d) throw std::invalid_argument("depthwise_conv1d: channel mismatch");
  Eigen::Index h = (w - 1) / 2;
  Mat<S> v = Mat<S>::Zero(T, d);
  for (Eigen::Index j = 0; j < w; ++j) {
    Eigen::Index lo = std::max<Eigen::Index>(0, h - j);
    Eigen::Index hi = std::min(T, T + h - j);
    if (lo >= hi) continue;
    // out[t] += k[j] .* x[t + j - h] over valid t
    v.middleRows(lo, hi - lo).array() +=
        x->val.middleRows(lo + j - h, hi - lo).array().rowwise() *
        kernel->val.row(j).array();
  }
  v.rowwise() += bias->val.row(0);
  Node<S>* n = t.alloc(std::move(v));
  n->rg = x->rg || kernel->rg || bias->rg;
  if (n->rg)
    n->back = [n, x, kernel, bias, T, d, w, h] {
      if (bias->rg) bias->add_grad_expr(n->grad.colwise().sum());
      for (Eigen::Index j = 0; j < w; ++j) {
        Eigen::Index lo = std::max<Eigen::Index>(0, h - j);
        Eigen::Index hi = std::min(T, T + h - j);
        if (lo >= hi) continue;
        if (x->rg) {
          if (!x->has_grad()) x->grad = Mat<S>::Zero(T, d);
          x->grad.middleRows(lo + j - h, hi - lo).array() +=
              n->grad.middleRows(lo, hi - lo).array().rowwise() * kernel->val.row(j).array();
        }
        if (kernel->rg) {
          if (!kernel->has_grad()) kernel->grad = Mat<S>::Zero(w, d);
          kernel->grad.row(j) += (n->grad.middleRows(lo, hi - lo).array() *
                                  x->val.middleRows(lo + j - h, hi - lo).array())
                                     .colwise()
                                     .sum()
                                     .matrix();
        }
      }
    };
  return n;
}

// Dense 1D convolution along rows. x: T x Cin, weight: (k*Cin) x Cout laid out
// tap-major (tap j occupies rows [j*Cin, (j+1)*Cin)), bias: 1 x Cout.
// Output length: floor((T + 2*pad - k) / stride) + 1.
template <typename S>
Var<S> conv1d(Tape<S>& t, Var<S> x, Var<S> weight, Var<S> bias, int k, int stride, int pad) {
  Eigen::Index T = x->val.rows(), cin = x->val.cols();
  if (weight->val.rows() != k * cin) throw std::invalid_argument("conv1d: weight rows != k*Cin");
  Eigen::Index cout = weight->val.cols();
  Eigen::Index To = (T + 2 * pad - k) / stride + 1;
  if (To < 1) throw std::invalid_argument("conv1d: output length < 1");
  // im2col
  Mat<S> cols = Mat<S>::Zero(To, k * cin);
  for (Eigen::Index o = 0; o < To; ++o) {
    for (int j = 0; j < k; ++j) {
      Eigen::Index src = o * stride + j - pad;
      if (src >= 0 && src < T) cols.row(o).segment(j * cin, cin) = x->val.row(src);
    }
  }
  Mat<S> v = cols * weight->val;
  v.rowwise() += bias->val.row(0);
  Node<S>* n = t.alloc(std::move(v));
  n->rg = x->rg || weight->rg || bias->rg;
  if (n->rg)
    n->back = [n, x, weight, bias, k, stride, pad, T, cin, To, cols = std::move(cols)] {
      if (bias->rg) bias->add_grad_expr(n->grad.colwise().sum());
      if (weight->rg) {
        Mat<S> gw = cols.transpose() * n->grad;
        weight->add_grad(gw);
      }
      if (x->rg) {
        Mat<S> gcols = n->grad * weight->val.transpose();
        if (!x->has_grad()) x->grad = Mat<S>::Zero(T, cin);
        for (Eigen::Index o = 0; o < To; ++o) {
          for (int j = 0; j < k; ++j) {
            Eigen::Index src = o * stride + j - pad;
            if (src >= 0 && src < T) x->grad.row(src) += gcols.row(o).segment(j * cin, cin);
          }
        }
      }
    };
  return n;
}

// Nearest-neighbour factor-2 upsampling along rows, cropped to target_len.
template <typename S>
Var<S> upsample2_rows(Tape<S>& t, Var<S> x, Eigen::Index target_len) {
  Eigen::Index T = x->val.rows(), d = x->val.cols();
  if (target_len > 2 * T) throw std::invalid_argument("upsample2_rows: target too long");
  Mat<S> v(target_len, d);
  for (Eigen::Index i = 0; i < target_len; ++i) v.row(i) = x->val.row(i / 2);
  Node<S>* n = t.alloc(std::move(v));
  n->rg = x->rg;
  if (n->rg)
    n->back = [n, x, target_len, T, d] {
      if (!x->has_grad()) x->grad = Mat<S>::Zero(T, d);
      for (Eigen::Index i = 0; i < target_len; ++i) x->grad.row(i / 2) += n->grad.row(i);
    };
  return n;
}

// Adaptive max pooling along rows to out_len bins. Bin j covers
// [floor(j*T/L), ceil((j+1)*T/L)).
template <typename S>
Var<S> adaptive_max_pool_rows(Tape<S>& t, Var<S> x, Eigen::Index out_len) {
  Eigen::Index T = x->val.rows(), d = x->val.cols();
  Mat<S> v(out_len, d);
  Eigen::Matrix<Eigen::Index, Eigen::Dynamic, Eigen::Dynamic> arg(out_len, d);
  for (Eigen::Index j = 0; j < out_len; ++j) {
    Eigen::Index lo = (j * T) / out_len;
    Eigen::Index hi = ((j + 1) * T + out_len - 1) / out_len;
    hi = std::max(hi, lo + 1);
    for (Eigen::Index c = 0; c < d; ++c) {
      Eigen::Index best = lo;
      for (Eigen::Index i = lo + 1; i < hi; ++i)
        if (x->val(i, c) > x->val(best, c)) best = i;
      v(j, c) = x->val(best, c);
      arg(j, c) = best;
    }
  }
  Node<S>* n = t.alloc(std::move(v));
  n->rg = x->rg;
  if (n->rg)
    n->back = [n, x, arg = std::move(arg), T, d] {
      if (!x->has_grad()) x->grad = Mat<S>::Zero(T, d);
      for (Eigen::Index j = 0; j < n->val.rows(); ++j)
        for (Eigen::Index c = 0; c < d; ++c) x->grad(arg(j, c), c) += n->grad(j, c);
    };
  return n;
}

// Additive causal attention mask: 0 on and below the diagonal, -inf above.
template <typename S>
Mat<S> causal_mask(Eigen::Index T) {
  Mat<S> m = Mat<S>::Zero(T, T);
  S ninf = -std::numeric_limits<S>::infinity();
  for (Eigen::Index i = 0; i < T; ++i)
    for (Eigen::Index j = i + 1; j < T; ++j) m(i, j) = ninf;
  return m;
}

}  // namespace mpdf::ad
