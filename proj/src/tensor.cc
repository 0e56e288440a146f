//
// Project hiergen - Copyright 2026 hiergen authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "hiergen/tensor.h"

#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

#include "hiergen/error.h"

namespace hiergen::nn {

template <class S>
int ParamStore<S>::add(const std::string &name, int rows, int cols) {
  if (index_.count(name) != 0)
    throw Error(ErrorKind::kConfig, "duplicate parameter " + name);
  int id = size();
  Parameter<S> p;
  p.name = name;
  p.value = Matrix<S>::Zero(rows, cols);
  p.grad = Matrix<S>::Zero(rows, cols);
  p.m = Matrix<S>::Zero(rows, cols);
  p.v = Matrix<S>::Zero(rows, cols);
  params_.push_back(std::move(p));
  index_.emplace(name, id);
  return id;
}

template <class S>
int ParamStore<S>::find(const std::string &name) const {
  auto it = index_.find(name);
  return it == index_.end() ? -1 : it->second;
}

template <class S>
int ParamStore<S>::require(const std::string &name) const {
  int id = find(name);
  if (id < 0)
    throw Error(ErrorKind::kConfig, "unknown parameter " + name);
  return id;
}

template <class S>
void ParamStore<S>::zero_grad() {
  for (Parameter<S> &p: params_)
    p.grad.setZero();
}

template <class S>
long ParamStore<S>::num_values() const {
  long n = 0;
  for (const Parameter<S> &p: params_)
    n += p.value.size();
  return n;
}

template <class S>
void ParamStore<S>::init_uniform(int i, std::mt19937_64 &rng) {
  Matrix<S> &w = params_[i].value;
  double bound = 1.0 / std::sqrt(static_cast<double>(std::max<Eigen::Index>(
                     w.rows(), 1)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index k = 0; k < w.size(); ++k)
    w.data()[k] = static_cast<S>(dist(rng));
}

template <class S>
void ParamStore<S>::init_normal(int i, double stddev, std::mt19937_64 &rng) {
  Matrix<S> &w = params_[i].value;
  std::normal_distribution<double> dist(0.0, stddev);
  for (Eigen::Index k = 0; k < w.size(); ++k)
    w.data()[k] = static_cast<S>(dist(rng));
}

template <class S>
Matrix<S> &Tape<S>::grad(int id) {
  Node &n = nodes_[id];
  if (n.grad.size() != n.value.size())
    n.grad = Matrix<S>::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

template <class S>
Var<S> Tape<S>::push(Matrix<S> value, bool tracked,
                     std::function<void(int)> backward) {
  Node n;
  n.value = std::move(value);
  n.tracked = tracked && record_;
  if (n.tracked)
    n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var<S>{this, static_cast<int>(nodes_.size()) - 1};
}

template <class S>
Var<S> Tape<S>::constant(Matrix<S> value) {
  return push(std::move(value), false, nullptr);
}

template <class S>
Var<S> Tape<S>::constant(int rows, int cols, S fill) {
  return constant(Matrix<S>::Constant(rows, cols, fill));
}

template <class S>
Var<S> Tape<S>::param(ParamStore<S> &store, int index) {
  auto key = std::make_pair(static_cast<const ParamStore<S> *>(&store), index);
  auto it = param_cache_.find(key);
  if (it != param_cache_.end())
    return Var<S>{this, it->second};
  Var<S> v = push(store[index].value, true, nullptr);
  param_cache_.emplace(key, v.id);
  if (record_)
    param_nodes_.push_back({v.id, &store, index});
  return v;
}

template <class S>
void Tape<S>::backward(Var<S> loss) {
  if (loss.tape != this || loss.value().size() != 1)
    throw Error(ErrorKind::kNotScalar, "backward needs a scalar loss");
  if (!nodes_[loss.id].tracked)
    return;
  grad(loss.id)(0, 0) += S(1);
  for (int i = loss.id; i >= 0; --i) {
    Node &n = nodes_[i];
    if (n.backward && n.grad.size() != 0)
      n.backward(i);
  }
  for (const ParamRef &p: param_nodes_) {
    Node &n = nodes_[p.node];
    if (n.grad.size() != 0)
      (*p.store)[p.index].grad += n.grad;
  }
}

namespace {

[[noreturn]] void shape_error(const char *op) {
  throw Error(ErrorKind::kShapeMismatch, std::string("shape mismatch in ")
                                             + op);
}

template <class S>
bool same_shape(const Matrix<S> &a, const Matrix<S> &b) {
  return a.rows() == b.rows() && a.cols() == b.cols();
}

template <class S>
bool any_tracked(Var<S> a, Var<S> b) {
  return a.tape->tracked(a.id) || b.tape->tracked(b.id);
}

template <class S>
void check_tape(Var<S> a, Var<S> b, const char *op) {
  if (a.tape != b.tape || a.tape == nullptr)
    shape_error(op);
}

}  // namespace

template <class S>
Var<S> matmul(Var<S> a, Var<S> b) {
  check_tape(a, b, "matmul");
  if (a.cols() != b.rows())
    shape_error("matmul");
  Tape<S> *t = a.tape;
  int ia = a.id, ib = b.id;
  return t->push(a.value() * b.value(), any_tracked(a, b), [t, ia, ib](int r) {
    const Matrix<S> &g = t->grad(r);
    if (t->tracked(ia))
      t->grad(ia).noalias() += g * t->value(ib).transpose();
    if (t->tracked(ib))
      t->grad(ib).noalias() += t->value(ia).transpose() * g;
  });
}

template <class S>
Var<S> add(Var<S> a, Var<S> b) {
  check_tape(a, b, "add");
  if (!same_shape(a.value(), b.value()))
    shape_error("add");
  Tape<S> *t = a.tape;
  int ia = a.id, ib = b.id;
  return t->push(a.value() + b.value(), any_tracked(a, b), [t, ia, ib](int r) {
    const Matrix<S> &g = t->grad(r);
    if (t->tracked(ia))
      t->grad(ia) += g;
    if (t->tracked(ib))
      t->grad(ib) += g;
  });
}

template <class S>
Var<S> sub(Var<S> a, Var<S> b) {
  check_tape(a, b, "sub");
  if (!same_shape(a.value(), b.value()))
    shape_error("sub");
  Tape<S> *t = a.tape;
  int ia = a.id, ib = b.id;
  return t->push(a.value() - b.value(), any_tracked(a, b), [t, ia, ib](int r) {
    const Matrix<S> &g = t->grad(r);
    if (t->tracked(ia))
      t->grad(ia) += g;
    if (t->tracked(ib))
      t->grad(ib) -= g;
  });
}

template <class S>
Var<S> mul(Var<S> a, Var<S> b) {
  check_tape(a, b, "mul");
  if (!same_shape(a.value(), b.value()))
    shape_error("mul");
  Tape<S> *t = a.tape;
  int ia = a.id, ib = b.id;
  Matrix<S> out = a.value().cwiseProduct(b.value());
  return t->push(std::move(out), any_tracked(a, b), [t, ia, ib](int r) {
    const Matrix<S> &g = t->grad(r);
    if (t->tracked(ia))
      t->grad(ia) += g.cwiseProduct(t->value(ib));
    if (t->tracked(ib))
      t->grad(ib) += g.cwiseProduct(t->value(ia));
  });
}

template <class S>
Var<S> add_row(Var<S> a, Var<S> b) {
  check_tape(a, b, "add_row");
  if (b.rows() != 1 || b.cols() != a.cols())
    shape_error("add_row");
  Tape<S> *t = a.tape;
  int ia = a.id, ib = b.id;
  Matrix<S> out = a.value();
  out.rowwise() += b.value().row(0);
  return t->push(std::move(out), any_tracked(a, b), [t, ia, ib](int r) {
    const Matrix<S> &g = t->grad(r);
    if (t->tracked(ia))
      t->grad(ia) += g;
    if (t->tracked(ib))
      t->grad(ib) += g.colwise().sum();
  });
}

template <class S>
Var<S> scale(Var<S> a, S factor) {
  Tape<S> *t = a.tape;
  int ia = a.id;
  return t->push(a.value() * factor, t->tracked(ia), [t, ia, factor](int r) {
    t->grad(ia) += t->grad(r) * factor;
  });
}

template <class S>
Var<S> sigmoid(Var<S> a) {
  Tape<S> *t = a.tape;
  int ia = a.id;
  Matrix<S> out = a.value().unaryExpr(
      [](S x) { return S(1) / (S(1) + std::exp(-x)); });
  return t->push(std::move(out), t->tracked(ia), [t, ia](int r) {
    const Matrix<S> &y = t->value(r);
    t->grad(ia).array() += t->grad(r).array() * y.array() * (S(1) - y.array());
  });
}

template <class S>
Var<S> tanh(Var<S> a) {
  Tape<S> *t = a.tape;
  int ia = a.id;
  Matrix<S> out = a.value().array().tanh().matrix();
  return t->push(std::move(out), t->tracked(ia), [t, ia](int r) {
    const Matrix<S> &y = t->value(r);
    t->grad(ia).array() += t->grad(r).array() * (S(1) - y.array().square());
  });
}

template <class S>
Var<S> relu(Var<S> a) {
  Tape<S> *t = a.tape;
  int ia = a.id;
  Matrix<S> out = a.value().cwiseMax(S(0));
  const S *x = a.value().data();
  for (Eigen::Index k = 0; k < a.value().size(); ++k)
    t->mix_kinks(x[k] > S(0) ? 2 * k + 1 : 2 * k);
  return t->push(std::move(out), t->tracked(ia), [t, ia](int r) {
    const Matrix<S> &x = t->value(ia);
    t->grad(ia).array() += (x.array() > S(0)).select(t->grad(r).array(), S(0));
  });
}

template <class S>
Var<S> exp(Var<S> a) {
  Tape<S> *t = a.tape;
  int ia = a.id;
  Matrix<S> out = a.value().array().exp().matrix();
  return t->push(std::move(out), t->tracked(ia), [t, ia](int r) {
    t->grad(ia).array() += t->grad(r).array() * t->value(r).array();
  });
}

template <class S>
Var<S> log(Var<S> a) {
  Tape<S> *t = a.tape;
  int ia = a.id;
  Matrix<S> out = a.value().array().log().matrix();
  return t->push(std::move(out), t->tracked(ia), [t, ia](int r) {
    t->grad(ia).array() += t->grad(r).array() / t->value(ia).array();
  });
}

template <class S>
Var<S> transpose(Var<S> a) {
  Tape<S> *t = a.tape;
  int ia = a.id;
  Matrix<S> out = a.value().transpose();
  return t->push(std::move(out), t->tracked(ia), [t, ia](int r) {
    t->grad(ia) += t->grad(r).transpose();
  });
}

template <class S>
Var<S> concat_cols(std::span<const Var<S>> parts) {
  if (parts.empty())
    shape_error("concat_cols");
  Tape<S> *t = parts[0].tape;
  int rows = parts[0].rows(), cols = 0;
  bool tracked = false;
  std::vector<int> ids;
  for (Var<S> p: parts) {
    if (p.tape != t || p.rows() != rows)
      shape_error("concat_cols");
    cols += p.cols();
    tracked = tracked || t->tracked(p.id);
    ids.push_back(p.id);
  }
  Matrix<S> out(rows, cols);
  int c = 0;
  for (Var<S> p: parts) {
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  return t->push(std::move(out), tracked, [t, ids](int r) {
    int c = 0;
    for (int id: ids) {
      int w = static_cast<int>(t->value(id).cols());
      if (t->tracked(id))
        t->grad(id) += t->grad(r).middleCols(c, w);
      c += w;
    }
  });
}

template <class S>
Var<S> concat_rows(std::span<const Var<S>> parts) {
  if (parts.empty())
    shape_error("concat_rows");
  Tape<S> *t = parts[0].tape;
  int rows = 0, cols = parts[0].cols();
  bool tracked = false;
  std::vector<int> ids;
  for (Var<S> p: parts) {
    if (p.tape != t || p.cols() != cols)
      shape_error("concat_rows");
    rows += p.rows();
    tracked = tracked || t->tracked(p.id);
    ids.push_back(p.id);
  }
  Matrix<S> out(rows, cols);
  int r0 = 0;
  for (Var<S> p: parts) {
    out.middleRows(r0, p.rows()) = p.value();
    r0 += p.rows();
  }
  return t->push(std::move(out), tracked, [t, ids](int r) {
    int r0 = 0;
    for (int id: ids) {
      int h = static_cast<int>(t->value(id).rows());
      if (t->tracked(id))
        t->grad(id) += t->grad(r).middleRows(r0, h);
      r0 += h;
    }
  });
}

template <class S>
Var<S> slice_cols(Var<S> a, int start, int count) {
  if (start < 0 || count < 0 || start + count > a.cols())
    shape_error("slice_cols");
  Tape<S> *t = a.tape;
  int ia = a.id;
  Matrix<S> out = a.value().middleCols(start, count);
  return t->push(std::move(out), t->tracked(ia), [t, ia, start, count](int r) {
    t->grad(ia).middleCols(start, count) += t->grad(r);
  });
}

template <class S>
Var<S> slice_rows(Var<S> a, int start, int count) {
  if (start < 0 || count < 0 || start + count > a.rows())
    shape_error("slice_rows");
  Tape<S> *t = a.tape;
  int ia = a.id;
  Matrix<S> out = a.value().middleRows(start, count);
  return t->push(std::move(out), t->tracked(ia), [t, ia, start, count](int r) {
    t->grad(ia).middleRows(start, count) += t->grad(r);
  });
}

template <class S>
Var<S> gather_rows(Var<S> a, std::span<const int> rows) {
  Tape<S> *t = a.tape;
  int ia = a.id;
  const Matrix<S> &x = a.value();
  Matrix<S> out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= x.rows())
      shape_error("gather_rows");
    out.row(i) = x.row(rows[i]);
  }
  std::vector<int> idx(rows.begin(), rows.end());
  return t->push(std::move(out), t->tracked(ia), [t, ia, idx](int r) {
    Matrix<S> &ga = t->grad(ia);
    const Matrix<S> &g = t->grad(r);
    for (std::size_t i = 0; i < idx.size(); ++i)
      ga.row(idx[i]) += g.row(i);
  });
}

template <class S>
Var<S> segment_sum(Var<S> a, std::span<const int> segments,
                   int num_segments) {
  if (static_cast<int>(segments.size()) != a.rows())
    shape_error("segment_sum");
  Tape<S> *t = a.tape;
  int ia = a.id;
  const Matrix<S> &x = a.value();
  Matrix<S> out = Matrix<S>::Zero(num_segments, x.cols());
  for (std::size_t i = 0; i < segments.size(); ++i) {
    if (segments[i] < 0 || segments[i] >= num_segments)
      shape_error("segment_sum");
    out.row(segments[i]) += x.row(i);
  }
  std::vector<int> seg(segments.begin(), segments.end());
  return t->push(std::move(out), t->tracked(ia), [t, ia, seg](int r) {
    Matrix<S> &ga = t->grad(ia);
    const Matrix<S> &g = t->grad(r);
    for (std::size_t i = 0; i < seg.size(); ++i)
      ga.row(i) += g.row(seg[i]);
  });
}

template <class S>
Var<S> sum_rows(Var<S> a) {
  Tape<S> *t = a.tape;
  int ia = a.id;
  Matrix<S> out = a.value().colwise().sum();
  if (a.rows() == 0)
    out = Matrix<S>::Zero(1, a.cols());
  return t->push(std::move(out), t->tracked(ia), [t, ia](int r) {
    t->grad(ia).rowwise() += t->grad(r).row(0);
  });
}

template <class S>
Var<S> sum_all(Var<S> a) {
  Tape<S> *t = a.tape;
  int ia = a.id;
  Matrix<S> out(1, 1);
  out(0, 0) = a.value().sum();
  return t->push(std::move(out), t->tracked(ia), [t, ia](int r) {
    t->grad(ia).array() += t->grad(r)(0, 0);
  });
}

template <class S>
Var<S> dot_rows(Var<S> a, Var<S> b) {
  check_tape(a, b, "dot_rows");
  if (!same_shape(a.value(), b.value()))
    shape_error("dot_rows");
  Tape<S> *t = a.tape;
  int ia = a.id, ib = b.id;
  Matrix<S> out = a.value().cwiseProduct(b.value()).rowwise().sum();
  return t->push(std::move(out), any_tracked(a, b), [t, ia, ib](int r) {
    const Matrix<S> &g = t->grad(r);
    if (t->tracked(ia))
      t->grad(ia) += (t->value(ib).array().colwise() * g.col(0).array())
                         .matrix();
    if (t->tracked(ib))
      t->grad(ib) += (t->value(ia).array().colwise() * g.col(0).array())
                         .matrix();
  });
}

template <class S>
Var<S> softmax(Var<S> a) {
  Tape<S> *t = a.tape;
  int ia = a.id;
  Matrix<S> out = a.value();
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    S mx = out.row(i).maxCoeff();
    out.row(i) = (out.row(i).array() - mx).exp().matrix();
    out.row(i) /= out.row(i).sum();
  }
  return t->push(std::move(out), t->tracked(ia), [t, ia](int r) {
    const Matrix<S> &y = t->value(r);
    const Matrix<S> &g = t->grad(r);
    Matrix<S> &ga = t->grad(ia);
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
      S dot = y.row(i).dot(g.row(i));
      ga.row(i).array() += y.row(i).array() * (g.row(i).array() - dot);
    }
  });
}

template <class S>
Var<S> softmax_xent(Var<S> logits, int target, std::span<const char> mask) {
  const Matrix<S> &x = logits.value();
  int k = static_cast<int>(x.cols());
  if (x.rows() != 1 || target < 0 || target >= k
      || (!mask.empty() && static_cast<int>(mask.size()) != k))
    shape_error("softmax_xent");
  if (!mask.empty() && !mask[target])
    shape_error("softmax_xent");
  auto on = [&mask](int j) { return mask.empty() || mask[j] != 0; };
  S mx = -std::numeric_limits<S>::infinity();
  for (int j = 0; j < k; ++j)
    if (on(j))
      mx = std::max(mx, x(0, j));
  Matrix<S> p = Matrix<S>::Zero(1, k);
  S z = 0;
  for (int j = 0; j < k; ++j)
    if (on(j)) {
      p(0, j) = std::exp(x(0, j) - mx);
      z += p(0, j);
    }
  p /= z;
  Matrix<S> out(1, 1);
  out(0, 0) = mx + std::log(z) - x(0, target);
  Tape<S> *t = logits.tape;
  int ia = logits.id;
  return t->push(std::move(out), t->tracked(ia), [t, ia, p, target](int r) {
    S g = t->grad(r)(0, 0);
    Matrix<S> &ga = t->grad(ia);
    ga += g * p;
    ga(0, target) -= g;
  });
}

template <class S>
Var<S> softmax_xent_rows(Var<S> logits, std::span<const int> targets,
                         std::span<const char> mask) {
  const Matrix<S> &x = logits.value();
  int n = static_cast<int>(x.rows());
  int k = static_cast<int>(x.cols());
  if (static_cast<int>(targets.size()) != n
      || (!mask.empty() && static_cast<long>(mask.size()) != long(n) * k))
    shape_error("softmax_xent_rows");
  auto on = [&](int i, int j) {
    return mask.empty() || mask[static_cast<std::size_t>(i) * k + j] != 0;
  };
  Matrix<S> p = Matrix<S>::Zero(n, k);
  S loss = 0;
  for (int i = 0; i < n; ++i) {
    int tg = targets[i];
    if (tg < 0 || tg >= k || !on(i, tg))
      shape_error("softmax_xent_rows");
    S mx = -std::numeric_limits<S>::infinity();
    for (int j = 0; j < k; ++j)
      if (on(i, j))
        mx = std::max(mx, x(i, j));
    S z = 0;
    for (int j = 0; j < k; ++j)
      if (on(i, j)) {
        p(i, j) = std::exp(x(i, j) - mx);
        z += p(i, j);
      }
    p.row(i) /= z;
    loss += mx + std::log(z) - x(i, tg);
  }
  Matrix<S> out(1, 1);
  out(0, 0) = loss;
  Tape<S> *t = logits.tape;
  int ia = logits.id;
  std::vector<int> tg(targets.begin(), targets.end());
  return t->push(std::move(out), t->tracked(ia), [t, ia, p, tg](int r) {
    S g = t->grad(r)(0, 0);
    Matrix<S> &ga = t->grad(ia);
    ga += g * p;
    for (std::size_t i = 0; i < tg.size(); ++i)
      ga(static_cast<Eigen::Index>(i), tg[i]) -= g;
  });
}

template <class S>
Var<S> sigmoid_xent(Var<S> logits, std::span<const int> targets) {
  const Matrix<S> &x = logits.value();
  if (x.cols() != 1 || x.rows() != static_cast<Eigen::Index>(targets.size()))
    shape_error("sigmoid_xent");
  S loss = 0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    S v = x(i, 0);
    loss += std::max(v, S(0)) - v * S(targets[i])
            + std::log1p(std::exp(-std::abs(v)));
  }
  Matrix<S> out(1, 1);
  out(0, 0) = loss;
  Tape<S> *t = logits.tape;
  int ia = logits.id;
  std::vector<int> tg(targets.begin(), targets.end());
  return t->push(std::move(out), t->tracked(ia), [t, ia, tg](int r) {
    S g = t->grad(r)(0, 0);
    const Matrix<S> &x = t->value(ia);
    Matrix<S> &ga = t->grad(ia);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      S s = S(1) / (S(1) + std::exp(-x(i, 0)));
      ga(i, 0) += g * (s - S(tg[i]));
    }
  });
}

template <class S>
std::vector<double> softmax_probs(const Matrix<S> &row,
                                  std::span<const char> mask) {
  int k = static_cast<int>(row.size());
  auto on = [&mask](int j) { return mask.empty() || mask[j] != 0; };
  double mx = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < k; ++j)
    if (on(j))
      mx = std::max(mx, static_cast<double>(row.data()[j]));
  std::vector<double> p(k, 0.0);
  double z = 0;
  for (int j = 0; j < k; ++j)
    if (on(j)) {
      p[j] = std::exp(static_cast<double>(row.data()[j]) - mx);
      z += p[j];
    }
  if (z > 0)
    for (double &v: p)
      v /= z;
  return p;
}

template <class S>
void adam_step(ParamStore<S> &store, const AdamConfig &config) {
  long t = store.adam_steps() + 1;
  store.set_adam_steps(t);
  double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(t));
  double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(t));
  S b1 = static_cast<S>(config.beta1), b2 = static_cast<S>(config.beta2);
  for (int i = 0; i < store.size(); ++i) {
    Parameter<S> &p = store[i];
    p.m = b1 * p.m + (S(1) - b1) * p.grad;
    p.v = b2 * p.v + (S(1) - b2) * p.grad.cwiseProduct(p.grad);
    auto mhat = p.m.array() / static_cast<S>(c1);
    auto vhat = p.v.array() / static_cast<S>(c2);
    p.value.array() -= static_cast<S>(config.lr) * mhat
                       / (vhat.sqrt() + static_cast<S>(config.eps));
  }
}

namespace {

const char kMagic[4] = {'H', 'G', 'C', 'K'};
const char kStepsEntry[] = "@adam.steps";

void put_u32(std::ostream &out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i)
    b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 4);
}

void put_u64(std::ostream &out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i)
    b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 8);
}

std::uint64_t get_uint(std::istream &in, int bytes) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char *>(b), bytes))
    throw Error(ErrorKind::kFormat, "truncated checkpoint");
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i)
    v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

template <class S>
void put_entry(std::ostream &out, const std::string &name,
               const Matrix<S> &m) {
  put_u32(out, static_cast<std::uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  put_u32(out, 2);
  put_u64(out, static_cast<std::uint64_t>(m.rows()));
  put_u64(out, static_cast<std::uint64_t>(m.cols()));
  for (Eigen::Index k = 0; k < m.size(); ++k) {
    float f = static_cast<float>(m.data()[k]);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(out, bits);
  }
}

struct Entry {
  std::string name;
  std::vector<std::uint64_t> dims;
  std::vector<float> values;
};

Entry get_entry(std::istream &in) {
  Entry e;
  std::uint64_t len = get_uint(in, 4);
  if (len > (1u << 20))
    throw Error(ErrorKind::kFormat, "checkpoint name too long");
  e.name.resize(len);
  if (!in.read(e.name.data(), static_cast<std::streamsize>(len)))
    throw Error(ErrorKind::kFormat, "truncated checkpoint");
  std::uint64_t rank = get_uint(in, 4);
  if (rank > 8)
    throw Error(ErrorKind::kFormat, "checkpoint rank too large");
  std::uint64_t n = 1;
  for (std::uint64_t r = 0; r < rank; ++r) {
    e.dims.push_back(get_uint(in, 8));
    n *= e.dims.back();
  }
  if (n > (1ull << 32))
    throw Error(ErrorKind::kFormat, "checkpoint entry too large");
  e.values.resize(n);
  for (std::uint64_t k = 0; k < n; ++k) {
    auto bits = static_cast<std::uint32_t>(get_uint(in, 4));
    std::memcpy(&e.values[k], &bits, 4);
  }
  return e;
}

}  // namespace

template <class S>
void write_checkpoint(std::ostream &out, const ParamStore<S> &store) {
  out.write(kMagic, 4);
  put_u32(out, kCheckpointVersion);
  put_u64(out, static_cast<std::uint64_t>(3 * store.size() + 1));
  for (int i = 0; i < store.size(); ++i) {
    const Parameter<S> &p = store[i];
    put_entry(out, p.name, p.value);
    put_entry(out, p.name + ".m", p.m);
    put_entry(out, p.name + ".v", p.v);
  }
  Matrix<S> steps(1, 1);
  steps(0, 0) = static_cast<S>(store.adam_steps());
  put_entry(out, kStepsEntry, steps);
  if (!out)
    throw Error(ErrorKind::kIo, "failed to write checkpoint");
}

template <class S>
void read_checkpoint(std::istream &in, ParamStore<S> &store) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw Error(ErrorKind::kFormat, "not a checkpoint");
  auto version = static_cast<std::uint32_t>(get_uint(in, 4));
  if (version != kCheckpointVersion)
    throw Error(ErrorKind::kVersionMismatch,
                "checkpoint version " + std::to_string(version));
  std::uint64_t count = get_uint(in, 8);
  std::vector<bool> seen(store.size(), false);
  for (std::uint64_t c = 0; c < count; ++c) {
    Entry e = get_entry(in);
    if (e.name == kStepsEntry) {
      if (e.values.size() != 1)
        throw Error(ErrorKind::kFormat, "bad optimizer step entry");
      store.set_adam_steps(static_cast<long>(e.values[0]));
      continue;
    }
    std::string base = e.name;
    int slot = 0;
    int id = store.find(base);
    if (id < 0 && base.size() > 2 && base[base.size() - 2] == '.') {
      char suffix = base.back();
      base.resize(base.size() - 2);
      id = store.find(base);
      slot = suffix == 'm' ? 1 : suffix == 'v' ? 2 : -1;
    }
    if (id < 0 || slot < 0)
      throw Error(ErrorKind::kFormat, "unknown checkpoint entry " + e.name);
    Parameter<S> &p = store[id];
    if (e.dims.size() != 2 || e.dims[0] != std::uint64_t(p.value.rows())
        || e.dims[1] != std::uint64_t(p.value.cols()))
      throw Error(ErrorKind::kFormat, "shape mismatch for " + e.name);
    Matrix<S> &dst = slot == 0 ? p.value : slot == 1 ? p.m : p.v;
    for (std::size_t k = 0; k < e.values.size(); ++k)
      dst.data()[k] = static_cast<S>(e.values[k]);
    if (slot == 0)
      seen[id] = true;
  }
  for (int i = 0; i < store.size(); ++i)
    if (!seen[i])
      throw Error(ErrorKind::kFormat, "checkpoint lacks " + store[i].name);
}

template <class S>
void save_checkpoint(const std::string &path, const ParamStore<S> &store) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw Error(ErrorKind::kIo, "cannot write " + path);
  write_checkpoint(out, store);
}

template <class S>
void load_checkpoint(const std::string &path, ParamStore<S> &store) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Error(ErrorKind::kIo, "cannot read " + path);
  read_checkpoint(in, store);
}

#define HIERGEN_INSTANTIATE(S)                                               \
  template class ParamStore<S>;                                              \
  template class Tape<S>;                                                    \
  template Var<S> matmul(Var<S>, Var<S>);                                    \
  template Var<S> add(Var<S>, Var<S>);                                       \
  template Var<S> sub(Var<S>, Var<S>);                                       \
  template Var<S> mul(Var<S>, Var<S>);                                       \
  template Var<S> add_row(Var<S>, Var<S>);                                   \
  template Var<S> scale(Var<S>, S);                                          \
  template Var<S> sigmoid(Var<S>);                                           \
  template Var<S> tanh(Var<S>);                                              \
  template Var<S> relu(Var<S>);                                              \
  template Var<S> exp(Var<S>);                                               \
  template Var<S> log(Var<S>);                                               \
  template Var<S> transpose(Var<S>);                                         \
  template Var<S> concat_cols(std::span<const Var<S>>);                      \
  template Var<S> concat_rows(std::span<const Var<S>>);                      \
  template Var<S> slice_cols(Var<S>, int, int);                              \
  template Var<S> slice_rows(Var<S>, int, int);                              \
  template Var<S> gather_rows(Var<S>, std::span<const int>);                 \
  template Var<S> segment_sum(Var<S>, std::span<const int>, int);            \
  template Var<S> sum_rows(Var<S>);                                          \
  template Var<S> sum_all(Var<S>);                                           \
  template Var<S> dot_rows(Var<S>, Var<S>);                                  \
  template Var<S> softmax(Var<S>);                                           \
  template Var<S> softmax_xent(Var<S>, int, std::span<const char>);          \
  template Var<S> softmax_xent_rows(Var<S>, std::span<const int>,           \
                                    std::span<const char>);                 \
  template Var<S> sigmoid_xent(Var<S>, std::span<const int>);                \
  template std::vector<double> softmax_probs(const Matrix<S> &,              \
                                             std::span<const char>);         \
  template void adam_step(ParamStore<S> &, const AdamConfig &);              \
  template void write_checkpoint(std::ostream &, const ParamStore<S> &);     \
  template void read_checkpoint(std::istream &, ParamStore<S> &);            \
  template void save_checkpoint(const std::string &, const ParamStore<S> &); \
  template void load_checkpoint(const std::string &, ParamStore<S> &);

HIERGEN_INSTANTIATE(float)
HIERGEN_INSTANTIATE(double)

#undef HIERGEN_INSTANTIATE

}  // namespace hiergen::nn
