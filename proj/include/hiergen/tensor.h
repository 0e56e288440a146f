//
// Project hiergen - Copyright 2026 hiergen authors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef HIERGEN_TENSOR_H_
#define HIERGEN_TENSOR_H_

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace hiergen::nn {

template <class S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class S>
struct Parameter {
  std::string name;
  Matrix<S> value;
  Matrix<S> grad;
  // Adam first and second moments.
  Matrix<S> m;
  Matrix<S> v;
};

// Named trainable parameters with their gradient and optimizer buffers.
template <class S>
class ParamStore {
public:
  // Registers a zero-initialized parameter. Names must be unique.
  int add(const std::string &name, int rows, int cols);

  // Index of `name`, or -1.
  int find(const std::string &name) const;
  // Index of `name`; throws Error(kConfig) when missing.
  int require(const std::string &name) const;

  int size() const { return static_cast<int>(params_.size()); }
  Parameter<S> &operator[](int i) { return params_[i]; }
  const Parameter<S> &operator[](int i) const { return params_[i]; }

  void zero_grad();
  // Total number of scalar entries.
  long num_values() const;

  // uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) with fan_in = rows.
  void init_uniform(int i, std::mt19937_64 &rng);
  void init_normal(int i, double stddev, std::mt19937_64 &rng);

  long adam_steps() const { return adam_steps_; }
  void set_adam_steps(long t) { adam_steps_ = t; }

  template <class T>
  ParamStore<T> cast() const {
    ParamStore<T> out;
    for (const Parameter<S> &p: params_) {
      int id = out.add(p.name, p.value.rows(), p.value.cols());
      out[id].value = p.value.template cast<T>();
      out[id].m = p.m.template cast<T>();
      out[id].v = p.v.template cast<T>();
    }
    out.set_adam_steps(adam_steps_);
    return out;
  }

private:
  std::vector<Parameter<S>> params_;
  std::unordered_map<std::string, int> index_;
  long adam_steps_ = 0;
};

template <class S>
class Tape;

// Handle to a value recorded on a tape.
template <class S>
struct Var {
  Tape<S> *tape = nullptr;
  int id = -1;

  const Matrix<S> &value() const;
  int rows() const { return static_cast<int>(value().rows()); }
  int cols() const { return static_cast<int>(value().cols()); }
  S scalar() const { return value()(0, 0); }
  bool valid() const { return tape != nullptr; }
};

// Records forward values and adjoint rules. A tape constructed with
// record = false evaluates values only.
template <class S>
class Tape {
public:
  explicit Tape(bool record = true): record_(record) { }
  Tape(const Tape &) = delete;
  Tape &operator=(const Tape &) = delete;

  bool recording() const { return record_; }

  Var<S> constant(Matrix<S> value);
  Var<S> constant(int rows, int cols, S fill);
  // The same parameter maps to one node per tape.
  Var<S> param(ParamStore<S> &store, int index);
  Var<S> param(ParamStore<S> &store, const std::string &name) {
    return param(store, store.require(name));
  }

  // Adds d loss / d param into the store. Throws Error(kNotScalar).
  void backward(Var<S> loss);

  int size() const { return static_cast<int>(nodes_.size()); }

  // Hash of the sign pattern of every relu input seen so far; identical
  // hashes mean the evaluations share one linear piece.
  std::uint64_t kink_signature() const { return kink_signature_; }
  void mix_kinks(std::uint64_t h) {
    kink_signature_ = (kink_signature_ ^ h) * 0x100000001b3ULL;
  }

  // Used by op implementations.
  struct Node {
    Matrix<S> value;
    Matrix<S> grad;
    // Called with the node's own id.
    std::function<void(int)> backward;
    bool tracked = false;
  };

  const Matrix<S> &value(int id) const { return nodes_[id].value; }
  bool tracked(int id) const { return nodes_[id].tracked; }
  // Gradient buffer, zero-initialized on first access.
  Matrix<S> &grad(int id);
  Var<S> push(Matrix<S> value, bool tracked,
              std::function<void(int)> backward);

private:
  bool record_;
  std::uint64_t kink_signature_ = 0xcbf29ce484222325ULL;
  std::vector<Node> nodes_;
  struct ParamRef {
    int node;
    ParamStore<S> *store;
    int index;
  };
  std::vector<ParamRef> param_nodes_;
  std::map<std::pair<const ParamStore<S> *, int>, int> param_cache_;
};

template <class S>
const Matrix<S> &Var<S>::value() const {
  return tape->value(id);
}

// Core ops. Shape violations throw Error(kShapeMismatch).
template <class S>
Var<S> matmul(Var<S> a, Var<S> b);
template <class S>
Var<S> add(Var<S> a, Var<S> b);
template <class S>
Var<S> sub(Var<S> a, Var<S> b);
template <class S>
Var<S> mul(Var<S> a, Var<S> b);
// a (n x c) plus the row vector b (1 x c) on every row.
template <class S>
Var<S> add_row(Var<S> a, Var<S> b);
template <class S>
Var<S> scale(Var<S> a, S factor);
template <class S>
Var<S> sigmoid(Var<S> a);
template <class S>
Var<S> tanh(Var<S> a);
template <class S>
Var<S> relu(Var<S> a);
template <class S>
Var<S> exp(Var<S> a);
template <class S>
Var<S> log(Var<S> a);
template <class S>
Var<S> transpose(Var<S> a);
template <class S>
Var<S> concat_cols(std::span<const Var<S>> parts);
template <class S>
Var<S> concat_rows(std::span<const Var<S>> parts);
template <class S>
Var<S> slice_cols(Var<S> a, int start, int count);
template <class S>
Var<S> slice_rows(Var<S> a, int start, int count);
// Row-select; rows may repeat.
template <class S>
Var<S> gather_rows(Var<S> a, std::span<const int> rows);
// out.row(segments[i]) += a.row(i); segments absent from the map stay 0.
template <class S>
Var<S> segment_sum(Var<S> a, std::span<const int> segments,
                   int num_segments);
// Column sums, 1 x c.
template <class S>
Var<S> sum_rows(Var<S> a);
template <class S>
Var<S> sum_all(Var<S> a);
// Row-wise dot products, n x 1.
template <class S>
Var<S> dot_rows(Var<S> a, Var<S> b);
// Row-wise softmax.
template <class S>
Var<S> softmax(Var<S> a);

// -log softmax(logits)[target] for a 1 x k row. Entries with mask[j] == 0
// are excluded from the normalizer; an empty mask keeps all entries.
template <class S>
Var<S> softmax_xent(Var<S> logits, int target,
                    std::span<const char> mask = {});
// Sum over rows of -log softmax(row i)[targets[i]]. `mask` is empty or
// holds rows * cols entries in row-major order.
template <class S>
Var<S> softmax_xent_rows(Var<S> logits, std::span<const int> targets,
                         std::span<const char> mask = {});
// Summed binary cross-entropy of sigmoid(logits) against 0/1 targets.
template <class S>
Var<S> sigmoid_xent(Var<S> logits, std::span<const int> targets);

template <class S>
inline Var<S> operator+(Var<S> a, Var<S> b) {
  return add(a, b);
}
template <class S>
inline Var<S> operator-(Var<S> a, Var<S> b) {
  return sub(a, b);
}
template <class S>
inline Var<S> operator*(Var<S> a, Var<S> b) {
  return mul(a, b);
}

template <class S>
inline Var<S> concat_cols(std::initializer_list<Var<S>> parts) {
  return concat_cols(std::span<const Var<S>>(parts.begin(), parts.size()));
}
template <class S>
inline Var<S> concat_rows(std::initializer_list<Var<S>> parts) {
  return concat_rows(std::span<const Var<S>>(parts.begin(), parts.size()));
}

// Probabilities of a masked softmax over one row (plain evaluation).
template <class S>
std::vector<double> softmax_probs(const Matrix<S> &row,
                                  std::span<const char> mask = {});

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <class S>
void adam_step(ParamStore<S> &store, const AdamConfig &config = {});

// Binary checkpoint with magic "HGCK".
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <class S>
void write_checkpoint(std::ostream &out, const ParamStore<S> &store);
// Replaces values (and moments, when present) of parameters already
// registered in `store`. Throws Error(kFormat) on missing or mis-shaped
// entries and Error(kVersionMismatch) on another format version.
template <class S>
void read_checkpoint(std::istream &in, ParamStore<S> &store);

template <class S>
void save_checkpoint(const std::string &path, const ParamStore<S> &store);
template <class S>
void load_checkpoint(const std::string &path, ParamStore<S> &store);

}  // namespace hiergen::nn

#endif  // HIERGEN_TENSOR_H_
