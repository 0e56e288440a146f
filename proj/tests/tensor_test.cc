//
// Project hiergen - Copyright 2026 hiergen authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "hiergen/tensor.h"

#include <cmath>
#include <functional>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "hiergen/error.h"
#include "fd_check.h"

namespace hiergen::nn {
namespace {

using Md = Matrix<double>;

Md mat(int r, int c, std::initializer_list<double> v) {
  Md m(r, c);
  int k = 0;
  for (double x: v)
    m.data()[k++] = x;
  return m;
}

TEST(TensorTest, SoftmaxOfEqualLogitsIsUniform) {
  for (int n: {1, 2, 5, 17}) {
    Tape<double> t;
    Var<double> y = softmax(t.constant(1, n, 3.25));
    for (int j = 0; j < n; ++j)
      EXPECT_NEAR(y.value()(0, j), 1.0 / n, 1e-15);
  }
}

TEST(TensorTest, SegmentSumEmptySegmentIsZero) {
  Tape<double> t;
  Var<double> a = t.constant(mat(3, 2, {1, 2, 3, 4, 5, 6}));
  std::vector<int> seg = {0, 2, 0};
  Var<double> s = segment_sum(a, std::span<const int>(seg), 4);
  EXPECT_EQ(s.value().row(0), mat(1, 2, {6, 8}));
  EXPECT_TRUE(s.value().row(1).isZero());
  EXPECT_EQ(s.value().row(2), mat(1, 2, {3, 4}));
  EXPECT_TRUE(s.value().row(3).isZero());

  Var<double> none = t.constant(Md(0, 2));
  Var<double> z = segment_sum(none, std::span<const int>(), 2);
  EXPECT_TRUE(z.value().isZero());
  EXPECT_EQ(z.rows(), 2);
}

TEST(TensorTest, MatmulHandCase) {
  Tape<double> t;
  Var<double> a = t.constant(mat(2, 3, {1, 2, 3, 4, 5, 6}));
  Var<double> b = t.constant(Md::Ones(3, 1));
  Var<double> c = matmul(a, b);
  EXPECT_EQ(c.value(), mat(2, 1, {6, 15}));
}

TEST(TensorTest, ShapeMismatchThrows) {
  Tape<double> t;
  Var<double> a = t.constant(Md::Ones(2, 3));
  Var<double> b = t.constant(Md::Ones(2, 3));
  try {
    matmul(a, b);
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.kind(), ErrorKind::kShapeMismatch);
  }
  EXPECT_THROW(add(a, t.constant(Md::Ones(3, 2))), Error);
  EXPECT_THROW(add_row(a, t.constant(Md::Ones(1, 2))), Error);
  std::vector<int> bad = {5};
  EXPECT_THROW(gather_rows(a, std::span<const int>(bad)), Error);
}

TEST(TensorTest, GradOfSumIsOnes) {
  ParamStore<double> store;
  int w = store.add("w", 1, 3);
  store[w].value << 0.3, -2, 7;
  Tape<double> t;
  t.backward(sum_all(t.param(store, w)));
  EXPECT_EQ(store[w].grad, Md::Ones(1, 3));
}

TEST(TensorTest, BackwardAccumulatesUntilZeroed) {
  ParamStore<double> store;
  int w = store.add("w", 1, 2);
  for (int rep = 0; rep < 2; ++rep) {
    Tape<double> t;
    t.backward(sum_all(t.param(store, w)));
  }
  EXPECT_EQ(store[w].grad, Md::Constant(1, 2, 2.0));
  store.zero_grad();
  EXPECT_TRUE(store[w].grad.isZero());
}

TEST(TensorTest, BackwardRequiresScalar) {
  ParamStore<double> store;
  int w = store.add("w", 1, 2);
  Tape<double> t;
  Var<double> v = t.param(store, w);
  try {
    t.backward(v);
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNotScalar);
  }
}

TEST(TensorTest, UnusedParameterHasExactZeroGrad) {
  ParamStore<double> store;
  int w = store.add("w", 2, 2);
  int unused = store.add("unused", 3, 1);
  store[w].value.setConstant(0.7);
  store[unused].value.setConstant(-1.0);
  Tape<double> t;
  t.backward(sum_all(tanh(t.param(store, w))));
  EXPECT_FALSE(store[w].grad.isZero());
  for (Eigen::Index k = 0; k < 3; ++k)
    EXPECT_EQ(store[unused].grad.data()[k], 0.0);
}

TEST(TensorTest, SigmoidDotFiniteDifference) {
  ParamStore<double> store;
  int w = store.add("w", 1, 3);
  store[w].value << 0.5, -1.25, 2.0;
  Md v = mat(1, 3, {0.3, -0.7, 1.1});
  auto loss = [&](Tape<double> &t) {
    return sum_all(mul(sigmoid(t.param(store, w)), t.constant(v)));
  };
  {
    Tape<double> t;
    t.backward(loss(t));
  }
  // Hand derivative: v_i s(w_i)(1 - s(w_i)).
  for (int i = 0; i < 3; ++i) {
    double s = 1.0 / (1.0 + std::exp(-store[w].value(0, i)));
    EXPECT_NEAR(store[w].grad(0, i), v(0, i) * s * (1 - s), 1e-14);
  }
  testing::FdReport r = testing::check_gradients(store, loss, 1000, 1e-5, 1);
  EXPECT_LT(r.max_rel_error, 1e-4);
  EXPECT_EQ(r.checked, 3);
}

// Every op in one differentiable expression, checked coordinate-wise.
TEST(TensorTest, AllOpsFiniteDifference) {
  std::mt19937_64 rng(11);
  ParamStore<double> store;
  int a = store.add("a", 4, 3);
  int b = store.add("b", 3, 5);
  int bias = store.add("bias", 1, 5);
  int emb = store.add("emb", 6, 5);
  int pos = store.add("pos", 4, 5);
  for (int i = 0; i < store.size(); ++i)
    store.init_uniform(i, rng);
  store[pos].value = store[pos].value.cwiseAbs().array() + 0.5;
  std::vector<int> rows = {2, 0, 5, 2};
  std::vector<int> seg = {1, 1, 0, 2};
  std::vector<int> targets = {1, 0, 1};
  std::vector<char> mask = {1, 0, 1, 1, 1};
  std::vector<int> row_targets = {0, 4, 2, 1};
  std::vector<char> row_mask(20, 1);
  row_mask[1] = row_mask[7] = row_mask[19] = 0;
  auto loss = [&](Tape<double> &t) {
    Var<double> x = add_row(matmul(t.param(store, a), t.param(store, b)),
                            t.param(store, bias));
    Var<double> g = gather_rows(t.param(store, emb), std::span<const int>(rows));
    Var<double> h = tanh(x) * sigmoid(g) + relu(x - g);
    Var<double> s = segment_sum(h, std::span<const int>(seg), 3);
    Var<double> c = concat_cols({slice_cols(s, 0, 2), slice_cols(s, 2, 3)});
    Var<double> r = concat_rows({slice_rows(c, 0, 1), slice_rows(c, 1, 2)});
    Var<double> l = log(t.param(store, pos)) + exp(scale(h, 0.3));
    Var<double> d = dot_rows(r, transpose(transpose(r)));
    Var<double> total = sum_all(softmax(l) * l);
    total = total + sum_all(d);
    total = total + softmax_xent(sum_rows(h), 3, std::span<const char>(mask));
    total = total + sigmoid_xent(slice_cols(r, 1, 1),
                                 std::span<const int>(targets));
    total = total + softmax_xent_rows(h, std::span<const int>(row_targets),
                                      std::span<const char>(row_mask));
    return total;
  };
  testing::FdReport r = testing::check_gradients(store, loss, 1000, 1e-5, 3);
  EXPECT_LT(r.max_rel_error, 1e-4);
  EXPECT_EQ(r.checked, store.num_values());
}

TEST(TensorTest, SoftmaxXentValuesAndMask) {
  Tape<double> t;
  Var<double> l = t.constant(mat(1, 2, {0, 0}));
  EXPECT_NEAR(softmax_xent(l, 0).scalar(), std::log(2.0), 1e-15);
  std::vector<char> mask = {1, 0, 1};
  Var<double> l3 = t.constant(mat(1, 3, {1, 50, 0}));
  double e = std::exp(1.0);
  EXPECT_NEAR(softmax_xent(l3, 0, std::span<const char>(mask)).scalar(),
              -std::log(e / (e + 1)), 1e-12);
  std::vector<double> p = softmax_probs(l3.value(), std::span<const char>(mask));
  EXPECT_NEAR(p[0], 0.7310585786, 1e-9);
  EXPECT_EQ(p[1], 0.0);
  EXPECT_NEAR(p[0] + p[1] + p[2], 1.0, 1e-15);
  EXPECT_THROW(softmax_xent(l3, 1, std::span<const char>(mask)), Error);
}

TEST(TensorTest, SoftmaxXentRowsMatchesPerRowSum) {
  Tape<double> t;
  Matrix<double> m = mat(3, 3, {0.5, -1, 2, 0, 0, 0, 3, 1, -2});
  std::vector<int> targets = {2, 1, 0};
  std::vector<char> mask = {1, 1, 1, 0, 1, 1, 1, 0, 1};
  double expect = 0;
  for (int i = 0; i < 3; ++i)
    expect += softmax_xent(t.constant(m.row(i)), targets[i],
                           std::span<const char>(mask.data() + 3 * i, 3))
                  .scalar();
  Var<double> got = softmax_xent_rows(t.constant(m),
                                      std::span<const int>(targets),
                                      std::span<const char>(mask));
  EXPECT_NEAR(got.scalar(), expect, 1e-12);
  std::vector<int> masked = {2, 0, 1};
  EXPECT_THROW(softmax_xent_rows(t.constant(m), std::span<const int>(masked),
                                 std::span<const char>(mask)),
               Error);
}

TEST(TensorTest, NoGradTapeRecordsNothing) {
  ParamStore<double> store;
  int w = store.add("w", 1, 1);
  store[w].value(0, 0) = 2.0;
  Tape<double> t(false);
  Var<double> y = sum_all(mul(t.param(store, w), t.param(store, w)));
  EXPECT_EQ(y.scalar(), 4.0);
  EXPECT_FALSE(t.tracked(y.id));
  t.backward(y);
  EXPECT_TRUE(store[w].grad.isZero());
}

TEST(AdamTest, ZeroGradientLeavesParameters) {
  ParamStore<double> store;
  int w = store.add("w", 2, 2);
  store[w].value << 1, 2, 3, 4;
  Md before = store[w].value;
  adam_step(store);
  EXPECT_EQ(store[w].value, before);
}

TEST(AdamTest, FirstStepClosedForm) {
  ParamStore<double> store;
  int w = store.add("w", 1, 1);
  store[w].grad(0, 0) = 1.0;
  adam_step(store, AdamConfig{});
  // m_hat = v_hat = 1.
  EXPECT_NEAR(store[w].value(0, 0), -0.001 / (1.0 + 1e-8), 1e-15);
  EXPECT_NEAR(store[w].value(0, 0), -0.000999999, 1e-9);
}

TEST(AdamTest, QuadraticDescent) {
  ParamStore<double> store;
  int w = store.add("w", 1, 1);
  AdamConfig cfg;
  cfg.lr = 0.1;
  for (int step = 0; step < 100; ++step) {
    store.zero_grad();
    Tape<double> t;
    Var<double> d = sub(t.param(store, w), t.constant(1, 1, 3.0));
    t.backward(sum_all(mul(d, d)));
    adam_step(store, cfg);
  }
  EXPECT_LT(std::abs(store[w].value(0, 0) - 3.0), 0.5);
  EXPECT_EQ(store.adam_steps(), 100);
}

TEST(CheckpointTest, RoundTripIncludesMoments) {
  std::mt19937_64 rng(3);
  ParamStore<float> store;
  int a = store.add("enc.W", 3, 4);
  int b = store.add("emb", 5, 2);
  store.init_uniform(a, rng);
  store.init_normal(b, 0.01, rng);
  store[a].grad.setConstant(0.5f);
  adam_step(store);
  std::stringstream buf;
  write_checkpoint(buf, store);
  std::string bytes = buf.str();
  EXPECT_EQ(bytes.substr(0, 4), "HGCK");
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), kCheckpointVersion);

  ParamStore<float> other;
  other.add("enc.W", 3, 4);
  other.add("emb", 5, 2);
  std::stringstream in(bytes);
  read_checkpoint(in, other);
  for (int i = 0; i < 2; ++i) {
    EXPECT_EQ(other[i].value, store[i].value);
    EXPECT_EQ(other[i].m, store[i].m);
    EXPECT_EQ(other[i].v, store[i].v);
  }
  EXPECT_EQ(other.adam_steps(), 1);

  std::stringstream again;
  write_checkpoint(again, other);
  EXPECT_EQ(again.str(), bytes);
}

TEST(CheckpointTest, RejectsMismatches) {
  ParamStore<float> store;
  store.add("w", 2, 2);
  std::stringstream buf;
  write_checkpoint(buf, store);
  std::string bytes = buf.str();

  ParamStore<float> wrong_shape;
  wrong_shape.add("w", 2, 3);
  std::stringstream in1(bytes);
  EXPECT_THROW(read_checkpoint(in1, wrong_shape), Error);

  ParamStore<float> missing;
  missing.add("w", 2, 2);
  missing.add("extra", 1, 1);
  std::stringstream in2(bytes);
  EXPECT_THROW(read_checkpoint(in2, missing), Error);

  std::string versioned = bytes;
  versioned[4] = 9;
  std::stringstream in3(versioned);
  try {
    read_checkpoint(in3, store);
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.kind(), ErrorKind::kVersionMismatch);
  }
  std::stringstream in4(std::string("XXXX") + bytes.substr(4));
  EXPECT_THROW(read_checkpoint(in4, store), Error);
}

TEST(ParamStoreTest, InitializersAreSeededAndBounded) {
  std::mt19937_64 r1(5), r2(5);
  ParamStore<float> s1, s2;
  int a = s1.add("a", 16, 8);
  s2.add("a", 16, 8);
  s1.init_uniform(a, r1);
  s2.init_uniform(a, r2);
  EXPECT_EQ(s1[a].value, s2[a].value);
  EXPECT_LE(s1[a].value.cwiseAbs().maxCoeff(), 0.25f);
  EXPECT_THROW(s1.add("a", 1, 1), Error);
  EXPECT_EQ(s1.find("nope"), -1);
  ParamStore<double> d = s1.cast<double>();
  EXPECT_EQ(d[0].value.cast<float>(), s1[a].value);
}

}  // namespace
}  // namespace hiergen::nn
