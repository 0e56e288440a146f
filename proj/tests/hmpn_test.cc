//
// Project hiergen - Copyright 2026 hiergen authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "hiergen/hmpn.h"

#include <cmath>
#include <map>
#include <random>

#include <gtest/gtest.h>

#include "hiergen/smiles.h"
#include "fd_check.h"
#include "test_util.h"

namespace hiergen::nn {
namespace {

using Md = Matrix<double>;
using Vd = Eigen::RowVectorXd;

double sig(double x) {
  return 1.0 / (1.0 + std::exp(-x));
}

// Straight loop evaluation of the LSTM cell over explicit neighbor sets.
Md reference_mpn(const ParamStore<double> &store, const LstmMpn<double> &mpn,
                 int n, const std::vector<std::pair<int, int>> &edges,
                 const Md &x, const std::map<std::pair<int, int>, Vd> &xe,
                 int iterations) {
  int h = mpn.hidden;
  std::map<std::pair<int, int>, Vd> nu, c;
  std::vector<std::vector<int>> adj(n);
  for (auto [u, v]: edges) {
    adj[u].push_back(v);
    adj[v].push_back(u);
    nu[{u, v}] = nu[{v, u}] = Vd::Zero(h);
    c[{u, v}] = c[{v, u}] = Vd::Zero(h);
  }
  auto gate = [&](int w_id, int b_id, const Vd &in) {
    return Vd(in * store[w_id].value + store[b_id].value);
  };
  for (int t = 0; t < iterations; ++t) {
    auto nu_next = nu, c_next = c;
    for (auto &[key, unused]: nu) {
      auto [u, v] = key;
      Vd sum = Vd::Zero(h);
      for (int w: adj[u])
        if (w != v)
          sum += nu[{w, u}];
      Vd head(x.cols() + xe.at(key).size());
      head << x.row(u), xe.at(key);
      Vd in(head.size() + h);
      in << head, sum;
      Vd i = gate(mpn.w_z, mpn.b_z, in).unaryExpr(&sig);
      Vd o = gate(mpn.w_o, mpn.b_o, in).unaryExpr(&sig);
      Vd cand = gate(mpn.w, mpn.b, in).array().tanh().matrix();
      Vd cell = i.cwiseProduct(cand);
      for (int w: adj[u]) {
        if (w == v)
          continue;
        Vd fin(head.size() + h);
        fin << head, nu[{w, u}];
        Vd f = gate(mpn.w_r, mpn.b_r, fin).unaryExpr(&sig);
        cell += f.cwiseProduct(c[{w, u}]);
      }
      c_next[key] = cell;
      nu_next[key] = o.cwiseProduct(cell.array().tanh().matrix());
    }
    nu = nu_next;
    c = c_next;
  }
  Md out(n, h);
  for (int v = 0; v < n; ++v) {
    Vd m = Vd::Zero(h);
    for (int u: adj[v])
      m += nu[{u, v}];
    Vd in(x.cols() + h);
    in << x.row(v), m;
    const Linear<double> &l0 = mpn.readout.hidden, &l1 = mpn.readout.out;
    Vd hid = (in * store[l0.weight].value + store[l0.bias].value)
                 .cwiseMax(0.0);
    out.row(v) = hid * store[l1.weight].value + store[l1.bias].value;
  }
  return out;
}

struct MpnFixture {
  ParamStore<double> store;
  LstmMpn<double> mpn;
  MpnGraph graph;
  std::vector<std::pair<int, int>> edges;
  Md x;
  Md slots;
  std::map<std::pair<int, int>, Vd> slot_map;

  MpnFixture(int n, std::vector<std::pair<int, int>> e, int dn, int de, int h,
             unsigned seed)
      : edges(std::move(e)) {
    std::mt19937_64 rng(seed);
    mpn.init(store, "m", dn, de, h, rng);
    for (int i = 0; i < store.size(); ++i)
      store.init_uniform(i, rng);
    graph.num_nodes = n;
    for (auto [u, v]: edges)
      graph.add_edge(u, v);
    graph.finalize();
    std::uniform_real_distribution<double> d(-1, 1);
    x = Md(n, dn).unaryExpr([&](double) { return d(rng); });
    slots = Md(graph.num_slots(), de);
    for (int s = 0; s < graph.num_slots(); ++s) {
      Vd row = Vd::NullaryExpr(de, [&]() { return d(rng); });
      slots.row(s) = row;
      slot_map[{graph.src[s], graph.dst[s]}] = row;
    }
  }

  Md run(int iterations) {
    Tape<double> t(false);
    return mpn(t, store, graph, t.constant(x), t.constant(slots), iterations)
        .value();
  }
};

TEST(LstmMpnTest, ZeroParamsGiveZeroOutput) {
  MpnFixture f(4, {{0, 1}, {1, 2}, {2, 3}, {3, 1}}, 3, 2, 5, 1);
  for (int i = 0; i < f.store.size(); ++i)
    f.store[i].value.setZero();
  EXPECT_TRUE(f.run(4).isZero());
}

TEST(LstmMpnTest, ZeroIterationsIsReadoutOfFeatures) {
  MpnFixture f(3, {{0, 1}, {1, 2}}, 3, 2, 4, 2);
  Md expected = reference_mpn(f.store, f.mpn, 3, f.edges, f.x, f.slot_map, 0);
  EXPECT_TRUE(f.run(0).isApprox(expected, 1e-12));
  // Messages absent: the readout sees a zero message sum.
  Tape<double> t(false);
  Md in(3, 7);
  in << f.x, Md::Zero(3, 4);
  Md direct = f.mpn.readout(t, f.store, t.constant(in)).value();
  EXPECT_TRUE(f.run(0).isApprox(direct, 1e-12));
}

TEST(LstmMpnTest, TwoNodeHandEvaluation) {
  ParamStore<double> store;
  std::mt19937_64 rng(0);
  LstmMpn<double> mpn;
  mpn.init(store, "m", 1, 1, 1, rng);
  // Rows act on [x_u, x_uv, message].
  store[mpn.w_z].value << 0.5, -0.25, 0.75;
  store[mpn.w_o].value << -0.5, 0.25, 1.0;
  store[mpn.w_r].value << 0.1, 0.2, 0.3;
  store[mpn.w].value << 1.5, 0.5, -1.0;
  store[mpn.b_z].value << 0.1;
  store[mpn.b_o].value << -0.2;
  store[mpn.b_r].value << 0.3;
  store[mpn.b].value << 0.05;
  store[mpn.readout.hidden.weight].value << 1.0, 2.0;
  store[mpn.readout.hidden.bias].value << 0.1;
  store[mpn.readout.out.weight].value << -0.5;
  store[mpn.readout.out.bias].value << 0.2;

  double x0 = 0.8, x1 = -0.4, e = 0.6;
  MpnGraph g;
  g.num_nodes = 2;
  g.add_edge(0, 1);
  g.finalize();
  EXPECT_TRUE(g.pair_in.empty());
  Tape<double> t(false);
  Md xs(2, 1), es(2, 1);
  xs << x0, x1;
  es << e, e;
  Md h = mpn(t, store, g, t.constant(xs), t.constant(es), 2).value();

  // Neither endpoint has another neighbor: every round sees a zero message
  // sum and an empty forget set, so both rounds give the same values.
  auto message = [&](double xu) {
    double i = sig(0.5 * xu - 0.25 * e + 0.1);
    double o = sig(-0.5 * xu + 0.25 * e - 0.2);
    double c = i * std::tanh(1.5 * xu + 0.5 * e + 0.05);
    return o * std::tanh(c);
  };
  double nu01 = message(x0), nu10 = message(x1);
  auto read = [](double xv, double m) {
    return -0.5 * std::max(0.0, xv + 2.0 * m + 0.1) + 0.2;
  };
  EXPECT_NEAR(h(0, 0), read(x0, nu10), 1e-14);
  EXPECT_NEAR(h(1, 0), read(x1, nu01), 1e-14);
}

TEST(LstmMpnTest, MatchesLoopReferenceOnRandomGraphs) {
  std::mt19937 rng(9);
  for (int rep = 0; rep < 20; ++rep) {
    int n = 2 + static_cast<int>(rng() % 7);
    std::vector<std::pair<int, int>> edges;
    for (int v = 1; v < n; ++v)
      edges.emplace_back(static_cast<int>(rng() % v), v);
    for (int extra = 0; extra < 2; ++extra) {
      int u = static_cast<int>(rng() % n), v = static_cast<int>(rng() % n);
      bool dup = u == v;
      for (auto [a, b]: edges)
        dup = dup || (a == u && b == v) || (a == v && b == u);
      if (!dup)
        edges.emplace_back(u, v);
    }
    MpnFixture f(n, edges, 3, 2, 4, 100 + rep);
    int iters = 1 + rep % 4;
    Md expected = reference_mpn(f.store, f.mpn, n, f.edges, f.x, f.slot_map,
                                iters);
    EXPECT_TRUE(f.run(iters).isApprox(expected, 1e-10)) << "rep " << rep;
  }
}

const Vocab &toy_vocab() {
  static const Vocab v = [] {
    std::vector<MolGraph> mols;
    for (const std::string &s: testing::corpus500())
      mols.push_back(parse_smiles(s));
    return build_vocab(mols, 5);
  }();
  return v;
}

struct EncoderFixture {
  ParamStore<double> store;
  HierEncoder<double> enc;

  explicit EncoderFixture(int layers = 3, unsigned seed = 4) {
    ModelDims dims;
    dims.hidden = 8;
    dims.embed = 6;
    dims.latent = 3;
    dims.iterations = 3;
    dims.encoder_layers = layers;
    std::mt19937_64 rng(seed);
    enc = HierEncoder<double>(store, "enc", dims, toy_vocab(), rng);
    // Larger embeddings than the default N(0, 0.01) make differences visible.
    for (int i = 0; i < store.size(); ++i)
      if (store[i].name.find(".emb.") != std::string::npos)
        store.init_normal(i, 0.5, rng);
  }

  EncoderOutput<double> run(Tape<double> &t, const HierGraph &h) {
    return enc.encode(t, store, h);
  }
};

TEST(HierEncoderTest, BenzeneShapes) {
  EncoderFixture f;
  HierGraph h = build_hier_graph(parse_smiles("c1ccccc1"), toy_vocab());
  Tape<double> t(false);
  EncoderOutput<double> out = f.run(t, h);
  EXPECT_EQ(out.atom_vecs.rows(), 6);
  EXPECT_EQ(out.attach_vecs.rows(), 1);
  EXPECT_EQ(out.motif_vecs.rows(), 1);
  EXPECT_EQ(out.atom_vecs.cols(), 8);
  EXPECT_EQ(out.attach_vecs.cols(), 8);
  EXPECT_EQ(out.motif_vecs.cols(), 8);
}

HierGraph permute_atoms(const HierGraph &h, const std::vector<int> &order) {
  // New atom k is old atom order[k].
  std::vector<int> inverse(order.size());
  for (std::size_t k = 0; k < order.size(); ++k)
    inverse[order[k]] = static_cast<int>(k);
  HierGraph out = h;
  out.mol = h.mol.reordered(order);
  for (HierNode &n: out.nodes)
    for (int &a: n.atoms)
      a = inverse[a];
  return out;
}

TEST(HierEncoderTest, PermutationEquivariance) {
  EncoderFixture f;
  std::mt19937 rng(5);
  auto smiles = testing::corpus500();
  for (int i = 0; i < 10; ++i) {
    HierGraph h = build_hier_graph(parse_smiles(smiles[i * 37]), toy_vocab());
    std::vector<int> order(h.mol.num_atoms());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    HierGraph p = permute_atoms(h, order);
    Tape<double> t(false);
    EncoderOutput<double> a = f.run(t, h), b = f.run(t, p);
    for (std::size_t k = 0; k < order.size(); ++k)
      EXPECT_TRUE(b.atom_vecs.value().row(k).isApprox(
          a.atom_vecs.value().row(order[k]), 1e-10));
    EXPECT_TRUE(b.motif_vecs.value().isApprox(a.motif_vecs.value(), 1e-10));
    EXPECT_TRUE(b.attach_vecs.value().isApprox(a.attach_vecs.value(), 1e-10));
  }
}

TEST(HierEncoderTest, ChildOrderLabelChangesMotifVectors) {
  EncoderFixture f;
  HierGraph h = build_hier_graph(parse_smiles("CCc1ccccc1"), toy_vocab());
  ASSERT_EQ(h.size(), 3);
  HierGraph flipped = h;
  flipped.nodes[1].order = 2;
  ASSERT_NE(flipped.edge_label(1, 0), h.edge_label(1, 0));
  Tape<double> t(false);
  EncoderOutput<double> a = f.run(t, h), b = f.run(t, flipped);
  EXPECT_TRUE(a.atom_vecs.value() == b.atom_vecs.value());
  EXPECT_FALSE(a.attach_vecs.value().isApprox(b.attach_vecs.value(), 1e-9));
  EXPECT_FALSE(a.motif_vecs.value().isApprox(b.motif_vecs.value(), 1e-9));
}

TEST(HierEncoderTest, Deterministic) {
  EncoderFixture f;
  HierGraph h = build_hier_graph(parse_smiles(testing::corpus500()[3]),
                                 toy_vocab());
  Tape<double> t1(false), t2(false);
  EXPECT_TRUE(f.run(t1, h).motif_vecs.value()
              == f.run(t2, h).motif_vecs.value());
}

TEST(HierEncoderTest, AblationLayers) {
  HierGraph h = build_hier_graph(parse_smiles(testing::corpus500()[8]),
                                 toy_vocab());
  ASSERT_GT(h.size(), 1);
  EncoderFixture one(1), two(2);
  Tape<double> t(false);
  EncoderOutput<double> a = one.run(t, h);
  Md pooled = Md::Zero(h.size(), 8);
  for (int i = 0; i < h.size(); ++i)
    for (int atom: h.nodes[i].atoms)
      pooled.row(i) += a.atom_vecs.value().row(atom);
  EXPECT_TRUE(a.motif_vecs.value().isApprox(pooled, 1e-12));
  EncoderOutput<double> b = two.run(t, h);
  EXPECT_TRUE(b.motif_vecs.value() == b.attach_vecs.value());
  EXPECT_LT(one.store.size(), two.store.size());
}

TEST(HierEncoderTest, MotifReadoutGradientCheck) {
  EncoderFixture f(3, 8);
  std::mt19937_64 rng(8);
  Linear<double> head;
  head.init(f.store, "head", 8, 5, rng);
  std::vector<HierGraph> hs;
  auto smiles = testing::corpus500();
  for (int i: {1, 42, 77})
    hs.push_back(build_hier_graph(parse_smiles(smiles[i]), toy_vocab()));
  auto loss = [&](Tape<double> &t) {
    Var<double> total = t.constant(1, 1, 0.0);
    for (const HierGraph &h: hs) {
      Var<double> m = f.enc.encode(t, f.store, h).motif_vecs;
      Var<double> logits = head(t, f.store, m);
      for (int r = 0; r < m.rows(); ++r)
        total = total + softmax_xent(slice_rows(logits, r, 1), r % 5);
    }
    return total;
  };
  testing::FdReport r = testing::check_gradients(f.store, loss, 1000, 1e-5, 2);
  EXPECT_EQ(r.checked, 1000);
  EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(LatentTest, ClosedForms) {
  Tape<double> t;
  Md zero = Md::Zero(1, 1), one = Md::Ones(1, 1);
  LatentSample<double> a = reparameterize(t, t.constant(one),
                                          t.constant(zero), static_cast<const Md *>(nullptr));
  EXPECT_EQ(a.z.value(), one);
  EXPECT_NEAR(a.kl.scalar(), 0.5, 1e-15);
  LatentSample<double> b = reparameterize(t, t.constant(zero),
                                          t.constant(zero), static_cast<const Md *>(nullptr));
  EXPECT_EQ(b.kl.scalar(), 0.0);
  Md eps = Md::Constant(1, 1, 2.0), ls = Md::Constant(1, 1, std::log(3.0));
  LatentSample<double> c = reparameterize(t, t.constant(one), t.constant(ls),
                                          &eps);
  EXPECT_NEAR(c.z.scalar(), 1.0 + 3.0 * 2.0, 1e-12);
}

TEST(LatentTest, KlNonNegative) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> d(0, 2);
  for (int rep = 0; rep < 200; ++rep) {
    Md mu = Md::NullaryExpr(1, 4, [&]() { return d(rng); });
    Md ls = Md::NullaryExpr(1, 4, [&]() { return d(rng); });
    Tape<double> t(false);
    double kl = reparameterize(t, t.constant(mu), t.constant(ls), static_cast<const Md *>(nullptr))
                    .kl.scalar();
    EXPECT_GE(kl, 0.0);
  }
}

}  // namespace
}  // namespace hiergen::nn
