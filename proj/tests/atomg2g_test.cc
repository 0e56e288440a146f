//
// Project hiergen - Copyright 2026 hiergen authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "hiergen/atomg2g.h"

#include <cmath>
#include <filesystem>
#include <set>

#include <gtest/gtest.h>

#include "hiergen/chem.h"
#include "hiergen/error.h"
#include "hiergen/smiles.h"
#include "fd_check.h"
#include "test_util.h"

namespace hiergen {
namespace {

using Md = nn::Matrix<double>;

const std::vector<MolGraph> &corpus() {
  static const std::vector<MolGraph> mols = [] {
    std::vector<MolGraph> out;
    for (const std::string &s: testing::corpus500())
      out.push_back(parse_smiles(s));
    return out;
  }();
  return mols;
}

std::shared_ptr<const AtomLabels> corpus_labels() {
  static const auto labels = std::make_shared<const AtomLabels>(
      AtomLabels::from_corpus(corpus()));
  return labels;
}

VaeConfig small_config(unsigned seed = 3) {
  VaeConfig c;
  c.dims.hidden = 8;
  c.dims.embed = 6;
  c.dims.latent = 3;
  c.dims.iterations = 2;
  c.kl_weight = 0.3;
  c.seed = seed;
  return c;
}

// Independent check: u > 0 has an earlier neighbor, and the earliest such
// neighbor is non-decreasing in u.
bool is_bfs_order(const MolGraph &m) {
  int last_parent = 0;
  for (int u = 1; u < m.num_atoms(); ++u) {
    int parent = u;
    for (const Neighbor &nb: m.neighbors(u))
      parent = std::min(parent, nb.atom);
    if (parent == u || parent < last_parent)
      return false;
    last_parent = parent;
  }
  return true;
}

MolGraph chain(int carbons) {
  MolGraph m;
  for (int i = 0; i < carbons; ++i) {
    m.add_atom(Atom{});
    if (i > 0)
      m.add_bond(i - 1, i, BondOrder::kSingle);
  }
  return m;
}

TEST(AtomLabelsTest, ToyCorpusMatchesScan) {
  std::vector<MolGraph> toy;
  for (const char *s: {"CCO", "CN", "C=O", "OCC#N", "NC(=O)C"})
    toy.push_back(parse_smiles(s));
  AtomLabels labels = AtomLabels::from_corpus(toy);
  ASSERT_EQ(labels.size(), 3);
  EXPECT_EQ(labels.atom(0).element, Element::kC);
  EXPECT_EQ(labels.atom(1).element, Element::kN);
  EXPECT_EQ(labels.atom(2).element, Element::kO);

  std::set<std::pair<std::string, int>> scan;
  for (const MolGraph &m: corpus())
    for (const Atom &a: m.atoms())
      scan.emplace(std::string(element_symbol(a.element)), a.formal_charge);
  std::set<std::pair<std::string, int>> got;
  for (const auto &[e, c]: corpus_labels()->entries())
    got.emplace(std::string(element_symbol(e)), c);
  EXPECT_EQ(got, scan);
}

TEST(AtomLabelsTest, SaveLoadRoundTrip) {
  auto dir = std::filesystem::temp_directory_path() / "hiergen_atom_labels";
  std::filesystem::create_directories(dir);
  std::string path = (dir / "labels.txt").string();
  corpus_labels()->save(path);
  EXPECT_EQ(AtomLabels::load(path).entries(), corpus_labels()->entries());
  std::filesystem::remove_all(dir);
}

TEST(AtomTraceTest, ReplayRebuildsCorpus) {
  int exact = 0;
  for (const MolGraph &m: corpus()) {
    MolGraph p = prepare_atom_input(m);
    AtomTrace tr = make_atom_trace(p, *corpus_labels());
    exact += canonical_smiles(replay_atom_trace(tr, *corpus_labels()))
             == canonical_smiles(p);
  }
  EXPECT_EQ(exact, static_cast<int>(corpus().size()));
}

TEST(AtomTraceTest, PreparedInputsAreKekulizedAndValid) {
  for (const MolGraph &m: corpus()) {
    MolGraph p = prepare_atom_input(m);
    for (const Bond &b: p.bonds())
      ASSERT_NE(b.order, BondOrder::kAromatic);
    EXPECT_TRUE(is_valence_valid(p));
  }
}

TEST(AtomTraceTest, TargetsMatchNeighborOracle) {
  for (int i = 0; i < 100; ++i) {
    AtomTrace tr = make_atom_trace(prepare_atom_input(corpus()[i]),
                                   *corpus_labels());
    const MolGraph &m = tr.mol;
    ASSERT_TRUE(is_bfs_order(m));
    int generated = 1;
    std::vector<char> popped(m.num_atoms(), 0);
    for (const AtomStep &s: tr.steps) {
      ASSERT_EQ(s.prefix, generated);
      bool pending = false;
      for (const Neighbor &nb: m.neighbors(s.front))
        pending |= nb.atom >= generated;
      EXPECT_EQ(s.expand, pending);
      // Every generated atom with a neighbor still to come is queued.
      for (int a = 0; a < generated; ++a) {
        bool open = false;
        for (const Neighbor &nb: m.neighbors(a))
          open |= nb.atom >= generated;
        EXPECT_FALSE(open && popped[a]) << "atom " << a;
      }
      ASSERT_FALSE(s.queue.empty());
      EXPECT_EQ(s.queue.front(), s.front);
      EXPECT_TRUE(std::is_sorted(s.queue.begin(), s.queue.end()));
      for (int a: s.queue)
        EXPECT_FALSE(popped[a]);
      if (!s.expand) {
        EXPECT_TRUE(s.bonds.empty());
        popped[s.front] = 1;
        continue;
      }
      EXPECT_EQ(s.bonds.size(), s.queue.size());
      EXPECT_NE(s.bonds.front(), kNoBond);
      for (std::size_t k = 0; k < s.queue.size(); ++k) {
        int b = m.find_bond(generated, s.queue[k]);
        EXPECT_EQ(s.bonds[k],
                  b < 0 ? kNoBond : bond_order_index(m.bond(b).order));
      }
      ++generated;
    }
    EXPECT_EQ(generated, m.num_atoms());
  }
}

TEST(AtomTraceTest, SingleQueueAtomGivesOneBondDecision) {
  AtomLabels labels = AtomLabels::from_corpus({chain(3)});
  AtomTrace tr = make_atom_trace(chain(3), labels);
  int expansions = 0;
  for (const AtomStep &s: tr.steps)
    if (s.expand) {
      ++expansions;
      EXPECT_EQ(s.queue.size(), 1U);
      EXPECT_EQ(s.bonds.size(), 1U);
    }
  EXPECT_EQ(expansions, 2);
}

TEST(AtomTraceTest, PermutationsGiveTheSameTrace) {
  std::mt19937 rng(4);
  for (int i = 0; i < 10; ++i) {
    AtomTrace ref = make_atom_trace(prepare_atom_input(corpus()[i]),
                                    *corpus_labels());
    for (int rep = 0; rep < 5; ++rep) {
      MolGraph shuffled = testing::random_permutation(corpus()[i], rng);
      AtomTrace tr = make_atom_trace(prepare_atom_input(shuffled),
                                     *corpus_labels());
      ASSERT_EQ(tr.labels, ref.labels);
      ASSERT_EQ(tr.steps.size(), ref.steps.size());
      for (std::size_t k = 0; k < tr.steps.size(); ++k)
        EXPECT_EQ(tr.steps[k].bonds, ref.steps[k].bonds);
    }
  }
}

TEST(BondMaskTest, ValenceTable) {
  // Carbon 1 carries three single bonds, carbon 4 is the new atom.
  MolGraph m = chain(1);
  for (int i = 0; i < 3; ++i) {
    m.add_atom(Atom{});
    m.add_bond(0, i + 1, BondOrder::kSingle);
  }
  int u = m.add_atom(Atom{});
  EXPECT_EQ(bond_choice_mask(m, u, 0, true),
            (std::vector<char>{1, 0, 0, 0}));
  EXPECT_EQ(bond_choice_mask(m, u, 1, false),
            (std::vector<char>{1, 1, 1, 1}));
  m.add_bond(u, 0, BondOrder::kSingle);
  EXPECT_EQ(bond_choice_mask(m, u, 0, false), (std::vector<char>{0, 0, 0, 1}));
  // u keeps three free units; oxygen allows two.
  Atom o;
  o.element = Element::kO;
  int w = m.add_atom(o);
  EXPECT_EQ(bond_choice_mask(m, u, w, false), (std::vector<char>{1, 1, 0, 1}));
  m.add_bond(u, 1, BondOrder::kDouble);
  EXPECT_EQ(spare_valence(m, u), 1);
  EXPECT_EQ(bond_choice_mask(m, u, w, false), (std::vector<char>{1, 0, 0, 1}));
}

TEST(AtomDecoderTest, ZeroParamsGiveHalfAndUniform) {
  AtomTranslator<double> model(corpus_labels(), small_config());
  for (int i = 0; i < model.params().size(); ++i)
    model.params()[i].value.setZero();
  Md z = Md::Random(1, 3);
  Md mem = Md::Random(4, 8);
  AtomDecoderState s;
  std::vector<double> root = model.decoder().atom_type_probs(model.params(),
                                                             s, z, mem);
  ASSERT_EQ(static_cast<int>(root.size()), corpus_labels()->size());
  double total = 0;
  for (double p: root) {
    EXPECT_NEAR(p, 1.0 / root.size(), 1e-12);
    total += p;
  }
  EXPECT_NEAR(total, 1.0, 1e-12);
  s.graph = parse_smiles("CCO");
  s.queue = {0, 2};
  EXPECT_NEAR(model.decoder().expand_probability(model.params(), s, z, mem),
              0.5, 1e-12);
}

TEST(AtomDecoderTest, ProbabilitiesStayNormalized) {
  AtomTranslator<double> model(corpus_labels(), small_config(7));
  std::mt19937_64 rng(2);
  for (int i = 0; i < 5; ++i) {
    AtomDecoderState s;
    s.graph = prepare_atom_input(corpus()[i]);
    s.queue = {0};
    Md z = Md::Random(1, 3) * 3.0;
    Md mem = model.memory(s.graph);
    double p = model.decoder().expand_probability(model.params(), s, z, mem);
    EXPECT_GT(p, 0.0);
    EXPECT_LT(p, 1.0);
    std::vector<double> q = model.decoder().atom_type_probs(model.params(), s,
                                                            z, mem);
    double total = 0;
    for (double v: q)
      total += v;
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(AtomDecoderTest, BatchedLossMatchesStepwiseReplay) {
  AtomTranslator<double> model(corpus_labels(), small_config(5));
  for (int i: {0, 3, 7, 11}) {
    AtomExample ex = make_atom_example(make_pair(corpus()[i], corpus()[i + 1]),
                                       *corpus_labels());
    Md z = Md::Random(1, 3);
    Md mem = model.memory(ex.x);
    nn::Tape<double> t(false);
    nn::LossParts<double> parts = model.decoder().teacher_forced_loss(
        t, model.params(), ex, t.constant(z), t.constant(mem));
    double replay = model.decoder().replay_nll(model.params(), z, mem, ex.y);
    EXPECT_NEAR(parts.total.scalar(), replay, 1e-9 * std::abs(replay));
    int expected = 1;
    for (const AtomStep &s: ex.y.steps)
      expected += !s.forced + (s.expand ? 1 + s.queue.size() : 0);
    EXPECT_EQ(parts.decisions, expected);
  }
}

TEST(AtomTranslatorTest, GradientMatchesFiniteDifferences) {
  AtomTranslator<double> model(corpus_labels(), small_config(4));
  std::vector<AtomExample> exs;
  for (int i: {2, 9})
    exs.push_back(make_atom_example(make_pair(corpus()[i], corpus()[i + 5]),
                                    *corpus_labels()));
  Md eps = Md::Random(1, 3);
  auto loss = [&](nn::Tape<double> &t) {
    return model.loss(t, exs[0], &eps).total + model.loss(t, exs[1], &eps).total;
  };
  testing::FdReport r = testing::check_gradients(model.params(), loss, 1200,
                                                 1e-5, 3);
  EXPECT_GE(r.checked, 1000);
  EXPECT_LT(r.skipped_kinks, 50);
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
}

TEST(AtomTranslatorTest, DecodesAreDeterministicValidAndBreadthFirst) {
  AtomTranslator<float> model(corpus_labels(), small_config(6));
  model.set_max_steps(120);
  std::mt19937_64 a(9), b(9);
  std::vector<MolGraph> sa = model.sample(corpus()[20], 20, a);
  std::vector<MolGraph> sb = model.sample(corpus()[20], 20, b);
  ASSERT_EQ(sa.size(), 20U);
  for (std::size_t i = 0; i < sa.size(); ++i) {
    EXPECT_EQ(canonical_smiles(sa[i]), canonical_smiles(sb[i]));
    EXPECT_TRUE(is_valence_valid(sa[i]));
    EXPECT_TRUE(sa[i].is_connected());
    EXPECT_TRUE(is_bfs_order(sa[i]));
  }
  nn::Matrix<float> mem = model.memory(prepare_atom_input(corpus()[3]));
  DecodeOptions opts;
  opts.greedy = false;
  std::mt19937_64 rng(1);
  for (int i = 0; i < 30; ++i) {
    nn::Matrix<float> z = nn::Matrix<float>::Random(1, 3);
    DecodeResult r = model.decode(mem, z, opts, &rng);
    EXPECT_TRUE(is_valence_valid(r.mol));
    EXPECT_TRUE(r.mol.is_connected());
    EXPECT_TRUE(is_bfs_order(r.mol));
  }
}

TEST(AtomTranslatorTest, StepBudgetIsReported) {
  AtomTranslator<float> model(corpus_labels(), small_config(6));
  nn::Matrix<float> mem = model.memory(prepare_atom_input(corpus()[0]));
  nn::Matrix<float> z = nn::Matrix<float>::Zero(1, 3);
  DecodeOptions opts;
  opts.max_steps = 1;
  DecodeResult r = model.decode(mem, z, opts);
  EXPECT_LE(r.steps, 1);
  EXPECT_LE(r.mol.num_atoms(), 2);
  EXPECT_TRUE(r.mol.num_atoms() < 2 || r.max_steps_exceeded);
}

TEST(AtomTranslatorTest, TrainingReducesLoss) {
  VaeConfig c = small_config(2);
  c.dims.hidden = 16;
  c.dims.embed = 16;
  c.kl_weight = 0.01;
  AtomTranslator<float> model(corpus_labels(), c);
  std::vector<AtomExample> exs;
  for (int i = 0; i < 4; ++i)
    exs.push_back(make_atom_example(make_pair(corpus()[i], corpus()[i]),
                                    *corpus_labels()));
  TrainOptions o;
  o.epochs = 30;
  o.batch = 2;
  o.lr = 5e-3;
  TrainHistory h = train_atom_translator(model, exs, o);
  ASSERT_EQ(h.epochs.size(), 30U);
  EXPECT_LT(h.epochs.back().loss, 0.5 * h.epochs.front().loss);
}

TEST(AtomTranslatorTest, SaveLoadRoundTrip) {
  AtomTranslator<float> model(corpus_labels(), small_config(8));
  model.set_max_steps(40);
  auto dir = std::filesystem::temp_directory_path() / "hiergen_atom_g2g";
  std::filesystem::remove_all(dir);
  save_atom_translator(dir.string(), model);
  auto loaded = load_atom_translator(dir.string());
  EXPECT_EQ(loaded->config().max_steps, 40);
  EXPECT_EQ(loaded->labels().entries(), model.labels().entries());
  std::mt19937_64 a(3), b(3);
  std::vector<MolGraph> sa = model.sample(corpus()[5], 5, a);
  std::vector<MolGraph> sb = loaded->sample(corpus()[5], 5, b);
  for (int i = 0; i < 5; ++i)
    EXPECT_EQ(canonical_smiles(sa[i]), canonical_smiles(sb[i]));
  try {
    load_translator(dir.string());
    ADD_FAILURE() << "kind mismatch accepted";
  } catch (const Error &e) {
    EXPECT_EQ(e.kind(), ErrorKind::kVersionMismatch);
  }
  std::filesystem::remove_all(dir);
}

TEST(AtomTraceTest, RejectsOutOfSetAtoms) {
  AtomLabels carbon_only = AtomLabels::from_corpus({chain(2)});
  try {
    make_atom_trace(prepare_atom_input(parse_smiles("CCO")), carbon_only);
    ADD_FAILURE() << "oxygen accepted";
  } catch (const Error &e) {
    EXPECT_EQ(e.kind(), ErrorKind::kUnknownMotif);
  }
}

}  // namespace
}  // namespace hiergen
