//
// Project hiergen - Copyright 2026 hiergen authors.
// SPDX-License-Identifier: Apache-2.0
//

#include <algorithm>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "hiergen/assembly.h"
#include "hiergen/chem.h"
#include "hiergen/error.h"
#include "hiergen/motifs.h"
#include "hiergen/smiles.h"

#include "test_util.h"

namespace hiergen {
namespace {

std::vector<MolGraph> parse_all(const std::vector<std::string> &smiles) {
  std::vector<MolGraph> out;
  for (const std::string &s: smiles)
    out.push_back(parse_smiles(s));
  return out;
}

const std::vector<MolGraph> &corpus() {
  static const std::vector<MolGraph> mols = parse_all(testing::corpus500());
  return mols;
}

const Vocab &corpus_vocab() {
  static const Vocab v = build_vocab(corpus(), 5);
  return v;
}

const Vocab &small_vocab() {
  static const Vocab v = build_vocab(corpus(), 5, { .small_motifs = true });
  return v;
}

// Oracle: connectivity after deleting one bond.
bool connected_without(const MolGraph &m, int skip, int from, int to) {
  std::vector<bool> seen(m.num_atoms(), false);
  std::vector<int> stack = { from };
  seen[from] = true;
  while (!stack.empty()) {
    int x = stack.back();
    stack.pop_back();
    for (auto nb: m.neighbors(x))
      if (nb.bond != skip && !seen[nb.atom]) {
        seen[nb.atom] = true;
        stack.push_back(nb.atom);
      }
  }
  return seen[to];
}

std::vector<int> oracle_bridges(const MolGraph &m) {
  std::vector<bool> ring(m.num_atoms(), false);
  for (int b = 0; b < m.num_bonds(); ++b)
    if (connected_without(m, b, m.bond(b).begin, m.bond(b).end))
      ring[m.bond(b).begin] = ring[m.bond(b).end] = true;
  std::vector<int> out;
  for (int b = 0; b < m.num_bonds(); ++b) {
    int u = m.bond(b).begin, v = m.bond(b).end;
    if (!connected_without(m, b, u, v) && m.degree(u) >= 2 && m.degree(v) >= 2
        && (ring[u] || ring[v]))
      out.push_back(b);
  }
  return out;
}

// Oracle: fragment keys after bridge removal, by brute-force component search.
std::multiset<std::string> oracle_fragment_keys(const MolGraph &m) {
  std::vector<int> br = oracle_bridges(m);
  std::set<int> bridge(br.begin(), br.end());
  std::multiset<std::string> keys;
  std::vector<bool> touched(m.num_atoms(), false);
  for (int b: br) {
    touched[m.bond(b).begin] = touched[m.bond(b).end] = true;
    keys.insert(canonical_smiles(
        m.subgraph(std::vector<int> { m.bond(b).begin, m.bond(b).end },
                   std::vector<int> { b })));
  }
  std::vector<int> comp(m.num_atoms(), -1);
  for (int s = 0; s < m.num_atoms(); ++s) {
    if (comp[s] >= 0)
      continue;
    std::vector<int> atoms;
    std::vector<int> stack = { s };
    comp[s] = s;
    while (!stack.empty()) {
      int x = stack.back();
      stack.pop_back();
      atoms.push_back(x);
      for (auto nb: m.neighbors(x))
        if (!bridge.count(nb.bond) && comp[nb.atom] < 0) {
          comp[nb.atom] = s;
          stack.push_back(nb.atom);
        }
    }
    if (atoms.size() == 1 && touched[s])
      continue;
    std::sort(atoms.begin(), atoms.end());
    std::vector<int> bonds;
    for (int b = 0; b < m.num_bonds(); ++b)
      if (!bridge.count(b) && comp[m.bond(b).begin] == s)
        bonds.push_back(b);
    MolGraph sub = m.subgraph(atoms, bonds);
    sub.update_implicit_h();
    keys.insert(canonical_smiles(sub));
  }
  return keys;
}

TEST(FindBridgeBonds, Examples) {
  EXPECT_TRUE(find_bridge_bonds(parse_smiles("c1ccccc1")).empty());
  EXPECT_TRUE(find_bridge_bonds(parse_smiles("CCO")).empty());
  MolGraph eb = parse_smiles("CCc1ccccc1");
  std::vector<int> br = find_bridge_bonds(eb);
  ASSERT_EQ(br.size(), 1U);
  EXPECT_EQ(br[0], eb.find_bond(1, 2));
}

TEST(FindBridgeBonds, MatchesOracleOnCorpus) {
  for (const MolGraph &m: corpus())
    EXPECT_EQ(find_bridge_bonds(m), oracle_bridges(m));
}

TEST(BridgeFragments, KeysMatchOracleOnCorpus) {
  for (const MolGraph &m: corpus()) {
    std::multiset<std::string> got;
    for (const Fragment &f: bridge_fragments(m))
      got.insert(fragment_key(m, f));
    EXPECT_EQ(got, oracle_fragment_keys(m));
  }
}

TEST(Sssr, RingCounts) {
  auto count = [](const char *s) {
    MolGraph m = parse_smiles(s);
    Fragment all;
    for (int i = 0; i < m.num_atoms(); ++i)
      all.atoms.push_back(i);
    for (int b = 0; b < m.num_bonds(); ++b)
      all.bonds.push_back(b);
    std::vector<int> sizes;
    for (const auto &r: sssr(m, all))
      sizes.push_back(static_cast<int>(r.size()));
    std::sort(sizes.begin(), sizes.end());
    return sizes;
  };
  EXPECT_EQ(count("CCO"), std::vector<int> {});
  EXPECT_EQ(count("c1ccccc1"), std::vector<int> { 6 });
  EXPECT_EQ(count("c1ccc2ccccc2c1"), (std::vector<int> { 6, 6 }));
  EXPECT_EQ(count("c1ccc2c(c1)CCC2"), (std::vector<int> { 5, 6 }));
  EXPECT_EQ(count("C1CC2CCC1CC2"), (std::vector<int> { 6, 6 }));
  EXPECT_EQ(count("C12C3C4C1C5C2C3C45"), (std::vector<int> { 4, 4, 4, 4, 4 }));
}

TEST(Decompose, BenzeneEmptyVocab) {
  MolGraph m = parse_smiles("c1ccccc1");
  auto pieces = decompose(m, [](const std::string &) { return false; });
  ASSERT_EQ(pieces.size(), 1U);
  EXPECT_EQ(pieces[0].atoms.size(), 6U);
  EXPECT_EQ(pieces[0].bonds.size(), 6U);
}

TEST(Decompose, EthylbenzeneEmptyVocab) {
  MolGraph m = parse_smiles("CCc1ccccc1");
  auto pieces = decompose(m, [](const std::string &) { return false; });
  ASSERT_EQ(pieces.size(), 3U);
  EXPECT_EQ(pieces[0].atoms, (std::vector<int> { 0, 1 }));
  EXPECT_EQ(pieces[1].atoms, (std::vector<int> { 1, 2 }));
  EXPECT_EQ(pieces[2].atoms, (std::vector<int> { 2, 3, 4, 5, 6, 7 }));
}

TEST(Decompose, WholeMoleculeWhenKept) {
  MolGraph m = parse_smiles("Cc1ccc(Cl)cc1O");
  std::string key = canonical_smiles(m);
  auto pieces = decompose(m, [&](const std::string &k) { return k == key; });
  ASSERT_EQ(pieces.size(), 1U);
  EXPECT_EQ(pieces[0].atoms.size(), static_cast<std::size_t>(m.num_atoms()));
}

TEST(Decompose, FallbackIsRingsAndBonds) {
  MolGraph m = parse_smiles("Cc1ccc2ccccc2c1");
  auto pieces = decompose(m, [](const std::string &) { return false; });
  ASSERT_EQ(pieces.size(), 3U);
  std::multiset<std::size_t> sizes;
  for (const auto &p: pieces)
    sizes.insert(p.atoms.size());
  EXPECT_EQ(sizes, (std::multiset<std::size_t> { 2, 6, 6 }));
}

TEST(Decompose, BridgedBicycleSplitsIntoTwoRings) {
  MolGraph m = parse_smiles("C1CC2CCC1CC2");
  auto pieces = decompose(m, [](const std::string &) { return false; });
  ASSERT_EQ(pieces.size(), 2U);
  EXPECT_EQ(pieces[0].atoms.size(), 6U);
  EXPECT_EQ(pieces[1].atoms.size(), 6U);
}

TEST(Decompose, CyclicRingSystemKeptWhole) {
  MolGraph m = parse_smiles("C12C3C4C1C5C2C3C45");
  auto pieces = decompose(m, [](const std::string &) { return false; });
  EXPECT_EQ(pieces.size(), 1U);
}

TEST(BuildVocab, ThreeBenzenes) {
  std::vector<MolGraph> c(3, parse_smiles("c1ccccc1"));
  for (int delta: { 2, 3 }) {
    Vocab v = build_vocab(c, delta);
    ASSERT_EQ(v.motifs.size(), 1) << delta;
    EXPECT_EQ(v.motifs.key(0), canonical_smiles(parse_smiles("c1ccccc1")));
    EXPECT_EQ(v.motifs.count(0), 3);
  }
}

TEST(BuildVocab, ThresholdSplitsRareFragments) {
  std::vector<MolGraph> c = parse_all({ "Clc1ccccc1CCc1ccccc1", "CCc1ccccc1",
                                        "CCc1ccccc1" });
  Vocab low = build_vocab(c, 0);
  EXPECT_TRUE(low.motifs.contains(canonical_smiles(parse_smiles("Clc1ccccc1"))));
  Vocab high = build_vocab(c, 1);
  EXPECT_FALSE(
      high.motifs.contains(canonical_smiles(parse_smiles("Clc1ccccc1"))));
  EXPECT_TRUE(high.motifs.contains(canonical_smiles(parse_smiles("Clc"))));
}

TEST(BuildVocab, AttachmentConfigsDeduplicatedBySymmetry) {
  std::vector<MolGraph> c = parse_all({ "CCc1ccccc1", "c1ccccc1CC" });
  Vocab v = build_vocab(c, 0);
  int ring = v.motifs.find(canonical_smiles(parse_smiles("c1ccccc1")));
  ASSERT_GE(ring, 0);
  EXPECT_EQ(v.attach.size(ring), 1);
  EXPECT_EQ(v.attach.config(ring, 0).count, 2);
  EXPECT_EQ(v.attach.config(ring, 0).marks.size(), 1U);
}

TEST(BuildVocab, CorpusStats) {
  const Vocab &v = corpus_vocab();
  EXPECT_GT(v.motifs.size(), 10);
  for (int m = 0; m < v.motifs.size(); ++m) {
    EXPECT_GE(v.motifs.count(m), 1);
    EXPECT_GE(v.attach.size(m), 1);
  }
  EXPECT_LE(v.attach.mean_size(), 10.0);
}

TEST(BuildVocab, SmallMotifTemplatesAreSingleRingsOrBonds) {
  const Vocab &v = small_vocab();
  for (int m = 0; m < v.motifs.size(); ++m) {
    const MolGraph &t = v.motifs.motif(m);
    bool bond = t.num_atoms() == 2 && t.num_bonds() == 1;
    bool ring = t.num_atoms() == t.num_bonds() && t.num_atoms() >= 3;
    EXPECT_TRUE(bond || ring) << v.motifs.key(m);
    if (ring) {
      for (int a = 0; a < t.num_atoms(); ++a)
        EXPECT_EQ(t.degree(a), 2) << v.motifs.key(m);
    }
  }
}

TEST(VocabIo, RoundTripByteIdentical) {
  const Vocab &v = corpus_vocab();
  std::ostringstream m1, a1;
  write_vocab(m1, a1, v);
  std::istringstream mi(m1.str()), ai(a1.str());
  Vocab r = read_vocab(mi, ai);
  std::ostringstream m2, a2;
  write_vocab(m2, a2, r);
  EXPECT_EQ(m1.str(), m2.str());
  EXPECT_EQ(a1.str(), a2.str());
  EXPECT_EQ(r.attach.total(), v.attach.total());
}

TEST(VocabIo, RejectsWrongHeader) {
  std::istringstream mi("#hiergen-vocab v0\nC\t1\n"), ai("#hiergen-vocab v1\n");
  try {
    read_vocab(mi, ai);
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.kind(), ErrorKind::kVersionMismatch);
  }
}

TEST(VocabIo, Deterministic) {
  std::ostringstream m1, a1, m2, a2;
  write_vocab(m1, a1, build_vocab(corpus(), 5));
  std::vector<MolGraph> shuffled = corpus();
  std::mt19937 rng(2);
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  for (MolGraph &m: shuffled)
    m = testing::random_permutation(m, rng);
  write_vocab(m2, a2, build_vocab(shuffled, 5));
  EXPECT_EQ(m1.str(), m2.str());
  EXPECT_EQ(a1.str(), a2.str());
}

TEST(BuildHierGraph, Benzene) {
  std::vector<MolGraph> c = { parse_smiles("c1ccccc1") };
  Vocab v = build_vocab(c, 0);
  HierGraph h = build_hier_graph(c[0], v);
  ASSERT_EQ(h.size(), 1);
  EXPECT_EQ(h.num_edges(), 0);
  EXPECT_TRUE(h.nodes[0].marks.empty());
}

TEST(BuildHierGraph, Ethylbenzene) {
  std::vector<MolGraph> c = { parse_smiles("CCc1ccccc1") };
  Vocab v = build_vocab(c, 5);
  HierGraph h = build_hier_graph(c[0], v);
  ASSERT_EQ(h.size(), 3);
  EXPECT_EQ(h.num_edges(), 2);
  // A chain: root - middle bridge - leaf.
  EXPECT_EQ(h.nodes[0].children, std::vector<int> { 1 });
  EXPECT_EQ(h.nodes[1].children, std::vector<int> { 2 });
  EXPECT_EQ(h.edge_label(1, 0), 1);
  EXPECT_EQ(h.edge_label(0, 1), 0);
  EXPECT_EQ(h.edge_label(2, 1), 1);
  EXPECT_EQ(h.edge_label(1, 2), 0);
  EXPECT_EQ(v.motifs.motif(h.nodes[1].motif).num_atoms(), 2);
}

void expect_covers(const HierGraph &h, const Vocab &v) {
  std::vector<bool> atom(h.mol.num_atoms(), false), bond(h.mol.num_bonds(),
                                                         false);
  for (const HierNode &n: h.nodes) {
    const MolGraph &t = v.motifs.motif(n.motif);
    ASSERT_EQ(n.atoms.size(), static_cast<std::size_t>(t.num_atoms()));
    for (int k = 0; k < t.num_atoms(); ++k) {
      atom[n.atoms[k]] = true;
      EXPECT_TRUE(t.atom(k).same_label(h.mol.atom(n.atoms[k])));
    }
    for (const Bond &b: t.bonds()) {
      int mb = h.mol.find_bond(n.atoms[b.begin], n.atoms[b.end]);
      ASSERT_GE(mb, 0);
      EXPECT_EQ(h.mol.bond(mb).order, b.order);
      bond[mb] = true;
    }
  }
  EXPECT_TRUE(std::all_of(atom.begin(), atom.end(), [](bool x) { return x; }));
  EXPECT_TRUE(std::all_of(bond.begin(), bond.end(), [](bool x) { return x; }));
}

void expect_tree(const HierGraph &h) {
  EXPECT_EQ(h.num_edges(), h.size() - 1);
  EXPECT_EQ(h.nodes[0].parent, -1);
  for (int i = 1; i < h.size(); ++i) {
    int p = h.nodes[i].parent;
    ASSERT_GE(p, 0);
    ASSERT_LT(p, i);
    const auto &kids = h.nodes[p].children;
    auto it = std::find(kids.begin(), kids.end(), i);
    ASSERT_NE(it, kids.end());
    EXPECT_EQ(h.nodes[i].order, static_cast<int>(it - kids.begin()) + 1);
  }
}

TEST(BuildHierGraph, CorpusCoverageAndTree) {
  for (const Vocab *v: { &corpus_vocab(), &small_vocab() })
    for (const MolGraph &m: corpus()) {
      HierGraph h = build_hier_graph(m, *v);
      expect_covers(h, *v);
      expect_tree(h);
      for (const HierNode &n: h.nodes)
        EXPECT_LT(n.attach, v->attach.size(n.motif));
    }
}

TEST(BuildHierGraph, PermutationInvariant) {
  std::mt19937 rng(9);
  const Vocab &v = corpus_vocab();
  for (std::size_t i = 0; i < corpus().size(); i += 25) {
    HierGraph a = build_hier_graph(corpus()[i], v);
    HierGraph b =
        build_hier_graph(testing::random_permutation(corpus()[i], rng), v);
    ASSERT_EQ(a.size(), b.size());
    for (int k = 0; k < a.size(); ++k) {
      EXPECT_EQ(a.nodes[k].motif, b.nodes[k].motif);
      EXPECT_EQ(a.nodes[k].attach, b.nodes[k].attach);
      EXPECT_EQ(a.nodes[k].parent, b.nodes[k].parent);
    }
  }
}

TEST(BuildHierGraph, UnknownMotif) {
  std::vector<MolGraph> c = { parse_smiles("c1ccccc1") };
  Vocab v = build_vocab(c, 0);
  try {
    build_hier_graph(parse_smiles("C1CCCCC1"), v);
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.kind(), ErrorKind::kUnknownMotif);
  }
}

TEST(Candidates, BridgeOntoOpenBenzene) {
  MolGraph benzene = parse_smiles("c1ccccc1");
  MolGraph bridge = parse_smiles("Cc");
  int arom = bridge.atom(0).aromatic ? 0 : 1;
  std::vector<int> parent = { 0, 1, 2, 3, 4, 5 };
  std::vector<int> marks = { arom };
  EXPECT_EQ(enumerate_raw_candidates(benzene, parent, bridge, marks).size(),
            6U);
}

TEST(Candidates, FusedRingTwoOrientationsPerEdge) {
  MolGraph parent = parse_smiles("c1ccccc1");
  MolGraph child = parse_smiles("c1ccccc1");
  std::vector<int> all = { 0, 1, 2, 3, 4, 5 };
  std::vector<int> edge = { 0, 1 };
  auto raw = enumerate_raw_candidates(parent, all, child, edge);
  int runs = 0;
  for (const Candidate &c: raw)
    runs += c.pairs.size() == 2;
  EXPECT_EQ(runs, 2 * parent.num_bonds());
  std::vector<int> one_edge = { 2, 3 };
  raw = enumerate_raw_candidates(parent, one_edge, child, edge);
  runs = 0;
  for (const Candidate &c: raw)
    runs += c.pairs.size() == 2;
  EXPECT_EQ(runs, 2);
}

TEST(Candidates, LabelMismatchExcluded) {
  MolGraph parent = parse_smiles("c1ccncc1");
  MolGraph child = parse_smiles("Cc");
  int arom = child.atom(0).aromatic ? 0 : 1;
  std::vector<int> all = { 0, 1, 2, 3, 4, 5 };
  std::vector<int> marks = { arom };
  EXPECT_EQ(enumerate_raw_candidates(parent, all, child, marks).size(), 5U);
}

TEST(Trace, Benzene) {
  std::vector<MolGraph> c = { parse_smiles("c1ccccc1") };
  Vocab v = build_vocab(c, 0);
  DecodeTrace tr = dfs_decode_trace(build_hier_graph(c[0], v), v);
  ASSERT_EQ(tr.steps.size(), 2U);
  EXPECT_EQ(tr.steps[0].parent, -1);
  EXPECT_FALSE(tr.steps[0].stop());
  EXPECT_TRUE(tr.steps[1].stop());
}

TEST(Trace, EthylbenzeneDepthFirst) {
  std::vector<MolGraph> c = { parse_smiles("CCc1ccccc1") };
  Vocab v = build_vocab(c, 5);
  DecodeTrace tr = dfs_decode_trace(build_hier_graph(c[0], v), v);
  ASSERT_EQ(tr.steps.size(), 6U);
  EXPECT_EQ(tr.steps[1].parent, 0);
  EXPECT_EQ(tr.steps[2].parent, 1);
  EXPECT_TRUE(tr.steps[3].stop());
  EXPECT_EQ(tr.steps[3].parent, 2);
  EXPECT_TRUE(tr.steps[4].stop());
  EXPECT_EQ(tr.steps[4].parent, 1);
  EXPECT_TRUE(tr.steps[5].stop());
  EXPECT_EQ(tr.steps[5].parent, 0);
}

TEST(Trace, ReplayIdentityOnCorpus) {
  for (const Vocab *v: { &corpus_vocab(), &small_vocab() }) {
    int steps = 0, small = 0;
    for (const MolGraph &m: corpus()) {
      HierGraph h = build_hier_graph(m, *v);
      DecodeTrace tr = dfs_decode_trace(h, *v);
      std::string want = canonical_smiles(m);
      EXPECT_EQ(canonical_smiles(tr.result.mol), want);
      EXPECT_EQ(canonical_smiles(replay(tr, *v).mol), want);
      EXPECT_EQ(tr.num_nodes(), h.size());
      EXPECT_EQ(tr.steps.size(), static_cast<std::size_t>(2 * h.size()));
      for (const TraceStep &s: tr.steps) {
        if (s.stop() || s.parent < 0)
          continue;
        ++steps;
        small += s.candidates.size() <= 20;
        EXPECT_LT(s.target, static_cast<int>(s.candidates.size()));
      }
      HierGraph last = prefix_state(tr, tr.num_nodes());
      EXPECT_EQ(canonical_smiles(last.mol), want);
    }
    EXPECT_GE(small, 0.99 * steps);
  }
}

TEST(Trace, PrefixStatesAreValidSubgraphs) {
  const Vocab &v = corpus_vocab();
  for (std::size_t i = 0; i < corpus().size(); i += 10) {
    DecodeTrace tr = dfs_decode_trace(build_hier_graph(corpus()[i], v), v);
    for (int k = 1; k <= tr.num_nodes(); ++k) {
      HierGraph s = prefix_state(tr, k);
      EXPECT_EQ(s.size(), k);
      EXPECT_TRUE(is_valence_valid(s.mol));
      EXPECT_TRUE(s.mol.is_connected());
    }
  }
}

}  // namespace
}  // namespace hiergen
