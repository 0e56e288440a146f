//
// Project hiergen - Copyright 2026 hiergen authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "hiergen/assembly.h"

#include <algorithm>
#include <numeric>
#include <set>

#include "hiergen/chem.h"
#include "hiergen/error.h"
#include "hiergen/smiles.h"

namespace hiergen {

namespace {

constexpr int kMaxRun = 6;

// Simple paths of length >= 2 through `allowed` atoms, both directions.
std::vector<std::vector<int>> runs(const MolGraph &g,
                                   std::span<const int> allowed, int max_len) {
  std::vector<bool> ok(g.num_atoms(), false);
  for (int a: allowed)
    ok[a] = true;
  std::vector<std::vector<int>> out;
  std::vector<int> path;
  std::vector<bool> on(g.num_atoms(), false);
  auto extend = [&](auto &&self, int x) -> void {
    path.push_back(x);
    on[x] = true;
    if (path.size() >= 2)
      out.push_back(path);
    if (static_cast<int>(path.size()) < max_len)
      for (const Neighbor &nb: g.neighbors(x))
        if (ok[nb.atom] && !on[nb.atom])
          self(self, nb.atom);
    on[x] = false;
    path.pop_back();
  };
  for (int a: allowed)
    extend(extend, a);
  return out;
}

BondOrder order_between(const MolGraph &g, int a, int b) {
  return g.bond(g.find_bond(a, b)).order;
}

}  // namespace

std::vector<Candidate> enumerate_raw_candidates(const MolGraph &partial,
                                                std::span<const int> parent_atoms,
                                                const MolGraph &child,
                                                std::span<const int> child_marks) {
  std::vector<Candidate> out;
  for (int p: parent_atoms)
    for (int k: child_marks)
      if (partial.atom(p).same_label(child.atom(k)))
        out.push_back({ { { p, k } } });

  const int max_len = std::min<int>(
      { kMaxRun, static_cast<int>(parent_atoms.size()),
        static_cast<int>(child_marks.size()) });
  if (max_len < 2)
    return out;
  auto child_runs = runs(child, child_marks, max_len);
  auto parent_runs = runs(partial, parent_atoms, max_len);
  std::set<std::vector<std::pair<int, int>>> seen;
  for (const auto &cr: child_runs)
    for (const auto &pr: parent_runs) {
      if (cr.size() != pr.size())
        continue;
      bool match = true;
      for (std::size_t i = 0; i < cr.size() && match; ++i) {
        match = partial.atom(pr[i]).same_label(child.atom(cr[i]));
        if (match && i > 0)
          match = order_between(partial, pr[i - 1], pr[i])
                  == order_between(child, cr[i - 1], cr[i]);
      }
      if (!match)
        continue;
      Candidate c;
      for (std::size_t i = 0; i < cr.size(); ++i)
        c.pairs.push_back({ pr[i], cr[i] });
      auto sorted = c.pairs;
      std::sort(sorted.begin(), sorted.end());
      if (seen.insert(sorted).second)
        out.push_back(std::move(c));
    }
  return out;
}

std::vector<int> MembershipClasses::classes(const HierGraph &state) {
  std::vector<std::vector<int>> member(state.mol.num_atoms());
  for (int i = 0; i < state.size(); ++i) {
    const HierNode &node = state.nodes[i];
    std::vector<bool> marked(node.atoms.size(), false);
    for (int m: node.marks)
      marked[m] = true;
    for (std::size_t k = 0; k < node.atoms.size(); ++k)
      member[node.atoms[k]].push_back(2 * i + (marked[k] ? 1 : 0));
  }
  std::vector<int> out(member.size());
  for (std::size_t a = 0; a < member.size(); ++a) {
    auto [it, fresh] =
        ids_.try_emplace(member[a], static_cast<int>(ids_.size()));
    out[a] = it->second;
  }
  return out;
}

std::string state_key(const HierGraph &state, MembershipClasses &classes) {
  return canonicalize(state.mol, classes.classes(state)).key;
}

HierGraph root_state(const Vocab &vocab, int motif, int attach) {
  HierGraph h;
  h.mol = vocab.motifs.motif(motif);
  HierNode node;
  node.motif = motif;
  node.attach = attach;
  node.atoms.resize(h.mol.num_atoms());
  std::iota(node.atoms.begin(), node.atoms.end(), 0);
  if (attach < vocab.attach.size(motif))
    node.marks = vocab.attach.config(motif, attach).marks;
  h.nodes.push_back(std::move(node));
  return h;
}

bool attach_motif(const HierGraph &state, int parent, const Vocab &vocab,
                  int motif, int attach, const Candidate &cand,
                  HierGraph &out) {
  const MolGraph &child = vocab.motifs.motif(motif);
  out = state;
  MolGraph &mol = out.mol;
  const int old_atoms = mol.num_atoms();
  std::vector<int> place(child.num_atoms(), -1);
  std::vector<bool> used(old_atoms, false);
  for (auto [p, k]: cand.pairs) {
    if (p < 0 || p >= old_atoms || place[k] >= 0 || used[p])
      return false;
    if (!mol.atom(p).same_label(child.atom(k)))
      return false;
    place[k] = p;
    used[p] = true;
  }
  for (int k = 0; k < child.num_atoms(); ++k)
    if (place[k] < 0)
      place[k] = mol.add_atom(child.atom(k));
  for (const Bond &b: child.bonds()) {
    int u = place[b.begin], v = place[b.end];
    int existing = mol.find_bond(u, v);
    if (existing >= 0) {
      if (mol.bond(existing).order != b.order)
        return false;
      continue;
    }
    mol.add_bond(u, v, b.order);
  }
  mol.update_implicit_h();
  if (!is_valence_valid(mol))
    return false;

  HierNode node;
  node.motif = motif;
  node.attach = attach;
  node.atoms = std::move(place);
  if (attach < vocab.attach.size(motif))
    node.marks = vocab.attach.config(motif, attach).marks;
  node.parent = parent;
  int id = out.size();
  out.nodes[parent].children.push_back(id);
  node.order = static_cast<int>(out.nodes[parent].children.size());
  out.nodes.push_back(std::move(node));
  return true;
}

std::vector<Candidate> enumerate_candidates(const HierGraph &state, int parent,
                                            const Vocab &vocab, int motif,
                                            int attach,
                                            MembershipClasses &classes,
                                            std::vector<std::string> *keys) {
  const HierNode &pn = state.nodes[parent];
  std::vector<int> parent_atoms;
  for (int m: pn.marks)
    parent_atoms.push_back(pn.atoms[m]);
  std::vector<int> child_marks;
  if (attach < vocab.attach.size(motif))
    child_marks = vocab.attach.config(motif, attach).marks;

  std::vector<Candidate> raw = enumerate_raw_candidates(
      state.mol, parent_atoms, vocab.motifs.motif(motif), child_marks);
  std::vector<Candidate> out;
  std::set<std::string> seen;
  HierGraph merged;
  for (Candidate &c: raw) {
    if (!attach_motif(state, parent, vocab, motif, attach, c, merged))
      continue;
    std::string key = state_key(merged, classes);
    if (!seen.insert(key).second)
      continue;
    out.push_back(std::move(c));
    if (keys != nullptr)
      keys->push_back(std::move(key));
  }
  return out;
}

namespace {

// Template automorphism taking the vocabulary's representative marks onto the
// node's actual marks.
std::vector<int> mark_alignment(const Vocab &vocab, const HierNode &node) {
  const MolGraph &tmpl = vocab.motifs.motif(node.motif);
  std::vector<int> rep(tmpl.num_atoms(), 0), real(tmpl.num_atoms(), 0);
  for (int m: vocab.attach.config(node.motif, node.attach).marks)
    rep[m] = 1;
  for (int m: node.marks)
    real[m] = 1;
  std::vector<int> sigma = find_isomorphism(tmpl, rep, tmpl, real);
  if (sigma.empty())
    throw Error(ErrorKind::kFormat, "attachment marks do not match config");
  return sigma;
}

}  // namespace

DecodeTrace dfs_decode_trace(const HierGraph &h, const Vocab &vocab) {
  for (const HierNode &node: h.nodes)
    if (node.attach >= vocab.attach.size(node.motif))
      throw Error(ErrorKind::kUnknownMotif,
                  "attachment configuration outside the vocabulary for "
                      + vocab.motifs.key(node.motif));

  DecodeTrace tr;
  const HierNode &root = h.nodes[0];
  tr.result = root_state(vocab, root.motif, root.attach);
  std::vector<int> to_partial(h.mol.num_atoms(), -1);
  {
    std::vector<int> sigma = mark_alignment(vocab, root);
    for (int k = 0; k < static_cast<int>(sigma.size()); ++k)
      to_partial[root.atoms[sigma[k]]] = k;
  }
  tr.atom_counts = { 0, tr.result.mol.num_atoms() };
  tr.bond_counts = { 0, tr.result.mol.num_bonds() };
  TraceStep first;
  first.motif = root.motif;
  first.attach = root.attach;
  tr.steps.push_back(std::move(first));

  auto visit = [&](auto &&self, int i) -> void {
    for (int c: h.nodes[i].children) {
      const HierNode &node = h.nodes[c];
      std::vector<int> sigma = mark_alignment(vocab, node);
      Candidate truth;
      for (int k = 0; k < static_cast<int>(sigma.size()); ++k) {
        int p = to_partial[node.atoms[sigma[k]]];
        if (p >= 0)
          truth.pairs.push_back({ p, k });
      }

      TraceStep step;
      step.parent = i;
      step.motif = node.motif;
      step.attach = node.attach;
      step.state = tr.result.size();
      MembershipClasses classes;
      std::vector<std::string> keys;
      step.candidates = enumerate_candidates(tr.result, i, vocab, node.motif,
                                             node.attach, classes, &keys);
      HierGraph merged;
      if (!attach_motif(tr.result, i, vocab, node.motif, node.attach, truth,
                        merged))
        throw Error(ErrorKind::kCandidateNotFound,
                    "true attachment is not a valid merge");
      std::string key = state_key(merged, classes);
      auto it = std::find(keys.begin(), keys.end(), key);
      if (it == keys.end())
        throw Error(ErrorKind::kCandidateNotFound,
                    "true attachment missing from candidates");
      step.target = static_cast<int>(it - keys.begin());
      step.candidates[step.target] = truth;

      int next = tr.result.mol.num_atoms();
      std::vector<bool> placed(sigma.size(), false);
      for (auto [p, k]: truth.pairs)
        placed[k] = true;
      for (int k = 0; k < static_cast<int>(sigma.size()); ++k)
        if (!placed[k])
          to_partial[node.atoms[sigma[k]]] = next++;
      tr.result = std::move(merged);
      if (tr.result.size() != c + 1)
        throw Error(ErrorKind::kFormat, "hierarchy is not in DFS order");
      tr.atom_counts.push_back(tr.result.mol.num_atoms());
      tr.bond_counts.push_back(tr.result.mol.num_bonds());
      tr.steps.push_back(std::move(step));
      self(self, c);
    }
    TraceStep stop;
    stop.parent = i;
    stop.state = tr.result.size();
    tr.steps.push_back(std::move(stop));
  };
  visit(visit, 0);
  return tr;
}

HierGraph prefix_state(const DecodeTrace &trace, int num_nodes) {
  HierGraph h;
  std::vector<int> atoms(trace.atom_counts[num_nodes]);
  std::iota(atoms.begin(), atoms.end(), 0);
  std::vector<int> bonds(trace.bond_counts[num_nodes]);
  std::iota(bonds.begin(), bonds.end(), 0);
  h.mol = trace.result.mol.subgraph(atoms, bonds);
  h.mol.update_implicit_h();
  h.nodes.assign(trace.result.nodes.begin(),
                 trace.result.nodes.begin() + num_nodes);
  for (HierNode &node: h.nodes)
    std::erase_if(node.children, [&](int c) { return c >= num_nodes; });
  return h;
}

HierGraph replay(const DecodeTrace &trace, const Vocab &vocab) {
  const TraceStep &first = trace.steps.front();
  HierGraph state = root_state(vocab, first.motif, first.attach);
  HierGraph next;
  for (std::size_t s = 1; s < trace.steps.size(); ++s) {
    const TraceStep &step = trace.steps[s];
    if (step.stop())
      continue;
    if (!attach_motif(state, step.parent, vocab, step.motif, step.attach,
                      step.candidates[step.target], next))
      throw Error(ErrorKind::kCandidateNotFound, "replayed merge failed");
    state = std::move(next);
  }
  return state;
}

}  // namespace hiergen
