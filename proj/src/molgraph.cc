//
// Project hiergen - Copyright 2026 hiergen authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "hiergen/molgraph.h"

#include <algorithm>
#include <array>
#include <functional>
#include <utility>

#include "hiergen/error.h"

namespace hiergen {

std::string_view error_kind_name(ErrorKind kind) {
  switch (kind) {
  case ErrorKind::kEmptyInput:
    return "EmptyInput";
  case ErrorKind::kUnsupportedToken:
    return "UnsupportedToken";
  case ErrorKind::kUnclosedRing:
    return "UnclosedRing";
  case ErrorKind::kUnclosedBranch:
    return "UnclosedBranch";
  case ErrorKind::kValenceViolation:
    return "ValenceViolation";
  case ErrorKind::kWidthMismatch:
    return "WidthMismatch";
  case ErrorKind::kKekulizeFailed:
    return "KekulizeFailed";
  case ErrorKind::kUnknownMotif:
    return "UnknownMotif";
  case ErrorKind::kCandidateNotFound:
    return "CandidateNotFound";
  case ErrorKind::kNoValidCandidate:
    return "NoValidCandidate";
  case ErrorKind::kEmptyAttachmentVocab:
    return "EmptyAttachmentVocab";
  case ErrorKind::kShapeMismatch:
    return "ShapeMismatch";
  case ErrorKind::kNotScalar:
    return "NotScalar";
  case ErrorKind::kEmptyMemory:
    return "EmptyMemory";
  case ErrorKind::kTooFewSamples:
    return "TooFewSamples";
  case ErrorKind::kEmptyReference:
    return "EmptyReference";
  case ErrorKind::kConfig:
    return "Config";
  case ErrorKind::kIo:
    return "Io";
  case ErrorKind::kFormat:
    return "Format";
  case ErrorKind::kVersionMismatch:
    return "VersionMismatch";
  case ErrorKind::kOracleFailure:
    return "OracleFailure";
  case ErrorKind::kNumeric:
    return "Numeric";
  }
  return "Unknown";
}

namespace {

struct ElementInfo {
  std::string_view symbol;
  double mass;
};

constexpr std::array<ElementInfo, kNumElements> kElements = { {
    { "B", 10.811 },
    { "C", 12.011 },
    { "N", 14.007 },
    { "O", 15.999 },
    { "P", 30.974 },
    { "S", 32.065 },
    { "F", 18.998 },
    { "Cl", 35.453 },
    { "Br", 79.904 },
    { "I", 126.904 },
} };

constexpr std::array<int, 1> kV0 = { 0 };
constexpr std::array<int, 1> kV1 = { 1 };
constexpr std::array<int, 1> kV2 = { 2 };
constexpr std::array<int, 1> kV3 = { 3 };
constexpr std::array<int, 1> kV4 = { 4 };
constexpr std::array<int, 3> kV246 = { 2, 4, 6 };
constexpr std::array<int, 2> kV35 = { 3, 5 };

}  // namespace

std::string_view element_symbol(Element e) {
  return kElements[static_cast<int>(e)].symbol;
}

std::optional<Element> element_from_symbol(std::string_view sym) {
  for (int i = 0; i < kNumElements; ++i)
    if (kElements[i].symbol == sym)
      return static_cast<Element>(i);
  return std::nullopt;
}

double atomic_mass(Element e) {
  return kElements[static_cast<int>(e)].mass;
}

std::span<const int> allowed_valences(Element e, int charge) {
  switch (e) {
  case Element::kC:
    return charge == 0 ? std::span<const int>(kV4) : std::span<const int>(kV3);
  case Element::kN:
    if (charge == 1)
      return kV4;
    if (charge == -1)
      return kV2;
    return charge == 0 ? kV3 : kV0;
  case Element::kO:
    if (charge == 1)
      return kV3;
    if (charge == -1)
      return kV1;
    return charge == 0 ? kV2 : kV0;
  case Element::kS:
    if (charge == 1)
      return kV35;
    if (charge == -1)
      return kV1;
    return charge == 0 ? std::span<const int>(kV246) : kV0;
  case Element::kP:
    if (charge == 1)
      return kV4;
    if (charge == -1)
      return kV2;
    return charge == 0 ? std::span<const int>(kV35) : kV0;
  case Element::kB:
    if (charge == -1)
      return kV4;
    if (charge == 1)
      return kV2;
    return charge == 0 ? kV3 : kV0;
  case Element::kF:
  case Element::kCl:
  case Element::kBr:
  case Element::kI:
    if (charge == 1)
      return kV2;
    return charge == 0 ? kV1 : kV0;
  }
  return kV0;
}

int default_valence(Element e, int charge, int bond_sum) {
  auto vals = allowed_valences(e, charge);
  for (int v: vals)
    if (v >= bond_sum)
      return v;
  return vals.back();
}

int max_valence(Element e, int charge) {
  return allowed_valences(e, charge).back();
}

int MolGraph::add_atom(const Atom &atom) {
  atoms_.push_back(atom);
  adj_.emplace_back();
  return num_atoms() - 1;
}

int MolGraph::add_bond(int u, int v, BondOrder order) {
  if (u == v)
    throw Error(ErrorKind::kFormat, "self bond on atom " + std::to_string(u));
  if (find_bond(u, v) >= 0)
    throw Error(ErrorKind::kFormat, "duplicate bond " + std::to_string(u)
                                        + "-" + std::to_string(v));
  int idx = num_bonds();
  bonds_.push_back({ u, v, order });
  adj_[u].push_back({ v, idx });
  adj_[v].push_back({ u, idx });
  return idx;
}

int MolGraph::find_bond(int u, int v) const {
  for (const Neighbor &n: adj_[u])
    if (n.atom == v)
      return n.bond;
  return -1;
}

int MolGraph::bond_sum_x2(int atom) const {
  int sum = 0;
  for (const Neighbor &n: adj_[atom])
    sum += bond_order_x2(bonds_[n.bond].order);
  return sum;
}

void MolGraph::update_implicit_h() {
  for (int i = 0; i < num_atoms(); ++i) {
    Atom &a = atoms_[i];
    int sum = bond_sum(i);
    a.implicit_h = std::max(
        0, default_valence(a.element, a.formal_charge, sum) - sum);
  }
}

bool MolGraph::is_connected() const {
  if (atoms_.empty())
    return true;
  std::vector<bool> seen(num_atoms(), false);
  std::vector<int> stack = { 0 };
  seen[0] = true;
  int count = 1;
  while (!stack.empty()) {
    int a = stack.back();
    stack.pop_back();
    for (const Neighbor &n: adj_[a]) {
      if (!seen[n.atom]) {
        seen[n.atom] = true;
        ++count;
        stack.push_back(n.atom);
      }
    }
  }
  return count == num_atoms();
}

MolGraph MolGraph::reordered(std::span<const int> order) const {
  std::vector<int> new_index(num_atoms(), -1);
  for (int k = 0; k < static_cast<int>(order.size()); ++k)
    new_index[order[k]] = k;

  MolGraph out;
  for (int old: order)
    out.add_atom(atoms_[old]);

  std::vector<std::tuple<int, int, BondOrder>> bonds;
  for (const Bond &b: bonds_) {
    int u = new_index[b.begin], v = new_index[b.end];
    if (u < 0 || v < 0)
      continue;
    bonds.emplace_back(std::min(u, v), std::max(u, v), b.order);
  }
  std::sort(bonds.begin(), bonds.end());
  for (auto [u, v, o]: bonds)
    out.add_bond(u, v, o);
  return out;
}

MolGraph MolGraph::subgraph(std::span<const int> atoms,
                            std::span<const int> bonds) const {
  std::vector<int> new_index(num_atoms(), -1);
  MolGraph out;
  for (int k = 0; k < static_cast<int>(atoms.size()); ++k) {
    new_index[atoms[k]] = k;
    out.add_atom(atoms_[atoms[k]]);
  }
  for (int b: bonds) {
    const Bond &bd = bonds_[b];
    out.add_bond(new_index[bd.begin], new_index[bd.end], bd.order);
  }
  return out;
}

std::vector<bool> cut_edges(const MolGraph &mol) {
  const int n = mol.num_atoms();
  std::vector<bool> is_cut(mol.num_bonds(), false);
  std::vector<int> disc(n, -1), low(n, 0);
  int timer = 0;

  // Iterative Tarjan bridge finding; frames hold (atom, parent bond, next
  // neighbor slot).
  struct Frame {
    int atom, parent_bond;
    std::size_t next;
  };
  for (int root = 0; root < n; ++root) {
    if (disc[root] >= 0)
      continue;
    std::vector<Frame> stack = { { root, -1, 0 } };
    disc[root] = low[root] = timer++;
    while (!stack.empty()) {
      Frame &f = stack.back();
      auto nbrs = mol.neighbors(f.atom);
      if (f.next < nbrs.size()) {
        Neighbor nb = nbrs[f.next++];
        if (nb.bond == f.parent_bond)
          continue;
        if (disc[nb.atom] < 0) {
          disc[nb.atom] = low[nb.atom] = timer++;
          stack.push_back({ nb.atom, nb.bond, 0 });
        } else {
          low[f.atom] = std::min(low[f.atom], disc[nb.atom]);
        }
      } else {
        Frame done = f;
        stack.pop_back();
        if (!stack.empty()) {
          Frame &parent = stack.back();
          low[parent.atom] = std::min(low[parent.atom], low[done.atom]);
          if (low[done.atom] > disc[parent.atom])
            is_cut[done.parent_bond] = true;
        }
      }
    }
  }
  return is_cut;
}

std::vector<bool> ring_bonds(const MolGraph &mol) {
  std::vector<bool> cut = cut_edges(mol);
  cut.flip();
  return cut;
}

std::vector<bool> ring_atoms(const MolGraph &mol) {
  std::vector<bool> in_ring(mol.num_atoms(), false);
  std::vector<bool> rb = ring_bonds(mol);
  for (int b = 0; b < mol.num_bonds(); ++b) {
    if (rb[b]) {
      in_ring[mol.bond(b).begin] = true;
      in_ring[mol.bond(b).end] = true;
    }
  }
  return in_ring;
}

}  // namespace hiergen
