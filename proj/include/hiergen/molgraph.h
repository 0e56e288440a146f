//
// Project hiergen - Copyright 2026 hiergen authors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef HIERGEN_MOLGRAPH_H_
#define HIERGEN_MOLGRAPH_H_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hiergen {

enum class Element : std::uint8_t { kB, kC, kN, kO, kP, kS, kF, kCl, kBr, kI };

inline constexpr int kNumElements = 10;

std::string_view element_symbol(Element e);
std::optional<Element> element_from_symbol(std::string_view sym);
double atomic_mass(Element e);
inline constexpr double kHydrogenMass = 1.008;

// Allowed valences for (element, charge), ascending.
std::span<const int> allowed_valences(Element e, int charge);

// Smallest allowed valence that accommodates `bond_sum`, or the largest
// allowed valence when none does.
int default_valence(Element e, int charge, int bond_sum);
int max_valence(Element e, int charge);

enum class BondOrder : std::uint8_t {
  kSingle = 1,
  kDouble = 2,
  kTriple = 3,
  kAromatic = 4,
};

inline constexpr int kNumBondOrders = 4;

// Twice the bond order, so aromatic bonds (1.5) stay integral.
constexpr int bond_order_x2(BondOrder o) {
  switch (o) {
  case BondOrder::kSingle:
    return 2;
  case BondOrder::kDouble:
    return 4;
  case BondOrder::kTriple:
    return 6;
  case BondOrder::kAromatic:
    return 3;
  }
  return 0;
}

constexpr int bond_order_index(BondOrder o) {
  return static_cast<int>(o) - 1;
}

// Nearest integer of a half-integer sum, ties toward zero (4.5 -> 4).
constexpr int round_bond_sum(int sum_x2) {
  return sum_x2 / 2;
}

struct Atom {
  Element element = Element::kC;
  int formal_charge = 0;
  bool aromatic = false;
  int implicit_h = 0;

  // Identity used for motif merging and embedding lookup; ignores implicit_h.
  bool same_label(const Atom &other) const {
    return element == other.element && formal_charge == other.formal_charge
           && aromatic == other.aromatic;
  }
};

struct Bond {
  int begin;
  int end;
  BondOrder order;

  int other(int atom) const { return atom == begin ? end : begin; }
};

struct Neighbor {
  int atom;
  int bond;
};

class MolGraph {
public:
  MolGraph() = default;

  int add_atom(const Atom &atom);
  // Throws Error(kFormat) on self loops or duplicate bonds.
  int add_bond(int u, int v, BondOrder order);

  int num_atoms() const { return static_cast<int>(atoms_.size()); }
  int num_bonds() const { return static_cast<int>(bonds_.size()); }
  bool empty() const { return atoms_.empty(); }

  const Atom &atom(int i) const { return atoms_[i]; }
  Atom &atom(int i) { return atoms_[i]; }
  const std::vector<Atom> &atoms() const { return atoms_; }

  const Bond &bond(int i) const { return bonds_[i]; }
  const std::vector<Bond> &bonds() const { return bonds_; }
  void set_bond_order(int bond, BondOrder order) { bonds_[bond].order = order; }

  std::span<const Neighbor> neighbors(int atom) const { return adj_[atom]; }
  int degree(int atom) const { return static_cast<int>(adj_[atom].size()); }

  // Bond index between u and v, or -1.
  int find_bond(int u, int v) const;

  int bond_sum_x2(int atom) const;
  int bond_sum(int atom) const { return round_bond_sum(bond_sum_x2(atom)); }

  // Recomputes implicit hydrogens from the valence table.
  void update_implicit_h();

  bool is_connected() const;

  // Induced copy with atoms renumbered so that new index k is old atom
  // order[k]. Bonds are emitted in ascending (min, max) new-index order.
  MolGraph reordered(std::span<const int> order) const;

  // Subgraph containing the given atoms and bonds (bond endpoints must be in
  // the atom list). Atom k of the result is atoms[k].
  MolGraph subgraph(std::span<const int> atoms,
                    std::span<const int> bonds) const;

private:
  std::vector<Atom> atoms_;
  std::vector<Bond> bonds_;
  std::vector<std::vector<Neighbor>> adj_;
};

// Cut edges (graph-theoretic bridges); result[b] is true for bond b.
std::vector<bool> cut_edges(const MolGraph &mol);

// Atoms lying on at least one cycle.
std::vector<bool> ring_atoms(const MolGraph &mol);

// Bonds lying on at least one cycle.
std::vector<bool> ring_bonds(const MolGraph &mol);

}  // namespace hiergen

#endif  // HIERGEN_MOLGRAPH_H_
