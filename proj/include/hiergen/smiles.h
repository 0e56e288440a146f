//
// Project hiergen - Copyright 2026 hiergen authors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef HIERGEN_SMILES_H_
#define HIERGEN_SMILES_H_

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hiergen/molgraph.h"

namespace hiergen {

struct SmilesOptions {
  // Throw ValenceViolation instead of returning an over-valent graph.
  bool strict = false;
};

// Parses the supported SMILES subset: organic-subset and bracket atoms
// (element, optional H count, charge), aromatic lowercase b/c/n/o/p/s,
// branches, ring closures (0-9 and %nn) and the bond symbols - = # :.
// Bracket hydrogen counts are accepted but hydrogens are always derived from
// the valence table.
MolGraph parse_smiles(std::string_view text, const SmilesOptions &opts = {});

// Writes a SMILES string visiting atoms in ascending `rank` order. Ring
// closures use the lowest free digit. `written` receives the atom output
// order when non-null.
std::string write_smiles(const MolGraph &mol, std::span<const int> rank,
                         std::vector<int> *written = nullptr);

struct Canonical {
  std::string smiles;
  // Atom indices in output order; parse_smiles(smiles) atom k corresponds
  // to input atom order[k].
  std::vector<int> order;
  // Canonical string extended with the per-atom classes (empty suffix when
  // no classes were given). Equal keys iff class-preserving isomorphic.
  std::string key;
};

// Canonical labeling by iterative neighborhood refinement with backtracking
// over ties; the lexicographically smallest string over all tie breaks wins.
// Optional `classes` (one integer per atom) distinguish otherwise identical
// atoms, e.g. marked attachment atoms.
Canonical canonicalize(const MolGraph &mol, std::span<const int> classes = {});

inline std::string canonical_smiles(const MolGraph &mol) {
  return canonicalize(mol).smiles;
}

// Class-preserving isomorphism a -> b (result[i] = image of atom i in b),
// or empty when the graphs differ.
std::vector<int> find_isomorphism(const MolGraph &a,
                                  std::span<const int> a_classes,
                                  const MolGraph &b,
                                  std::span<const int> b_classes);

}  // namespace hiergen

#endif  // HIERGEN_SMILES_H_
