//
// Project hiergen - Copyright 2026 hiergen authors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef HIERGEN_CHEM_H_
#define HIERGEN_CHEM_H_

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "hiergen/molgraph.h"

namespace hiergen {

struct ValenceViolation {
  int atom;
  int bond_sum;
  int allowed;
};

// Atoms whose rounded bond-order sum exceeds the largest allowed valence.
std::vector<ValenceViolation> validate_valence(const MolGraph &mol);

inline bool is_valence_valid(const MolGraph &mol) {
  return validate_valence(mol).empty();
}

// Heavy atoms plus implicit hydrogens, in g/mol.
double molecular_weight(const MolGraph &mol);

class Fingerprint {
public:
  Fingerprint(int width = 2048, int radius = 2);

  int width() const { return width_; }
  int radius() const { return radius_; }

  void set(int bit) { words_[bit >> 6] |= std::uint64_t { 1 } << (bit & 63); }
  bool test(int bit) const { return (words_[bit >> 6] >> (bit & 63)) & 1U; }
  int popcount() const;

  const std::vector<std::uint64_t> &words() const { return words_; }

  // Big-endian hex of the bit vector (bit 0 is the lowest bit of the last
  // character).
  std::string to_hex() const;
  static Fingerprint from_hex(std::string_view hex, int radius = 2);

  bool operator==(const Fingerprint &other) const = default;

private:
  int width_;
  int radius_;
  std::vector<std::uint64_t> words_;
};

std::uint64_t fnv1a64(const void *data, std::size_t len,
                      std::uint64_t seed = 0xcbf29ce484222325ULL);

// Circular fingerprint: the per-atom identifier at every round 0..radius sets
// bit (id mod width). Width must be a power of two.
Fingerprint morgan_fingerprint(const MolGraph &mol, int radius = 2,
                               int width = 2048);

// |a & b| / |a | b|, 1.0 when both are empty. Throws WidthMismatch.
double tanimoto(const Fingerprint &a, const Fingerprint &b);

// Ring systems plus linkers after pruning terminal acyclic atoms. Acyclic
// molecules yield an empty graph.
MolGraph bemis_murcko_scaffold(const MolGraph &mol);

// Canonical SMILES of the scaffold, empty for acyclic molecules.
std::string scaffold_key(const MolGraph &mol);

// Replaces aromatic bonds by an alternating single/double assignment and
// clears aromatic flags. Throws KekulizeFailed if no assignment exists.
MolGraph kekulize(const MolGraph &mol);

}  // namespace hiergen

#endif  // HIERGEN_CHEM_H_
