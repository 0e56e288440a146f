//
// Project hiergen - Copyright 2026 hiergen authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "hiergen/chem.h"

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <utility>

#include "hiergen/error.h"
#include "hiergen/smiles.h"

namespace hiergen {

std::vector<ValenceViolation> validate_valence(const MolGraph &mol) {
  std::vector<ValenceViolation> out;
  for (int i = 0; i < mol.num_atoms(); ++i) {
    const Atom &a = mol.atom(i);
    int sum = mol.bond_sum(i);
    int allowed = max_valence(a.element, a.formal_charge);
    if (sum > allowed)
      out.push_back({ i, sum, allowed });
  }
  return out;
}

double molecular_weight(const MolGraph &mol) {
  double mw = 0;
  for (const Atom &a: mol.atoms())
    mw += atomic_mass(a.element) + a.implicit_h * kHydrogenMass;
  return mw;
}

Fingerprint::Fingerprint(int width, int radius)
    : width_(width), radius_(radius), words_((width + 63) / 64, 0) { }

int Fingerprint::popcount() const {
  int c = 0;
  for (std::uint64_t w: words_)
    c += std::popcount(w);
  return c;
}

std::string Fingerprint::to_hex() const {
  static constexpr char kDigits[] = "0123456789abcdef";
  const int nibbles = (width_ + 3) / 4;
  std::string out(nibbles, '0');
  for (int k = 0; k < nibbles; ++k) {
    int v = 0;
    for (int b = 0; b < 4; ++b) {
      int bit = k * 4 + b;
      if (bit < width_ && test(bit))
        v |= 1 << b;
    }
    out[nibbles - 1 - k] = kDigits[v];
  }
  return out;
}

Fingerprint Fingerprint::from_hex(std::string_view hex, int radius) {
  Fingerprint fp(static_cast<int>(hex.size()) * 4, radius);
  const int nibbles = static_cast<int>(hex.size());
  for (int k = 0; k < nibbles; ++k) {
    char c = static_cast<char>(
        std::tolower(static_cast<unsigned char>(hex[nibbles - 1 - k])));
    int v = c >= 'a' ? c - 'a' + 10 : c - '0';
    if (v < 0 || v > 15)
      throw Error(ErrorKind::kFormat, "invalid hex digit in fingerprint");
    for (int b = 0; b < 4; ++b)
      if (v & (1 << b))
        fp.set(k * 4 + b);
  }
  return fp;
}

std::uint64_t fnv1a64(const void *data, std::size_t len, std::uint64_t seed) {
  const auto *p = static_cast<const unsigned char *>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

std::uint64_t hash_words(const std::vector<std::uint64_t> &words) {
  // Serialize little-endian so the hash is platform independent.
  std::vector<unsigned char> bytes;
  bytes.reserve(words.size() * 8);
  for (std::uint64_t w: words)
    for (int b = 0; b < 8; ++b)
      bytes.push_back(static_cast<unsigned char>(w >> (8 * b)));
  return fnv1a64(bytes.data(), bytes.size());
}

}  // namespace

Fingerprint morgan_fingerprint(const MolGraph &mol, int radius, int width) {
  if (radius < 0 || width <= 0 || (width & (width - 1)) != 0)
    throw Error(ErrorKind::kConfig,
                "fingerprint radius must be >= 0 and width a power of two");
  Fingerprint fp(width, radius);
  const int n = mol.num_atoms();
  std::vector<bool> in_ring = ring_atoms(mol);

  std::vector<std::uint64_t> ids(n);
  for (int i = 0; i < n; ++i) {
    const Atom &a = mol.atom(i);
    ids[i] = hash_words({ static_cast<std::uint64_t>(a.element),
                          static_cast<std::uint64_t>(a.formal_charge + 128),
                          static_cast<std::uint64_t>(mol.degree(i)),
                          static_cast<std::uint64_t>(a.implicit_h),
                          in_ring[i] ? 1ULL : 0ULL });
    fp.set(static_cast<int>(ids[i] & (width - 1)));
  }

  std::vector<std::uint64_t> next(n);
  for (int r = 0; r < radius; ++r) {
    for (int i = 0; i < n; ++i) {
      std::vector<std::pair<std::uint64_t, std::uint64_t>> env;
      for (const Neighbor &nb: mol.neighbors(i))
        env.emplace_back(bond_order_index(mol.bond(nb.bond).order),
                         ids[nb.atom]);
      std::sort(env.begin(), env.end());
      std::vector<std::uint64_t> words = { static_cast<std::uint64_t>(r),
                                           ids[i] };
      for (auto [o, id]: env) {
        words.push_back(o);
        words.push_back(id);
      }
      next[i] = hash_words(words);
    }
    ids.swap(next);
    for (int i = 0; i < n; ++i)
      fp.set(static_cast<int>(ids[i] & (width - 1)));
  }
  return fp;
}

double tanimoto(const Fingerprint &a, const Fingerprint &b) {
  if (a.width() != b.width())
    throw Error(ErrorKind::kWidthMismatch, "fingerprint widths differ");
  int inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.words().size(); ++i) {
    inter += std::popcount(a.words()[i] & b.words()[i]);
    uni += std::popcount(a.words()[i] | b.words()[i]);
  }
  if (uni == 0)
    return 1.0;
  return static_cast<double>(inter) / uni;
}

MolGraph bemis_murcko_scaffold(const MolGraph &mol) {
  const int n = mol.num_atoms();
  std::vector<bool> in_ring = ring_atoms(mol);
  if (std::none_of(in_ring.begin(), in_ring.end(), [](bool b) { return b; }))
    return {};

  std::vector<bool> alive(n, true);
  std::vector<int> deg(n);
  for (int i = 0; i < n; ++i)
    deg[i] = mol.degree(i);

  std::vector<int> queue;
  for (int i = 0; i < n; ++i)
    if (!in_ring[i] && deg[i] <= 1)
      queue.push_back(i);
  while (!queue.empty()) {
    int a = queue.back();
    queue.pop_back();
    if (!alive[a])
      continue;
    alive[a] = false;
    for (const Neighbor &nb: mol.neighbors(a)) {
      if (!alive[nb.atom])
        continue;
      if (--deg[nb.atom] <= 1 && !in_ring[nb.atom])
        queue.push_back(nb.atom);
    }
  }

  std::vector<int> atoms, bonds;
  for (int i = 0; i < n; ++i)
    if (alive[i])
      atoms.push_back(i);
  for (int b = 0; b < mol.num_bonds(); ++b)
    if (alive[mol.bond(b).begin] && alive[mol.bond(b).end])
      bonds.push_back(b);
  MolGraph scaf = mol.subgraph(atoms, bonds);
  scaf.update_implicit_h();
  return scaf;
}

std::string scaffold_key(const MolGraph &mol) {
  MolGraph scaf = bemis_murcko_scaffold(mol);
  if (scaf.empty())
    return {};
  return canonical_smiles(scaf);
}

namespace {

bool match_pi(const MolGraph &mol, const std::vector<bool> &needs,
              std::vector<bool> &matched, std::vector<int> &chosen) {
  int a = -1;
  for (int i = 0; i < mol.num_atoms(); ++i) {
    if (needs[i] && !matched[i]) {
      a = i;
      break;
    }
  }
  if (a < 0)
    return true;
  matched[a] = true;
  for (const Neighbor &nb: mol.neighbors(a)) {
    if (mol.bond(nb.bond).order != BondOrder::kAromatic)
      continue;
    if (!needs[nb.atom] || matched[nb.atom])
      continue;
    matched[nb.atom] = true;
    chosen.push_back(nb.bond);
    if (match_pi(mol, needs, matched, chosen))
      return true;
    chosen.pop_back();
    matched[nb.atom] = false;
  }
  matched[a] = false;
  return false;
}

}  // namespace

MolGraph kekulize(const MolGraph &mol) {
  const int n = mol.num_atoms();
  std::vector<bool> needs(n, false);
  for (int i = 0; i < n; ++i) {
    const Atom &a = mol.atom(i);
    if (!a.aromatic)
      continue;
    int other_x2 = 0, n_arom = 0;
    for (const Neighbor &nb: mol.neighbors(i)) {
      BondOrder o = mol.bond(nb.bond).order;
      if (o == BondOrder::kAromatic)
        ++n_arom;
      else
        other_x2 += bond_order_x2(o);
    }
    int v = default_valence(a.element, a.formal_charge, mol.bond_sum(i));
    needs[i] = v - other_x2 / 2 - n_arom - a.implicit_h > 0;
  }

  std::vector<bool> matched(n, false);
  std::vector<int> chosen;
  if (!match_pi(mol, needs, matched, chosen))
    throw Error(ErrorKind::kKekulizeFailed, "no Kekule assignment exists");

  MolGraph out = mol;
  for (int b = 0; b < out.num_bonds(); ++b)
    if (out.bond(b).order == BondOrder::kAromatic)
      out.set_bond_order(b, BondOrder::kSingle);
  for (int b: chosen)
    out.set_bond_order(b, BondOrder::kDouble);
  for (int i = 0; i < n; ++i)
    out.atom(i).aromatic = false;
  out.update_implicit_h();
  return out;
}

}  // namespace hiergen
