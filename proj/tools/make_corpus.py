#!/usr/bin/env python3
#
# Project hiergen - Copyright 2026 hiergen authors.
# SPDX-License-Identifier: Apache-2.0
#
"""Generates the drug-like toy corpus shipped in data/.

Molecules are assembled from ring systems, linkers and terminal groups so the
corpus stays inside the supported SMILES subset (no stereo, no pyrrole-type
aromatic nitrogen). The output is filtered for uniqueness and validity by
`hiergen canon --unique`, which keeps the first N distinct molecules.
"""

import argparse
import random
import re

# (atoms, positions that may carry a branch). Position 0 bonds to the parent.
RINGS = [
    (["c"] * 6, [1, 2, 3], 10),
    (["c", "c", "n", "c", "c", "c"], [1, 3, 4], 3),
    (["c", "n", "c", "n", "c", "c"], [2, 4], 2),
    (["c", "c", "n", "c", "n", "c"], [1, 5], 1),
    (["C"] * 6, [1, 2, 3], 2),
    (["N", "C", "C", "C", "C", "C"], [3], 2),
    (["N", "C", "C", "N", "C", "C"], [3], 3),
    (["N", "C", "C", "O", "C", "C"], [], 2),
    (["C"] * 5, [1, 2], 1),
    (["N", "C", "C", "C", "C"], [2], 1),
    (["C", "C", "O", "C", "C"], [], 1),
    (["C"] * 3, [], 1),
    (["C", "C", "N", "C", "C", "C"], [3], 1),
]

# Fused systems as terminal groups; first atom bonds to the parent.
FUSED = [
    "c1ccc2ccccc2c1",
    "c1ccc2ncccc2c1",
    "c1ccc2c(c1)CCC2",
    "c1ccc2c(c1)CCCC2",
    "c1ccc2c(c1)OCO2",
    "c1cnc2ccccc2c1",
]

LINKERS = [
    ("", 4), ("C", 4), ("CC", 2), ("O", 3), ("N", 2), ("C(=O)N", 5),
    ("NC(=O)", 4), ("C(=O)O", 2), ("S(=O)(=O)N", 2), ("CO", 2), ("OC", 2),
    ("CCN", 1), ("C=C", 1), ("C#C", 1), ("NC(=O)N", 2), ("CN", 2),
    ("C(=O)", 3), ("CCC", 1), ("OCC", 1), ("N(C)", 1),
]

SUBSTITUENTS = [
    ("C", 8), ("F", 6), ("Cl", 5), ("Br", 2), ("O", 3), ("N", 2), ("OC", 5),
    ("C(F)(F)F", 3), ("C#N", 2), ("[N+](=O)[O-]", 2), ("C(=O)O", 2),
    ("C(C)C", 1), ("C(=O)N", 1), ("S(C)(=O)=O", 1), ("OC(F)(F)F", 1),
    ("CC", 2), ("C=O", 1), ("N(C)C", 1), ("C(C)(C)C", 1), ("CO", 1),
]

CHAINS = ["CCN(C)C", "CCCCC", "CCOCC", "CC(C)C", "CCC(=O)O", "CCCN", "OCCO"]


def pick(rng, weighted):
    items = [w[0] for w in weighted]
    weights = [w[-1] for w in weighted]
    return rng.choices(items, weights=weights, k=1)[0]


class Builder:
    def __init__(self, rng):
        self.rng = rng
        self.digit = 0

    def ring(self, atoms, branches):
        self.digit += 1
        d = str(self.digit)
        out = ""
        for i, a in enumerate(atoms):
            out += a
            if i == 0:
                out += d
            if i == len(atoms) - 1:
                out += d
            if i in branches:
                out += "(" + branches[i] + ")"
        return out

    def linked(self, link, atoms_first_aromatic, child):
        if link == "" and atoms_first_aromatic:
            return "-" + child
        return link + child

    def group(self, depth):
        """A ring-bearing group whose first atom bonds to the parent."""
        rng = self.rng
        if rng.random() < 0.12:
            a, b = str(self.digit + 1), str(self.digit + 2)
            self.digit += 2
            s = FUSED[rng.randrange(len(FUSED))]
            return s.replace("1", "x").replace("2", b).replace("x", a)
        atoms, positions, _ = self.rng.choices(
            RINGS, weights=[r[2] for r in RINGS], k=1)[0]
        branches = {}
        free = list(positions)
        rng.shuffle(free)
        if depth > 0 and free and rng.random() < 0.8:
            pos = free.pop()
            link = pick(rng, LINKERS)
            child = self.group(depth - 1)
            aromatic_pair = atoms[pos].islower() and child[0].islower()
            branches[pos] = self.linked(link, aromatic_pair, child)
        n_subs = rng.choice([0, 0, 1, 1, 1, 2])
        for _ in range(n_subs):
            if not free:
                break
            branches[free.pop()] = pick(rng, SUBSTITUENTS)
        return self.ring(atoms, branches)

    def molecule(self):
        rng = self.rng
        self.digit = 0
        depth = rng.choice([1, 1, 2, 2, 2, 3])
        core = self.group(depth)
        if rng.random() < 0.15:
            core = CHAINS[rng.randrange(len(CHAINS))] + core
        return core


def heavy_atoms(smi):
    return len(re.findall(r"Cl|Br|\[[^\]]+\]|[BCNOPSFI]|[bcnops]", smi))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--n", type=int, default=800)
    ap.add_argument("--min-atoms", type=int, default=10)
    ap.add_argument("--max-atoms", type=int, default=34)
    args = ap.parse_args()
    rng = random.Random(args.seed)
    seen = set()
    out = []
    while len(out) < args.n:
        smi = Builder(rng).molecule()
        if not (args.min_atoms <= heavy_atoms(smi) <= args.max_atoms):
            continue
        if smi in seen:
            continue
        seen.add(smi)
        out.append(smi)
    for s in out:
        print(s)


if __name__ == "__main__":
    main()
