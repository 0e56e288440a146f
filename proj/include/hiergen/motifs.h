//
// Project hiergen - Copyright 2026 hiergen authors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef HIERGEN_MOTIFS_H_
#define HIERGEN_MOTIFS_H_

#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "hiergen/molgraph.h"

namespace hiergen {

// Maximum child-order label; larger positions clamp to this value.
inline constexpr int kMaxChildOrder = 16;

// Bonds that are cut edges with both endpoints of degree >= 2 and at least
// one endpoint in a ring.
std::vector<int> find_bridge_bonds(const MolGraph &mol);

// A connected piece of a molecule. Atoms and bonds index into the source
// molecule; pieces of one decomposition overlap only on shared atoms.
struct Fragment {
  std::vector<int> atoms;
  std::vector<int> bonds;
};

// Canonical SMILES of the fragment viewed as a standalone graph.
std::string fragment_key(const MolGraph &mol, const Fragment &frag);

// Smallest set of smallest rings of one fragment, each ring given as its
// bond list in the source molecule. Horton candidates with GF(2) reduction.
std::vector<std::vector<int>> sssr(const MolGraph &mol, const Fragment &frag);

// Splits the molecule at bridge bonds: every bridge becomes a two-atom
// fragment, and the components left after removing bridges become fragments
// too. Components that are a single atom already covered by a bridge are
// dropped.
std::vector<Fragment> bridge_fragments(const MolGraph &mol);

// Rings plus leftover bonds. When the pieces admit no motif tree (rings
// intersecting in a cycle), the fragment is returned whole.
std::vector<Fragment> ring_bond_pieces(const MolGraph &mol,
                                       const Fragment &frag);

struct DecomposeOptions {
  // Always split fragments into single rings and bonds.
  bool small_motifs = false;
};

// Fragments for which keep(key) holds stay whole; others become rings plus
// bonds.
std::vector<Fragment>
decompose(const MolGraph &mol,
          const std::function<bool(const std::string &)> &keep,
          const DecomposeOptions &opts = {});

class MotifVocab {
public:
  int size() const { return static_cast<int>(keys_.size()); }
  bool empty() const { return keys_.empty(); }

  // Index of `key`, or -1.
  int find(std::string_view key) const;
  bool contains(std::string_view key) const { return find(key) >= 0; }

  int add(const std::string &key, long count);

  const std::string &key(int i) const { return keys_[i]; }
  long count(int i) const { return counts_[i]; }
  // Template parsed from the key; atom k is canonical atom k.
  const MolGraph &motif(int i) const { return templates_[i]; }

private:
  std::vector<std::string> keys_;
  std::vector<long> counts_;
  std::vector<MolGraph> templates_;
  std::map<std::string, int, std::less<>> index_;
};

struct AttachConfig {
  // Template atom indices, ascending.
  std::vector<int> marks;
  // Canonical key of the template with marks as atom classes.
  std::string key;
  long count = 0;
};

// Per-motif attachment vocabularies. Local index size(m) is the reserved
// UNK slot of motif m, used only when encoding unseen configurations.
class AttachVocab {
public:
  void resize(int num_motifs);

  int num_motifs() const { return static_cast<int>(configs_.size()); }
  int size(int motif) const { return static_cast<int>(configs_[motif].size()); }
  int unk(int motif) const { return size(motif); }

  const AttachConfig &config(int motif, int local) const {
    return configs_[motif][local];
  }

  // Local index of the configuration with this key, or unk(motif).
  int find(int motif, std::string_view key) const;

  int add(int motif, AttachConfig config);

  // Total slots including one UNK per motif.
  int total() const;
  // Dense index of (motif, local) in [0, total()).
  int global(int motif, int local) const;

  double mean_size() const;

private:
  std::vector<std::vector<AttachConfig>> configs_;
};

struct Vocab {
  MotifVocab motifs;
  AttachVocab attach;

  // A fragment stays whole exactly when its key is a motif.
  std::vector<Fragment> decompose(const MolGraph &mol) const {
    return hiergen::decompose(
        mol, [this](const std::string &k) { return motifs.contains(k); });
  }
};

// Key of a motif template with the given marked atoms.
std::string attach_key(const MolGraph &tmpl, const std::vector<int> &marks);

struct VocabStats {
  std::vector<std::string> skipped;
  // Histogram of motif template sizes (heavy atoms).
  std::map<int, int> motif_sizes;
};

// Two passes: fragments occurring more than `min_count` times are kept, the
// rest are split into rings and bonds. Every piece observed becomes a motif
// and every observed marking an attachment configuration.
Vocab build_vocab(const std::vector<MolGraph> &corpus, int min_count,
                  const DecomposeOptions &opts = {},
                  VocabStats *stats = nullptr);

void write_vocab(std::ostream &motifs, std::ostream &attach,
                 const Vocab &vocab);
Vocab read_vocab(std::istream &motifs, std::istream &attach);

void save_vocab(const std::string &dir, const Vocab &vocab);
Vocab load_vocab(const std::string &dir);

// One motif node of a hierarchical graph. `atoms[k]` is the molecule atom
// playing template atom k.
struct HierNode {
  int motif = -1;
  // Local attachment index; may be the UNK slot when encoding.
  int attach = -1;
  std::vector<int> atoms;
  // Marked template atoms (intersections with other motifs), ascending.
  std::vector<int> marks;
  int parent = -1;
  // 1-based position among the parent's children; 0 for the root.
  int order = 0;
  std::vector<int> children;
};

struct HierGraph {
  MolGraph mol;
  // Ordered by depth-first traversal from the root; node 0 is the root.
  std::vector<HierNode> nodes;

  int size() const { return static_cast<int>(nodes.size()); }
  int num_edges() const;
  // Child-order label of edge i -> j: k when i is the k-th child of j
  // (clamped), 0 when j is the child of i.
  int edge_label(int i, int j) const;
};

// Decomposes `mol` (renumbered to canonical order), builds the motif tree and
// resolves attachment configurations. Throws UnknownMotif when a piece is
// missing from the vocabulary.
HierGraph build_hier_graph(const MolGraph &mol, const Vocab &vocab);

}  // namespace hiergen

#endif  // HIERGEN_MOTIFS_H_
