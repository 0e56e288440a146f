//
// Project hiergen - Copyright 2026 hiergen authors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef HIERGEN_ASSEMBLY_H_
#define HIERGEN_ASSEMBLY_H_

#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hiergen/motifs.h"

namespace hiergen {

// Atom pairs (partial-graph atom of the parent, child template atom) merged
// when a child motif is attached.
struct Candidate {
  std::vector<std::pair<int, int>> pairs;

  bool operator==(const Candidate &other) const = default;
};

// Every map of a consecutive run of child marked atoms onto an equally long,
// label- and bond-compatible run of parent atoms; single atoms included.
// No valence filtering or symmetry reduction.
std::vector<Candidate> enumerate_raw_candidates(const MolGraph &partial,
                                                std::span<const int> parent_atoms,
                                                const MolGraph &child,
                                                std::span<const int> child_marks);

// Interns per-atom motif memberships as integer classes so that keys of
// states derived from the same parent state are comparable.
class MembershipClasses {
public:
  std::vector<int> classes(const HierGraph &state);

private:
  std::map<std::vector<int>, int> ids_;
};

// Canonical key of a partial hierarchy: molecule plus node memberships.
std::string state_key(const HierGraph &state, MembershipClasses &classes);

// Partial hierarchy holding only the root motif.
HierGraph root_state(const Vocab &vocab, int motif, int attach);

// Appends a child node under `parent`. Returns false (leaving `out`
// unspecified) when the merge conflicts or breaks valence.
bool attach_motif(const HierGraph &state, int parent, const Vocab &vocab,
                  int motif, int attach, const Candidate &cand,
                  HierGraph &out);

// Valence-valid candidates, one per distinct resulting state. `keys`
// receives the state keys (interned through `classes`) when non-null.
std::vector<Candidate> enumerate_candidates(const HierGraph &state, int parent,
                                            const Vocab &vocab, int motif,
                                            int attach,
                                            MembershipClasses &classes,
                                            std::vector<std::string> *keys
                                            = nullptr);

inline std::vector<Candidate> enumerate_candidates(const HierGraph &state,
                                                   int parent,
                                                   const Vocab &vocab,
                                                   int motif, int attach) {
  MembershipClasses classes;
  return enumerate_candidates(state, parent, vocab, motif, attach, classes);
}

struct TraceStep {
  // Node on top of the frontier; -1 for the root emission.
  int parent = -1;
  // Vocabulary index, or -1 for STOP.
  int motif = -1;
  int attach = -1;
  int target = -1;
  std::vector<Candidate> candidates;
  // Number of nodes present when the decision is taken.
  int state = 0;

  bool stop() const { return motif < 0; }
};

struct DecodeTrace {
  // Hierarchy in generation order, as rebuilt by the steps.
  HierGraph result;
  // Atoms and bonds present once k nodes exist (index 0 unused).
  std::vector<int> atom_counts;
  std::vector<int> bond_counts;
  std::vector<TraceStep> steps;

  int num_nodes() const { return result.size(); }
};

// Depth-first teacher-forcing trace. Throws CandidateNotFound when the true
// attachment is missing from the enumerated candidates and UnknownMotif for
// attachment configurations outside the vocabulary.
DecodeTrace dfs_decode_trace(const HierGraph &h, const Vocab &vocab);

// State seen by the decoder once `num_nodes` motifs have been placed.
HierGraph prefix_state(const DecodeTrace &trace, int num_nodes);

// Re-executes the steps from scratch.
HierGraph replay(const DecodeTrace &trace, const Vocab &vocab);

}  // namespace hiergen

#endif  // HIERGEN_ASSEMBLY_H_
