//
// Project hiergen - Copyright 2026 hiergen authors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef HIERGEN_HMPN_H_
#define HIERGEN_HMPN_H_

#include <random>
#include <string>
#include <vector>

#include "hiergen/motifs.h"
#include "hiergen/tensor.h"

namespace hiergen {

// (element, aromatic, charge in {-1, 0, +1}) embedding slots.
inline constexpr int kNumAtomLabels = kNumElements * 2 * 3;
int atom_label(const Atom &atom);

struct ModelDims {
  int hidden = 64;
  int embed = 64;
  int latent = 8;
  int iterations = 5;
  // 3: full hierarchy; 2: attachment layer on top; 1: pooled atoms.
  int encoder_layers = 3;
};

// Directed message slots for an undirected graph: edge k yields slots 2k
// (u -> v) and 2k + 1 (v -> u).
struct MpnGraph {
  int num_nodes = 0;
  std::vector<int> src;
  std::vector<int> dst;
  // (incoming slot w -> u, outgoing slot u -> v) with w != v.
  std::vector<int> pair_in;
  std::vector<int> pair_out;

  int num_slots() const { return static_cast<int>(src.size()); }
  static int reverse(int slot) { return slot ^ 1; }

  void add_edge(int u, int v);
  // Fills the pair lists; call after the last add_edge.
  void finalize();
};

MpnGraph atom_graph(const MolGraph &mol);
// Motif-layer tree of a hierarchy, edges in node order (child, parent).
MpnGraph motif_graph(const HierGraph &h);

namespace nn {

template <class S>
int add_weight(ParamStore<S> &store, const std::string &name, int rows,
               int cols, std::mt19937_64 &rng);
template <class S>
int add_embedding(ParamStore<S> &store, const std::string &name, int rows,
                  int cols, std::mt19937_64 &rng);

template <class S>
struct Linear {
  int weight = -1;
  int bias = -1;

  void init(ParamStore<S> &store, const std::string &name, int in, int out,
            std::mt19937_64 &rng);
  Var<S> operator()(Tape<S> &t, ParamStore<S> &store, Var<S> x) const;
};

// One relu hidden layer.
template <class S>
struct Mlp {
  Linear<S> hidden;
  Linear<S> out;

  void init(ParamStore<S> &store, const std::string &name, int in, int mid,
            int out_dim, std::mt19937_64 &rng);
  Var<S> operator()(Tape<S> &t, ParamStore<S> &store, Var<S> x) const;
};

// LSTM message passing with readout h_v = MLP(x_v, sum of incoming
// messages). The gate weights act on [x_u, x_uv, message].
template <class S>
struct LstmMpn {
  int w_z = -1, w_o = -1, w_r = -1, w = -1;
  int b_z = -1, b_o = -1, b_r = -1, b = -1;
  Mlp<S> readout;
  int node_dim = 0, edge_dim = 0, hidden = 0;

  void init(ParamStore<S> &store, const std::string &name, int node_dim,
            int edge_dim, int hidden, std::mt19937_64 &rng);

  // node_feats: n x node_dim; slot_feats: one row per directed slot.
  Var<S> operator()(Tape<S> &t, ParamStore<S> &store, const MpnGraph &g,
                    Var<S> node_feats, Var<S> slot_feats,
                    int iterations) const;
};

template <class S>
struct EncoderOutput {
  Var<S> atom_vecs;
  Var<S> attach_vecs;
  Var<S> motif_vecs;
};

template <class S>
struct LatentSample {
  Var<S> z;
  Var<S> mu;
  Var<S> log_sigma;
  Var<S> kl;
};

// z = mu + exp(log_sigma) * eps; KL against N(0, I). `eps` null means 0.
template <class S>
LatentSample<S> reparameterize(Tape<S> &t, Var<S> mu, Var<S> log_sigma,
                               const Matrix<S> *eps);

template <class S>
class HierEncoder {
public:
  HierEncoder() = default;
  HierEncoder(ParamStore<S> &store, const std::string &name,
              const ModelDims &dims, const Vocab &vocab,
              std::mt19937_64 &rng);

  EncoderOutput<S> encode(Tape<S> &t, ParamStore<S> &store,
                          const HierGraph &h) const;
  // Atom-layer pass over a plain molecule. `offset`, when given, is added
  // to the atom input embeddings (one row per atom).
  Var<S> encode_atoms(Tape<S> &t, ParamStore<S> &store, const MolGraph &mol,
                      const Var<S> *offset = nullptr) const;

  const ModelDims &dims() const { return dims_; }

private:
  ModelDims dims_;
  int emb_atom_ = -1, emb_bond_ = -1, emb_attach_ = -1, emb_motif_ = -1;
  int emb_order_ = -1;
  std::vector<int> attach_offset_;
  LstmMpn<S> atom_mpn_, attach_mpn_, motif_mpn_;
  Mlp<S> attach_in_, motif_in_;
};

// Bilinear attention: weights softmax(q W m_i) over memory rows, one query
// per row of `query`. Throws Error(kEmptyMemory) on an empty memory.
template <class S>
struct Attention {
  int weight = -1;

  void init(ParamStore<S> &store, const std::string &name, int query_dim,
            int memory_dim, std::mt19937_64 &rng);
  Var<S> weights(Tape<S> &t, ParamStore<S> &store, Var<S> query,
                 Var<S> memory) const;
  Var<S> operator()(Tape<S> &t, ParamStore<S> &store, Var<S> query,
                    Var<S> memory) const;
};

// Gaussian posterior head on a single row vector.
template <class S>
struct LatentHead {
  Linear<S> mu;
  Linear<S> log_sigma;

  void init(ParamStore<S> &store, const std::string &name, int in,
            int latent, std::mt19937_64 &rng);
  LatentSample<S> operator()(Tape<S> &t, ParamStore<S> &store, Var<S> x,
                             const Matrix<S> *eps) const;
};

}  // namespace nn
}  // namespace hiergen

#endif  // HIERGEN_HMPN_H_
