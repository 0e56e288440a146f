//
// Project hiergen - Copyright 2026 hiergen authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "hiergen/hmpn.h"

#include <algorithm>

#include "hiergen/error.h"

namespace hiergen {

int atom_label(const Atom &atom) {
  int charge = std::clamp(atom.formal_charge, -1, 1) + 1;
  return (static_cast<int>(atom.element) * 2 + (atom.aromatic ? 1 : 0)) * 3
         + charge;
}

void MpnGraph::add_edge(int u, int v) {
  src.push_back(u);
  dst.push_back(v);
  src.push_back(v);
  dst.push_back(u);
}

void MpnGraph::finalize() {
  pair_in.clear();
  pair_out.clear();
  std::vector<std::vector<int>> incoming(num_nodes);
  for (int e = 0; e < num_slots(); ++e)
    incoming[dst[e]].push_back(e);
  for (int e = 0; e < num_slots(); ++e) {
    for (int in: incoming[src[e]]) {
      if (in == reverse(e))
        continue;
      pair_in.push_back(in);
      pair_out.push_back(e);
    }
  }
}

MpnGraph atom_graph(const MolGraph &mol) {
  MpnGraph g;
  g.num_nodes = mol.num_atoms();
  for (const Bond &b: mol.bonds())
    g.add_edge(b.begin, b.end);
  g.finalize();
  return g;
}

MpnGraph motif_graph(const HierGraph &h) {
  MpnGraph g;
  g.num_nodes = h.size();
  for (int i = 0; i < h.size(); ++i)
    if (h.nodes[i].parent >= 0)
      g.add_edge(i, h.nodes[i].parent);
  g.finalize();
  return g;
}

namespace nn {

template <class S>
int add_weight(ParamStore<S> &store, const std::string &name, int rows,
               int cols, std::mt19937_64 &rng) {
  int id = store.add(name, rows, cols);
  store.init_uniform(id, rng);
  return id;
}

template <class S>
int add_embedding(ParamStore<S> &store, const std::string &name, int rows,
                  int cols, std::mt19937_64 &rng) {
  int id = store.add(name, rows, cols);
  store.init_normal(id, 0.01, rng);
  return id;
}

template <class S>
void Linear<S>::init(ParamStore<S> &store, const std::string &name, int in,
                     int out, std::mt19937_64 &rng) {
  weight = add_weight(store, name + ".W", in, out, rng);
  bias = store.add(name + ".b", 1, out);
}

template <class S>
Var<S> Linear<S>::operator()(Tape<S> &t, ParamStore<S> &store,
                             Var<S> x) const {
  return add_row(matmul(x, t.param(store, weight)), t.param(store, bias));
}

template <class S>
void Mlp<S>::init(ParamStore<S> &store, const std::string &name, int in,
                  int mid, int out_dim, std::mt19937_64 &rng) {
  hidden.init(store, name + ".0", in, mid, rng);
  out.init(store, name + ".1", mid, out_dim, rng);
}

template <class S>
Var<S> Mlp<S>::operator()(Tape<S> &t, ParamStore<S> &store, Var<S> x) const {
  return out(t, store, relu(hidden(t, store, x)));
}

template <class S>
void LstmMpn<S>::init(ParamStore<S> &store, const std::string &name,
                      int node_dim_, int edge_dim_, int hidden_,
                      std::mt19937_64 &rng) {
  node_dim = node_dim_;
  edge_dim = edge_dim_;
  hidden = hidden_;
  int in = node_dim + edge_dim + hidden;
  w_z = add_weight(store, name + ".W_z", in, hidden, rng);
  w_o = add_weight(store, name + ".W_o", in, hidden, rng);
  w_r = add_weight(store, name + ".W_r", in, hidden, rng);
  w = add_weight(store, name + ".W", in, hidden, rng);
  b_z = store.add(name + ".b_z", 1, hidden);
  b_o = store.add(name + ".b_o", 1, hidden);
  b_r = store.add(name + ".b_r", 1, hidden);
  b = store.add(name + ".b", 1, hidden);
  readout.init(store, name + ".out", node_dim + hidden, hidden, hidden, rng);
}

template <class S>
Var<S> LstmMpn<S>::operator()(Tape<S> &t, ParamStore<S> &store,
                              const MpnGraph &g, Var<S> node_feats,
                              Var<S> slot_feats, int iterations) const {
  if (node_feats.rows() != g.num_nodes || node_feats.cols() != node_dim
      || slot_feats.rows() != g.num_slots() || slot_feats.cols() != edge_dim)
    throw Error(ErrorKind::kShapeMismatch, "message passing input shape");
  int n = g.num_nodes, e = g.num_slots(), x_dim = node_dim + edge_dim;
  Var<S> messages_in = t.constant(n, hidden, S(0));
  if (e > 0 && iterations > 0) {
    auto split = [&](int id, Var<S> &x_part, Var<S> &h_part) {
      Var<S> full = t.param(store, id);
      x_part = slice_rows(full, 0, x_dim);
      h_part = slice_rows(full, x_dim, hidden);
    };
    Var<S> zx, zh, ox, oh, rx, rh, cx, ch;
    split(w_z, zx, zh);
    split(w_o, ox, oh);
    split(w_r, rx, rh);
    split(w, cx, ch);
    Var<S> u = concat_cols(
        {gather_rows(node_feats, std::span<const int>(g.src)), slot_feats});
    Var<S> az = add_row(matmul(u, zx), t.param(store, b_z));
    Var<S> ao = add_row(matmul(u, ox), t.param(store, b_o));
    Var<S> ar = add_row(matmul(u, rx), t.param(store, b_r));
    Var<S> ac = add_row(matmul(u, cx), t.param(store, b));
    Var<S> ar_pairs = gather_rows(ar, std::span<const int>(g.pair_out));
    std::vector<int> rev(e);
    for (int s = 0; s < e; ++s)
      rev[s] = MpnGraph::reverse(s);

    Var<S> nu = t.constant(e, hidden, S(0));
    Var<S> c = t.constant(e, hidden, S(0));
    for (int it = 0; it < iterations; ++it) {
      Var<S> node_sum = segment_sum(nu, std::span<const int>(g.dst), n);
      Var<S> sum = gather_rows(node_sum, std::span<const int>(g.src))
                   - gather_rows(nu, std::span<const int>(rev));
      Var<S> gi = sigmoid(az + matmul(sum, zh));
      Var<S> go = sigmoid(ao + matmul(sum, oh));
      Var<S> cand = tanh(ac + matmul(sum, ch));
      Var<S> c_next = gi * cand;
      if (!g.pair_in.empty()) {
        Var<S> f = sigmoid(ar_pairs
                           + gather_rows(matmul(nu, rh),
                                         std::span<const int>(g.pair_in)));
        Var<S> kept = f * gather_rows(c, std::span<const int>(g.pair_in));
        c_next = c_next
                 + segment_sum(kept, std::span<const int>(g.pair_out), e);
      }
      c = c_next;
      nu = go * tanh(c);
    }
    messages_in = segment_sum(nu, std::span<const int>(g.dst), n);
  }
  return readout(t, store, concat_cols({node_feats, messages_in}));
}

template <class S>
LatentSample<S> reparameterize(Tape<S> &t, Var<S> mu, Var<S> log_sigma,
                               const Matrix<S> *eps) {
  LatentSample<S> out;
  out.mu = mu;
  out.log_sigma = log_sigma;
  out.z = mu;
  if (eps != nullptr)
    out.z = mu + exp(log_sigma) * t.constant(*eps);
  Var<S> two_ls = scale(log_sigma, S(2));
  Var<S> terms = mu * mu + exp(two_ls) - two_ls
                 - t.constant(mu.rows(), mu.cols(), S(1));
  out.kl = scale(sum_all(terms), S(0.5));
  return out;
}

template <class S>
HierEncoder<S>::HierEncoder(ParamStore<S> &store, const std::string &name,
                            const ModelDims &dims, const Vocab &vocab,
                            std::mt19937_64 &rng)
    : dims_(dims) {
  int e = dims.embed, h = dims.hidden;
  emb_atom_ = add_embedding(store, name + ".emb.atom", kNumAtomLabels, e, rng);
  emb_bond_ = add_embedding(store, name + ".emb.bond", kNumBondOrders, e, rng);
  emb_attach_ = add_embedding(store, name + ".emb.attach",
                              std::max(vocab.attach.total(), 1), e, rng);
  emb_motif_ = add_embedding(store, name + ".emb.motif",
                             std::max(vocab.motifs.size(), 1), e, rng);
  emb_order_ = add_embedding(store, name + ".emb.order", kMaxChildOrder + 1, e,
                             rng);
  for (int m = 0; m < vocab.attach.num_motifs(); ++m)
    attach_offset_.push_back(vocab.attach.global(m, 0));
  atom_mpn_.init(store, name + ".mpn.atom", e, e, h, rng);
  if (dims.encoder_layers >= 2) {
    attach_in_.init(store, name + ".in.attach", e + h, h, h, rng);
    attach_mpn_.init(store, name + ".mpn.attach", h, e, h, rng);
  }
  if (dims.encoder_layers >= 3) {
    motif_in_.init(store, name + ".in.motif", e + h, h, h, rng);
    motif_mpn_.init(store, name + ".mpn.motif", h, e, h, rng);
  }
}

template <class S>
Var<S> HierEncoder<S>::encode_atoms(Tape<S> &t, ParamStore<S> &store,
                                    const MolGraph &mol,
                                    const Var<S> *offset) const {
  MpnGraph g = atom_graph(mol);
  std::vector<int> labels(mol.num_atoms());
  for (int a = 0; a < mol.num_atoms(); ++a)
    labels[a] = atom_label(mol.atom(a));
  std::vector<int> bond_types(g.num_slots());
  for (int s = 0; s < g.num_slots(); ++s)
    bond_types[s] = bond_order_index(mol.bond(s / 2).order);
  Var<S> x = gather_rows(t.param(store, emb_atom_),
                         std::span<const int>(labels));
  if (offset != nullptr)
    x = x + *offset;
  Var<S> xe = gather_rows(t.param(store, emb_bond_),
                          std::span<const int>(bond_types));
  return atom_mpn_(t, store, g, x, xe, dims_.iterations);
}

template <class S>
EncoderOutput<S> HierEncoder<S>::encode(Tape<S> &t, ParamStore<S> &store,
                                        const HierGraph &h) const {
  EncoderOutput<S> out;
  out.atom_vecs = encode_atoms(t, store, h.mol);
  int n = h.size();
  std::vector<int> member_atoms, member_nodes, attach_ids(n), motif_ids(n);
  for (int i = 0; i < n; ++i) {
    const HierNode &node = h.nodes[i];
    for (int a: node.atoms) {
      member_atoms.push_back(a);
      member_nodes.push_back(i);
    }
    motif_ids[i] = node.motif;
    attach_ids[i] = attach_offset_[node.motif] + node.attach;
  }
  Var<S> pooled = segment_sum(
      gather_rows(out.atom_vecs, std::span<const int>(member_atoms)),
      std::span<const int>(member_nodes), n);
  if (dims_.encoder_layers <= 1) {
    out.attach_vecs = pooled;
    out.motif_vecs = pooled;
    return out;
  }
  MpnGraph g = motif_graph(h);
  std::vector<int> orders(g.num_slots());
  for (int s = 0; s < g.num_slots(); ++s)
    orders[s] = h.edge_label(g.src[s], g.dst[s]);
  Var<S> edge = gather_rows(t.param(store, emb_order_),
                            std::span<const int>(orders));
  Var<S> f_attach = attach_in_(
      t, store,
      concat_cols({gather_rows(t.param(store, emb_attach_),
                               std::span<const int>(attach_ids)),
                   pooled}));
  out.attach_vecs = attach_mpn_(t, store, g, f_attach, edge,
                                dims_.iterations);
  if (dims_.encoder_layers == 2) {
    out.motif_vecs = out.attach_vecs;
    return out;
  }
  Var<S> f_motif = motif_in_(
      t, store,
      concat_cols({gather_rows(t.param(store, emb_motif_),
                               std::span<const int>(motif_ids)),
                   out.attach_vecs}));
  out.motif_vecs = motif_mpn_(t, store, g, f_motif, edge, dims_.iterations);
  return out;
}

template <class S>
void Attention<S>::init(ParamStore<S> &store, const std::string &name,
                        int query_dim, int memory_dim, std::mt19937_64 &rng) {
  weight = add_weight(store, name + ".W", query_dim, memory_dim, rng);
}

template <class S>
Var<S> Attention<S>::weights(Tape<S> &t, ParamStore<S> &store, Var<S> query,
                             Var<S> memory) const {
  if (memory.rows() == 0)
    throw Error(ErrorKind::kEmptyMemory, "attention over empty memory");
  Var<S> scores = matmul(matmul(query, t.param(store, weight)),
                         transpose(memory));
  return softmax(scores);
}

template <class S>
Var<S> Attention<S>::operator()(Tape<S> &t, ParamStore<S> &store,
                                Var<S> query, Var<S> memory) const {
  return matmul(weights(t, store, query, memory), memory);
}

template <class S>
void LatentHead<S>::init(ParamStore<S> &store, const std::string &name,
                         int in, int latent, std::mt19937_64 &rng) {
  mu.init(store, name + ".mu", in, latent, rng);
  log_sigma.init(store, name + ".log_sigma", in, latent, rng);
}

template <class S>
LatentSample<S> LatentHead<S>::operator()(Tape<S> &t, ParamStore<S> &store,
                                          Var<S> x,
                                          const Matrix<S> *eps) const {
  return reparameterize(t, mu(t, store, x), log_sigma(t, store, x), eps);
}

#define HIERGEN_INSTANTIATE(S)                                               \
  template int add_weight(ParamStore<S> &, const std::string &, int, int,    \
                          std::mt19937_64 &);                                \
  template int add_embedding(ParamStore<S> &, const std::string &, int, int, \
                             std::mt19937_64 &);                             \
  template struct Linear<S>;                                                 \
  template struct Mlp<S>;                                                    \
  template struct LstmMpn<S>;                                                \
  template LatentSample<S> reparameterize(Tape<S> &, Var<S>, Var<S>,         \
                                          const Matrix<S> *);                \
  template class HierEncoder<S>;                                             \
  template struct LatentHead<S>;                                             \
  template struct Attention<S>;

HIERGEN_INSTANTIATE(float)
HIERGEN_INSTANTIATE(double)

#undef HIERGEN_INSTANTIATE

}  // namespace nn
}  // namespace hiergen
