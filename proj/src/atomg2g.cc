//
// Project hiergen - Copyright 2026 hiergen authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "hiergen/atomg2g.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "hiergen/chem.h"
#include "hiergen/config.h"
#include "hiergen/error.h"
#include "hiergen/smiles.h"

namespace hiergen {

AtomLabels::AtomLabels(std::vector<std::pair<Element, int>> entries)
    : entries_(std::move(entries)) {
  std::sort(entries_.begin(), entries_.end());
  entries_.erase(std::unique(entries_.begin(), entries_.end()),
                 entries_.end());
}

AtomLabels AtomLabels::from_corpus(const std::vector<MolGraph> &mols) {
  std::vector<std::pair<Element, int>> entries;
  for (const MolGraph &m: mols)
    for (const Atom &a: m.atoms())
      entries.emplace_back(a.element, a.formal_charge);
  return AtomLabels(std::move(entries));
}

int AtomLabels::index(const Atom &atom) const {
  std::pair<Element, int> key(atom.element, atom.formal_charge);
  auto it = std::lower_bound(entries_.begin(), entries_.end(), key);
  if (it == entries_.end() || *it != key)
    return -1;
  return static_cast<int>(it - entries_.begin());
}

Atom AtomLabels::atom(int label) const {
  Atom a;
  a.element = entries_.at(label).first;
  a.formal_charge = entries_.at(label).second;
  return a;
}

void AtomLabels::save(const std::string &path) const {
  std::ofstream out(path);
  if (!out)
    throw Error(ErrorKind::kIo, "cannot write " + path);
  for (const auto &[e, charge]: entries_)
    out << element_symbol(e) << " " << charge << "\n";
  if (!out)
    throw Error(ErrorKind::kIo, "write failed for " + path);
}

AtomLabels AtomLabels::load(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw Error(ErrorKind::kIo, "cannot read " + path);
  std::vector<std::pair<Element, int>> entries;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty())
      continue;
    std::istringstream row(line);
    std::string sym;
    int charge = 0;
    std::optional<Element> e;
    if (!(row >> sym >> charge) || !(e = element_from_symbol(sym)))
      throw Error(ErrorKind::kFormat,
                  path + ":" + std::to_string(lineno) + ": bad atom label");
    entries.emplace_back(*e, charge);
  }
  return AtomLabels(std::move(entries));
}

MolGraph prepare_atom_input(const MolGraph &mol) {
  Canonical c = canonicalize(mol);
  return kekulize(mol.reordered(c.order));
}

int spare_valence(const MolGraph &g, int atom) {
  const Atom &a = g.atom(atom);
  return max_valence(a.element, a.formal_charge) - g.bond_sum(atom);
}

std::vector<char> bond_choice_mask(const MolGraph &g, int u, int a,
                                   bool first) {
  int room = std::min(spare_valence(g, u), spare_valence(g, a));
  std::vector<char> mask(kNumBondChoices, 0);
  for (int o = 0; o < 3; ++o)
    mask[o] = o + 1 <= room;
  mask[kNoBond] = !first;
  return mask;
}

namespace {

BondOrder choice_order(int choice) {
  return static_cast<BondOrder>(choice + 1);
}

}  // namespace

AtomTrace make_atom_trace(const MolGraph &prepared, const AtomLabels &labels) {
  int n = prepared.num_atoms();
  if (n == 0)
    throw Error(ErrorKind::kEmptyInput, "empty molecule");
  if (!prepared.is_connected())
    throw Error(ErrorKind::kFormat, "disconnected molecule");
  for (const Bond &b: prepared.bonds())
    if (b.order == BondOrder::kAromatic)
      throw Error(ErrorKind::kFormat, "aromatic bond in atom decoder input");

  std::vector<int> order{0};
  std::vector<char> seen(n, 0);
  seen[0] = 1;
  for (std::size_t i = 0; i < order.size(); ++i) {
    std::vector<int> next;
    for (const Neighbor &nb: prepared.neighbors(order[i]))
      if (!seen[nb.atom])
        next.push_back(nb.atom);
    std::sort(next.begin(), next.end());
    for (int w: next) {
      seen[w] = 1;
      order.push_back(w);
    }
  }

  AtomTrace tr;
  tr.mol = prepared.reordered(order);
  for (const Atom &a: tr.mol.atoms()) {
    int l = labels.index(a);
    if (l < 0)
      throw Error(ErrorKind::kUnknownMotif,
                  "atom " + std::string(element_symbol(a.element))
                      + " outside the atom label set");
    tr.labels.push_back(l);
  }

  MolGraph g;
  g.add_atom(tr.mol.atom(0));
  std::deque<int> queue{0};
  int next = 1;
  while (!queue.empty()) {
    AtomStep step;
    step.prefix = g.num_atoms();
    step.front = queue.front();
    int v = step.front;
    bool has_new = false;
    for (const Neighbor &nb: tr.mol.neighbors(v))
      has_new |= nb.atom >= next;
    if (spare_valence(g, v) <= 0) {
      if (has_new)
        throw Error(ErrorKind::kValenceViolation,
                    "saturated atom with neighbors left");
      step.forced = true;
    }
    step.expand = has_new;
    step.queue.assign(queue.begin(), queue.end());
    if (!has_new) {
      queue.pop_front();
      tr.steps.push_back(std::move(step));
      continue;
    }
    int u = g.add_atom(tr.mol.atom(next++));
    int linked = 0;
    for (std::size_t k = 0; k < step.queue.size(); ++k) {
      int a = step.queue[k];
      int bond = tr.mol.find_bond(u, a);
      int choice = bond < 0 ? kNoBond
                            : bond_order_index(tr.mol.bond(bond).order);
      if (!bond_choice_mask(g, u, a, k == 0)[choice])
        throw Error(ErrorKind::kValenceViolation,
                    "trace bond outside the feasible choices");
      step.bonds.push_back(choice);
      if (choice != kNoBond) {
        g.add_bond(u, a, choice_order(choice));
        ++linked;
      }
    }
    int earlier = 0;
    for (const Neighbor &nb: tr.mol.neighbors(u))
      earlier += nb.atom < u;
    if (earlier != linked)
      throw Error(ErrorKind::kFormat, "bond to an atom outside the queue");
    queue.push_back(u);
    tr.steps.push_back(std::move(step));
  }
  return tr;
}

MolGraph replay_atom_trace(const AtomTrace &trace, const AtomLabels &labels) {
  MolGraph g;
  g.add_atom(labels.atom(trace.labels.at(0)));
  std::deque<int> queue{0};
  for (const AtomStep &s: trace.steps) {
    if (queue.empty() || queue.front() != s.front)
      throw Error(ErrorKind::kFormat, "trace does not follow the queue");
    if (!s.expand) {
      queue.pop_front();
      continue;
    }
    int u = g.add_atom(labels.atom(trace.labels.at(g.num_atoms())));
    for (std::size_t k = 0; k < s.queue.size(); ++k)
      if (s.bonds[k] != kNoBond)
        g.add_bond(u, queue[k], choice_order(s.bonds[k]));
    queue.push_back(u);
  }
  g.update_implicit_h();
  return g;
}

AtomExample make_atom_example(const PairExample &pair,
                              const AtomLabels &labels) {
  AtomExample ex;
  ex.x = prepare_atom_input(pair.x);
  ex.y = make_atom_trace(prepare_atom_input(pair.y), labels);
  const MolGraph &y = ex.y.mol;
  for (int p = 1; p <= y.num_atoms(); ++p) {
    int base = ex.prefixes.num_atoms();
    for (int a = 0; a < p; ++a)
      ex.prefixes.add_atom(y.atom(a));
    for (const Bond &b: y.bonds())
      if (b.begin < p && b.end < p)
        ex.prefixes.add_bond(base + b.begin, base + b.end, b.order);
  }
  return ex;
}

namespace nn {

template <class S>
AtomEncoder<S>::AtomEncoder(ParamStore<S> &store, const std::string &name,
                            const ModelDims &dims, std::mt19937_64 &rng)
    : dims_(dims) {
  emb_atom_ = add_embedding(store, name + ".emb.atom", kNumAtomLabels,
                            dims.embed, rng);
  emb_bond_ = add_embedding(store, name + ".emb.bond", kNumBondOrders,
                            dims.embed, rng);
  mpn_.init(store, name + ".mpn", dims.embed, dims.embed, dims.hidden, rng);
}

template <class S>
Var<S> AtomEncoder<S>::atom_embedding(Tape<S> &t, ParamStore<S> &store,
                                      std::span<const int> atom_labels) const {
  return gather_rows(t.param(store, emb_atom_), atom_labels);
}

template <class S>
Var<S> AtomEncoder<S>::bond_embedding(Tape<S> &t, ParamStore<S> &store,
                                      std::span<const int> order_index) const {
  return gather_rows(t.param(store, emb_bond_), order_index);
}

template <class S>
Var<S> AtomEncoder<S>::operator()(Tape<S> &t, ParamStore<S> &store,
                                  const MolGraph &mol) const {
  MpnGraph g = atom_graph(mol);
  std::vector<int> labels(mol.num_atoms());
  for (int a = 0; a < mol.num_atoms(); ++a)
    labels[a] = atom_label(mol.atom(a));
  std::vector<int> bonds(g.num_slots());
  for (int s = 0; s < g.num_slots(); ++s)
    bonds[s] = bond_order_index(mol.bond(s / 2).order);
  return mpn_(t, store, g, atom_embedding(t, store, labels),
              bond_embedding(t, store, bonds), dims_.iterations);
}

template <class S>
AtomDecoder<S>::AtomDecoder(ParamStore<S> &store, const std::string &name,
                            const ModelDims &dims,
                            std::shared_ptr<const AtomLabels> labels,
                            std::mt19937_64 &rng)
    : dims_(dims), labels_(std::move(labels)) {
  if (labels_->size() == 0)
    throw Error(ErrorKind::kEmptyInput, "empty atom label set");
  int h = dims.hidden, e = dims.embed, l = dims.latent;
  enc_ = AtomEncoder<S>(store, name + ".enc", dims, rng);
  att_d_.init(store, name + ".att.expand", 3 * h, h, rng);
  att_s_.init(store, name + ".att.atom", 3 * h, h, rng);
  att_b_.init(store, name + ".att.bond", 3 * h, h, rng);
  expand_head_.init(store, name + ".expand", 4 * h + l, h, 1, rng);
  atom_head_.init(store, name + ".atom", 4 * h + l, h, labels_->size(), rng);
  bond_head_.init(store, name + ".bond", 4 * h + l, h, kNumBondChoices, rng);
  nu_.init(store, name + ".nu", h + e, h, h, rng);
  hu_.init(store, name + ".hu", e + h, h, h, rng);
}

namespace {

template <class S>
Var<S> repeat_row(Var<S> row, int n) {
  std::vector<int> idx(n, 0);
  return gather_rows(row, std::span<const int>(idx));
}

// [h_front, sum of all rows, sum of queue rows].
template <class S>
Var<S> front_query(Var<S> hs, const std::vector<int> &queue) {
  return concat_cols({slice_rows(hs, queue.front(), 1), sum_rows(hs),
                      sum_rows(gather_rows(hs, std::span<const int>(queue)))});
}

}  // namespace

template <class S>
Var<S> AtomDecoder<S>::expand_logits(Tape<S> &t, ParamStore<S> &store,
                                     Var<S> query, Var<S> z,
                                     Var<S> memory) const {
  return expand_head_(t, store,
                      concat_cols({query, att_d_(t, store, query, memory),
                                   repeat_row(z, query.rows())}));
}

template <class S>
Var<S> AtomDecoder<S>::atom_logits(Tape<S> &t, ParamStore<S> &store,
                                   Var<S> query, Var<S> z,
                                   Var<S> memory) const {
  return atom_head_(t, store,
                    concat_cols({query, att_s_(t, store, query, memory),
                                 repeat_row(z, query.rows())}));
}

template <class S>
Var<S> AtomDecoder<S>::bond_logits(Tape<S> &t, ParamStore<S> &store,
                                   Var<S> query, Var<S> z,
                                   Var<S> memory) const {
  return bond_head_(t, store,
                    concat_cols({query, att_b_(t, store, query, memory),
                                 repeat_row(z, query.rows())}));
}

template <class S>
std::vector<char> AtomDecoder<S>::label_mask() const {
  std::vector<char> mask(labels_->size());
  for (int l = 0; l < labels_->size(); ++l) {
    Atom a = labels_->atom(l);
    mask[l] = max_valence(a.element, a.formal_charge) >= 1;
  }
  return mask;
}

template <class S>
std::vector<int> AtomDecoder<S>::encoder_labels(
    std::span<const int> labels) const {
  std::vector<int> out;
  for (int l: labels)
    out.push_back(atom_label(labels_->atom(l)));
  return out;
}

template <class S>
LossParts<S> AtomDecoder<S>::teacher_forced_loss(Tape<S> &t,
                                                 ParamStore<S> &store,
                                                 const AtomExample &ex,
                                                 Var<S> z,
                                                 Var<S> memory) const {
  const AtomTrace &tr = ex.y;
  const int n = tr.mol.num_atoms(), h = dims_.hidden;
  auto row = [](int p, int a) { return p * (p - 1) / 2 + a; };

  std::vector<int> seg;
  for (int p = 1; p <= n; ++p)
    seg.insert(seg.end(), p, p - 1);
  Var<S> hs = enc_(t, store, ex.prefixes);
  Var<S> graphs = segment_sum(hs, std::span<const int>(seg), n);

  std::vector<int> e_v, e_g, e_tg;
  std::vector<int> a_v, a_g, a_tg{tr.labels[0]};
  // Queue rows of each expand and atom decision, flattened with segment ids.
  std::vector<int> e_q, e_qseg, a_q, a_qseg;
  std::vector<int> b_g, b_a, b_u, b_tg;
  std::vector<char> b_mask;
  std::vector<int> acc_rows, acc_orders;
  // Bond decision index of each accepted bond.
  std::vector<int> acc_decision;

  MolGraph g;
  g.add_atom(tr.mol.atom(0));
  for (const AtomStep &s: tr.steps) {
    int p = s.prefix;
    if (!s.forced) {
      for (int a: s.queue) {
        e_q.push_back(row(p, a));
        e_qseg.push_back(static_cast<int>(e_tg.size()));
      }
      e_v.push_back(row(p, s.front));
      e_g.push_back(p - 1);
      e_tg.push_back(s.expand ? 1 : 0);
    }
    if (!s.expand)
      continue;
    int u = g.add_atom(tr.mol.atom(p));
    for (int a: s.queue) {
      a_q.push_back(row(p, a));
      a_qseg.push_back(static_cast<int>(a_v.size()));
    }
    a_v.push_back(row(p, s.front));
    a_g.push_back(p - 1);
    a_tg.push_back(tr.labels[u]);
    for (std::size_t k = 0; k < s.queue.size(); ++k) {
      int a = s.queue[k];
      std::vector<char> m = bond_choice_mask(g, u, a, k == 0);
      b_mask.insert(b_mask.end(), m.begin(), m.end());
      b_g.push_back(p - 1);
      b_a.push_back(row(p, a));
      b_u.push_back(tr.labels[u]);
      b_tg.push_back(s.bonds[k]);
      if (s.bonds[k] != kNoBond) {
        g.add_bond(u, a, static_cast<BondOrder>(s.bonds[k] + 1));
        acc_rows.push_back(row(p, a));
        acc_orders.push_back(s.bonds[k]);
        acc_decision.push_back(static_cast<int>(b_tg.size()) - 1);
      }
    }
  }

  LossParts<S> parts;
  parts.decisions = static_cast<int>(e_tg.size() + a_tg.size() + b_tg.size());
  if (!e_tg.empty()) {
    int ne = static_cast<int>(e_tg.size());
    Var<S> q = concat_cols(
        {gather_rows(hs, std::span<const int>(e_v)),
         gather_rows(graphs, std::span<const int>(e_g)),
         segment_sum(gather_rows(hs, std::span<const int>(e_q)),
                     std::span<const int>(e_qseg), ne)});
    parts.attach = sigmoid_xent(expand_logits(t, store, q, z, memory),
                                std::span<const int>(e_tg));
  } else {
    parts.attach = t.constant(1, 1, S(0));
  }

  Var<S> qa = t.constant(1, 3 * h, S(0));
  if (!a_v.empty()) {
    int na = static_cast<int>(a_v.size());
    qa = concat_rows(
        {qa, concat_cols({gather_rows(hs, std::span<const int>(a_v)),
                          gather_rows(graphs, std::span<const int>(a_g)),
                          segment_sum(gather_rows(hs, std::span<const int>(a_q)),
                                      std::span<const int>(a_qseg), na)})});
  }
  std::vector<char> lm = label_mask(), a_mask;
  for (std::size_t i = 0; i < a_tg.size(); ++i)
    a_mask.insert(a_mask.end(), lm.begin(), lm.end());
  parts.motif = softmax_xent_rows(atom_logits(t, store, qa, z, memory),
                                  std::span<const int>(a_tg),
                                  std::span<const char>(a_mask));

  int nb = static_cast<int>(b_tg.size());
  if (nb > 0) {
    Var<S> sums = t.constant(nb, h, S(0));
    int na = static_cast<int>(acc_rows.size());
    if (na > 0) {
      Var<S> nu = nu_(
          t, store,
          concat_cols({gather_rows(hs, std::span<const int>(acc_rows)),
                       enc_.bond_embedding(t, store, acc_orders)}));
      // Decision b sees the accepted bonds of its own step made before it.
      Matrix<S> pick = Matrix<S>::Zero(nb, na);
      for (int j = 0; j < na; ++j) {
        int d = acc_decision[j];
        for (int b = d + 1; b < nb && b_g[b] == b_g[d]; ++b)
          pick(b, j) = 1;
      }
      sums = matmul(t.constant(std::move(pick)), nu);
    }
    std::vector<int> u_labels = encoder_labels(b_u);
    Var<S> hu = hu_(t, store,
                    concat_cols({enc_.atom_embedding(t, store, u_labels),
                                 sums}));
    Var<S> q = concat_cols({gather_rows(graphs, std::span<const int>(b_g)),
                            hu, gather_rows(hs, std::span<const int>(b_a))});
    parts.graph = softmax_xent_rows(bond_logits(t, store, q, z, memory),
                                    std::span<const int>(b_tg),
                                    std::span<const char>(b_mask));
  } else {
    parts.graph = t.constant(1, 1, S(0));
  }
  parts.total = parts.motif + parts.attach + parts.graph;
  return parts;
}

template <class S>
double AtomDecoder<S>::expand_probability(ParamStore<S> &store,
                                          const AtomDecoderState &s,
                                          const Matrix<S> &z,
                                          const Matrix<S> &memory) const {
  if (s.queue.empty())
    throw Error(ErrorKind::kEmptyInput, "expansion needs a frontier atom");
  Tape<S> t(false);
  Var<S> hs = enc_(t, store, s.graph);
  std::vector<int> queue(s.queue.begin(), s.queue.end());
  Var<S> q = front_query(hs, queue);
  Var<S> logit = expand_logits(t, store, q, t.constant(z), t.constant(memory));
  return 1.0 / (1.0 + std::exp(-static_cast<double>(logit.value()(0, 0))));
}

template <class S>
std::vector<double> AtomDecoder<S>::atom_type_probs(
    ParamStore<S> &store, const AtomDecoderState &s, const Matrix<S> &z,
    const Matrix<S> &memory) const {
  Tape<S> t(false);
  Var<S> q = t.constant(1, 3 * dims_.hidden, S(0));
  if (!s.graph.empty()) {
    if (s.queue.empty())
      throw Error(ErrorKind::kEmptyInput, "atom type needs a frontier atom");
    Var<S> hs = enc_(t, store, s.graph);
    q = front_query(hs, std::vector<int>(s.queue.begin(), s.queue.end()));
  }
  Var<S> logits = atom_logits(t, store, q, t.constant(z), t.constant(memory));
  std::vector<char> mask = label_mask();
  return softmax_probs(logits.value(), std::span<const char>(mask));
}

template <class S>
DecodeResult AtomDecoder<S>::run(ParamStore<S> &store, const Matrix<S> &z,
                                 const Matrix<S> &memory,
                                 const DecodeOptions &opts,
                                 std::mt19937_64 *rng,
                                 const AtomTrace *forced, double *nll) const {
  const int h = dims_.hidden;
  int max_steps = opts.max_steps > 0 ? opts.max_steps : 100;
  auto pick = [&](const std::vector<double> &probs, int target) {
    if (forced == nullptr)
      return choose(probs, opts, rng);
    if (!(probs.at(target) > 0))
      throw Error(ErrorKind::kCandidateNotFound, "trace choice is masked");
    *nll -= std::log(probs[target]);
    return target;
  };
  std::vector<char> lmask = label_mask();

  DecodeResult res;
  AtomDecoderState st;
  {
    std::vector<double> p = atom_type_probs(store, st, z, memory);
    int l = pick(p, forced ? forced->labels.at(0) : -1);
    st.graph.add_atom(labels_->atom(l));
    st.labels.push_back(l);
    st.queue.push_back(0);
  }
  Matrix<S> cached;
  int cached_atoms = -1;
  std::size_t si = 0;
  while (!st.queue.empty()) {
    if (res.steps >= max_steps) {
      res.max_steps_exceeded = true;
      break;
    }
    ++res.steps;
    int v = st.queue.front();
    const AtomStep *fs = nullptr;
    if (forced) {
      fs = &forced->steps.at(si++);
      if (fs->front != v)
        throw Error(ErrorKind::kFormat, "trace does not follow the queue");
    }
    if (spare_valence(st.graph, v) <= 0) {
      st.queue.pop_front();
      continue;
    }
    Tape<S> t(false);
    if (cached_atoms != st.graph.num_atoms()) {
      cached = enc_(t, store, st.graph).value();
      cached_atoms = st.graph.num_atoms();
    }
    Var<S> hs = t.constant(cached);
    Var<S> zv = t.constant(z), mem = t.constant(memory);
    Var<S> hg = sum_rows(hs);
    std::vector<int> queue(st.queue.begin(), st.queue.end());
    Var<S> q = front_query(hs, queue);
    double p = 1.0 / (1.0 + std::exp(-static_cast<double>(
                                expand_logits(t, store, q, zv, mem).value()(0, 0))));
    if (pick({1.0 - p, p}, fs ? int(fs->expand) : -1) == 0) {
      st.queue.pop_front();
      continue;
    }
    std::vector<double> ap = softmax_probs(
        atom_logits(t, store, q, zv, mem).value(), std::span<const char>(lmask));
    int l = pick(ap, fs ? forced->labels.at(st.graph.num_atoms()) : -1);
    int u = st.graph.add_atom(labels_->atom(l));
    st.labels.push_back(l);
    std::vector<int> ul = encoder_labels(std::vector<int>{l});
    Var<S> xu = enc_.atom_embedding(t, store, ul);
    Var<S> sums = t.constant(1, h, S(0));
    for (std::size_t k = 0; k < queue.size(); ++k) {
      int a = queue[k];
      Var<S> ha = slice_rows(hs, a, 1);
      Var<S> hu = hu_(t, store, concat_cols({xu, sums}));
      std::vector<char> mask = bond_choice_mask(st.graph, u, a, k == 0);
      std::vector<double> bp = softmax_probs(
          bond_logits(t, store, concat_cols({hg, hu, ha}), zv, mem).value(),
          std::span<const char>(mask));
      int c = pick(bp, fs ? fs->bonds.at(k) : -1);
      if (c == kNoBond)
        continue;
      st.graph.add_bond(u, a, static_cast<BondOrder>(c + 1));
      std::vector<int> order{c};
      sums = sums
             + nu_(t, store,
                   concat_cols({ha, enc_.bond_embedding(t, store, order)}));
    }
    st.queue.push_back(u);
  }
  st.graph.update_implicit_h();
  res.mol = std::move(st.graph);
  return res;
}

template <class S>
DecodeResult AtomDecoder<S>::decode(ParamStore<S> &store, const Matrix<S> &z,
                                    const Matrix<S> &memory,
                                    const DecodeOptions &opts,
                                    std::mt19937_64 *rng) const {
  return run(store, z, memory, opts, rng, nullptr, nullptr);
}

template <class S>
double AtomDecoder<S>::replay_nll(ParamStore<S> &store, const Matrix<S> &z,
                                  const Matrix<S> &memory,
                                  const AtomTrace &trace) const {
  double nll = 0;
  DecodeOptions opts;
  opts.max_steps = static_cast<int>(trace.steps.size()) + 1;
  run(store, z, memory, opts, nullptr, &trace, &nll);
  return nll;
}

template class AtomEncoder<float>;
template class AtomEncoder<double>;
template class AtomDecoder<float>;
template class AtomDecoder<double>;

}  // namespace nn

template <class S>
AtomTranslator<S>::AtomTranslator(std::shared_ptr<const AtomLabels> labels,
                                  const VaeConfig &config)
    : labels_(std::move(labels)), config_(config) {
  std::mt19937_64 rng(config.seed);
  const ModelDims &d = config.dims;
  encoder_ = nn::AtomEncoder<S>(store_, "enc", d, rng);
  posterior_.init(store_, "posterior", d.hidden, d.hidden, 2 * d.latent, rng);
  decoder_ = nn::AtomDecoder<S>(store_, "dec", d, labels_, rng);
}

template <class S>
nn::LatentSample<S> AtomTranslator<S>::posterior(nn::Tape<S> &t, nn::Var<S> x,
                                                 nn::Var<S> y,
                                                 const nn::Matrix<S> *eps) {
  int l = config_.dims.latent;
  nn::Var<S> out = posterior_(t, store_, nn::sum_rows(y) - nn::sum_rows(x));
  return nn::reparameterize(t, nn::slice_cols(out, 0, l),
                            nn::slice_cols(out, l, l), eps);
}

template <class S>
nn::LossParts<S> AtomTranslator<S>::loss(nn::Tape<S> &t, const AtomExample &ex,
                                         const nn::Matrix<S> *eps) {
  nn::Var<S> cx = encoder_(t, store_, ex.x);
  nn::Var<S> cy = encoder_(t, store_, ex.y.mol);
  nn::LatentSample<S> post = posterior(t, cx, cy, eps);
  nn::LossParts<S> parts = decoder_.teacher_forced_loss(t, store_, ex, post.z,
                                                        cx);
  parts.kl = post.kl;
  if (config_.kl_weight != 0)
    parts.total = parts.total
                  + nn::scale(post.kl, static_cast<S>(config_.kl_weight));
  return parts;
}

template <class S>
nn::Matrix<S> AtomTranslator<S>::memory(const MolGraph &prepared_x) {
  nn::Tape<S> t(false);
  return encoder_(t, store_, prepared_x).value();
}

template <class S>
DecodeResult AtomTranslator<S>::decode(const nn::Matrix<S> &memory,
                                       const nn::Matrix<S> &z,
                                       const DecodeOptions &opts,
                                       std::mt19937_64 *rng) {
  DecodeOptions o = opts;
  if (o.max_steps <= 0)
    o.max_steps = config_.max_steps > 0 ? config_.max_steps : 100;
  return decoder_.decode(store_, z, memory, o, rng);
}

template <class S>
MolGraph AtomTranslator<S>::reconstruct(const MolGraph &x, const MolGraph &y) {
  MolGraph px, py;
  try {
    px = prepare_atom_input(x);
    py = prepare_atom_input(y);
  } catch (const Error &) {
    return MolGraph();
  }
  nn::Tape<S> t(false);
  nn::Var<S> cx = encoder_(t, store_, px);
  nn::Var<S> cy = encoder_(t, store_, py);
  nn::Matrix<S> z = posterior(t, cx, cy, nullptr).mu.value();
  return decode(cx.value(), z, DecodeOptions{}).mol;
}

template <class S>
std::vector<MolGraph> AtomTranslator<S>::sample(const MolGraph &x, int k,
                                                std::mt19937_64 &rng) {
  nn::Matrix<S> mem = memory(prepare_atom_input(x));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<MolGraph> out;
  for (int i = 0; i < k; ++i) {
    nn::Matrix<S> z(1, config_.dims.latent);
    for (int j = 0; j < config_.dims.latent; ++j)
      z(0, j) = static_cast<S>(normal(rng));
    out.push_back(decode(mem, z, DecodeOptions{}).mol);
  }
  return out;
}

template <class S>
TrainHistory train_atom_translator(AtomTranslator<S> &model,
                                   const std::vector<AtomExample> &examples,
                                   const TrainOptions &opts,
                                   const EpochCallback &on_epoch) {
  return train_loop<S>(
      model.params(), static_cast<int>(examples.size()),
      model.config().dims.latent, opts,
      [&](nn::Tape<S> &t, int i, const nn::Matrix<S> &eps) {
        return model.loss(t, examples[i], &eps);
      },
      on_epoch);
}

template <class S>
double atom_translation_accuracy(AtomTranslator<S> &model,
                                 const std::vector<PairExample> &pairs) {
  if (pairs.empty())
    return 0.0;
  int hits = 0;
  for (const PairExample &p: pairs) {
    MolGraph out = model.reconstruct(p.x, p.y);
    if (out.empty())
      continue;
    hits += canonical_smiles(out)
            == canonical_smiles(prepare_atom_input(p.y));
  }
  return static_cast<double>(hits) / pairs.size();
}

int atom_default_max_steps(const std::vector<AtomExample> &examples) {
  int most = 0;
  for (const AtomExample &ex: examples)
    most = std::max(most, ex.y.mol.num_atoms());
  return most > 0 ? 4 * most : 100;
}

template class AtomTranslator<float>;
template class AtomTranslator<double>;
template TrainHistory train_atom_translator(AtomTranslator<float> &,
                                            const std::vector<AtomExample> &,
                                            const TrainOptions &,
                                            const EpochCallback &);
template TrainHistory train_atom_translator(AtomTranslator<double> &,
                                            const std::vector<AtomExample> &,
                                            const TrainOptions &,
                                            const EpochCallback &);
template double atom_translation_accuracy(AtomTranslator<float> &,
                                          const std::vector<PairExample> &);
template double atom_translation_accuracy(AtomTranslator<double> &,
                                          const std::vector<PairExample> &);

void save_atom_translator(const std::string &dir,
                          const AtomTranslator<float> &model) {
  const VaeConfig &c = model.config();
  ModelConfig mc;
  mc.dims = c.dims;
  mc.kl_weight = c.kl_weight;
  mc.max_steps = c.max_steps;
  mc.seed = c.seed;
  write_model_header(dir, "atom_g2g", mc);
  model.labels().save(dir + "/atom_labels.txt");
  nn::save_checkpoint(dir + "/params.hgck", model.params());
}

std::unique_ptr<AtomTranslator<float>> load_atom_translator(
    const std::string &dir) {
  ModelConfig mc = read_model_header(dir, "atom_g2g");
  auto labels = std::make_shared<const AtomLabels>(
      AtomLabels::load(dir + "/atom_labels.txt"));
  auto model = std::make_unique<AtomTranslator<float>>(labels, vae_config(mc));
  nn::load_checkpoint(dir + "/params.hgck", model->params());
  return model;
}

}  // namespace hiergen
