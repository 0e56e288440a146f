//
// Project hiergen - Copyright 2026 hiergen authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "hiergen/motifs.h"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <tuple>
#include <utility>

#include "hiergen/error.h"
#include "hiergen/smiles.h"

namespace hiergen {

std::vector<int> find_bridge_bonds(const MolGraph &mol) {
  std::vector<bool> cut = cut_edges(mol);
  std::vector<bool> ring = ring_atoms(mol);
  std::vector<int> out;
  for (int b = 0; b < mol.num_bonds(); ++b) {
    const Bond &bd = mol.bond(b);
    if (cut[b] && mol.degree(bd.begin) >= 2 && mol.degree(bd.end) >= 2
        && (ring[bd.begin] || ring[bd.end]))
      out.push_back(b);
  }
  return out;
}

namespace {

MolGraph fragment_graph(const MolGraph &mol, const Fragment &frag) {
  MolGraph sub = mol.subgraph(frag.atoms, frag.bonds);
  sub.update_implicit_h();
  return sub;
}

bool fragment_less(const Fragment &a, const Fragment &b) {
  return std::tie(a.atoms, a.bonds) < std::tie(b.atoms, b.bonds);
}

Fragment normalized(Fragment f) {
  std::sort(f.atoms.begin(), f.atoms.end());
  f.atoms.erase(std::unique(f.atoms.begin(), f.atoms.end()), f.atoms.end());
  std::sort(f.bonds.begin(), f.bonds.end());
  return f;
}

Fragment bond_fragment(const MolGraph &mol, int b) {
  return normalized({ { mol.bond(b).begin, mol.bond(b).end }, { b } });
}

class DisjointSets {
public:
  explicit DisjointSets(int n): parent_(n) {
    std::iota(parent_.begin(), parent_.end(), 0);
  }

  int find(int x) {
    while (parent_[x] != x)
      x = parent_[x] = parent_[parent_[x]];
    return x;
  }

  bool unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b)
      return false;
    parent_[std::max(a, b)] = std::min(a, b);
    return true;
  }

private:
  std::vector<int> parent_;
};

int intersection_size(const std::vector<int> &a, const std::vector<int> &b) {
  int n = 0;
  auto i = a.begin(), j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i < *j) {
      ++i;
    } else if (*j < *i) {
      ++j;
    } else {
      ++n;
      ++i;
      ++j;
    }
  }
  return n;
}

struct TreeEdge {
  int a;
  int b;
  int weight;
};

// Maximum-weight spanning tree over pieces weighted by shared atoms.
std::vector<TreeEdge> max_spanning_tree(const std::vector<Fragment> &pieces) {
  std::vector<TreeEdge> edges;
  const int n = static_cast<int>(pieces.size());
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      int w = intersection_size(pieces[i].atoms, pieces[j].atoms);
      if (w > 0)
        edges.push_back({ i, j, w });
    }
  std::stable_sort(
      edges.begin(), edges.end(),
      [](const TreeEdge &x, const TreeEdge &y) { return x.weight > y.weight; });
  DisjointSets ds(n);
  std::vector<TreeEdge> tree;
  for (const TreeEdge &e: edges)
    if (ds.unite(e.a, e.b))
      tree.push_back(e);
  return tree;
}

// A spanning tree has the running-intersection property iff its edge
// weights add up to sum over atoms of (multiplicity - 1).
bool admits_motif_tree(const std::vector<Fragment> &pieces, int num_atoms) {
  std::vector<int> mult(num_atoms, 0);
  for (const Fragment &p: pieces)
    for (int a: p.atoms)
      ++mult[a];
  long need = 0;
  for (int m: mult)
    if (m > 0)
      need += m - 1;
  std::vector<TreeEdge> tree = max_spanning_tree(pieces);
  if (tree.size() + 1 != pieces.size())
    return false;
  long have = 0;
  for (const TreeEdge &e: tree)
    have += e.weight;
  return have == need;
}

using BitRow = std::vector<std::uint64_t>;

bool bit_test(const BitRow &r, int i) { return (r[i >> 6] >> (i & 63)) & 1U; }
void bit_flip(BitRow &r, int i) { r[i >> 6] ^= std::uint64_t { 1 } << (i & 63); }

}  // namespace

std::string fragment_key(const MolGraph &mol, const Fragment &frag) {
  return canonical_smiles(fragment_graph(mol, frag));
}

std::vector<std::vector<int>> sssr(const MolGraph &mol, const Fragment &frag) {
  const int na = static_cast<int>(frag.atoms.size());
  const int nb = static_cast<int>(frag.bonds.size());
  const int rank = nb - na + 1;
  if (rank <= 0)
    return {};

  std::vector<int> local(mol.num_atoms(), -1);
  for (int i = 0; i < na; ++i)
    local[frag.atoms[i]] = i;
  std::vector<std::vector<std::pair<int, int>>> adj(na);
  for (int j = 0; j < nb; ++j) {
    const Bond &b = mol.bond(frag.bonds[j]);
    adj[local[b.begin]].push_back({ local[b.end], j });
    adj[local[b.end]].push_back({ local[b.begin], j });
  }
  for (auto &row: adj)
    std::sort(row.begin(), row.end());

  const int words = (nb + 63) / 64;
  std::vector<std::pair<int, BitRow>> candidates;
  for (int root = 0; root < na; ++root) {
    std::vector<int> pred(na, -1), pred_bond(na, -1), dist(na, -1);
    std::vector<int> queue = { root };
    dist[root] = 0;
    for (std::size_t q = 0; q < queue.size(); ++q) {
      int x = queue[q];
      for (auto [y, j]: adj[x])
        if (dist[y] < 0) {
          dist[y] = dist[x] + 1;
          pred[y] = x;
          pred_bond[y] = j;
          queue.push_back(y);
        }
    }
    auto path = [&](int x, BitRow &row, std::vector<bool> &seen) {
      bool simple = true;
      for (; x != root; x = pred[x]) {
        if (seen[x])
          simple = false;
        seen[x] = true;
        bit_flip(row, pred_bond[x]);
      }
      return simple;
    };
    for (int j = 0; j < nb; ++j) {
      const Bond &b = mol.bond(frag.bonds[j]);
      int x = local[b.begin], y = local[b.end];
      if (pred_bond[x] == j || pred_bond[y] == j)
        continue;
      BitRow row(words, 0);
      std::vector<bool> seen(na, false);
      bool ok = path(x, row, seen) && path(y, row, seen);
      if (!ok)
        continue;
      bit_flip(row, j);
      int len = 0;
      for (std::uint64_t w: row)
        len += std::popcount(w);
      candidates.push_back({ len, std::move(row) });
    }
  }
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()),
                   candidates.end());

  std::vector<BitRow> basis;
  std::vector<int> pivots;
  std::vector<std::vector<int>> rings;
  for (const auto &[len, row]: candidates) {
    BitRow r = row;
    for (std::size_t k = 0; k < basis.size(); ++k)
      if (bit_test(r, pivots[k]))
        for (int w = 0; w < words; ++w)
          r[w] ^= basis[k][w];
    int pivot = -1;
    for (int j = 0; j < nb && pivot < 0; ++j)
      if (bit_test(r, j))
        pivot = j;
    if (pivot < 0)
      continue;
    basis.push_back(r);
    pivots.push_back(pivot);
    std::vector<int> ring;
    for (int j = 0; j < nb; ++j)
      if (bit_test(row, j))
        ring.push_back(frag.bonds[j]);
    rings.push_back(std::move(ring));
    if (static_cast<int>(rings.size()) == rank)
      break;
  }
  return rings;
}

std::vector<Fragment> bridge_fragments(const MolGraph &mol) {
  std::vector<int> bridges = find_bridge_bonds(mol);
  std::vector<bool> is_bridge(mol.num_bonds(), false);
  std::vector<bool> covered(mol.num_atoms(), false);
  std::vector<Fragment> out;
  for (int b: bridges) {
    is_bridge[b] = true;
    covered[mol.bond(b).begin] = covered[mol.bond(b).end] = true;
    out.push_back(bond_fragment(mol, b));
  }

  std::vector<int> comp(mol.num_atoms(), -1);
  for (int s = 0; s < mol.num_atoms(); ++s) {
    if (comp[s] >= 0)
      continue;
    Fragment f;
    std::vector<int> stack = { s };
    comp[s] = s;
    while (!stack.empty()) {
      int x = stack.back();
      stack.pop_back();
      f.atoms.push_back(x);
      for (const Neighbor &nb: mol.neighbors(x)) {
        if (is_bridge[nb.bond])
          continue;
        if (x < nb.atom)
          f.bonds.push_back(nb.bond);
        if (comp[nb.atom] < 0) {
          comp[nb.atom] = s;
          stack.push_back(nb.atom);
        }
      }
    }
    if (f.atoms.size() == 1 && covered[s])
      continue;
    out.push_back(normalized(std::move(f)));
  }
  std::sort(out.begin(), out.end(), fragment_less);
  return out;
}

std::vector<Fragment> ring_bond_pieces(const MolGraph &mol,
                                       const Fragment &frag) {
  if (frag.bonds.size() <= 1)
    return { frag };
  std::vector<Fragment> pieces;
  std::vector<bool> in_ring(mol.num_bonds(), false);
  for (const std::vector<int> &ring: sssr(mol, frag)) {
    Fragment p;
    for (int b: ring) {
      in_ring[b] = true;
      p.atoms.push_back(mol.bond(b).begin);
      p.atoms.push_back(mol.bond(b).end);
      p.bonds.push_back(b);
    }
    pieces.push_back(normalized(std::move(p)));
  }
  for (int b: frag.bonds)
    if (!in_ring[b])
      pieces.push_back(bond_fragment(mol, b));
  std::sort(pieces.begin(), pieces.end(), fragment_less);
  if (pieces.size() > 1 && !admits_motif_tree(pieces, mol.num_atoms()))
    return { frag };
  return pieces;
}

std::vector<Fragment>
decompose(const MolGraph &mol,
          const std::function<bool(const std::string &)> &keep,
          const DecomposeOptions &opts) {
  std::vector<Fragment> out;
  for (const Fragment &f: bridge_fragments(mol)) {
    if (!opts.small_motifs && keep(fragment_key(mol, f))) {
      out.push_back(f);
      continue;
    }
    for (Fragment &p: ring_bond_pieces(mol, f))
      out.push_back(std::move(p));
  }
  std::sort(out.begin(), out.end(), fragment_less);
  return out;
}

int MotifVocab::find(std::string_view key) const {
  auto it = index_.find(key);
  return it == index_.end() ? -1 : it->second;
}

int MotifVocab::add(const std::string &key, long count) {
  if (contains(key))
    throw Error(ErrorKind::kFormat, "duplicate motif " + key);
  int id = size();
  keys_.push_back(key);
  counts_.push_back(count);
  templates_.push_back(parse_smiles(key));
  index_.emplace(key, id);
  return id;
}

void AttachVocab::resize(int num_motifs) { configs_.resize(num_motifs); }

int AttachVocab::find(int motif, std::string_view key) const {
  const auto &row = configs_[motif];
  for (int i = 0; i < static_cast<int>(row.size()); ++i)
    if (row[i].key == key)
      return i;
  return unk(motif);
}

int AttachVocab::add(int motif, AttachConfig config) {
  configs_[motif].push_back(std::move(config));
  return size(motif) - 1;
}

int AttachVocab::total() const {
  int n = 0;
  for (const auto &row: configs_)
    n += static_cast<int>(row.size()) + 1;
  return n;
}

int AttachVocab::global(int motif, int local) const {
  int off = 0;
  for (int m = 0; m < motif; ++m)
    off += size(m) + 1;
  return off + local;
}

double AttachVocab::mean_size() const {
  if (configs_.empty())
    return 0;
  double n = 0;
  for (const auto &row: configs_)
    n += static_cast<double>(row.size());
  return n / static_cast<double>(configs_.size());
}

std::string attach_key(const MolGraph &tmpl, const std::vector<int> &marks) {
  std::vector<int> cls(tmpl.num_atoms(), 0);
  for (int m: marks)
    cls[m] = 1;
  return canonicalize(tmpl, cls).key;
}

namespace {

struct Instance {
  Fragment frag;
  std::string key;
  // Template atom k -> molecule atom.
  std::vector<int> atoms;
  std::vector<int> marks;
};

std::vector<Instance> instances(const MolGraph &mol,
                                const std::vector<Fragment> &pieces) {
  std::vector<int> mult(mol.num_atoms(), 0);
  for (const Fragment &p: pieces)
    for (int a: p.atoms)
      ++mult[a];
  std::vector<Instance> out;
  out.reserve(pieces.size());
  for (const Fragment &p: pieces) {
    Instance in;
    in.frag = p;
    Canonical c = canonicalize(fragment_graph(mol, p));
    in.key = c.smiles;
    for (int k: c.order)
      in.atoms.push_back(p.atoms[k]);
    for (int k = 0; k < static_cast<int>(in.atoms.size()); ++k)
      if (mult[in.atoms[k]] > 1)
        in.marks.push_back(k);
    out.push_back(std::move(in));
  }
  return out;
}

bool by_count_then_key(const std::pair<std::string, long> &a,
                       const std::pair<std::string, long> &b) {
  if (a.second != b.second)
    return a.second > b.second;
  return a.first < b.first;
}

}  // namespace

Vocab build_vocab(const std::vector<MolGraph> &corpus, int min_count,
                  const DecomposeOptions &opts, VocabStats *stats) {
  if (corpus.empty())
    throw Error(ErrorKind::kEmptyInput, "empty corpus");
  if (min_count < 0)
    throw Error(ErrorKind::kConfig, "min_count must be >= 0");

  std::vector<MolGraph> mols;
  mols.reserve(corpus.size());
  for (const MolGraph &m: corpus)
    mols.push_back(m.reordered(canonicalize(m).order));

  std::map<std::string, long> frag_counts;
  for (const MolGraph &m: mols)
    for (const Fragment &f: bridge_fragments(m))
      ++frag_counts[fragment_key(m, f)];
  auto keep = [&](const std::string &k) {
    auto it = frag_counts.find(k);
    return it != frag_counts.end() && it->second > min_count;
  };

  std::vector<std::vector<Instance>> per_mol;
  std::map<std::string, long> motif_counts;
  for (const MolGraph &m: mols) {
    per_mol.push_back(instances(m, decompose(m, keep, opts)));
    for (const Instance &in: per_mol.back())
      ++motif_counts[in.key];
  }

  Vocab vocab;
  std::vector<std::pair<std::string, long>> ranked(motif_counts.begin(),
                                                   motif_counts.end());
  std::sort(ranked.begin(), ranked.end(), by_count_then_key);
  for (const auto &[key, count]: ranked)
    vocab.motifs.add(key, count);
  vocab.attach.resize(vocab.motifs.size());

  std::vector<std::map<std::string, AttachConfig>> seen(vocab.motifs.size());
  for (const auto &list: per_mol)
    for (const Instance &in: list) {
      int m = vocab.motifs.find(in.key);
      std::string key = attach_key(vocab.motifs.motif(m), in.marks);
      auto [it, fresh] = seen[m].try_emplace(key);
      AttachConfig &cfg = it->second;
      if (fresh || in.marks < cfg.marks)
        cfg.marks = in.marks;
      cfg.key = key;
      ++cfg.count;
    }
  for (int m = 0; m < vocab.motifs.size(); ++m) {
    std::vector<AttachConfig> row;
    for (auto &[key, cfg]: seen[m])
      row.push_back(cfg);
    std::stable_sort(row.begin(), row.end(),
                     [](const AttachConfig &a, const AttachConfig &b) {
                       if (a.count != b.count)
                         return a.count > b.count;
                       return a.key < b.key;
                     });
    for (AttachConfig &cfg: row)
      vocab.attach.add(m, std::move(cfg));
  }

  if (stats != nullptr)
    for (int m = 0; m < vocab.motifs.size(); ++m)
      ++stats->motif_sizes[vocab.motifs.motif(m).num_atoms()];
  return vocab;
}

namespace {

constexpr const char *kVocabHeader = "#hiergen-vocab v1";

std::vector<std::string> split(const std::string &s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep))
    out.push_back(cur);
  if (!s.empty() && s.back() == sep)
    out.emplace_back();
  return out;
}

void expect_header(std::istream &in, const char *what) {
  std::string line;
  if (!std::getline(in, line))
    throw Error(ErrorKind::kFormat, std::string("empty ") + what + " file");
  if (line != kVocabHeader)
    throw Error(ErrorKind::kVersionMismatch,
                std::string(what) + " header is '" + line + "'");
}

}  // namespace

void write_vocab(std::ostream &motifs, std::ostream &attach,
                 const Vocab &vocab) {
  motifs << kVocabHeader << '\n';
  attach << kVocabHeader << '\n';
  for (int m = 0; m < vocab.motifs.size(); ++m) {
    motifs << vocab.motifs.key(m) << '\t' << vocab.motifs.count(m) << '\n';
    for (int c = 0; c < vocab.attach.size(m); ++c) {
      const AttachConfig &cfg = vocab.attach.config(m, c);
      attach << vocab.motifs.key(m) << '\t';
      for (std::size_t i = 0; i < cfg.marks.size(); ++i)
        attach << (i ? "," : "") << cfg.marks[i];
      attach << '\t' << cfg.count << '\n';
    }
  }
}

Vocab read_vocab(std::istream &motifs, std::istream &attach) {
  Vocab vocab;
  expect_header(motifs, "motif vocab");
  expect_header(attach, "attachment vocab");
  std::string line;
  while (std::getline(motifs, line)) {
    if (line.empty() || line[0] == '#')
      continue;
    auto cols = split(line, '\t');
    if (cols.size() != 2)
      throw Error(ErrorKind::kFormat, "bad motif vocab line: " + line);
    vocab.motifs.add(cols[0], std::stol(cols[1]));
  }
  vocab.attach.resize(vocab.motifs.size());
  while (std::getline(attach, line)) {
    if (line.empty() || line[0] == '#')
      continue;
    auto cols = split(line, '\t');
    if (cols.size() != 3)
      throw Error(ErrorKind::kFormat, "bad attachment vocab line: " + line);
    int m = vocab.motifs.find(cols[0]);
    if (m < 0)
      throw Error(ErrorKind::kUnknownMotif, "attachment for unknown motif "
                                                + cols[0]);
    AttachConfig cfg;
    if (!cols[1].empty())
      for (const std::string &x: split(cols[1], ','))
        cfg.marks.push_back(std::stoi(x));
    for (int k: cfg.marks)
      if (k < 0 || k >= vocab.motifs.motif(m).num_atoms())
        throw Error(ErrorKind::kFormat, "mark out of range: " + line);
    cfg.key = attach_key(vocab.motifs.motif(m), cfg.marks);
    cfg.count = std::stol(cols[2]);
    vocab.attach.add(m, std::move(cfg));
  }
  return vocab;
}

void save_vocab(const std::string &dir, const Vocab &vocab) {
  std::filesystem::create_directories(dir);
  std::ofstream m(dir + "/motifs.tsv"), a(dir + "/attach.tsv");
  if (!m || !a)
    throw Error(ErrorKind::kIo, "cannot write vocab in " + dir);
  write_vocab(m, a, vocab);
}

Vocab load_vocab(const std::string &dir) {
  std::ifstream m(dir + "/motifs.tsv"), a(dir + "/attach.tsv");
  if (!m || !a)
    throw Error(ErrorKind::kIo, "cannot read vocab in " + dir);
  return read_vocab(m, a);
}

int HierGraph::num_edges() const {
  int n = 0;
  for (const HierNode &node: nodes)
    n += node.parent >= 0;
  return n;
}

int HierGraph::edge_label(int i, int j) const {
  if (nodes[i].parent == j)
    return std::min(nodes[i].order, kMaxChildOrder);
  return 0;
}

HierGraph build_hier_graph(const MolGraph &input, const Vocab &vocab) {
  HierGraph h;
  h.mol = input.reordered(canonicalize(input).order);
  const MolGraph &mol = h.mol;
  std::vector<Fragment> pieces = vocab.decompose(mol);
  std::vector<Instance> inst = instances(mol, pieces);
  const int n = static_cast<int>(inst.size());

  std::vector<int> motif(n);
  for (int i = 0; i < n; ++i) {
    motif[i] = vocab.motifs.find(inst[i].key);
    if (motif[i] < 0)
      throw Error(ErrorKind::kUnknownMotif, "motif not in vocabulary: "
                                                + inst[i].key);
  }

  std::vector<std::vector<int>> adj(n);
  for (const TreeEdge &e: max_spanning_tree(pieces)) {
    adj[e.a].push_back(e.b);
    adj[e.b].push_back(e.a);
  }

  int root = -1;
  for (int i = 0; i < n; ++i) {
    if (!std::binary_search(pieces[i].atoms.begin(), pieces[i].atoms.end(), 0))
      continue;
    if (root < 0 || motif[i] < motif[root])
      root = i;
  }

  auto child_key = [&](int parent, int child) {
    const auto &pa = pieces[parent].atoms, &ca = pieces[child].atoms;
    int shared = mol.num_atoms();
    for (int a: ca)
      if (std::binary_search(pa.begin(), pa.end(), a)) {
        shared = a;
        break;
      }
    return std::make_tuple(shared, ca.front(), motif[child], child);
  };

  std::vector<int> new_id(n, -1);
  struct Frame {
    int piece;
    int parent;
    int order;
  };
  std::vector<Frame> stack = { { root, -1, 0 } };
  while (!stack.empty()) {
    Frame f = stack.back();
    stack.pop_back();
    int id = h.size();
    new_id[f.piece] = id;
    HierNode node;
    node.motif = motif[f.piece];
    node.atoms = inst[f.piece].atoms;
    node.marks = inst[f.piece].marks;
    node.attach = vocab.attach.find(
        node.motif, attach_key(vocab.motifs.motif(node.motif), node.marks));
    node.parent = f.parent;
    node.order = f.order;
    if (f.parent >= 0)
      h.nodes[f.parent].children.push_back(id);
    h.nodes.push_back(std::move(node));

    std::vector<int> kids;
    for (int c: adj[f.piece])
      if (new_id[c] < 0)
        kids.push_back(c);
    std::sort(kids.begin(), kids.end(), [&](int a, int b) {
      return child_key(f.piece, a) < child_key(f.piece, b);
    });
    for (int k = static_cast<int>(kids.size()) - 1; k >= 0; --k)
      stack.push_back({ kids[k], id, k + 1 });
  }
  if (h.size() != n)
    throw Error(ErrorKind::kFormat, "motif graph is disconnected");
  return h;
}

}  // namespace hiergen
