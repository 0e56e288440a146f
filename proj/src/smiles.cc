//
// Project hiergen - Copyright 2026 hiergen authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "hiergen/smiles.h"

#include <algorithm>
#include <cctype>
#include <map>
#include <numeric>
#include <optional>
#include <tuple>
#include <utility>

#include "hiergen/chem.h"
#include "hiergen/error.h"

namespace hiergen {
namespace {

class SmilesParser {
public:
  explicit SmilesParser(std::string_view text): text_(text) { }

  MolGraph parse() {
    while (pos_ < text_.size()) {
      char c = text_[pos_];
      if (c == '(') {
        if (prev_ < 0)
          fail_token();
        branches_.push_back(prev_);
        ++pos_;
      } else if (c == ')') {
        if (branches_.empty() || pending_)
          fail_token();
        prev_ = branches_.back();
        branches_.pop_back();
        ++pos_;
      } else if (c == '-' || c == '=' || c == '#' || c == ':') {
        if (pending_ || prev_ < 0)
          fail_token();
        pending_ = bond_symbol(c);
        pending_pos_ = pos_;
        ++pos_;
      } else if (std::isdigit(static_cast<unsigned char>(c)) || c == '%') {
        ring_closure();
      } else if (c == '[') {
        add_atom(bracket_atom());
      } else {
        add_atom(organic_atom());
      }
    }

    if (pending_)
      throw Error(ErrorKind::kUnsupportedToken, "dangling bond symbol",
                  static_cast<int>(pending_pos_));
    if (!rings_.empty()) {
      int digit = rings_.begin()->first;
      throw Error(ErrorKind::kUnclosedRing,
                  "unclosed ring " + std::to_string(digit),
                  static_cast<int>(rings_.begin()->second.pos));
    }
    if (!branches_.empty())
      throw Error(ErrorKind::kUnclosedBranch, "unclosed branch");

    mol_.update_implicit_h();
    return std::move(mol_);
  }

private:
  struct OpenRing {
    int atom;
    std::optional<BondOrder> order;
    std::size_t pos;
  };

  [[noreturn]] void fail_token() const {
    std::string tok(1, pos_ < text_.size() ? text_[pos_] : '?');
    throw Error(ErrorKind::kUnsupportedToken,
                "unsupported token '" + tok + "' at "
                    + std::to_string(pos_),
                static_cast<int>(pos_));
  }

  static BondOrder bond_symbol(char c) {
    switch (c) {
    case '=':
      return BondOrder::kDouble;
    case '#':
      return BondOrder::kTriple;
    case ':':
      return BondOrder::kAromatic;
    default:
      return BondOrder::kSingle;
    }
  }

  BondOrder default_order(int u, int v) const {
    return mol_.atom(u).aromatic && mol_.atom(v).aromatic
               ? BondOrder::kAromatic
               : BondOrder::kSingle;
  }

  void connect(int u, int v, BondOrder order, std::size_t at) {
    if (u == v || mol_.find_bond(u, v) >= 0)
      throw Error(ErrorKind::kUnsupportedToken,
                  "invalid ring closure at " + std::to_string(at),
                  static_cast<int>(at));
    mol_.add_bond(u, v, order);
  }

  void add_atom(const Atom &atom) {
    int idx = mol_.add_atom(atom);
    if (prev_ >= 0)
      connect(prev_, idx, pending_.value_or(default_order(prev_, idx)), pos_);
    pending_.reset();
    prev_ = idx;
  }

  void ring_closure() {
    std::size_t start = pos_;
    if (prev_ < 0)
      fail_token();
    int digit;
    if (text_[pos_] == '%') {
      if (pos_ + 2 >= text_.size()
          || !std::isdigit(static_cast<unsigned char>(text_[pos_ + 1]))
          || !std::isdigit(static_cast<unsigned char>(text_[pos_ + 2])))
        fail_token();
      digit = (text_[pos_ + 1] - '0') * 10 + (text_[pos_ + 2] - '0');
      pos_ += 3;
    } else {
      digit = text_[pos_] - '0';
      ++pos_;
    }

    auto it = rings_.find(digit);
    if (it == rings_.end()) {
      rings_.emplace(digit, OpenRing { prev_, pending_, start });
    } else {
      OpenRing open = it->second;
      rings_.erase(it);
      BondOrder order;
      if (open.order && pending_ && *open.order != *pending_)
        throw Error(ErrorKind::kUnsupportedToken,
                    "conflicting ring bond symbols at " + std::to_string(start),
                    static_cast<int>(start));
      if (open.order)
        order = *open.order;
      else if (pending_)
        order = *pending_;
      else
        order = default_order(open.atom, prev_);
      connect(open.atom, prev_, order, start);
    }
    pending_.reset();
  }

  Atom organic_atom() {
    char c = text_[pos_];
    Atom atom;
    if (c == 'C' && pos_ + 1 < text_.size() && text_[pos_ + 1] == 'l') {
      atom.element = Element::kCl;
      pos_ += 2;
      return atom;
    }
    if (c == 'B' && pos_ + 1 < text_.size() && text_[pos_ + 1] == 'r') {
      atom.element = Element::kBr;
      pos_ += 2;
      return atom;
    }
    switch (c) {
    case 'B':
      atom.element = Element::kB;
      break;
    case 'C':
      atom.element = Element::kC;
      break;
    case 'N':
      atom.element = Element::kN;
      break;
    case 'O':
      atom.element = Element::kO;
      break;
    case 'P':
      atom.element = Element::kP;
      break;
    case 'S':
      atom.element = Element::kS;
      break;
    case 'F':
      atom.element = Element::kF;
      break;
    case 'I':
      atom.element = Element::kI;
      break;
    default:
      if (auto e = aromatic_element(c)) {
        atom.element = *e;
        atom.aromatic = true;
        break;
      }
      fail_token();
    }
    ++pos_;
    return atom;
  }

  static std::optional<Element> aromatic_element(char c) {
    switch (c) {
    case 'b':
      return Element::kB;
    case 'c':
      return Element::kC;
    case 'n':
      return Element::kN;
    case 'o':
      return Element::kO;
    case 'p':
      return Element::kP;
    case 's':
      return Element::kS;
    default:
      return std::nullopt;
    }
  }

  Atom bracket_atom() {
    ++pos_;  // '['
    Atom atom;
    if (pos_ >= text_.size())
      fail_token();

    char c = text_[pos_];
    if (std::isupper(static_cast<unsigned char>(c))) {
      std::optional<Element> e;
      if (pos_ + 1 < text_.size()
          && std::islower(static_cast<unsigned char>(text_[pos_ + 1]))) {
        e = element_from_symbol(text_.substr(pos_, 2));
        if (e)
          pos_ += 2;
      }
      if (!e) {
        e = element_from_symbol(text_.substr(pos_, 1));
        if (!e)
          fail_token();
        ++pos_;
      }
      atom.element = *e;
    } else if (auto e = aromatic_element(c)) {
      atom.element = *e;
      atom.aromatic = true;
      ++pos_;
    } else {
      fail_token();
    }

    if (pos_ < text_.size() && text_[pos_] == 'H') {
      ++pos_;
      while (pos_ < text_.size()
             && std::isdigit(static_cast<unsigned char>(text_[pos_])))
        ++pos_;
    }

    if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) {
      char sign = text_[pos_];
      int magnitude = 1;
      ++pos_;
      if (pos_ < text_.size()
          && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
        magnitude = text_[pos_] - '0';
        ++pos_;
      } else {
        while (pos_ < text_.size() && text_[pos_] == sign) {
          ++magnitude;
          ++pos_;
        }
      }
      atom.formal_charge = sign == '+' ? magnitude : -magnitude;
    }

    if (pos_ >= text_.size() || text_[pos_] != ']')
      fail_token();
    ++pos_;
    return atom;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  MolGraph mol_;
  int prev_ = -1;
  std::optional<BondOrder> pending_;
  std::size_t pending_pos_ = 0;
  std::vector<int> branches_;
  std::map<int, OpenRing> rings_;
};

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())))
    s.remove_suffix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front())))
    s.remove_prefix(1);
  return s;
}

void append_atom_symbol(std::string &out, const Atom &a) {
  std::string sym(element_symbol(a.element));
  if (a.aromatic)
    for (char &ch: sym)
      ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  if (a.formal_charge == 0) {
    out += sym;
    return;
  }
  out += '[';
  out += sym;
  out += a.formal_charge > 0 ? '+' : '-';
  int mag = std::abs(a.formal_charge);
  if (mag > 1)
    out += std::to_string(mag);
  out += ']';
}

void append_bond_symbol(std::string &out, const MolGraph &mol, int bond) {
  const Bond &b = mol.bond(bond);
  bool both_aromatic = mol.atom(b.begin).aromatic && mol.atom(b.end).aromatic;
  switch (b.order) {
  case BondOrder::kSingle:
    if (both_aromatic)
      out += '-';
    break;
  case BondOrder::kDouble:
    out += '=';
    break;
  case BondOrder::kTriple:
    out += '#';
    break;
  case BondOrder::kAromatic:
    if (!both_aromatic)
      out += ':';
    break;
  }
}

void append_ring_digit(std::string &out, int digit) {
  if (digit < 10) {
    out += static_cast<char>('0' + digit);
  } else {
    out += '%';
    out += std::to_string(digit);
  }
}

class SmilesWriter {
public:
  SmilesWriter(const MolGraph &mol, std::span<const int> rank)
      : mol_(mol), rank_(rank), visited_(mol.num_atoms(), false),
        pos_(mol.num_atoms(), -1), children_(mol.num_atoms()),
        closures_(mol.num_atoms()), is_closure_(mol.num_bonds(), false),
        digit_of_(mol.num_bonds(), -1) { }

  std::string write(std::vector<int> *written) {
    std::vector<int> atoms(mol_.num_atoms());
    std::iota(atoms.begin(), atoms.end(), 0);
    std::sort(atoms.begin(), atoms.end(),
              [&](int a, int b) { return rank_[a] < rank_[b]; });

    std::string out;
    for (int start: atoms) {
      if (visited_[start])
        continue;
      visit(start, -1);
      if (!out.empty())
        out += '.';
      emit(start, out);
    }
    if (written)
      *written = std::move(order_);
    return out;
  }

private:
  std::vector<Neighbor> sorted_neighbors(int a) const {
    auto nbrs = mol_.neighbors(a);
    std::vector<Neighbor> sorted(nbrs.begin(), nbrs.end());
    std::sort(sorted.begin(), sorted.end(),
              [&](Neighbor x, Neighbor y) {
                return rank_[x.atom] < rank_[y.atom];
              });
    return sorted;
  }

  void visit(int a, int parent_bond) {
    visited_[a] = true;
    pos_[a] = counter_++;
    for (Neighbor nb: sorted_neighbors(a)) {
      if (nb.bond == parent_bond || is_closure_[nb.bond])
        continue;
      if (visited_[nb.atom]) {
        is_closure_[nb.bond] = true;
        closures_[a].push_back(nb);
        closures_[nb.atom].push_back({ a, nb.bond });
      } else {
        children_[a].push_back(nb);
        visit(nb.atom, nb.bond);
      }
    }
  }

  int allocate_digit() {
    int d = 1;
    while (d < static_cast<int>(digit_busy_.size()) && digit_busy_[d])
      ++d;
    if (d >= static_cast<int>(digit_busy_.size()))
      digit_busy_.resize(d + 1, false);
    digit_busy_[d] = true;
    return d;
  }

  void emit(int a, std::string &out) {
    order_.push_back(a);
    append_atom_symbol(out, mol_.atom(a));

    auto &cl = closures_[a];
    std::sort(cl.begin(), cl.end(), [&](Neighbor x, Neighbor y) {
      return pos_[x.atom] < pos_[y.atom];
    });
    std::vector<int> released;
    for (Neighbor nb: cl) {
      if (pos_[nb.atom] > pos_[a]) {
        int d = allocate_digit();
        digit_of_[nb.bond] = d;
        append_bond_symbol(out, mol_, nb.bond);
        append_ring_digit(out, d);
      } else {
        int d = digit_of_[nb.bond];
        append_ring_digit(out, d);
        released.push_back(d);
      }
    }
    for (int d: released)
      digit_busy_[d] = false;

    const auto &ch = children_[a];
    for (std::size_t i = 0; i < ch.size(); ++i) {
      bool branch = i + 1 < ch.size();
      if (branch)
        out += '(';
      append_bond_symbol(out, mol_, ch[i].bond);
      emit(ch[i].atom, out);
      if (branch)
        out += ')';
    }
  }

  const MolGraph &mol_;
  std::span<const int> rank_;
  std::vector<bool> visited_;
  std::vector<int> pos_;
  int counter_ = 0;
  std::vector<std::vector<Neighbor>> children_;
  std::vector<std::vector<Neighbor>> closures_;
  std::vector<bool> is_closure_;
  std::vector<int> digit_of_;
  std::vector<bool> digit_busy_ = std::vector<bool>(1, true);
  std::vector<int> order_;
};

// Assigns rank = number of atoms with strictly smaller key.
template <class Key>
int assign_ranks(std::vector<Key> &keys, std::vector<int> &ranks) {
  const int n = static_cast<int>(keys.size());
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(),
            [&](int a, int b) { return keys[a] < keys[b]; });
  int classes = 0;
  for (int i = 0; i < n; ++i) {
    if (i == 0 || keys[idx[i - 1]] < keys[idx[i]]) {
      ranks[idx[i]] = i;
      ++classes;
    } else {
      ranks[idx[i]] = ranks[idx[i - 1]];
    }
  }
  return classes;
}

class Canonicalizer {
public:
  static constexpr long kMaxLeaves = 1 << 16;

  Canonicalizer(const MolGraph &mol, std::span<const int> classes)
      : mol_(mol), classes_(classes) { }

  Canonical run() {
    const int n = mol_.num_atoms();
    Canonical result;
    if (n == 0)
      return result;

    std::vector<bool> in_ring = ring_atoms(mol_);
    using InitKey = std::tuple<int, int, int, int, int, int, int, int>;
    std::vector<InitKey> keys(n);
    for (int i = 0; i < n; ++i) {
      const Atom &a = mol_.atom(i);
      int cls = classes_.empty() ? 0 : classes_[i];
      keys[i] = { cls,
                  static_cast<int>(a.element),
                  a.aromatic ? 1 : 0,
                  a.formal_charge,
                  mol_.degree(i),
                  a.implicit_h,
                  mol_.bond_sum_x2(i),
                  in_ring[i] ? 1 : 0 };
    }
    std::vector<int> ranks(n);
    assign_ranks(keys, ranks);
    search(std::move(ranks));
    return std::move(best_);
  }

private:
  int refine(std::vector<int> &ranks) const {
    const int n = mol_.num_atoms();
    int classes = 0;
    {
      std::vector<int> seen(ranks);
      std::sort(seen.begin(), seen.end());
      classes = static_cast<int>(
          std::unique(seen.begin(), seen.end()) - seen.begin());
    }
    using Sig = std::pair<int, std::vector<int>>;
    std::vector<Sig> sigs(n);
    while (classes < n) {
      for (int i = 0; i < n; ++i) {
        sigs[i].first = ranks[i];
        auto &v = sigs[i].second;
        v.clear();
        for (const Neighbor &nb: mol_.neighbors(i))
          v.push_back(ranks[nb.atom] * 8
                      + bond_order_index(mol_.bond(nb.bond).order));
        std::sort(v.begin(), v.end());
      }
      int next = assign_ranks(sigs, ranks);
      if (next == classes)
        break;
      classes = next;
    }
    return classes;
  }

  bool is_twin_of_tried(int atom, const std::vector<int> &tried) const {
    if (mol_.degree(atom) != 1)
      return false;
    int nbr = mol_.neighbors(atom)[0].atom;
    for (int t: tried)
      if (mol_.degree(t) == 1 && mol_.neighbors(t)[0].atom == nbr)
        return true;
    return false;
  }

  void leaf(const std::vector<int> &ranks) {
    ++leaves_;
    Canonical c;
    c.smiles = write_smiles(mol_, ranks, &c.order);
    c.key = c.smiles;
    if (!classes_.empty()) {
      c.key += '|';
      for (std::size_t k = 0; k < c.order.size(); ++k) {
        if (k)
          c.key += ',';
        c.key += std::to_string(classes_[c.order[k]]);
      }
    }
    if (!have_best_ || c.key < best_.key) {
      best_ = std::move(c);
      have_best_ = true;
    }
  }

  void search(std::vector<int> ranks) {
    if (leaves_ >= kMaxLeaves)
      return;
    const int n = mol_.num_atoms();
    int classes = refine(ranks);
    if (classes == n) {
      leaf(ranks);
      return;
    }

    // Smallest tied rank value.
    std::vector<int> count(n, 0);
    for (int r: ranks)
      ++count[r];
    int target = -1;
    for (int r = 0; r < n; ++r) {
      if (count[r] > 1) {
        target = r;
        break;
      }
    }

    std::vector<int> members;
    for (int i = 0; i < n; ++i)
      if (ranks[i] == target)
        members.push_back(i);

    std::vector<int> tried;
    for (int m: members) {
      if (is_twin_of_tried(m, tried))
        continue;
      tried.push_back(m);
      std::vector<int> next = ranks;
      for (int x: members)
        if (x != m)
          next[x] = target + 1;
      search(std::move(next));
    }
  }

  const MolGraph &mol_;
  std::span<const int> classes_;
  Canonical best_;
  bool have_best_ = false;
  long leaves_ = 0;
};

}  // namespace

MolGraph parse_smiles(std::string_view text, const SmilesOptions &opts) {
  text = trim(text);
  if (text.empty())
    throw Error(ErrorKind::kEmptyInput, "empty SMILES");
  MolGraph mol = SmilesParser(text).parse();
  if (opts.strict) {
    auto violations = validate_valence(mol);
    if (!violations.empty())
      throw Error(ErrorKind::kValenceViolation,
                  "valence violation at atom "
                      + std::to_string(violations.front().atom));
  }
  return mol;
}

std::string write_smiles(const MolGraph &mol, std::span<const int> rank,
                         std::vector<int> *written) {
  return SmilesWriter(mol, rank).write(written);
}

Canonical canonicalize(const MolGraph &mol, std::span<const int> classes) {
  return Canonicalizer(mol, classes).run();
}

std::vector<int> find_isomorphism(const MolGraph &a,
                                  std::span<const int> a_classes,
                                  const MolGraph &b,
                                  std::span<const int> b_classes) {
  if (a.num_atoms() != b.num_atoms() || a.num_bonds() != b.num_bonds())
    return {};
  Canonical ca = canonicalize(a, a_classes);
  Canonical cb = canonicalize(b, b_classes);
  if (ca.key != cb.key)
    return {};
  std::vector<int> map(a.num_atoms());
  for (std::size_t k = 0; k < ca.order.size(); ++k)
    map[ca.order[k]] = cb.order[k];
  return map;
}

}  // namespace hiergen
