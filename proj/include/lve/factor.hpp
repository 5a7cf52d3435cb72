#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "lve/bignat.hpp"
#include "lve/common.hpp"
#include "lve/constraint.hpp"

namespace lve {

// ---------------------------------------------------------------------------
// Atoms

struct AtomArg {
  bool is_var = false;
  Symbol sym = 0;
  bool operator==(const AtomArg&) const = default;
};

inline AtomArg var_arg(Symbol v) { return {true, v}; }
inline AtomArg const_arg(Symbol c) { return {false, c}; }

struct Atom {
  Symbol functor = 0;
  std::vector<AtomArg> args;
  std::vector<Symbol> range;  // value order is significant; default [f, t]

  Atom() = default;
  Atom(Symbol f, std::vector<AtomArg> a, std::vector<Symbol> r = {})
      : functor(f), args(std::move(a)), range(std::move(r)) {
    if (range.empty()) range = bool_range();
  }

  std::vector<Symbol> logvars() const {
    std::vector<Symbol> out;
    for (const auto& a : args)
      if (a.is_var && std::find(out.begin(), out.end(), a.sym) == out.end())
        out.push_back(a.sym);
    return out;
  }

  bool is_boolean() const { return range == bool_range(); }

  int value_index(Symbol v) const {
    for (size_t i = 0; i < range.size(); ++i)
      if (range[i] == v) return static_cast<int>(i);
    return -1;
  }

  bool operator==(const Atom&) const = default;

  std::string str() const {
    std::string s = sym_name(functor);
    if (!args.empty()) {
      s += "(";
      for (size_t i = 0; i < args.size(); ++i) {
        if (i) s += ",";
        s += sym_name(args[i].sym);
      }
      s += ")";
    }
    return s;
  }
};

// ---------------------------------------------------------------------------
// Histograms over a value range, and their multiplicities

using Histogram = std::vector<uint64_t>;  // count per range value, sum = n

inline uint64_t histogram_count(uint64_t n, uint64_t k) {
  // C(n + k - 1, k - 1)
  if (k == 0) return n == 0 ? 1 : 0;
  uint64_t r = 1;
  for (uint64_t j = 1; j < k; ++j) {
    r = checked_mul(r, n + j);
    r /= j;  // exact: product of j consecutive integers divisible by j!
  }
  return r;
}

// Histograms are enumerated in ascending lexicographic order of the count
// vector read in range order.
struct HistogramRange {
  uint64_t total = 0;
  uint32_t width = 2;

  uint64_t size() const { return histogram_count(total, width); }

  Histogram at(uint64_t index) const {
    Histogram h(width, 0);
    uint64_t n = total;
    for (uint32_t i = 0; i + 1 < width; ++i) {
      uint64_t c = 0;
      while (true) {
        uint64_t block = histogram_count(n - c, width - i - 1);
        if (index < block) break;
        index -= block;
        ++c;
      }
      h[i] = c;
      n -= c;
    }
    h[width - 1] = n;
    return h;
  }

  uint64_t index_of(const Histogram& h) const {
    uint64_t index = 0;
    uint64_t n = total;
    for (uint32_t i = 0; i + 1 < width; ++i) {
      for (uint64_t c = 0; c < h[i]; ++c)
        index += histogram_count(n - c, width - i - 1);
      n -= h[i];
    }
    return index;
  }
};

// Multinomial multiplicity of a histogram.
inline double mul(const Histogram& h) { return multinomial(h); }

// ---------------------------------------------------------------------------
// Factor atoms: a regular atom or a counting formula #_X[F(...)]

struct FactorAtom {
  Atom atom;
  bool is_crv = false;
  Symbol counted = 0;         // the counted logvar (when is_crv)
  uint64_t crv_total = 0;     // conditional count of the counted logvar
  Constraint crv_constraint;  // projection onto the atom's logvars, for grounding

  FactorAtom() = default;
  explicit FactorAtom(Atom a) : atom(std::move(a)) {}

  static FactorAtom counting(Atom a, Symbol counted_var, uint64_t total,
                             Constraint slice) {
    FactorAtom fa(std::move(a));
    fa.is_crv = true;
    fa.counted = counted_var;
    fa.crv_total = total;
    fa.crv_constraint = std::move(slice);
    auto lvs = fa.atom.logvars();
    if (std::find(lvs.begin(), lvs.end(), counted_var) == lvs.end())
      throw ModelError("counting formula: counted logvar not in atom");
    return fa;
  }

  // Logvars that still parametrize the factor (the counted one is bound).
  std::vector<Symbol> logvars() const {
    auto lvs = atom.logvars();
    if (is_crv)
      lvs.erase(std::remove(lvs.begin(), lvs.end(), counted), lvs.end());
    return lvs;
  }

  uint64_t range_size() const {
    if (is_crv)
      return HistogramRange{crv_total, static_cast<uint32_t>(atom.range.size())}.size();
    return atom.range.size();
  }

  std::string str() const {
    if (!is_crv) return atom.str();
    return "#" + sym_name(counted) + "[" + atom.str() + "]";
  }
};

// Mul(A, v): 1 for regular atoms, the histogram multiplicity for counting
// formulas. v is given as an index into the factor atom's value range.
inline double mul_of(const FactorAtom& a, uint64_t value_index) {
  if (value_index >= a.range_size())
    throw ValueRangeError("value outside atom range");
  if (!a.is_crv) return 1.0;
  HistogramRange hr{a.crv_total, static_cast<uint32_t>(a.atom.range.size())};
  return mul(hr.at(value_index));
}

// ---------------------------------------------------------------------------
// Potential tables: row-major, leftmost atom varying slowest

struct PotentialTable {
  std::vector<uint64_t> card;
  std::vector<double> vals;

  PotentialTable() = default;
  PotentialTable(std::vector<uint64_t> c, std::vector<double> v)
      : card(std::move(c)), vals(std::move(v)) {
    if (vals.size() != cells())
      throw ModelError("potential table: value count does not match axes");
  }

  static PotentialTable filled(std::vector<uint64_t> c, double v) {
    uint64_t n = 1;
    for (uint64_t k : c) n = checked_mul(n, k);
    return PotentialTable(std::move(c), std::vector<double>(n, v));
  }

  uint64_t cells() const {
    uint64_t n = 1;
    for (uint64_t k : card) n = checked_mul(n, k);
    return n;
  }

  uint64_t index(const std::vector<uint64_t>& assignment) const {
    if (assignment.size() != card.size())
      throw ModelError("table lookup: arity mismatch");
    uint64_t idx = 0;
    for (size_t i = 0; i < card.size(); ++i) {
      if (assignment[i] >= card[i])
        throw ValueRangeError("table lookup: value outside range");
      idx = idx * card[i] + assignment[i];
    }
    return idx;
  }

  double at(const std::vector<uint64_t>& assignment) const {
    return vals[index(assignment)];
  }
  double& at(const std::vector<uint64_t>& assignment) {
    return vals[index(assignment)];
  }
};

// Iterate assignments in canonical (row-major) order.
inline void for_each_assignment(const std::vector<uint64_t>& card,
                                const std::function<void(const std::vector<uint64_t>&)>& fn) {
  std::vector<uint64_t> a(card.size(), 0);
  for (uint64_t k : card)
    if (k == 0) return;
  while (true) {
    fn(a);
    size_t i = card.size();
    while (i > 0) {
      --i;
      if (++a[i] < card[i]) break;
      a[i] = 0;
      if (i == 0) return;
    }
    if (card.empty()) return;
  }
}

// ---------------------------------------------------------------------------
// Parfactors and models

enum class FactorKind { Bayes, Markov, Het, Deputy };

inline const char* kind_name(FactorKind k) {
  switch (k) {
    case FactorKind::Bayes: return "bayes";
    case FactorKind::Markov: return "markov";
    case FactorKind::Het: return "het";
    case FactorKind::Deputy: return "deputy";
  }
  return "?";
}

inline PotentialTable identity_table() {
  return PotentialTable({2, 2}, {1.0, 0.0, 0.0, 1.0});
}

struct Parfactor {
  FactorKind kind = FactorKind::Bayes;
  std::vector<FactorAtom> atoms;
  PotentialTable table;
  Constraint constraint;
  std::vector<int> convergent;  // atom indices, sorted

  std::vector<uint64_t> cards() const {
    std::vector<uint64_t> c;
    c.reserve(atoms.size());
    for (const auto& a : atoms) c.push_back(a.range_size());
    return c;
  }

  void check() const {
    auto c = cards();
    uint64_t n = 1;
    for (uint64_t k : c) n = checked_mul(n, k);
    if (table.vals.size() != n)
      throw ModelError("parfactor: table length does not match atom ranges");
    for (double v : table.vals)
      if (v < 0.0) throw ModelError("parfactor: negative potential");
    for (const auto& a : atoms)
      for (Symbol lv : a.logvars())
        if (constraint.column_of(lv) < 0)
          throw ModelError("parfactor: atom logvar " + sym_name(lv) +
                           " not covered by constraint");
    if (kind == FactorKind::Het) {
      if (convergent.empty() ||
          std::find(convergent.begin(), convergent.end(), 0) == convergent.end())
        throw ModelError("het parfactor: first atom must be convergent");
    }
    if (kind == FactorKind::Deputy) {
      if (atoms.size() != 2) throw ModelError("deputy parfactor: needs 2 atoms");
      if (table.vals != identity_table().vals)
        throw ModelError("deputy parfactor: table must be the identity");
    }
    if (kind == FactorKind::Bayes || kind == FactorKind::Markov) {
      if (!convergent.empty())
        throw ModelError("homogeneous parfactor: convergent set must be empty");
    }
    for (int i : convergent)
      if (i < 0 || i >= static_cast<int>(atoms.size()) || !atoms[i].atom.is_boolean())
        throw ModelError("convergent atoms must be Boolean");
  }
};

// Lookup by value symbols, resolving each against the atom's declared range.
inline double table_lookup(const Parfactor& pf, const std::vector<Symbol>& values) {
  if (values.size() != pf.atoms.size())
    throw ModelError("table lookup: arity mismatch");
  std::vector<uint64_t> idx(values.size());
  for (size_t i = 0; i < values.size(); ++i) {
    int v = pf.atoms[i].atom.value_index(values[i]);
    if (v < 0) throw ValueRangeError("value not in atom range");
    idx[i] = static_cast<uint64_t>(v);
  }
  return pf.table.at(idx);
}

struct Model {
  std::vector<Parfactor> f1;  // homogeneous factors (bayes, markov, deputy)
  std::vector<Parfactor> f2;  // heterogeneous factors (het)
  std::map<Symbol, std::vector<Symbol>> domains;  // name -> constants
  std::map<Symbol, std::vector<Symbol>> ranges;   // functor -> non-default range

  std::vector<Symbol> range_of(Symbol functor) const {
    auto it = ranges.find(functor);
    return it == ranges.end() ? bool_range() : it->second;
  }

  void add(Parfactor pf) {
    pf.check();
    if (pf.kind == FactorKind::Het)
      f2.push_back(std::move(pf));
    else
      f1.push_back(std::move(pf));
  }

  std::vector<const Parfactor*> all() const {
    std::vector<const Parfactor*> out;
    for (const auto& p : f1) out.push_back(&p);
    for (const auto& p : f2) out.push_back(&p);
    return out;
  }
};

}  // namespace lve
