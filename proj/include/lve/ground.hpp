#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "lve/common.hpp"
#include "lve/factor.hpp"

namespace lve {

// ---------------------------------------------------------------------------
// Ground random variables

struct GroundAtom {
  Symbol functor = 0;
  std::vector<Symbol> args;
  auto operator<=>(const GroundAtom&) const = default;

  std::string str() const {
    std::string s = sym_name(functor);
    if (!args.empty()) {
      s += "(";
      for (size_t i = 0; i < args.size(); ++i) {
        if (i) s += ",";
        s += sym_name(args[i]);
      }
      s += ")";
    }
    return s;
  }
};

class GroundVarTable {
 public:
  int intern(const GroundAtom& a, uint64_t range_size) {
    auto it = ids_.find(a);
    if (it != ids_.end()) return it->second;
    int id = static_cast<int>(atoms_.size());
    atoms_.push_back(a);
    cards_.push_back(range_size);
    ids_.emplace(a, id);
    return id;
  }
  int find(const GroundAtom& a) const {
    auto it = ids_.find(a);
    return it == ids_.end() ? -1 : it->second;
  }
  const GroundAtom& atom(int id) const { return atoms_.at(id); }
  uint64_t card(int id) const { return cards_.at(id); }
  size_t size() const { return atoms_.size(); }

 private:
  std::vector<GroundAtom> atoms_;
  std::vector<uint64_t> cards_;
  std::map<GroundAtom, int> ids_;
};

struct GroundFactor {
  std::vector<int> vars;       // axis order
  std::vector<uint64_t> card;  // per axis
  std::vector<double> vals;
  std::vector<int> convergent;  // var ids, sorted

  bool has_var(int v) const {
    return std::find(vars.begin(), vars.end(), v) != vars.end();
  }
  bool is_convergent(int v) const {
    return std::binary_search(convergent.begin(), convergent.end(), v);
  }
  int axis_of(int v) const {
    for (size_t i = 0; i < vars.size(); ++i)
      if (vars[i] == v) return static_cast<int>(i);
    return -1;
  }
  uint64_t cells() const {
    uint64_t n = 1;
    for (uint64_t k : card) n = checked_mul(n, k);
    return n;
  }
  double at(const std::vector<uint64_t>& a) const {
    uint64_t idx = 0;
    for (size_t i = 0; i < card.size(); ++i) idx = idx * card[i] + a[i];
    return vals[idx];
  }
};

namespace detail {
inline std::vector<int> union_sorted(const std::vector<int>& a,
                                     const std::vector<int>& b) {
  std::vector<int> out;
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}
inline std::vector<int> inter_sorted(const std::vector<int>& a,
                                     const std::vector<int>& b) {
  std::vector<int> out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(),
                        std::back_inserter(out));
  return out;
}
inline std::vector<int> minus_sorted(const std::vector<int>& a,
                                     const std::vector<int>& b) {
  std::vector<int> out;
  std::set_difference(a.begin(), a.end(), b.begin(), b.end(),
                      std::back_inserter(out));
  return out;
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Ground factor operations

inline GroundFactor gf_unit() { return GroundFactor{{}, {}, {1.0}, {}}; }

// Pointwise product over the union of variables. Operands must not share a
// convergent variable (combine those with gf_het_multiply instead), and a
// variable convergent in one side may not appear regular in the other.
inline GroundFactor gf_multiply(const GroundFactor& a, const GroundFactor& b) {
  std::vector<int> conv_a_sorted = a.convergent, conv_b_sorted = b.convergent;
  for (int v : detail::inter_sorted(conv_a_sorted, conv_b_sorted))
    throw ModelError("ground multiply: shared convergent randvar " +
                     std::to_string(v));
  for (int v : a.convergent)
    if (b.has_var(v) && !b.is_convergent(v))
      throw ModelError("ground multiply: convergent/regular disagreement");
  for (int v : b.convergent)
    if (a.has_var(v) && !a.is_convergent(v))
      throw ModelError("ground multiply: convergent/regular disagreement");

  GroundFactor out;
  out.vars = a.vars;
  out.card = a.card;
  std::vector<int> b_extra_axes;
  for (size_t j = 0; j < b.vars.size(); ++j) {
    if (!a.has_var(b.vars[j])) {
      out.vars.push_back(b.vars[j]);
      out.card.push_back(b.card[j]);
      b_extra_axes.push_back(static_cast<int>(j));
    }
  }
  out.convergent = detail::union_sorted(a.convergent, b.convergent);
  if (out.cells() > (1ull << 26))
    throw BudgetError("ground product exceeds the factor cell limit");

  std::vector<int> b_axis_from_out(out.vars.size(), -1);
  for (size_t i = 0; i < out.vars.size(); ++i) {
    int ax = b.axis_of(out.vars[i]);
    b_axis_from_out[i] = ax;
  }
  out.vals.resize(out.cells());
  std::vector<uint64_t> bv(b.vars.size());
  uint64_t pos = 0;
  for_each_assignment(out.card, [&](const std::vector<uint64_t>& asg) {
    uint64_t ai = 0;
    for (size_t i = 0; i < a.card.size(); ++i) ai = ai * a.card[i] + asg[i];
    for (size_t i = 0; i < out.vars.size(); ++i)
      if (b_axis_from_out[i] >= 0) bv[b_axis_from_out[i]] = asg[i];
    uint64_t bi = 0;
    for (size_t i = 0; i < b.card.size(); ++i) bi = bi * b.card[i] + bv[i];
    out.vals[pos++] = a.vals[ai] * b.vals[bi];
  });
  return out;
}

// Heterogeneous combination (the noisy-OR aware product): shared convergent
// variables are split over all value pairs whose disjunction gives the output
// value; everything else behaves as in gf_multiply.
inline GroundFactor gf_het_multiply(const GroundFactor& a, const GroundFactor& b) {
  std::vector<int> shared_conv = detail::inter_sorted(a.convergent, b.convergent);
  for (int v : a.convergent)
    if (b.has_var(v) && !b.is_convergent(v))
      throw ModelError("het multiply: convergent/regular disagreement");
  for (int v : b.convergent)
    if (a.has_var(v) && !a.is_convergent(v))
      throw ModelError("het multiply: convergent/regular disagreement");
  for (int v : shared_conv) {
    int ax = a.axis_of(v);
    int bx = b.axis_of(v);
    if (a.card[ax] != 2 || b.card[bx] != 2)
      throw ModelError("het multiply: convergent randvars must be Boolean");
  }
  if (shared_conv.empty()) {
    GroundFactor out;
    // No shared convergent variables: plain pointwise product, but keep all
    // convergent markings from both sides.
    std::vector<int> keep_a = a.convergent, keep_b = b.convergent;
    GroundFactor a2 = a, b2 = b;
    a2.convergent.clear();
    b2.convergent.clear();
    out = gf_multiply(a2, b2);
    out.convergent = detail::union_sorted(keep_a, keep_b);
    return out;
  }

  GroundFactor out;
  out.vars = a.vars;
  out.card = a.card;
  for (size_t j = 0; j < b.vars.size(); ++j) {
    if (!a.has_var(b.vars[j])) {
      out.vars.push_back(b.vars[j]);
      out.card.push_back(b.card[j]);
    }
  }
  out.convergent = detail::union_sorted(a.convergent, b.convergent);
  if (out.cells() > (1ull << 26))
    throw BudgetError("ground combination exceeds the factor cell limit");

  std::vector<int> a_axis(out.vars.size()), b_axis(out.vars.size());
  for (size_t i = 0; i < out.vars.size(); ++i) {
    a_axis[i] = a.axis_of(out.vars[i]);
    b_axis[i] = b.axis_of(out.vars[i]);
  }
  std::vector<int> split_axes;  // out axes of shared convergent vars
  for (int v : shared_conv) {
    for (size_t i = 0; i < out.vars.size(); ++i)
      if (out.vars[i] == v) split_axes.push_back(static_cast<int>(i));
  }

  out.vals.assign(out.cells(), 0.0);
  std::vector<uint64_t> av(a.vars.size()), bv(b.vars.size());
  uint64_t pos = 0;
  size_t k = split_axes.size();
  for_each_assignment(out.card, [&](const std::vector<uint64_t>& asg) {
    double total = 0.0;
    // Enumerate OR-splits of each shared convergent value: f -> (f,f);
    // t -> (f,t),(t,f),(t,t).
    std::vector<std::pair<uint64_t, uint64_t>> choices(k);
    std::vector<int> limit(k);
    for (size_t i = 0; i < k; ++i)
      limit[i] = asg[split_axes[i]] == 0 ? 1 : 3;
    std::vector<int> pick(k, 0);
    while (true) {
      for (size_t i = 0; i < k; ++i) {
        static const std::pair<uint64_t, uint64_t> kTrueSplits[3] = {
            {0, 1}, {1, 0}, {1, 1}};
        choices[i] = asg[split_axes[i]] == 0 ? std::pair<uint64_t, uint64_t>{0, 0}
                                             : kTrueSplits[pick[i]];
      }
      for (size_t i = 0; i < out.vars.size(); ++i) {
        if (a_axis[i] >= 0) av[a_axis[i]] = asg[i];
        if (b_axis[i] >= 0) bv[b_axis[i]] = asg[i];
      }
      for (size_t i = 0; i < k; ++i) {
        av[a.axis_of(out.vars[split_axes[i]])] = choices[i].first;
        bv[b.axis_of(out.vars[split_axes[i]])] = choices[i].second;
      }
      uint64_t ai = 0, bi = 0;
      for (size_t i = 0; i < a.card.size(); ++i) ai = ai * a.card[i] + av[i];
      for (size_t i = 0; i < b.card.size(); ++i) bi = bi * b.card[i] + bv[i];
      total += a.vals[ai] * b.vals[bi];
      size_t j = k;
      bool done = true;
      while (j > 0) {
        --j;
        if (++pick[j] < limit[j]) { done = false; break; }
        pick[j] = 0;
      }
      if (done) break;
    }
    out.vals[pos++] = total;
  });
  return out;
}

// Marginalize a non-convergent variable out.
inline GroundFactor gf_sum_out(const GroundFactor& f, int v) {
  int ax = f.axis_of(v);
  if (ax < 0) throw ModelError("sum out: variable not in factor");
  if (f.is_convergent(v))
    throw ModelError("sum out: refusing to marginalize a convergent randvar");
  GroundFactor out;
  for (size_t i = 0; i < f.vars.size(); ++i) {
    if (static_cast<int>(i) == ax) continue;
    out.vars.push_back(f.vars[i]);
    out.card.push_back(f.card[i]);
  }
  out.convergent = f.convergent;
  out.vals.assign(out.cells(), 0.0);
  std::vector<uint64_t> sub(out.card.size());
  uint64_t pos = 0;
  for_each_assignment(f.card, [&](const std::vector<uint64_t>& asg) {
    size_t w = 0;
    for (size_t i = 0; i < f.card.size(); ++i)
      if (static_cast<int>(i) != ax) sub[w++] = asg[i];
    uint64_t idx = 0;
    for (size_t i = 0; i < out.card.size(); ++i) idx = idx * out.card[i] + sub[i];
    out.vals[idx] += f.vals[pos++];
  });
  return out;
}

// Condition on v = value: restrict the table and drop the axis.
inline GroundFactor gf_slice(const GroundFactor& f, int v, uint64_t value) {
  int ax = f.axis_of(v);
  if (ax < 0) throw ModelError("slice: variable not in factor");
  GroundFactor out;
  for (size_t i = 0; i < f.vars.size(); ++i) {
    if (static_cast<int>(i) == ax) continue;
    out.vars.push_back(f.vars[i]);
    out.card.push_back(f.card[i]);
  }
  out.convergent = f.convergent;
  out.convergent.erase(std::remove(out.convergent.begin(), out.convergent.end(), v),
                       out.convergent.end());
  out.vals.reserve(out.cells());
  for_each_assignment(f.card, [&](const std::vector<uint64_t>& asg) {
    if (asg[ax] == value) {
      // row-major walk emits kept entries already in output order
      out.vals.push_back(f.at(asg));
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// VE1: two factor lists, heterogeneous combination on demand

struct GroundModel {
  GroundVarTable vars;
  std::vector<GroundFactor> f1;  // homogeneous (incl. deputy identities)
  std::vector<GroundFactor> f2;  // heterogeneous
  std::vector<std::pair<int, int>> deputy_pairs;  // (regular E, prime E')
};

// One sum-out1 step: combine everything containing z, then marginalize.
// Heterogeneous factors in which z is convergent are combined first (their
// OR-splits collect z's contributions); the collection is then complete and z
// demotes to a regular variable before the remaining factors join in.
inline void sum_out1(std::vector<GroundFactor>& f1, std::vector<GroundFactor>& f2,
                     int z, const Deadline& deadline = {}) {
  deadline.check();
  std::optional<GroundFactor> phi;
  for (size_t i = f1.size(); i-- > 0;) {
    if (!f1[i].has_var(z)) continue;
    phi = phi ? gf_multiply(*phi, f1[i]) : f1[i];
    f1.erase(f1.begin() + i);
  }
  std::vector<GroundFactor> conv_z, reg_z;
  for (size_t i = f2.size(); i-- > 0;) {
    if (!f2[i].has_var(z)) continue;
    (f2[i].is_convergent(z) ? conv_z : reg_z).push_back(std::move(f2[i]));
    f2.erase(f2.begin() + i);
  }
  std::optional<GroundFactor> psi;
  for (auto& f : conv_z) psi = psi ? gf_het_multiply(*psi, f) : f;
  if (psi)
    psi->convergent.erase(
        std::remove(psi->convergent.begin(), psi->convergent.end(), z),
        psi->convergent.end());
  for (auto& f : reg_z) psi = psi ? gf_het_multiply(*psi, f) : f;
  if (!psi) {
    if (!phi) return;  // variable absent everywhere
    f1.push_back(gf_sum_out(*phi, z));
    return;
  }
  GroundFactor combined = phi ? gf_multiply(*phi, *psi) : *psi;
  f2.push_back(gf_sum_out(combined, z));
}

// Min-fill elimination order over the interaction graph; `before` pairs force
// a.first to be eliminated before a.second (deputy discipline rho(E')<rho(E)).
inline std::vector<int> min_fill_order(
    const std::vector<const GroundFactor*>& factors,
    const std::vector<int>& to_eliminate,
    const std::vector<std::pair<int, int>>& before,
    const Deadline& deadline = {}) {
  std::set<int> remaining(to_eliminate.begin(), to_eliminate.end());
  std::map<int, std::set<int>> adj;
  for (const auto* f : factors)
    for (int u : f->vars)
      for (int v : f->vars)
        if (u != v) adj[u].insert(v);
  std::vector<int> order;
  while (!remaining.empty()) {
    deadline.check();
    int best = -1;
    long best_fill = -1;
    for (int v : remaining) {
      bool blocked = false;
      for (const auto& [first, second] : before)
        if (second == v && remaining.count(first)) { blocked = true; break; }
      if (blocked) continue;
      long fill = 0;
      std::vector<int> nb;
      for (int u : adj[v])
        if (remaining.count(u) || u == v) nb.push_back(u);
      for (size_t i = 0; i < nb.size(); ++i)
        for (size_t j = i + 1; j < nb.size(); ++j)
          if (!adj[nb[i]].count(nb[j])) ++fill;
      if (best < 0 || fill < best_fill) {
        best = v;
        best_fill = fill;
      }
    }
    if (best < 0) throw ModelError("elimination order: precedence cycle");
    order.push_back(best);
    remaining.erase(best);
    std::vector<int> nb(adj[best].begin(), adj[best].end());
    for (int u : nb) {
      for (int w : nb)
        if (u != w) adj[u].insert(w);
      adj[u].erase(best);
    }
    adj.erase(best);
  }
  return order;
}

struct Distribution {
  std::vector<Symbol> values;
  std::vector<double> probs;
};

using Evidence = std::vector<std::pair<int, uint64_t>>;  // var id -> value index

inline void apply_evidence(std::vector<GroundFactor>& fs, const Evidence& ev) {
  for (auto& [v, val] : ev) {
    for (auto& f : fs) {
      if (f.has_var(v)) f = gf_slice(f, v, val);
    }
  }
}

// VE1 on a two-list ground model. `order` may be empty (min-fill is used).
inline std::vector<double> run_ve1(std::vector<GroundFactor> f1,
                                   std::vector<GroundFactor> f2, int query,
                                   const Evidence& evidence,
                                   const std::vector<std::pair<int, int>>& deputy_pairs,
                                   std::vector<int> order = {},
                                   const Deadline& deadline = {}) {
  apply_evidence(f1, evidence);
  apply_evidence(f2, evidence);
  if (order.empty()) {
    std::set<int> seen;
    std::vector<const GroundFactor*> all;
    for (const auto& f : f1) all.push_back(&f);
    for (const auto& f : f2) all.push_back(&f);
    for (const auto* f : all)
      for (int v : f->vars) seen.insert(v);
    seen.erase(query);
    for (const auto& [v, val] : evidence) seen.erase(v);
    std::vector<int> elim(seen.begin(), seen.end());
    std::vector<std::pair<int, int>> prec;
    for (auto [e, ep] : deputy_pairs) prec.push_back({ep, e});  // E' before E
    order = min_fill_order(all, elim, prec, deadline);
  }
  for (int z : order) sum_out1(f1, f2, z, deadline);

  GroundFactor gamma = gf_unit();
  for (auto& f : f1) {
    f.convergent.clear();
    gamma = gf_multiply(gamma, f);
  }
  for (auto& f : f2) {
    f.convergent.clear();
    gamma = gf_multiply(gamma, f);
  }
  int ax = gamma.axis_of(query);
  if (ax < 0) throw ModelError("query variable vanished during elimination");
  if (gamma.vars.size() != 1) {
    // marginalize any stragglers (possible only if order was user-supplied)
    for (size_t i = gamma.vars.size(); i-- > 0;)
      if (gamma.vars[i] != query) gamma = gf_sum_out(gamma, gamma.vars[i]);
  }
  double z = 0.0;
  for (double v : gamma.vals) z += v;
  if (z <= 0.0) throw EvidenceError("inconsistent evidence: all-zero posterior");
  std::vector<double> out(gamma.vals.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = gamma.vals[i] / z;
  return out;
}

// ---------------------------------------------------------------------------
// Full-CPT expansion of the noisy-OR structure (the VE oracle path).
// Contributions to each convergent variable are composed by direct
// enumeration of all OR-splits, independently of the pairwise operator.

inline std::vector<GroundFactor> expand_noisy_or(
    const std::vector<GroundFactor>& f1, const std::vector<GroundFactor>& f2,
    uint64_t cell_budget) {
  std::vector<GroundFactor> out = f1;
  for (auto& f : out) f.convergent.clear();
  std::map<int, std::vector<const GroundFactor*>> by_conv;
  std::vector<const GroundFactor*> plain;
  for (const auto& f : f2) {
    if (f.convergent.empty()) {
      plain.push_back(&f);
      continue;
    }
    if (f.convergent.size() != 1)
      throw ModelError("full-CPT expansion expects single-convergent factors");
    by_conv[f.convergent[0]].push_back(&f);
  }
  for (const auto* f : plain) {
    GroundFactor g = *f;
    g.convergent.clear();
    out.push_back(g);
  }
  for (const auto& [e, contribs] : by_conv) {
    GroundFactor comp;
    comp.vars = {e};
    for (const auto* c : contribs)
      for (size_t i = 0; i < c->vars.size(); ++i)
        if (c->vars[i] != e && !comp.has_var(c->vars[i])) {
          comp.vars.push_back(c->vars[i]);
        }
    comp.card.resize(comp.vars.size());
    comp.card[0] = 2;
    for (size_t i = 1; i < comp.vars.size(); ++i) {
      uint64_t k = 0;
      for (const auto* c : contribs) {
        int ax = c->axis_of(comp.vars[i]);
        if (ax >= 0) k = c->card[ax];
      }
      comp.card[i] = k;
    }
    if (checked_mul(comp.cells(), uint64_t(1) << contribs.size()) > cell_budget)
      throw BudgetError("full-CPT expansion exceeds the cell budget");
    comp.vals.assign(comp.cells(), 0.0);
    size_t j = contribs.size();
    uint64_t pos = 0;
    for_each_assignment(comp.card, [&](const std::vector<uint64_t>& asg) {
      double total = 0.0;
      for (uint64_t mask = 0; mask < (uint64_t(1) << j); ++mask) {
        uint64_t disj = 0;
        for (size_t i = 0; i < j; ++i)
          if (mask & (uint64_t(1) << i)) disj = 1;
        if (disj != asg[0]) continue;
        double prod = 1.0;
        for (size_t i = 0; i < j; ++i) {
          const auto* c = contribs[i];
          std::vector<uint64_t> cv(c->vars.size());
          for (size_t x = 0; x < c->vars.size(); ++x) {
            if (c->vars[x] == e) {
              cv[x] = (mask >> i) & 1;
            } else {
              int outx = -1;
              for (size_t y = 0; y < comp.vars.size(); ++y)
                if (comp.vars[y] == c->vars[x]) outx = static_cast<int>(y);
              cv[x] = asg[outx];
            }
          }
          prod *= c->at(cv);
        }
        total += prod;
      }
      comp.vals[pos++] = total;
    });
    out.push_back(std::move(comp));
  }
  return out;
}

// Classic VE over plain factors.
inline std::vector<double> run_ve(std::vector<GroundFactor> factors, int query,
                                  const Evidence& evidence,
                                  std::vector<int> order = {},
                                  const Deadline& deadline = {}) {
  std::vector<GroundFactor> none;
  return run_ve1(std::move(factors), std::move(none), query, evidence, {},
                 std::move(order), deadline);
}

// ---------------------------------------------------------------------------
// Grounding parfactors

inline std::vector<Symbol> atom_arg_values(const Atom& a, const Constraint& c,
                                           const Tuple& t) {
  std::vector<Symbol> args;
  args.reserve(a.args.size());
  for (const auto& arg : a.args) {
    if (arg.is_var)
      args.push_back(t[c.require_column(arg.sym)]);
    else
      args.push_back(arg.sym);
  }
  return args;
}

// Expand one parfactor into its ground factors, one per constraint tuple.
// Counting formulas expand into their constituent randvars.
inline std::vector<GroundFactor> ground_parfactor(const Parfactor& pf,
                                                  GroundVarTable& vars) {
  std::vector<GroundFactor> out;
  pf.constraint.for_each([&](const Tuple& t) {
    GroundFactor g;
    std::vector<int> crv_axis_start;    // first constituent axis per factor atom
    std::vector<int> crv_axis_count;
    std::vector<const FactorAtom*> fatoms;
    for (const auto& fa : pf.atoms) {
      fatoms.push_back(&fa);
      if (!fa.is_crv) {
        GroundAtom ga{fa.atom.functor, atom_arg_values(fa.atom, pf.constraint, t)};
        int id = vars.intern(ga, fa.atom.range.size());
        crv_axis_start.push_back(static_cast<int>(g.vars.size()));
        crv_axis_count.push_back(1);
        g.vars.push_back(id);
        g.card.push_back(fa.atom.range.size());
        continue;
      }
      // Constituents: instantiations of the counted logvar co-occurring with
      // this tuple's values for the atom's other logvars.
      std::vector<std::pair<Symbol, Symbol>> bind;
      for (Symbol lv : fa.atom.logvars())
        if (lv != fa.counted)
          bind.emplace_back(lv, t[pf.constraint.require_column(lv)]);
      Constraint slice = fa.crv_constraint.select(bind).project({fa.counted});
      crv_axis_start.push_back(static_cast<int>(g.vars.size()));
      int cnt = 0;
      slice.for_each([&](const Tuple& xt) {
        std::vector<std::pair<Symbol, Symbol>> full = bind;
        full.emplace_back(fa.counted, xt[0]);
        std::map<Symbol, Symbol> env;
        for (auto& [k, v] : full) env[k] = v;
        std::vector<Symbol> args;
        for (const auto& arg : fa.atom.args)
          args.push_back(arg.is_var ? env.at(arg.sym) : arg.sym);
        int id = vars.intern({fa.atom.functor, std::move(args)},
                             fa.atom.range.size());
        g.vars.push_back(id);
        g.card.push_back(fa.atom.range.size());
        ++cnt;
      });
      if (static_cast<uint64_t>(cnt) != fa.crv_total)
        throw ModelError("counting formula: constituent count mismatch");
      crv_axis_count.push_back(cnt);
    }
    g.vals.assign(g.cells(), 0.0);
    uint64_t pos = 0;
    std::vector<uint64_t> pf_idx(pf.atoms.size());
    for_each_assignment(g.card, [&](const std::vector<uint64_t>& asg) {
      for (size_t i = 0; i < pf.atoms.size(); ++i) {
        const FactorAtom& fa = *fatoms[i];
        if (!fa.is_crv) {
          pf_idx[i] = asg[crv_axis_start[i]];
        } else {
          Histogram h(fa.atom.range.size(), 0);
          for (int j = 0; j < crv_axis_count[i]; ++j)
            ++h[asg[crv_axis_start[i] + j]];
          pf_idx[i] = HistogramRange{fa.crv_total,
                                     static_cast<uint32_t>(fa.atom.range.size())}
                          .index_of(h);
        }
      }
      g.vals[pos++] = pf.table.at(pf_idx);
    });
    for (int ci : pf.convergent) {
      const FactorAtom& fa = pf.atoms[ci];
      if (fa.is_crv) throw ModelError("counting formulas cannot be convergent");
      GroundAtom ga{fa.atom.functor, atom_arg_values(fa.atom, pf.constraint, t)};
      g.convergent.push_back(vars.find(ga));
    }
    std::sort(g.convergent.begin(), g.convergent.end());
    g.convergent.erase(std::unique(g.convergent.begin(), g.convergent.end()),
                       g.convergent.end());

    // Distinct atoms can instantiate to the same ground randvar; such axes
    // are contracted to the diagonal.
    std::vector<int> uniq;
    std::vector<int> remap(g.vars.size());
    bool dup = false;
    for (size_t i = 0; i < g.vars.size(); ++i) {
      auto it = std::find(uniq.begin(), uniq.end(), g.vars[i]);
      if (it == uniq.end()) {
        remap[i] = static_cast<int>(uniq.size());
        uniq.push_back(g.vars[i]);
      } else {
        remap[i] = static_cast<int>(it - uniq.begin());
        dup = true;
      }
    }
    if (dup) {
      GroundFactor contracted;
      contracted.vars = uniq;
      for (int v : uniq)
        contracted.card.push_back(g.card[std::find(g.vars.begin(), g.vars.end(), v) -
                                         g.vars.begin()]);
      contracted.convergent = g.convergent;
      contracted.vals.reserve(contracted.cells());
      std::vector<uint64_t> full(g.vars.size());
      for_each_assignment(contracted.card, [&](const std::vector<uint64_t>& asg) {
        for (size_t i = 0; i < g.vars.size(); ++i) full[i] = asg[remap[i]];
        contracted.vals.push_back(g.at(full));
      });
      g = std::move(contracted);
    }
    out.push_back(std::move(g));
  });
  return out;
}

inline GroundModel ground_model(const Model& m) {
  GroundModel gm;
  for (const auto& pf : m.f1) {
    auto fs = ground_parfactor(pf, gm.vars);
    for (auto& f : fs) {
      if (pf.kind == FactorKind::Deputy) {
        // remember the pair (regular E, prime E') for ordering constraints
        gm.deputy_pairs.emplace_back(f.vars[0], f.vars[1]);
      }
      f.convergent.clear();  // homogeneous list members combine by product
      gm.f1.push_back(std::move(f));
    }
  }
  for (const auto& pf : m.f2) {
    auto fs = ground_parfactor(pf, gm.vars);
    for (auto& f : fs) gm.f2.push_back(std::move(f));
  }
  return gm;
}

// ---------------------------------------------------------------------------
// Exact joint-distribution oracle for small ground models (test support and
// soundness checks): expands the noisy-OR structure, multiplies everything,
// and normalizes over all variables.

inline std::vector<double> joint_distribution(const std::vector<GroundFactor>& f1,
                                              const std::vector<GroundFactor>& f2,
                                              const std::vector<int>& var_order,
                                              uint64_t cell_budget = 1ull << 26) {
  auto plain = expand_noisy_or(f1, f2, cell_budget);
  GroundFactor joint = gf_unit();
  for (const auto& f : plain) joint = gf_multiply(joint, f);
  for (int v : var_order)
    if (!joint.has_var(v)) {
      GroundFactor pad{{v}, {2}, {1.0, 1.0}, {}};
      joint = gf_multiply(joint, pad);
    }
  // reorder axes to var_order
  GroundFactor out;
  out.vars = var_order;
  for (int v : var_order) out.card.push_back(joint.card[joint.axis_of(v)]);
  out.vals.resize(out.cells());
  std::vector<uint64_t> jv(joint.vars.size());
  uint64_t pos = 0;
  for_each_assignment(out.card, [&](const std::vector<uint64_t>& asg) {
    for (size_t i = 0; i < out.vars.size(); ++i)
      jv[joint.axis_of(out.vars[i])] = asg[i];
    out.vals[pos++] = joint.at(jv);
  });
  double z = 0.0;
  for (double v : out.vals) z += v;
  if (z <= 0) throw ModelError("joint oracle: zero partition function");
  for (auto& v : out.vals) v /= z;
  return out.vals;
}

}  // namespace lve
