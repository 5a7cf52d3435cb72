#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "lve/common.hpp"
#include "lve/factor.hpp"
#include "lve/ground.hpp"

namespace lve {

// ---------------------------------------------------------------------------
// Engine factors

struct LiftedFactor {
  std::vector<FactorAtom> atoms;
  PotentialTable table;
  Constraint constraint;
  std::vector<int> convergent;  // atom indices, sorted

  bool is_heterogeneous() const { return !convergent.empty(); }

  std::vector<Symbol> atom_logvars() const {
    std::vector<Symbol> out;
    for (const auto& fa : atoms)
      for (Symbol lv : fa.logvars())
        if (std::find(out.begin(), out.end(), lv) == out.end())
          out.push_back(lv);
    return out;
  }

  std::string shape() const {
    std::string s = "(";
    for (size_t i = 0; i < atoms.size(); ++i) {
      if (i) s += ",";
      s += sym_name(atoms[i].atom.functor) + "/" +
           std::to_string(atoms[i].atom.args.size());
      if (atoms[i].is_crv) s += "#";
    }
    s += ")";
    return s;
  }
};

namespace lift_detail {

inline void substitute_var(LiftedFactor& f, Symbol v, Symbol value) {
  for (auto& fa : f.atoms) {
    bool touches = false;
    for (auto& arg : fa.atom.args)
      if (arg.is_var && arg.sym == v) {
        arg = const_arg(value);
        touches = true;
      }
    if (touches && fa.is_crv) {
      if (fa.counted == v)
        throw ModelError("cannot substitute a counted logvar");
      fa.crv_constraint = fa.crv_constraint.select({{v, value}});
    }
  }
}

}  // namespace lift_detail

// Engine invariants: no dangling non-singleton constraint columns, singleton
// columns substituted away, schema ordered by first atom occurrence. Returns
// false when the constraint is empty (the factor stands for no groundings).
inline bool lf_canonicalize(LiftedFactor& f) {
  if (f.constraint.empty() && f.constraint.arity() > 0) return false;
  bool changed = true;
  while (changed) {
    changed = false;
    for (const auto& lv : f.constraint.schema()) {
      Constraint col = f.constraint.project({lv.name});
      if (col.size() != 1) continue;
      Symbol value = col.tuples()[0][0];
      lift_detail::substitute_var(f, lv.name, value);
      f.constraint = f.constraint.dropped(lv.name);
      changed = true;
      break;
    }
  }
  auto order = f.atom_logvars();
  for (const auto& lv : f.constraint.schema())
    if (std::find(order.begin(), order.end(), lv.name) == order.end())
      throw ModelError("constraint variable " + sym_name(lv.name) +
                       " is not bound by any atom");
  std::vector<Symbol> present;
  for (Symbol lv : order)
    if (f.constraint.column_of(lv) >= 0) present.push_back(lv);
  if (present.size() != f.constraint.arity())
    throw ModelError("atom logvar missing from constraint");
  f.constraint = f.constraint.reordered(present);
  return !f.constraint.empty() || f.constraint.arity() == 0;
}

// ---------------------------------------------------------------------------
// Alignment and combination (lifted multiplication, plain and heterogeneous)

struct AtomMatch {
  std::vector<std::pair<int, int>> pairs;   // (a atom idx, b atom idx)
  std::map<Symbol, Symbol> rename_b_to_a;   // logvar renaming applied to b
};

// Grounding set of one atom occurrence, as a relation over its arg positions.
struct ArgRelation {
  bool is_product = true;
  std::vector<std::vector<Symbol>> cols;  // product: per arg position
  TupleSet rows;                          // explicit

  uint64_t size() const {
    if (!is_product) return rows.size();
    uint64_t n = 1;
    for (const auto& c : cols) n = checked_mul(n, c.size());
    return n;
  }
  bool contains(const Tuple& t) const {
    if (is_product) {
      if (t.size() != cols.size()) return false;
      for (size_t i = 0; i < t.size(); ++i)
        if (std::find(cols[i].begin(), cols[i].end(), t[i]) == cols[i].end())
          return false;
      return true;
    }
    return std::binary_search(rows.begin(), rows.end(), t);
  }
  TupleSet materialize() const {
    if (!is_product) return rows;
    TupleSet out;
    std::vector<Logvar> schema(cols.size());
    for (size_t i = 0; i < cols.size(); ++i) schema[i] = {Symbol(i), 0};
    Constraint::product(schema, cols).for_each([&](const Tuple& t) {
      out.push_back(t);
    });
    detail::sort_unique(out);
    return out;
  }
  bool equals(const ArgRelation& o) const {
    if (size() != o.size()) return false;
    if (is_product && o.is_product) {
      if (cols.size() != o.cols.size()) return false;
      for (size_t i = 0; i < cols.size(); ++i) {
        if (cols[i] == o.cols[i]) continue;
        auto x = cols[i];
        auto y = o.cols[i];
        std::sort(x.begin(), x.end());
        std::sort(y.begin(), y.end());
        if (x != y) return false;
      }
      return true;
    }
    return materialize() == o.materialize();
  }
  bool overlaps(const ArgRelation& o) const {
    if (is_product && o.is_product) {
      if (cols.size() != o.cols.size()) return false;
      for (size_t i = 0; i < cols.size(); ++i) {
        bool any = false;
        for (Symbol s : cols[i])
          if (std::find(o.cols[i].begin(), o.cols[i].end(), s) !=
              o.cols[i].end()) {
            any = true;
            break;
          }
        if (!any) return false;
      }
      return true;
    }
    auto a = materialize();
    auto b = o.materialize();
    TupleSet inter;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(),
                          std::back_inserter(inter));
    return !inter.empty();
  }
};

inline ArgRelation arg_relation(const LiftedFactor& f, int ai) {
  const FactorAtom& fa = f.atoms[ai];
  ArgRelation rel;
  std::vector<Symbol> vars;
  bool repeated = false;
  for (const auto& arg : fa.atom.args) {
    if (!arg.is_var) continue;
    if (fa.is_crv && arg.sym == fa.counted) continue;
    if (std::find(vars.begin(), vars.end(), arg.sym) != vars.end())
      repeated = true;
    else
      vars.push_back(arg.sym);
  }
  static const Symbol counted_marker = intern("#counted");
  if (!repeated && f.constraint.is_product()) {
    for (const auto& arg : fa.atom.args) {
      if (fa.is_crv && arg.is_var && arg.sym == fa.counted) {
        rel.cols.push_back({counted_marker});
      } else if (arg.is_var) {
        rel.cols.push_back(
            f.constraint.column_values(f.constraint.require_column(arg.sym)));
      } else {
        rel.cols.push_back({arg.sym});
      }
    }
    return rel;
  }
  rel.is_product = false;
  Constraint proj = vars.empty() ? Constraint::unit() : f.constraint.project(vars);
  proj.for_each([&](const Tuple& t) {
    std::map<Symbol, Symbol> env;
    for (size_t i = 0; i < vars.size(); ++i) env[vars[i]] = t[i];
    Tuple row;
    for (const auto& arg : fa.atom.args) {
      if (fa.is_crv && arg.is_var && arg.sym == fa.counted)
        row.push_back(counted_marker);
      else
        row.push_back(arg.is_var ? env.at(arg.sym) : arg.sym);
    }
    rel.rows.push_back(std::move(row));
  });
  detail::sort_unique(rel.rows);
  return rel;
}

// Find the alignment between two factors by pairing atoms that denote the
// same parametrized randvars (same functor and grounding set), mapping b's
// logvars onto a's positionally. Unmatched b logvars colliding with a's
// schema are freshened.
inline AtomMatch derive_match(const LiftedFactor& a, const LiftedFactor& b) {
  AtomMatch m;
  std::vector<ArgRelation> arel, brel;
  for (size_t i = 0; i < a.atoms.size(); ++i)
    arel.push_back(arg_relation(a, static_cast<int>(i)));
  for (size_t j = 0; j < b.atoms.size(); ++j)
    brel.push_back(arg_relation(b, static_cast<int>(j)));
  std::vector<bool> a_used(a.atoms.size(), false);
  for (size_t j = 0; j < b.atoms.size(); ++j) {
    int found = -1;
    for (size_t i = 0; i < a.atoms.size(); ++i) {
      if (a_used[i]) continue;
      if (a.atoms[i].atom.functor != b.atoms[j].atom.functor) continue;
      if (a.atoms[i].is_crv != b.atoms[j].is_crv) continue;
      if (a.atoms[i].atom.args.size() != b.atoms[j].atom.args.size()) continue;
      if (!arel[i].equals(brel[j])) continue;
      found = static_cast<int>(i);
      break;
    }
    if (found < 0) continue;
    a_used[found] = true;
    m.pairs.emplace_back(found, static_cast<int>(j));
    const auto& aa = a.atoms[found].atom.args;
    const auto& ba = b.atoms[j].atom.args;
    for (size_t p = 0; p < aa.size(); ++p) {
      if (ba[p].is_var && aa[p].is_var) {
        auto it = m.rename_b_to_a.find(ba[p].sym);
        if (it != m.rename_b_to_a.end() && it->second != aa[p].sym)
          throw ModelError("alignment is not one-to-one");
        m.rename_b_to_a[ba[p].sym] = aa[p].sym;
      } else if (ba[p].is_var != aa[p].is_var) {
        throw ModelError("alignment mixes constants and logvars");
      }
    }
  }
  // freshen unmatched b logvars that collide with a's schema
  std::set<Symbol> a_names;
  for (const auto& lv : a.constraint.schema()) a_names.insert(lv.name);
  for (const auto& lv : b.constraint.schema()) {
    if (m.rename_b_to_a.count(lv.name)) continue;
    Symbol name = lv.name;
    while (a_names.count(name)) name = intern(sym_name(name) + "'");
    if (name != lv.name) m.rename_b_to_a[lv.name] = name;
    a_names.insert(name);
  }
  return m;
}

// Lifted multiplication of aligned parfactors. Shared convergent atoms are
// combined by summing over all OR-splits of their values; potentials carry
// the exponents 1/r of the conditional counts of each side's exclusive
// logvars. `shape_only` skips the table work (used for planning).
inline LiftedFactor lf_combine(const LiftedFactor& a, const LiftedFactor& b,
                               bool shape_only = false,
                               bool* was_het = nullptr,
                               const AtomMatch* forced_match = nullptr) {
  AtomMatch m = forced_match ? *forced_match : derive_match(a, b);

  LiftedFactor brn = b;  // b with logvars renamed onto a
  for (auto& fa : brn.atoms)
    for (auto& arg : fa.atom.args)
      if (arg.is_var && m.rename_b_to_a.count(arg.sym))
        arg.sym = m.rename_b_to_a.at(arg.sym);
  for (auto& fa : brn.atoms)
    if (fa.is_crv) {
      if (m.rename_b_to_a.count(fa.counted))
        fa.counted = m.rename_b_to_a.at(fa.counted);
      std::map<Symbol, Symbol> ren(m.rename_b_to_a.begin(),
                                   m.rename_b_to_a.end());
      fa.crv_constraint = fa.crv_constraint.renamed(ren);
    }
  brn.constraint = b.constraint.renamed(m.rename_b_to_a);

  // aligned logvar sets on each side
  std::set<Symbol> aligned;
  for (const auto& [ai, bi] : m.pairs) {
    for (Symbol lv : a.atoms[ai].logvars()) aligned.insert(lv);
  }
  std::vector<Symbol> a_excl, b_excl, a_nonexcl, b_nonexcl;
  for (const auto& lv : a.constraint.schema())
    (aligned.count(lv.name) ? a_nonexcl : a_excl).push_back(lv.name);
  for (const auto& lv : brn.constraint.schema())
    (aligned.count(lv.name) ? b_nonexcl : b_excl).push_back(lv.name);

  auto ra = a.constraint.conditional_count(a_excl, a_nonexcl);
  auto rb = brn.constraint.conditional_count(b_excl, b_nonexcl);
  if (!ra || !rb)
    throw ModelError("lifted multiply: exclusive logvars are not "
                     "count-normalized; split first");

  LiftedFactor out;
  out.constraint = Constraint::join(a.constraint, brn.constraint);
  out.atoms = a.atoms;
  std::vector<int> b_to_out(brn.atoms.size(), -1);
  for (const auto& [ai, bi] : m.pairs) b_to_out[bi] = ai;
  for (size_t j = 0; j < brn.atoms.size(); ++j) {
    if (b_to_out[j] >= 0) continue;
    b_to_out[j] = static_cast<int>(out.atoms.size());
    out.atoms.push_back(brn.atoms[j]);
  }
  // convergent bookkeeping: shared convergent atoms are OR-split; a matched
  // atom convergent on one side and regular on the other is a model error
  std::set<int> conv_out;
  std::vector<std::pair<int, int>> split_pairs;  // (a axis, b axis) of shared conv
  for (const auto& [ai, bi] : m.pairs) {
    bool ca = std::binary_search(a.convergent.begin(), a.convergent.end(), ai);
    bool cb = std::binary_search(b.convergent.begin(), b.convergent.end(), bi);
    if (ca != cb)
      throw ModelError("multiply: convergent/regular disagreement on " +
                       a.atoms[ai].atom.str());
    if (ca && cb) {
      if (a.atoms[ai].atom.range != bool_range())
        throw ModelError("convergent atoms must be Boolean");
      split_pairs.emplace_back(ai, bi);
      conv_out.insert(ai);
    }
  }
  for (int ci : a.convergent) conv_out.insert(ci);
  for (int ci : b.convergent) conv_out.insert(b_to_out[ci]);
  out.convergent.assign(conv_out.begin(), conv_out.end());
  if (was_het) *was_het = !split_pairs.empty();

  if (shape_only) {
    out.table = PotentialTable();
    out.table.card = {};
    for (const auto& fa : out.atoms) out.table.card.push_back(fa.range_size());
    return out;
  }

  std::vector<uint64_t> card;
  for (const auto& fa : out.atoms) card.push_back(fa.range_size());
  out.table.card = card;
  out.table.vals.assign(out.table.cells(), 0.0);

  double ea = 1.0 / static_cast<double>(*rb);  // a's exponent is 1/r_b
  double eb = 1.0 / static_cast<double>(*ra);
  auto powe = [](double v, double e) {
    if (e == 1.0) return v;
    return v == 0.0 ? 0.0 : std::pow(v, e);
  };

  size_t na = a.atoms.size();
  std::vector<uint64_t> av(na), bv(brn.atoms.size());
  std::set<int> split_a;
  for (auto& [ai, bi] : split_pairs) split_a.insert(ai);
  uint64_t pos = 0;
  for_each_assignment(card, [&](const std::vector<uint64_t>& asg) {
    // base assignment for both sides
    for (size_t i = 0; i < na; ++i) av[i] = asg[i];
    for (size_t j = 0; j < brn.atoms.size(); ++j) bv[j] = asg[b_to_out[j]];
    size_t k = split_pairs.size();
    double total = 0.0;
    std::vector<int> pick(k, 0);
    while (true) {
      static const std::pair<uint64_t, uint64_t> kTrueSplits[3] = {
          {0, 1}, {1, 0}, {1, 1}};
      for (size_t i = 0; i < k; ++i) {
        auto [ai, bi] = split_pairs[i];
        if (asg[ai] == 0) {
          av[ai] = 0;
          bv[bi] = 0;
        } else {
          av[ai] = kTrueSplits[pick[i]].first;
          bv[bi] = kTrueSplits[pick[i]].second;
        }
      }
      total += powe(a.table.at(av), ea) * powe(brn.table.at(bv), eb);
      bool done = true;
      size_t j = k;
      while (j > 0) {
        --j;
        int limit = asg[split_pairs[j].first] == 0 ? 1 : 3;
        if (++pick[j] < limit) { done = false; break; }
        pick[j] = 0;
      }
      if (done) break;
    }
    out.table.vals[pos++] = total;
  });
  return out;
}

// Spec-facing wrappers with the dispatch contracts.
inline LiftedFactor lifted_multiply(const LiftedFactor& a, const LiftedFactor& b) {
  bool het = false;
  LiftedFactor out = lf_combine(a, b, false, &het);
  if (het)
    throw ModelError("lifted multiply: operands share convergent atoms; use "
                     "het multiply");
  return out;
}

inline LiftedFactor het_multiply(const LiftedFactor& a, const LiftedFactor& b) {
  bool het = false;
  LiftedFactor out = lf_combine(a, b, false, &het);
  if (!het)
    throw ModelError("het multiply: operands share no convergent atoms; use "
                     "lifted multiply");
  return out;
}

// ---------------------------------------------------------------------------
// Heterogeneous sum-out (Operator 2); plain lifted sum-out is the k=0 case.

// Sums the target atom out of g. Preconditions:
//  * the target is not itself convergent (demote it first),
//  * the target atom carries every non-singleton logvar of the factor,
//  * its exclusive logvars are count-normalized (exponent r).
// The convergent axes are handled by the inclusion-exclusion recurrence over
// truth-value tuples in non-decreasing number of t's.
inline LiftedFactor lf_sum_out(const LiftedFactor& g, int target,
                               uint64_t* r_out = nullptr) {
  if (target < 0 || target >= static_cast<int>(g.atoms.size()))
    throw ModelError("sum out: bad atom index");
  if (std::binary_search(g.convergent.begin(), g.convergent.end(), target))
    throw ModelError("sum out: target atom is convergent");

  std::vector<Symbol> target_lv = g.atoms[target].logvars();
  std::vector<Symbol> other_lv;
  for (size_t i = 0; i < g.atoms.size(); ++i) {
    if (static_cast<int>(i) == target) continue;
    for (Symbol lv : g.atoms[i].logvars())
      if (std::find(other_lv.begin(), other_lv.end(), lv) == other_lv.end())
        other_lv.push_back(lv);
  }
  for (const auto& lv : g.constraint.schema()) {
    if (std::find(target_lv.begin(), target_lv.end(), lv.name) ==
        target_lv.end())
      throw ModelError("sum out: atom " + g.atoms[target].str() +
                       " does not carry logvar " + sym_name(lv.name) +
                       "; counting conversion or splitting is required");
  }
  std::vector<Symbol> excl, com;
  for (Symbol lv : target_lv) {
    if (g.constraint.column_of(lv) < 0) continue;  // counted-away logvar
    if (std::find(other_lv.begin(), other_lv.end(), lv) == other_lv.end())
      excl.push_back(lv);
    else
      com.push_back(lv);
  }
  auto r_opt = g.constraint.conditional_count(excl, com);
  if (!r_opt)
    throw ModelError("sum out: exclusive logvars are not count-normalized");
  uint64_t r = *r_opt;
  if (r_out) *r_out = r;

  LiftedFactor out;
  for (size_t i = 0; i < g.atoms.size(); ++i)
    if (static_cast<int>(i) != target) out.atoms.push_back(g.atoms[i]);
  for (int ci : g.convergent)
    out.convergent.push_back(ci > target ? ci - 1 : ci);
  std::sort(out.convergent.begin(), out.convergent.end());
  std::vector<Symbol> keep;
  for (const auto& lv : g.constraint.schema())
    if (std::find(other_lv.begin(), other_lv.end(), lv.name) != other_lv.end())
      keep.push_back(lv.name);
  out.constraint = g.constraint.project(keep);

  std::vector<uint64_t> out_card;
  for (const auto& fa : out.atoms) out_card.push_back(fa.range_size());
  out.table.card = out_card;

  // Mul-weighted marginal over the target axis.
  std::vector<double> marg(out.table.cells(), 0.0);
  uint64_t tcard = g.atoms[target].range_size();
  std::vector<double> mulw(tcard);
  for (uint64_t v = 0; v < tcard; ++v) mulw[v] = mul_of(g.atoms[target], v);
  {
    std::vector<uint64_t> full(g.atoms.size());
    for_each_assignment(out_card, [&](const std::vector<uint64_t>& asg) {
      size_t w = 0;
      for (size_t i = 0; i < g.atoms.size(); ++i) {
        if (static_cast<int>(i) == target) continue;
        full[i] = asg[w++];
      }
      double s = 0.0;
      for (uint64_t v = 0; v < tcard; ++v) {
        full[target] = v;
        s += mulw[v] * g.table.at(full);
      }
      uint64_t idx = 0;
      for (size_t i = 0; i < out_card.size(); ++i)
        idx = idx * out_card[i] + asg[i];
      marg[idx] = s;
    });
  }

  size_t k = out.convergent.size();
  if (k == 0) {
    out.table.vals.resize(marg.size());
    for (size_t i = 0; i < marg.size(); ++i)
      out.table.vals[i] =
          (r == 1) ? marg[i] : (marg[i] == 0.0 ? 0.0 : std::pow(marg[i], double(r)));
    return out;
  }

  // Separate convergent axes from the rest.
  std::vector<int> conv_axes(out.convergent.begin(), out.convergent.end());
  std::vector<uint64_t> b_card;
  std::vector<int> b_axes;
  for (size_t i = 0; i < out.atoms.size(); ++i) {
    if (std::binary_search(conv_axes.begin(), conv_axes.end(),
                           static_cast<int>(i)))
      continue;
    b_axes.push_back(static_cast<int>(i));
    b_card.push_back(out_card[i]);
  }
  // masks ordered by number of t values
  std::vector<uint64_t> mask_order;
  for (size_t bits = 0; bits <= k; ++bits)
    for (uint64_t msk = 0; msk < (uint64_t(1) << k); ++msk)
      if (static_cast<size_t>(__builtin_popcountll(msk)) == bits)
        mask_order.push_back(msk);

  out.table.vals.assign(marg.size(), 0.0);
  std::vector<uint64_t> asg(out_card.size());
  for_each_assignment(b_card, [&](const std::vector<uint64_t>& basg) {
    for (size_t i = 0; i < b_axes.size(); ++i) asg[b_axes[i]] = basg[i];
    auto index_for = [&](uint64_t msk) {
      for (size_t i = 0; i < k; ++i)
        asg[conv_axes[i]] = (msk >> i) & 1;
      uint64_t idx = 0;
      for (size_t i = 0; i < out_card.size(); ++i)
        idx = idx * out_card[i] + asg[i];
      return idx;
    };
    // cumulative sums over the product order (subset sums on t-positions)
    std::vector<double> zeta(uint64_t(1) << k);
    for (uint64_t msk = 0; msk < (uint64_t(1) << k); ++msk) {
      double s = 0.0;
      for (uint64_t sub = msk;; sub = (sub - 1) & msk) {
        s += marg[index_for(sub)];
        if (sub == 0) break;
      }
      zeta[msk] = s;
    }
    std::vector<double> phi(uint64_t(1) << k, 0.0);
    for (uint64_t msk : mask_order) {
      double v = zeta[msk] == 0.0 ? 0.0 : std::pow(zeta[msk], double(r));
      // subtract every strictly smaller tuple in the product order
      for (uint64_t sub = (msk - 1) & msk; sub != msk; sub = (sub - 1) & msk) {
        v -= phi[sub];
        if (sub == 0) break;
      }
      phi[msk] = v;
      out.table.vals[index_for(msk)] = v;
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Counting conversion

// Replaces the single atom carrying `lv` by a counting formula over it. The
// factor must be homogeneous and lv count-normalized w.r.t. the rest.
inline LiftedFactor counting_convert(const LiftedFactor& g, Symbol lv) {
  if (!g.convergent.empty())
    throw ModelError("counting conversion applies to homogeneous factors only");
  int ai = -1;
  for (size_t i = 0; i < g.atoms.size(); ++i) {
    auto lvs = g.atoms[i].logvars();
    if (std::find(lvs.begin(), lvs.end(), lv) != lvs.end()) {
      if (ai >= 0)
        throw ModelError("counting conversion: logvar occurs in several atoms");
      ai = static_cast<int>(i);
    }
  }
  if (ai < 0) throw ModelError("counting conversion: logvar not found");
  if (g.atoms[ai].is_crv)
    throw ModelError("counting conversion: atom is already a counting formula");

  std::vector<Symbol> rest;
  for (const auto& c : g.constraint.schema())
    if (c.name != lv) rest.push_back(c.name);
  auto n_opt = g.constraint.conditional_count({lv}, rest);
  if (!n_opt)
    throw ModelError("counting conversion: logvar is not count-normalized");
  uint64_t n = *n_opt;

  const Atom& atom = g.atoms[ai].atom;
  Constraint slice = g.constraint.project(atom.logvars());
  FactorAtom crv = FactorAtom::counting(atom, lv, n, slice);

  LiftedFactor out;
  out.atoms = g.atoms;
  out.atoms[ai] = crv;
  out.constraint = g.constraint.project(rest);
  std::vector<uint64_t> card;
  for (const auto& fa : out.atoms) card.push_back(fa.range_size());
  out.table.card = card;
  out.table.vals.assign(out.table.cells(), 0.0);

  HistogramRange hr{n, static_cast<uint32_t>(atom.range.size())};
  std::vector<uint64_t> gv(g.atoms.size());
  uint64_t pos = 0;
  for_each_assignment(card, [&](const std::vector<uint64_t>& asg) {
    for (size_t i = 0; i < out.atoms.size(); ++i)
      if (static_cast<int>(i) != ai) gv[i] = asg[i];
    Histogram h = hr.at(asg[ai]);
    double v = 1.0;
    for (size_t val = 0; val < h.size(); ++val) {
      if (h[val] == 0) continue;
      gv[ai] = val;
      double base = g.table.at(gv);
      v *= base == 0.0 ? (h[val] > 0 ? 0.0 : 1.0)
                       : std::pow(base, double(h[val]));
    }
    out.table.vals[pos++] = v;
  });
  return out;
}

// Evidence conditioning: fix an atom's value, drop the axis.
inline LiftedFactor lf_slice(const LiftedFactor& g, int ai, uint64_t value) {
  LiftedFactor out;
  for (size_t i = 0; i < g.atoms.size(); ++i)
    if (static_cast<int>(i) != ai) out.atoms.push_back(g.atoms[i]);
  for (int ci : g.convergent) {
    if (ci == ai) continue;
    out.convergent.push_back(ci > ai ? ci - 1 : ci);
  }
  std::vector<uint64_t> card;
  for (const auto& fa : out.atoms) card.push_back(fa.range_size());
  out.table.card = card;
  std::vector<uint64_t> gv(g.atoms.size());
  out.table.vals.reserve(out.table.cells());
  for_each_assignment(g.table.card, [&](const std::vector<uint64_t>& asg) {
    if (asg[ai] != value) return;
    out.table.vals.push_back(g.table.at(asg));
  });
  out.constraint = g.constraint;
  if (!lf_canonicalize(out) && out.constraint.arity() > 0)
    throw ModelError("slice produced an empty factor");
  return out;
}

}  // namespace lve
