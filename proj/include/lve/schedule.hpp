#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "lve/common.hpp"
#include "lve/ground.hpp"
#include "lve/lifted.hpp"

namespace lve {

struct OpTrace {
  std::string tag;    // sum-out | het-sum-out | multiply | het-multiply |
                      // counting-convert | split | propositionalize
  std::string shape;  // operand/result shapes; conditional counts excluded
};

struct LiftedOptions {
  uint64_t cell_budget = 10000000;
  uint64_t split_limit = 4096;  // largest column a split enabler may expand
  Deadline deadline;
  std::vector<OpTrace>* trace = nullptr;
};

namespace sched_detail {

struct Pool {
  std::vector<LiftedFactor> f1, f2;
  std::vector<Parfactor> deputies;  // original deputy parfactors, for ordering

  std::vector<std::pair<int, int>> all_refs() const {
    std::vector<std::pair<int, int>> out;
    for (size_t i = 0; i < f1.size(); ++i) out.emplace_back(0, (int)i);
    for (size_t i = 0; i < f2.size(); ++i) out.emplace_back(1, (int)i);
    return out;
  }
  LiftedFactor& at(std::pair<int, int> ref) {
    return ref.first == 0 ? f1[ref.second] : f2[ref.second];
  }
  const LiftedFactor& at(std::pair<int, int> ref) const {
    return ref.first == 0 ? f1[ref.second] : f2[ref.second];
  }
};

struct Occurrence {
  std::pair<int, int> ref;  // (list, factor index)
  int atom = 0;
  bool convergent = false;
};

struct Group {
  Symbol functor = 0;
  bool crv = false;
  ArgRelation rel;
  std::vector<Occurrence> occ;
  bool any_convergent = false;
  bool multi_in_one_factor = false;
  size_t first_seen = 0;  // insertion rank during the pool scan
};

inline std::vector<Group> build_groups(const Pool& pool) {
  std::vector<Group> groups;
  for (auto ref : pool.all_refs()) {
    const LiftedFactor& f = pool.at(ref);
    for (size_t ai = 0; ai < f.atoms.size(); ++ai) {
      ArgRelation rel = arg_relation(f, static_cast<int>(ai));
      bool conv = std::binary_search(f.convergent.begin(), f.convergent.end(),
                                     static_cast<int>(ai));
      Group* hit = nullptr;
      for (auto& g : groups) {
        if (g.functor != f.atoms[ai].atom.functor) continue;
        if (g.crv != f.atoms[ai].is_crv) continue;
        if (!g.rel.equals(rel)) continue;
        hit = &g;
        break;
      }
      if (!hit) {
        groups.push_back({f.atoms[ai].atom.functor, f.atoms[ai].is_crv, rel,
                          {}, false, false, groups.size()});
        hit = &groups.back();
      }
      for (const auto& o : hit->occ)
        if (o.ref == ref) hit->multi_in_one_factor = true;
      hit->occ.push_back({ref, static_cast<int>(ai), conv});
      hit->any_convergent |= conv;
    }
  }
  // Deterministic order that does not depend on domain contents: the pool
  // scan order is itself deterministic, so ranks are stable across runs and
  // across domain sizes.
  std::sort(groups.begin(), groups.end(), [](const Group& a, const Group& b) {
    const std::string& an = sym_name(a.functor);
    const std::string& bn = sym_name(b.functor);
    if (an != bn) return an < bn;
    if (a.crv != b.crv) return a.crv < b.crv;
    return a.first_seen < b.first_seen;
  });
  return groups;
}

// --------------------------------------------------------------------------
// Shattering

// Split one factor's constraint so that the given atom either exactly covers
// `args` or avoids it.
inline std::vector<LiftedFactor> isolate_in_factor(const LiftedFactor& f,
                                                   int ai, const Tuple& args) {
  std::vector<LiftedFactor> out;
  LiftedFactor cur = f;
  const auto& fa = f.atoms[ai];
  for (size_t p = 0; p < fa.atom.args.size(); ++p) {
    const auto& arg = fa.atom.args[p];
    if (!arg.is_var) continue;
    if (fa.is_crv && arg.sym == fa.counted)
      throw ModelError("cannot isolate inside a counting formula");
    auto [with, without] = cur.constraint.split_on_constant(arg.sym, args[p]);
    if (!without.empty()) {
      LiftedFactor rest = cur;
      rest.constraint = without;
      if (lf_canonicalize(rest)) out.push_back(std::move(rest));
    }
    cur.constraint = with;
    if (cur.constraint.empty() && cur.constraint.arity() > 0)
      return out.empty() ? std::vector<LiftedFactor>{f} : out;
  }
  if (lf_canonicalize(cur)) out.push_back(std::move(cur));
  return out;
}

inline void isolate_atom(Pool& pool, const GroundAtom& target) {
  for (int list = 0; list < 2; ++list) {
    auto& vec = list == 0 ? pool.f1 : pool.f2;
    for (size_t fi = 0; fi < vec.size();) {
      bool split = false;
      for (size_t ai = 0; ai < vec[fi].atoms.size(); ++ai) {
        const auto& fa = vec[fi].atoms[ai];
        if (fa.atom.functor != target.functor) continue;
        if (fa.atom.args.size() != target.args.size()) continue;
        if (fa.is_crv) continue;
        ArgRelation rel = arg_relation(vec[fi], static_cast<int>(ai));
        if (!rel.contains(target.args) || rel.size() <= 1) continue;
        auto parts = isolate_in_factor(vec[fi], static_cast<int>(ai), target.args);
        vec.erase(vec.begin() + fi);
        for (auto& part : parts) vec.push_back(std::move(part));
        split = true;
        break;
      }
      if (!split) ++fi;
    }
  }
}

// Pairwise refinement until all same-functor occurrences are identical or
// disjoint on their ground randvars.
inline void shatter_pairwise(Pool& pool, const Deadline& deadline) {
  for (int round = 0; round < 100000; ++round) {
    deadline.check();
    auto groups = build_groups(pool);
    const Group* ga = nullptr;
    const Group* gb = nullptr;
    for (size_t i = 0; i < groups.size() && !ga; ++i)
      for (size_t j = i + 1; j < groups.size(); ++j) {
        if (groups[i].functor != groups[j].functor) continue;
        if (groups[i].crv || groups[j].crv) continue;
        if (groups[i].rel.equals(groups[j].rel)) continue;
        if (!groups[i].rel.overlaps(groups[j].rel)) continue;
        ga = &groups[i];
        gb = &groups[j];
        break;
      }
    if (!ga) return;
    const Group* big = ga->rel.size() >= gb->rel.size() ? ga : gb;
    const Group* small = big == ga ? gb : ga;
    TupleSet keep;
    {
      TupleSet bigset = big->rel.materialize();
      TupleSet smallset = small->rel.materialize();
      std::set_intersection(bigset.begin(), bigset.end(), smallset.begin(),
                            smallset.end(), std::back_inserter(keep));
    }
    // split one factor of the big group on membership in the intersection
    const Occurrence& o = big->occ.front();
    auto& vec = o.ref.first == 0 ? pool.f1 : pool.f2;
    LiftedFactor f = vec[o.ref.second];
    const auto& fa = f.atoms[o.atom];
    TupleSet in_rows, out_rows;
    f.constraint.for_each([&](const Tuple& t) {
      Tuple args;
      for (const auto& arg : fa.atom.args)
        args.push_back(arg.is_var ? t[f.constraint.require_column(arg.sym)]
                                  : arg.sym);
      (std::binary_search(keep.begin(), keep.end(), args) ? in_rows : out_rows)
          .push_back(t);
    });
    std::vector<Logvar> schema = f.constraint.schema();
    vec.erase(vec.begin() + o.ref.second);
    LiftedFactor fin = f, fout = f;
    fin.constraint = Constraint::explicit_set(schema, std::move(in_rows));
    fout.constraint = Constraint::explicit_set(schema, std::move(out_rows));
    if (lf_canonicalize(fin)) vec.push_back(std::move(fin));
    if (lf_canonicalize(fout)) vec.push_back(std::move(fout));
  }
  throw ModelError("shattering did not converge");
}

inline void shatter(Pool& pool, const std::vector<GroundAtom>& targets,
                    const Deadline& deadline) {
  for (const auto& t : targets) isolate_atom(pool, t);
  shatter_pairwise(pool, deadline);
}

// --------------------------------------------------------------------------
// Splitting a group's argument column into singletons (enabler)

inline void split_matching_factors(Pool& pool, Symbol functor, bool crv,
                                   const ArgRelation& rel, size_t pos,
                                   const Deadline& deadline) {
  std::vector<Symbol> consts;
  if (rel.is_product) {
    consts = rel.cols[pos];
  } else {
    for (const auto& row : rel.rows)
      if (std::find(consts.begin(), consts.end(), row[pos]) == consts.end())
        consts.push_back(row[pos]);
  }
  for (int list = 0; list < 2; ++list) {
    auto& vec = list == 0 ? pool.f1 : pool.f2;
    for (size_t fi = 0; fi < vec.size();) {
      deadline.check();
      Symbol var = 0;
      for (size_t ai = 0; ai < vec[fi].atoms.size() && var == 0; ++ai) {
        const auto& fa = vec[fi].atoms[ai];
        if (fa.atom.functor != functor || fa.is_crv != crv) continue;
        if (pos >= fa.atom.args.size()) continue;
        if (!fa.atom.args[pos].is_var) continue;
        if (!arg_relation(vec[fi], static_cast<int>(ai)).equals(rel)) continue;
        var = fa.atom.args[pos].sym;
      }
      if (var == 0) { ++fi; continue; }
      std::vector<LiftedFactor> parts;
      LiftedFactor rest = vec[fi];
      for (size_t c = 0; c + 1 < consts.size(); ++c) {
        auto [in_part, out_part] = rest.constraint.split_on_constant(var, consts[c]);
        LiftedFactor fin = rest;
        fin.constraint = in_part;
        if (lf_canonicalize(fin)) parts.push_back(std::move(fin));
        rest.constraint = out_part;
      }
      if (lf_canonicalize(rest)) parts.push_back(std::move(rest));
      vec.erase(vec.begin() + fi);
      for (auto& part : parts) {
        vec.insert(vec.begin() + fi, std::move(part));
        ++fi;
      }
    }
  }
}

// --------------------------------------------------------------------------
// Elimination planning

struct Plan {
  enum Kind { SumOut, Split } kind = SumOut;
  size_t group = 0;
  uint64_t max_cells = 0;
  int rank = 0;  // 0 plain sum-out, 1 het sum-out, 2 needs converts, 3 split
  std::vector<Symbol> converts;        // logvars to counting-convert (combined naming)
  // split target
  Symbol split_functor = 0;
  bool split_crv = false;
  ArgRelation split_rel;
  size_t split_pos = 0;
};

// Canonical fold order for eliminating V: first the heterogeneous factors in
// which V is a pending convergent collection (these combine with OR-splits on
// V), then — once the collection is complete and V demotes to a regular
// variable — everything else.
struct FoldOrder {
  std::vector<std::pair<int, int>> conv_refs;   // f2, V convergent
  std::vector<std::pair<int, int>> plain_refs;  // the rest (f1 first)
  bool any_f2 = false;
};

inline FoldOrder fold_order(const Group& v) {
  FoldOrder fo;
  std::set<std::pair<int, int>> seen;
  for (const auto& o : v.occ) {
    if (!seen.insert(o.ref).second) continue;
    if (o.ref.first == 1) fo.any_f2 = true;
    if (o.convergent)
      fo.conv_refs.push_back(o.ref);
    else
      fo.plain_refs.push_back(o.ref);
  }
  std::sort(fo.plain_refs.begin(), fo.plain_refs.end());  // f1 before f2
  std::sort(fo.conv_refs.begin(), fo.conv_refs.end());
  return fo;
}

// Demote V's atom in f: its OR-table is complete once all factors carrying V
// are collected.
inline void demote_in(LiftedFactor& f, const Group& v) {
  for (size_t ai = 0; ai < f.atoms.size(); ++ai) {
    if (f.atoms[ai].atom.functor != v.functor || f.atoms[ai].is_crv != v.crv)
      continue;
    if (!arg_relation(f, static_cast<int>(ai)).equals(v.rel)) continue;
    f.convergent.erase(std::remove(f.convergent.begin(), f.convergent.end(),
                                   static_cast<int>(ai)),
                       f.convergent.end());
  }
}

// Simulate eliminating group V; produce either a sum-out plan (with optional
// counting conversions) or a split enabler, or nothing when infeasible.
inline int find_atom_of(const LiftedFactor& f, const Group& v) {
  for (size_t ai = 0; ai < f.atoms.size(); ++ai) {
    if (f.atoms[ai].atom.functor != v.functor) continue;
    if (f.atoms[ai].is_crv != v.crv) continue;
    if (!arg_relation(f, static_cast<int>(ai)).equals(v.rel)) continue;
    return static_cast<int>(ai);
  }
  return -1;
}

// Contribution multiplicity of a heterogeneous factor w.r.t. its convergent
// atom: how many groundings carry each instance of the atom. Combining or
// demoting is sound only at multiplicity one; otherwise the extra column
// must be split first.
inline std::optional<uint64_t> conv_multiplicity(const LiftedFactor& g,
                                                 int vai) {
  std::vector<Symbol> vlv = g.atoms[vai].logvars();
  std::vector<Symbol> extra;
  for (const auto& lv : g.constraint.schema())
    if (std::find(vlv.begin(), vlv.end(), lv.name) == vlv.end())
      extra.push_back(lv.name);
  return g.constraint.conditional_count(extra, vlv);
}

// Build a split plan for the carrier of `lv` inside factor f.
inline std::optional<Plan> split_plan_for(const LiftedFactor& f, Symbol lv,
                                          int avoid_atom, size_t vi,
                                          uint64_t base_cells,
                                          const LiftedOptions& opts) {
  for (size_t ai = 0; ai < f.atoms.size(); ++ai) {
    if (static_cast<int>(ai) == avoid_atom) continue;
    const auto& fa = f.atoms[ai];
    for (size_t p = 0; p < fa.atom.args.size(); ++p) {
      if (!fa.atom.args[p].is_var || fa.atom.args[p].sym != lv) continue;
      if (fa.is_crv && fa.counted == lv) continue;
      ArgRelation crel = arg_relation(f, static_cast<int>(ai));
      uint64_t col_size = 0;
      if (crel.is_product) {
        col_size = crel.cols[p].size();
      } else {
        std::set<Symbol> cs;
        for (const auto& row : crel.rows) cs.insert(row[p]);
        col_size = cs.size();
      }
      if (col_size > opts.split_limit) return std::nullopt;
      Plan plan;
      plan.kind = Plan::Split;
      plan.group = vi;
      plan.split_functor = fa.atom.functor;
      plan.split_crv = fa.is_crv;
      plan.split_rel = crel;
      plan.split_pos = p;
      plan.max_cells = std::max<uint64_t>(base_cells, col_size);
      plan.rank = 3;
      return plan;
    }
  }
  return std::nullopt;
}

inline std::optional<Plan> plan_eliminate(const Pool& pool,
                                          const std::vector<Group>& groups,
                                          size_t vi, const LiftedOptions& opts) {
  const Group& v = groups[vi];
  if (v.multi_in_one_factor) return std::nullopt;
  FoldOrder fo = fold_order(v);
  std::set<std::pair<int, int>> seen;
  for (const auto& o : v.occ) seen.insert(o.ref);

  // Convergent contributions with several groundings per instance must have
  // their extra columns split before the collection can be combined.
  for (auto ref : fo.conv_refs) {
    const LiftedFactor& g = pool.at(ref);
    int vai = find_atom_of(g, v);
    if (vai < 0) return std::nullopt;
    auto mult = conv_multiplicity(g, vai);
    if (mult && *mult == 1) continue;
    std::vector<Symbol> vlv = g.atoms[vai].logvars();
    for (const auto& lv : g.constraint.schema()) {
      if (std::find(vlv.begin(), vlv.end(), lv.name) != vlv.end()) continue;
      if (auto plan = split_plan_for(g, lv.name, vai, vi, 1, opts)) return plan;
    }
    return std::nullopt;
  }

  // Fold the shapes (catching alignment and normalization failures).
  LiftedFactor shape;
  uint64_t max_cells = 0;
  bool first = true;
  try {
    auto add = [&](std::pair<int, int> ref) {
      const LiftedFactor& f = pool.at(ref);
      if (first) {
        shape = f;
        shape.table = PotentialTable::filled(shape.table.card, 0.0);
        first = false;
      } else {
        shape = lf_combine(shape, f, /*shape_only=*/true);
      }
      uint64_t cells = 1;
      for (uint64_t c : shape.table.card) cells = checked_mul(cells, c);
      max_cells = std::max(max_cells, cells);
    };
    for (auto ref : fo.conv_refs) add(ref);
    if (!first) demote_in(shape, v);
    for (auto ref : fo.plain_refs) add(ref);
  } catch (const Error&) {
    return std::nullopt;
  }
  if (max_cells > opts.cell_budget) return std::nullopt;

  // Locate V's atom in the combined shape.
  int target = -1;
  for (size_t ai = 0; ai < shape.atoms.size(); ++ai) {
    if (shape.atoms[ai].atom.functor != v.functor) continue;
    if (shape.atoms[ai].is_crv != v.crv) continue;
    if (!arg_relation(shape, static_cast<int>(ai)).equals(v.rel)) continue;
    target = static_cast<int>(ai);
    break;
  }
  if (target < 0) return std::nullopt;

  std::vector<int> conv_after = shape.convergent;
  conv_after.erase(std::remove(conv_after.begin(), conv_after.end(), target),
                   conv_after.end());

  // Precondition: the summed atom carries every remaining logvar. Offending
  // logvars are either counting-converted (homogeneous, single-atom, local
  // randvars) or force a singleton split.
  std::vector<Symbol> target_lv = shape.atoms[target].logvars();
  Plan plan;
  plan.group = vi;
  std::set<int> converted_atoms;
  for (const auto& lv : shape.constraint.schema()) {
    if (std::find(target_lv.begin(), target_lv.end(), lv.name) !=
        target_lv.end())
      continue;
    // which atoms carry it?
    std::vector<int> carriers;
    for (size_t ai = 0; ai < shape.atoms.size(); ++ai) {
      auto lvs = shape.atoms[ai].logvars();
      if (std::find(lvs.begin(), lvs.end(), lv.name) != lvs.end())
        carriers.push_back(static_cast<int>(ai));
    }
    bool convertible = conv_after.empty() && carriers.size() == 1 &&
                       !shape.atoms[carriers[0]].is_crv &&
                       carriers[0] != target &&
                       !converted_atoms.count(carriers[0]);
    if (convertible) {
      // the carrier's randvars must live entirely inside the fold
      const auto& ca = shape.atoms[carriers[0]];
      ArgRelation crel = arg_relation(shape, carriers[0]);
      for (const auto& g2 : groups) {
        if (g2.functor != ca.atom.functor || g2.crv != ca.is_crv) continue;
        if (!g2.rel.overlaps(crel)) continue;
        for (const auto& o : g2.occ)
          if (!seen.count(o.ref)) convertible = false;
      }
    }
    if (convertible) {
      plan.converts.push_back(lv.name);
      converted_atoms.insert(carriers[0]);
      continue;
    }
    // split enabler: pick the carrier atom's group and the offending column
    if (carriers.empty()) return std::nullopt;
    const auto& ca = shape.atoms[carriers[0]];
    size_t pos = 0;
    bool found_pos = false;
    for (size_t p = 0; p < ca.atom.args.size(); ++p)
      if (ca.atom.args[p].is_var && ca.atom.args[p].sym == lv.name) {
        pos = p;
        found_pos = true;
        break;
      }
    if (!found_pos) return std::nullopt;
    // find that atom's group
    ArgRelation crel = arg_relation(shape, carriers[0]);
    uint64_t col_size = 0;
    if (crel.is_product) {
      col_size = crel.cols[pos].size();
    } else {
      std::set<Symbol> cs;
      for (const auto& row : crel.rows) cs.insert(row[pos]);
      col_size = cs.size();
    }
    if (col_size > opts.split_limit) return std::nullopt;
    for (const auto& g2 : groups) {
      if (g2.functor != ca.atom.functor || g2.crv != ca.is_crv) continue;
      if (!g2.rel.equals(crel)) continue;
      plan.kind = Plan::Split;
      plan.split_functor = g2.functor;
      plan.split_crv = g2.crv;
      plan.split_rel = g2.rel;
      plan.split_pos = pos;
      plan.max_cells = std::max(max_cells, col_size);
      plan.rank = 3;
      return plan;
    }
    return std::nullopt;
  }

  // count-normalization of the final sum-out exponent
  {
    std::vector<Symbol> other_lv;
    for (size_t i = 0; i < shape.atoms.size(); ++i) {
      if (static_cast<int>(i) == target) continue;
      for (Symbol lv : shape.atoms[i].logvars())
        if (std::find(other_lv.begin(), other_lv.end(), lv) == other_lv.end())
          other_lv.push_back(lv);
    }
    std::vector<Symbol> excl, com;
    for (Symbol lv : target_lv) {
      if (shape.constraint.column_of(lv) < 0) continue;
      if (std::find(other_lv.begin(), other_lv.end(), lv) == other_lv.end())
        excl.push_back(lv);
      else
        com.push_back(lv);
    }
    if (!shape.constraint.conditional_count(excl, com)) {
      // not count-normalized: split the first exclusive column to singletons
      if (excl.empty()) return std::nullopt;
      Symbol lv = excl[0];
      size_t pos = 0;
      bool found_pos = false;
      const auto& ta = shape.atoms[target];
      for (size_t p = 0; p < ta.atom.args.size(); ++p)
        if (ta.atom.args[p].is_var && ta.atom.args[p].sym == lv) {
          pos = p;
          found_pos = true;
          break;
        }
      if (!found_pos) return std::nullopt;
      uint64_t col_size = 0;
      if (v.rel.is_product) {
        col_size = v.rel.cols[pos].size();
      } else {
        std::set<Symbol> cs;
        for (const auto& row : v.rel.rows) cs.insert(row[pos]);
        col_size = cs.size();
      }
      if (col_size > opts.split_limit) return std::nullopt;
      plan.kind = Plan::Split;
      plan.split_functor = v.functor;
      plan.split_crv = v.crv;
      plan.split_rel = v.rel;
      plan.split_pos = pos;
      plan.max_cells = std::max(max_cells, col_size);
      plan.rank = 3;
      return plan;
    }
  }

  // cells after conversions
  uint64_t cells = 1;
  LiftedFactor sim = shape;
  for (Symbol lv : plan.converts) {
    // simulate: histogram axis replaces the carrier's axis
    for (size_t ai = 0; ai < sim.atoms.size(); ++ai) {
      auto lvs = sim.atoms[ai].logvars();
      if (std::find(lvs.begin(), lvs.end(), lv) == lvs.end()) continue;
      auto n = sim.constraint.conditional_count({lv}, [&] {
        std::vector<Symbol> rest;
        for (const auto& c : sim.constraint.schema())
          if (c.name != lv) rest.push_back(c.name);
        return rest;
      }());
      if (!n) return std::nullopt;
      uint64_t hist =
          histogram_count(*n, sim.atoms[ai].atom.range.size());
      sim.table.card[ai] = hist;
      std::vector<Symbol> keep;
      for (const auto& c : sim.constraint.schema())
        if (c.name != lv) keep.push_back(c.name);
      sim.constraint = sim.constraint.project(keep);
      break;
    }
  }
  for (uint64_t c : sim.table.card) cells = checked_mul(cells, c);
  max_cells = std::max(max_cells, cells);
  if (max_cells > opts.cell_budget) return std::nullopt;

  plan.kind = Plan::SumOut;
  plan.max_cells = max_cells;
  plan.rank = !plan.converts.empty() ? 2 : (conv_after.empty() ? 0 : 1);
  return plan;
}

}  // namespace sched_detail

// ---------------------------------------------------------------------------
// The lifted query driver

namespace sched_detail {

inline void trace_op(const LiftedOptions& opts, std::string tag,
                     std::string shape) {
  if (opts.trace) opts.trace->push_back({std::move(tag), std::move(shape)});
}

inline std::vector<double> propositionalize_and_solve(
    const Pool& pool, const GroundAtom& query, const LiftedOptions& opts) {
  trace_op(opts, "propositionalize", "");
  GroundVarTable vars;
  std::vector<GroundFactor> f1, f2;
  uint64_t total_cells = 0;
  auto convert = [&](const LiftedFactor& lf, bool is_f2) {
    Parfactor pf;
    pf.kind = is_f2 ? FactorKind::Het : FactorKind::Markov;
    pf.atoms = lf.atoms;
    pf.table = lf.table;
    pf.constraint = lf.constraint;
    pf.convergent = lf.convergent;
    total_cells += checked_mul(lf.constraint.size(), lf.table.cells());
    if (total_cells > opts.cell_budget)
      throw BudgetError(
          "propositionalization would exceed the cell budget; raise "
          "--cell-budget or use a ground engine explicitly");
    auto fs = ground_parfactor(pf, vars);
    for (auto& f : fs) {
      if (!is_f2) f.convergent.clear();
      (is_f2 ? f2 : f1).push_back(std::move(f));
    }
  };
  for (const auto& f : pool.f1) convert(f, false);
  for (const auto& f : pool.f2) convert(f, true);
  std::vector<std::pair<int, int>> pairs;
  for (const auto& dep : pool.deputies) {
    dep.constraint.for_each([&](const Tuple& t) {
      GroundAtom reg{dep.atoms[0].atom.functor,
                     atom_arg_values(dep.atoms[0].atom, dep.constraint, t)};
      GroundAtom prime{dep.atoms[1].atom.functor,
                       atom_arg_values(dep.atoms[1].atom, dep.constraint, t)};
      int r = vars.find(reg);
      int pr = vars.find(prime);
      if (r >= 0 && pr >= 0) pairs.emplace_back(r, pr);
    });
  }
  int qid = vars.find(query);
  if (qid < 0) throw ModelError("query atom not covered by any parfactor");
  return run_ve1(std::move(f1), std::move(f2), qid, {}, pairs, {},
                 opts.deadline);
}

inline void execute_sum_out(Pool& pool, const std::vector<Group>& groups,
                            const Plan& plan, const LiftedOptions& opts) {
  const Group& v = groups[plan.group];
  FoldOrder fo = fold_order(v);
  bool send_to_f2 = fo.any_f2;

  // pull the participating factors out of the pools, preserving fold order
  std::map<std::pair<int, int>, LiftedFactor> pulled;
  {
    std::vector<std::pair<int, int>> all = fo.conv_refs;
    all.insert(all.end(), fo.plain_refs.begin(), fo.plain_refs.end());
    std::sort(all.begin(), all.end(), std::greater<>());
    for (auto ref : all) {
      auto& vec = ref.first == 0 ? pool.f1 : pool.f2;
      pulled.emplace(ref, std::move(vec[ref.second]));
      vec.erase(vec.begin() + ref.second);
    }
  }

  LiftedFactor comb;
  bool first = true;
  auto fold_in = [&](std::pair<int, int> ref) {
    opts.deadline.check();
    LiftedFactor& f = pulled.at(ref);
    if (first) {
      comb = std::move(f);
      first = false;
      return;
    }
    bool het = false;
    std::string shape_in = comb.shape() + "*" + f.shape();
    comb = lf_combine(comb, f, false, &het);
    trace_op(opts, het ? "het-multiply" : "multiply",
             shape_in + "->" + comb.shape());
  };
  for (auto ref : fo.conv_refs) {
    const LiftedFactor& g = pulled.at(ref);
    int vai = find_atom_of(g, v);
    auto mult = conv_multiplicity(g, vai);
    if (!mult || *mult != 1)
      throw ModelError("convergent collection with unsplit multiplicity");
    fold_in(ref);
  }
  // V's OR-collection is complete once its convergent carriers are combined;
  // from here on it behaves as a regular variable.
  if (!first) demote_in(comb, v);
  for (auto ref : fo.plain_refs) fold_in(ref);

  auto find_target = [&](const LiftedFactor& f) {
    for (size_t ai = 0; ai < f.atoms.size(); ++ai) {
      if (f.atoms[ai].atom.functor != v.functor) continue;
      if (f.atoms[ai].is_crv != v.crv) continue;
      if (!arg_relation(f, static_cast<int>(ai)).equals(v.rel)) continue;
      return static_cast<int>(ai);
    }
    return -1;
  };
  int target = find_target(comb);
  if (target < 0) throw ModelError("scheduler lost the elimination target");

  // Counting conversions for logvars the target does not carry (re-derived
  // here; feasibility was established during planning).
  std::vector<Symbol> target_lv = comb.atoms[target].logvars();
  bool converted = true;
  while (converted) {
    converted = false;
    for (const auto& lv : comb.constraint.schema()) {
      if (std::find(target_lv.begin(), target_lv.end(), lv.name) !=
          target_lv.end())
        continue;
      std::string shape_in = comb.shape();
      comb = counting_convert(comb, lv.name);
      trace_op(opts, "counting-convert", shape_in + "->" + comb.shape());
      converted = true;
      break;
    }
  }

  std::string tag = comb.convergent.empty() ? "sum-out" : "het-sum-out";
  std::string shape_in = comb.shape();
  uint64_t r = 1;
  LiftedFactor result = lf_sum_out(comb, target, &r);
  trace_op(opts, tag, shape_in + "->" + result.shape());

  if (send_to_f2)
    pool.f2.push_back(std::move(result));
  else
    pool.f1.push_back(std::move(result));
}

}  // namespace sched_detail

// Build the engine pools, shatter against the query and evidence atoms, and
// condition on the evidence.
inline sched_detail::Pool lifted_prepare(
    const Model& model, const GroundAtom& query,
    const std::vector<std::pair<GroundAtom, uint64_t>>& evidence,
    const LiftedOptions& opts = {}) {
  using namespace sched_detail;
  Pool pool;
  for (const auto& pf : model.f1) {
    LiftedFactor lf{pf.atoms, pf.table, pf.constraint, {}};
    if (pf.kind == FactorKind::Deputy) pool.deputies.push_back(pf);
    if (lf_canonicalize(lf)) pool.f1.push_back(std::move(lf));
  }
  for (const auto& pf : model.f2) {
    LiftedFactor lf{pf.atoms, pf.table, pf.constraint, pf.convergent};
    if (lf_canonicalize(lf)) pool.f2.push_back(std::move(lf));
  }

  std::vector<GroundAtom> targets{query};
  for (const auto& [atom, value] : evidence) targets.push_back(atom);
  shatter(pool, targets, opts.deadline);

  // evidence conditioning at the ground (singleton) level
  for (const auto& [atom, value] : evidence) {
    if (atom == query)
      throw EvidenceError("the query atom may not appear in the evidence");
    bool found = false;
    for (int list = 0; list < 2; ++list) {
      auto& vec = list == 0 ? pool.f1 : pool.f2;
      for (size_t fi = 0; fi < vec.size();) {
        int hit = -1;
        for (size_t ai = 0; ai < vec[fi].atoms.size(); ++ai) {
          const auto& fa = vec[fi].atoms[ai];
          if (fa.is_crv || fa.atom.functor != atom.functor) continue;
          ArgRelation rel = arg_relation(vec[fi], static_cast<int>(ai));
          if (rel.size() == 1 && rel.contains(atom.args)) {
            hit = static_cast<int>(ai);
            break;
          }
        }
        if (hit < 0) { ++fi; continue; }
        found = true;
        LiftedFactor sliced = lf_slice(vec[fi], hit, value);
        vec.erase(vec.begin() + fi);
        // re-scan the sliced factor: the same ground randvar can occur on
        // several axes (diagonal instances of repeated literals)
        vec.insert(vec.begin() + fi, std::move(sliced));
      }
    }
    if (!found)
      throw EvidenceError("evidence atom " + atom.str() +
                          " is not covered by the model");
  }
  return pool;
}

inline std::vector<double> lifted_solve(sched_detail::Pool& pool,
                                        const GroundAtom& query,
                                        const LiftedOptions& opts = {}) {
  using namespace sched_detail;
  // The deputy discipline: the regular copy E may not be eliminated while
  // its prime E' still has pending factors.
  std::map<Symbol, Symbol> prime_of;  // regular functor -> prime functor
  for (const auto& dep : pool.deputies)
    prime_of[dep.atoms[0].atom.functor] = dep.atoms[1].atom.functor;

  for (int round = 0; round < 100000; ++round) {
    opts.deadline.check();
    auto groups = build_groups(pool);
    // locate the query group
    int query_gi = -1;
    for (size_t gi = 0; gi < groups.size(); ++gi) {
      if (groups[gi].functor != query.functor || groups[gi].crv) continue;
      if (groups[gi].rel.size() == 1 && groups[gi].rel.contains(query.args))
        query_gi = static_cast<int>(gi);
    }
    if (query_gi < 0)
      throw ModelError("query atom " + query.str() +
                       " is not covered by any parfactor");

    std::set<Symbol> present;
    for (const auto& g : groups) present.insert(g.functor);
    std::vector<size_t> pending;
    for (size_t gi = 0; gi < groups.size(); ++gi) {
      if (static_cast<int>(gi) == query_gi) continue;
      auto it = prime_of.find(groups[gi].functor);
      if (it != prime_of.end() && present.count(it->second))
        continue;  // rho(E') < rho(E)
      pending.push_back(gi);
    }
    if (pending.empty()) {
      std::vector<size_t> all;
      for (size_t gi = 0; gi < groups.size(); ++gi)
        if (static_cast<int>(gi) != query_gi) all.push_back(gi);
      if (all.empty()) break;
      // only deferred groups remain: fall back rather than violate the order
      return propositionalize_and_solve(pool, query, opts);
    }

    std::optional<Plan> best;
    for (size_t gi : pending) {
      auto plan = plan_eliminate(pool, groups, gi, opts);
      if (!plan) continue;
      // sum-outs strictly before split enablers, then cheapest table first
      if (!best ||
          std::make_tuple(plan->kind, plan->max_cells, plan->rank, gi) <
              std::make_tuple(best->kind, best->max_cells, best->rank,
                              best->group))
        best = plan;
    }
    if (!best) return propositionalize_and_solve(pool, query, opts);
    if (best->kind == Plan::Split) {
      trace_op(opts, "split",
               sym_name(best->split_functor) + "@" +
                   std::to_string(best->split_pos));
      split_matching_factors(pool, best->split_functor, best->split_crv,
                             best->split_rel, best->split_pos, opts.deadline);
      shatter_pairwise(pool, opts.deadline);
      continue;
    }
    execute_sum_out(pool, groups, *best, opts);
  }

  // combine what remains (query-only factors and scalars)
  std::vector<LiftedFactor> rest;
  for (auto& f : pool.f1) rest.push_back(std::move(f));
  for (auto& f : pool.f2) rest.push_back(std::move(f));
  if (rest.empty()) throw ModelError("no factors remain for the query");
  LiftedFactor gamma = std::move(rest[0]);
  for (size_t i = 1; i < rest.size(); ++i) {
    gamma.convergent.clear();
    rest[i].convergent.clear();
    gamma = lf_combine(gamma, rest[i]);
  }
  gamma.convergent.clear();
  int qa = -1;
  for (size_t ai = 0; ai < gamma.atoms.size(); ++ai)
    if (!gamma.atoms[ai].is_crv && gamma.atoms[ai].atom.functor == query.functor)
      qa = static_cast<int>(ai);
  if (qa < 0 || gamma.atoms.size() != 1)
    throw ModelError("elimination finished with unexpected factors");
  double z = 0.0;
  for (double v : gamma.table.vals) z += v;
  if (z <= 0.0) throw EvidenceError("inconsistent evidence: all-zero posterior");
  std::vector<double> probs(gamma.table.vals.size());
  for (size_t i = 0; i < probs.size(); ++i) probs[i] = gamma.table.vals[i] / z;
  return probs;
}

inline std::vector<double> lifted_query(
    const Model& model, const GroundAtom& query,
    const std::vector<std::pair<GroundAtom, uint64_t>>& evidence,
    const LiftedOptions& opts = {}) {
  sched_detail::Pool pool = lifted_prepare(model, query, evidence, opts);
  return lifted_solve(pool, query, opts);
}

}  // namespace lve
