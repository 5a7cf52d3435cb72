#pragma once

#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "lve/engine.hpp"

namespace lvetest {

using namespace lve;

using Rng = std::mt19937_64;

inline int pick(Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}
inline double pick_prob(Rng& rng) {
  return std::uniform_real_distribution<double>(0.1, 0.9)(rng);
}
inline double pick_pot(Rng& rng) {
  return std::uniform_real_distribution<double>(0.05, 2.0)(rng);
}

// ---------------------------------------------------------------------------
// Random stratified (acyclic) logic programs within the enumeration cap.

struct RandomProgram {
  std::string text;
  std::string query;
};

inline RandomProgram random_program(Rng& rng, uint64_t max_facts = 16) {
  for (int attempt = 0; attempt < 200; ++attempt) {
    std::ostringstream out;
    int ndom = pick(rng, 1, 2);
    std::vector<std::vector<std::string>> doms(ndom);
    for (int d = 0; d < ndom; ++d) {
      int sz = pick(rng, 1, 3);
      for (int c = 0; c < sz; ++c)
        doms[d].push_back("d" + std::to_string(d) + "c" + std::to_string(c));
    }
    int nprob = pick(rng, 1, 3);
    int nderived = pick(rng, 1, 4 - (nprob > 2 ? 1 : 0));

    struct Pred {
      std::string name;
      std::vector<int> arg_doms;
      bool probabilistic;
    };
    std::vector<Pred> probs, derived;
    uint64_t fact_count = 0;
    for (int i = 0; i < nprob; ++i) {
      Pred p;
      p.name = "pf" + std::to_string(i);
      p.probabilistic = true;
      int arity = pick(rng, 0, 2);
      uint64_t count = 1;
      for (int a = 0; a < arity; ++a) {
        p.arg_doms.push_back(pick(rng, 0, ndom - 1));
        count *= doms[p.arg_doms.back()].size();
      }
      fact_count += count;
      probs.push_back(p);
    }
    if (fact_count > max_facts) continue;
    for (int i = 0; i < nderived; ++i) {
      Pred p;
      p.name = "q" + std::to_string(i);
      p.probabilistic = false;
      int arity = pick(rng, 0, 1);
      for (int a = 0; a < arity; ++a)
        p.arg_doms.push_back(pick(rng, 0, ndom - 1));
      derived.push_back(p);
    }

    for (int d = 0; d < ndom; ++d)
      for (const auto& c : doms[d])
        out << "dom" << d << "(" << c << ").\n";

    for (const auto& p : probs) {
      out << pick_prob(rng) << "::" << p.name;
      if (!p.arg_doms.empty()) {
        out << "(";
        for (size_t a = 0; a < p.arg_doms.size(); ++a)
          out << (a ? "," : "") << "V" << a;
        out << ") :- ";
        for (size_t a = 0; a < p.arg_doms.size(); ++a)
          out << (a ? ", " : "") << "dom" << p.arg_doms[a] << "(V" << a << ")";
      }
      out << ".\n";
    }

    bool degenerate = false;
    for (int i = 0; i < static_cast<int>(derived.size()); ++i) {
      const Pred& head = derived[i];
      int nrules = pick(rng, 1, 2);
      for (int r = 0; r < nrules; ++r) {
        // variables: head vars first, then possibly fresh body vars
        struct Var {
          std::string name;
          int dom;
        };
        std::vector<Var> vars;
        for (size_t a = 0; a < head.arg_doms.size(); ++a)
          vars.push_back({"V" + std::to_string(a), head.arg_doms[a]});
        std::ostringstream body;
        int nlits = pick(rng, 1, 2);
        std::vector<std::string> lits;
        for (int l = 0; l < nlits; ++l) {
          // body predicates: probabilistic, or strictly lower derived
          const Pred* bp;
          if (i > 0 && pick(rng, 0, 2) == 0)
            bp = &derived[pick(rng, 0, i - 1)];
          else
            bp = &probs[pick(rng, 0, static_cast<int>(probs.size()) - 1)];
          std::string lit = bp->name;
          if (!bp->arg_doms.empty()) {
            lit += "(";
            for (size_t a = 0; a < bp->arg_doms.size(); ++a) {
              if (a) lit += ",";
              std::vector<int> candidates;
              for (size_t vi = 0; vi < vars.size(); ++vi)
                if (vars[vi].dom == bp->arg_doms[a])
                  candidates.push_back(static_cast<int>(vi));
              if (!candidates.empty() && pick(rng, 0, 1) == 0) {
                lit += vars[candidates[pick(
                    rng, 0, static_cast<int>(candidates.size()) - 1)]].name;
              } else {
                std::string fresh = "W" + std::to_string(vars.size());
                vars.push_back({fresh, bp->arg_doms[a]});
                lit += fresh;
              }
            }
            lit += ")";
          }
          if (pick(rng, 0, 3) == 0) lit = "\\+ " + lit;
          lits.push_back(lit);
        }
        // keep per-rule aggregation width small so the full-CPT oracle stays
        // feasible
        uint64_t extra_groundings = 1;
        for (size_t vi = head.arg_doms.size(); vi < vars.size(); ++vi)
          extra_groundings *= doms[vars[vi].dom].size();
        if (extra_groundings > 9) degenerate = true;

        out << head.name;
        if (!head.arg_doms.empty()) {
          out << "(";
          for (size_t a = 0; a < head.arg_doms.size(); ++a)
            out << (a ? "," : "") << "V" << a;
          out << ")";
        }
        out << " :- ";
        std::vector<std::string> goals;
        for (const auto& v : vars)
          goals.push_back("dom" + std::to_string(v.dom) + "(" + v.name + ")");
        for (const auto& l : lits) goals.push_back(l);
        for (size_t g = 0; g < goals.size(); ++g)
          out << (g ? ", " : "") << goals[g];
        out << ".\n";
      }
    }
    if (degenerate) continue;

    // query the deepest derived predicate at random constants
    const Pred& qp = derived.back();
    std::string query = qp.name;
    if (!qp.arg_doms.empty()) {
      query += "(";
      for (size_t a = 0; a < qp.arg_doms.size(); ++a) {
        if (a) query += ",";
        const auto& dom = qp.arg_doms[a];
        query += doms[dom][pick(rng, 0, static_cast<int>(doms[dom].size()) - 1)];
      }
      query += ")";
    }
    return {out.str(), query};
  }
  throw Error("random program generation failed to fit the fact cap");
}

inline GroundAtom parse_atom(const std::string& text) {
  TokenStream ts(tokenize(text));
  PTerm t = detail::parse_term(ts);
  GroundAtom a{t.functor, {}};
  for (const auto& arg : t.args) a.args.push_back(arg.sym);
  return a;
}

// All four engines on a program; returns P(query = t) per engine in the
// order enum, ve, ve1, lifted.
inline std::vector<double> all_engines(const ProbLogProgram& p,
                                       const GroundAtom& query) {
  std::vector<double> out;
  InferOptions opts;
  for (EngineKind e : {EngineKind::Enum, EngineKind::VE, EngineKind::VE1,
                       EngineKind::Lifted}) {
    opts.engine = e;
    out.push_back(infer_problog(p, query, {}, opts).probs[1]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Random constraints (explicit tuple sets) for property tests.

inline Constraint random_constraint(Rng& rng, int arity, int max_tuples) {
  std::vector<Logvar> schema;
  for (int i = 0; i < arity; ++i)
    schema.push_back({intern("X" + std::to_string(i)),
                      intern("rd" + std::to_string(i))});
  int nconst = pick(rng, 1, 4);
  TupleSet ts;
  int n = pick(rng, 1, max_tuples);
  for (int t = 0; t < n; ++t) {
    Tuple row;
    for (int i = 0; i < arity; ++i)
      row.push_back(intern("rc" + std::to_string(pick(rng, 0, nconst - 1))));
    ts.push_back(row);
  }
  return Constraint::explicit_set(schema, ts);
}

}  // namespace lvetest

namespace lvetest {

// ---------------------------------------------------------------------------
// Structural isomorphism between models, up to a consistent renaming of
// auxiliary functors. Functors in `fixed` must map to themselves.

namespace iso_detail {

struct VarMap {
  std::map<Symbol, Symbol> fwd, rev;
  bool add(Symbol a, Symbol b) {
    auto f = fwd.find(a);
    if (f != fwd.end()) return f->second == b;
    auto r = rev.find(b);
    if (r != rev.end()) return r->second == a;
    fwd[a] = b;
    rev[b] = a;
    return true;
  }
};

// Match one parfactor pair under the evolving functor map; on success the
// extended map is written back.
inline bool parfactors_match(const Parfactor& a, const Parfactor& b,
                             const std::set<Symbol>& fixed, VarMap& functors) {
  if (a.kind != b.kind) return false;
  if (a.atoms.size() != b.atoms.size()) return false;
  if (a.convergent != b.convergent) return false;
  if (a.table.vals.size() != b.table.vals.size()) return false;
  for (size_t i = 0; i < a.table.vals.size(); ++i)
    if (std::abs(a.table.vals[i] - b.table.vals[i]) > 1e-12) return false;
  VarMap trial = functors;
  VarMap vars;
  for (size_t i = 0; i < a.atoms.size(); ++i) {
    const Atom& aa = a.atoms[i].atom;
    const Atom& ba = b.atoms[i].atom;
    if (a.atoms[i].is_crv != b.atoms[i].is_crv) return false;
    if (aa.args.size() != ba.args.size()) return false;
    if (aa.range != ba.range) return false;
    bool a_fixed = fixed.count(aa.functor), b_fixed = fixed.count(ba.functor);
    if (a_fixed || b_fixed) {
      if (aa.functor != ba.functor) return false;
    }
    if (!trial.add(aa.functor, ba.functor)) return false;
    for (size_t p = 0; p < aa.args.size(); ++p) {
      if (aa.args[p].is_var != ba.args[p].is_var) return false;
      if (!aa.args[p].is_var) {
        if (aa.args[p].sym != ba.args[p].sym) return false;
      } else if (!vars.add(aa.args[p].sym, ba.args[p].sym)) {
        return false;
      }
    }
  }
  // constraints: compare tuple sets with b's columns reordered to match a's
  if (a.constraint.arity() != b.constraint.arity()) return false;
  std::vector<Symbol> order;
  for (const auto& lvar : a.constraint.schema()) {
    auto it = vars.fwd.find(lvar.name);
    if (it == vars.fwd.end()) return false;  // dangling column
    order.push_back(it->second);
  }
  for (Symbol o : order)
    if (b.constraint.column_of(o) < 0) return false;
  if (!a.constraint.same_tuples(b.constraint.reordered(order))) return false;
  functors = trial;
  return true;
}

inline bool match_lists(const std::vector<Parfactor>& as,
                        const std::vector<Parfactor>& bs,
                        const std::set<Symbol>& fixed, VarMap& functors,
                        std::vector<bool>& used, size_t i) {
  if (i == as.size()) return true;
  for (size_t j = 0; j < bs.size(); ++j) {
    if (used[j]) continue;
    VarMap saved = functors;
    if (parfactors_match(as[i], bs[j], fixed, functors)) {
      used[j] = true;
      if (match_lists(as, bs, fixed, functors, used, i + 1)) return true;
      used[j] = false;
    }
    functors = saved;
  }
  return false;
}

}  // namespace iso_detail

inline bool model_isomorphic(const Model& a, const Model& b,
                             const std::set<Symbol>& fixed) {
  if (a.f1.size() != b.f1.size() || a.f2.size() != b.f2.size()) return false;
  iso_detail::VarMap functors;
  std::vector<bool> used1(b.f1.size(), false);
  if (!iso_detail::match_lists(a.f1, b.f1, fixed, functors, used1, 0))
    return false;
  std::vector<bool> used2(b.f2.size(), false);
  return iso_detail::match_lists(a.f2, b.f2, fixed, functors, used2, 0);
}

}  // namespace lvetest
