#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "lve/common.hpp"
#include "lve/factor.hpp"
#include "lve/ground.hpp"
#include "lve/parse_util.hpp"

namespace lve {

// ---------------------------------------------------------------------------
// AST

struct PTerm {
  Symbol functor = 0;
  std::vector<AtomArg> args;
  int line = 0;

  bool ground() const {
    for (const auto& a : args)
      if (a.is_var) return false;
    return true;
  }
  std::vector<Symbol> vars() const {
    std::vector<Symbol> out;
    for (const auto& a : args)
      if (a.is_var && std::find(out.begin(), out.end(), a.sym) == out.end())
        out.push_back(a.sym);
    return out;
  }
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

struct PLiteral {
  PTerm term;
  bool positive = true;
};

struct PRule {
  PTerm head;
  std::vector<PLiteral> body;
};

struct PFactDecl {
  double p = 0.0;
  PTerm head;
  std::vector<PTerm> domain_goals;  // empty for ground facts
};

struct ProbLogProgram {
  std::vector<PFactDecl> prob_facts;
  std::vector<PRule> rules;
  std::vector<Symbol> domain_pred_order;
  std::map<Symbol, TupleSet> domain_facts;  // pred -> ground tuples

  // filled by validation
  std::set<Symbol> domain_preds, prob_preds, derived_preds;
  std::map<Symbol, size_t> arities;
  std::map<Symbol, std::vector<Symbol>> arg_domains;  // pred -> per-arg domain tag
  std::map<Symbol, int> stratum;                      // derived pred -> stratum
  bool acyclic = false;  // positive/negative predicate graph is a DAG
};

// ---------------------------------------------------------------------------
// Parsing

namespace detail {

inline PTerm parse_term(TokenStream& ts) {
  Token t = ts.next();
  if (t.kind != Token::Ident)
    throw ParseError("line " + std::to_string(t.line) + ": expected atom, got '" +
                     t.text + "'");
  PTerm term;
  term.functor = intern(t.text);
  term.line = t.line;
  if (ts.accept("(")) {
    while (true) {
      Token a = ts.next();
      if (a.kind == Token::Ident)
        term.args.push_back(const_arg(intern(a.text)));
      else if (a.kind == Token::Var)
        term.args.push_back(var_arg(intern(a.text)));
      else if (a.kind == Token::Number)
        term.args.push_back(const_arg(intern(a.text)));
      else
        throw ParseError("line " + std::to_string(a.line) +
                         ": expected argument, got '" + a.text + "'");
      if (ts.accept(")")) break;
      ts.expect(",", "between arguments");
    }
  }
  return term;
}

}  // namespace detail

inline void validate_problog(ProbLogProgram& p);

inline ProbLogProgram parse_problog(std::string_view text) {
  TokenStream ts(tokenize(text));
  ProbLogProgram p;
  while (!ts.at_end()) {
    if (ts.peek().kind == Token::Number) {
      Token prob = ts.next();
      ts.expect("::", "after probability");
      PFactDecl fact;
      fact.p = prob.number;
      if (fact.p < 0.0 || fact.p > 1.0)
        throw ParseError("line " + std::to_string(prob.line) +
                         ": probability out of [0,1]");
      fact.head = detail::parse_term(ts);
      if (ts.accept(":-")) {
        while (true) {
          fact.domain_goals.push_back(detail::parse_term(ts));
          if (!ts.accept(",")) break;
        }
      }
      ts.expect(".", "at end of clause");
      p.prob_facts.push_back(std::move(fact));
      continue;
    }
    PTerm head = detail::parse_term(ts);
    if (ts.accept(":-")) {
      PRule rule;
      rule.head = std::move(head);
      while (true) {
        PLiteral lit;
        lit.positive = !ts.accept("\\+");
        lit.term = detail::parse_term(ts);
        rule.body.push_back(std::move(lit));
        if (!ts.accept(",")) break;
      }
      ts.expect(".", "at end of clause");
      p.rules.push_back(std::move(rule));
      continue;
    }
    ts.expect(".", "at end of clause");
    if (!head.ground())
      throw ParseError("line " + std::to_string(head.line) +
                       ": non-ground fact without probability");
    Tuple t;
    for (const auto& a : head.args) t.push_back(a.sym);
    if (!p.domain_facts.count(head.functor))
      p.domain_pred_order.push_back(head.functor);
    p.domain_facts[head.functor].push_back(std::move(t));
  }
  for (auto& [pred, ts_] : p.domain_facts) detail::sort_unique(ts_);
  validate_problog(p);
  return p;
}

// ---------------------------------------------------------------------------
// Validation: classification, range restriction, stratification, domains

namespace detail {

inline std::string pred_str(Symbol f) { return sym_name(f); }

inline Symbol domain_tag(Symbol pred, size_t pos, size_t arity) {
  if (arity == 1) return pred;
  return intern(sym_name(pred) + "#" + std::to_string(pos));
}

}  // namespace detail

inline void validate_problog(ProbLogProgram& p) {
  auto note_arity = [&](Symbol f, size_t n, int line) {
    auto it = p.arities.find(f);
    if (it == p.arities.end())
      p.arities[f] = n;
    else if (it->second != n)
      throw ParseError("line " + std::to_string(line) + ": predicate " +
                       sym_name(f) + " used with conflicting arities");
  };

  for (Symbol d : p.domain_pred_order) {
    p.domain_preds.insert(d);
    note_arity(d, p.domain_facts[d].empty() ? 0 : p.domain_facts[d][0].size(), 0);
    for (const auto& t : p.domain_facts[d])
      if (t.size() != p.arities[d])
        throw ParseError("domain predicate " + sym_name(d) +
                         " has facts of conflicting arities");
  }
  for (const auto& f : p.prob_facts) {
    p.prob_preds.insert(f.head.functor);
    note_arity(f.head.functor, f.head.args.size(), f.head.line);
  }
  for (const auto& r : p.rules) {
    p.derived_preds.insert(r.head.functor);
    note_arity(r.head.functor, r.head.args.size(), r.head.line);
  }

  for (Symbol f : p.prob_preds) {
    if (p.derived_preds.count(f))
      throw ParseError("atom " + sym_name(f) +
                       " is both probabilistic and derived");
    if (p.domain_preds.count(f))
      throw ParseError("atom " + sym_name(f) +
                       " is both probabilistic and a domain fact");
  }
  for (Symbol f : p.derived_preds)
    if (p.domain_preds.count(f))
      throw ParseError("atom " + sym_name(f) +
                       " is both derived and a domain fact");

  // Probabilistic fact declarations: bodies are domain goals only; every
  // head variable must be bound by one.
  for (const auto& f : p.prob_facts) {
    std::set<Symbol> bound;
    for (const auto& g : f.domain_goals) {
      if (!p.domain_preds.count(g.functor))
        throw ParseError("line " + std::to_string(g.line) +
                         ": probabilistic fact body must contain only domain "
                         "goals, found " +
                         sym_name(g.functor));
      note_arity(g.functor, g.args.size(), g.line);
      for (const auto& a : g.args)
        if (a.is_var) bound.insert(a.sym);
    }
    for (Symbol v : f.head.vars())
      if (!bound.count(v))
        throw ParseError("line " + std::to_string(f.head.line) +
                         ": variable in probabilistic fact not bound by a "
                         "domain goal");
    auto hv = f.head.vars();
    for (Symbol v : bound)
      if (std::find(hv.begin(), hv.end(), v) == hv.end())
        throw ParseError("line " + std::to_string(f.head.line) +
                         ": domain goal variable not used in the "
                         "probabilistic fact head");
  }

  // Rules: range restriction (head vars in a positive body literal); no
  // negated domain goals.
  for (const auto& r : p.rules) {
    std::set<Symbol> positive_vars;
    for (const auto& lit : r.body) {
      note_arity(lit.term.functor, lit.term.args.size(), lit.term.line);
      bool is_domain = p.domain_preds.count(lit.term.functor) > 0;
      if (is_domain && !lit.positive)
        throw ParseError("line " + std::to_string(lit.term.line) +
                         ": negated domain goals are not supported");
      if (lit.positive)
        for (Symbol v : lit.term.vars()) positive_vars.insert(v);
      if (!is_domain && !p.prob_preds.count(lit.term.functor) &&
          !p.derived_preds.count(lit.term.functor))
        throw ParseError("line " + std::to_string(lit.term.line) +
                         ": undefined predicate " + sym_name(lit.term.functor));
    }
    for (Symbol v : r.head.vars())
      if (!positive_vars.count(v))
        throw ParseError("line " + std::to_string(r.head.line) +
                         ": rule is not range-restricted (head variable not in "
                         "a positive body literal)");
  }

  // Stratification over the predicate dependency graph (random literals only).
  std::map<Symbol, std::vector<std::pair<Symbol, bool>>> deps;
  for (const auto& r : p.rules)
    for (const auto& lit : r.body)
      if (!p.domain_preds.count(lit.term.functor))
        deps[r.head.functor].push_back({lit.term.functor, lit.positive});
  // iterative stratum assignment; negative edges force a strict increase
  for (Symbol f : p.derived_preds) p.stratum[f] = 0;
  bool changed = true;
  size_t iters = 0;
  size_t limit = p.derived_preds.size() * p.derived_preds.size() + 8;
  while (changed) {
    changed = false;
    if (++iters > limit)
      throw ParseError("program is not stratified w.r.t. negation");
    for (const auto& r : p.rules) {
      int& hs = p.stratum[r.head.functor];
      for (const auto& lit : r.body) {
        if (p.domain_preds.count(lit.term.functor)) continue;
        int bs = p.derived_preds.count(lit.term.functor)
                     ? p.stratum[lit.term.functor]
                     : 0;
        int need = lit.positive ? bs : bs + 1;
        if (hs < need) {
          hs = need;
          changed = true;
        }
      }
    }
  }

  // Acyclicity of the positive+negative predicate graph (needed by the
  // network translation; enumeration only needs stratification).
  {
    std::map<Symbol, int> color;
    std::function<bool(Symbol)> dfs = [&](Symbol f) -> bool {
      color[f] = 1;
      for (const auto& [g, pos] : deps[f]) {
        if (!p.derived_preds.count(g)) continue;
        if (color[g] == 1) return false;
        if (color[g] == 0 && !dfs(g)) return false;
      }
      color[f] = 2;
      return true;
    };
    p.acyclic = true;
    for (Symbol f : p.derived_preds)
      if (color[f] == 0 && !dfs(f)) {
        p.acyclic = false;
        break;
      }
  }

  // Per-position domain tags for domain predicates.
  std::map<Symbol, std::vector<Symbol>> domain_goal_tags;
  for (Symbol d : p.domain_pred_order) {
    std::vector<Symbol> tags;
    for (size_t i = 0; i < p.arities[d]; ++i)
      tags.push_back(detail::domain_tag(d, i, p.arities[d]));
    domain_goal_tags[d] = tags;
  }

  // Infer per-argument domains for probabilistic predicates from their
  // declarations, then for derived predicates by fixpoint over the rules.
  for (const auto& f : p.prob_facts) {
    std::map<Symbol, Symbol> var_dom;
    for (const auto& g : f.domain_goals)
      for (size_t i = 0; i < g.args.size(); ++i)
        if (g.args[i].is_var)
          var_dom[g.args[i].sym] = domain_goal_tags[g.functor][i];
    auto& slots = p.arg_domains[f.head.functor];
    slots.resize(f.head.args.size(), 0);
    for (size_t i = 0; i < f.head.args.size(); ++i)
      if (f.head.args[i].is_var && slots[i] == 0)
        slots[i] = var_dom[f.head.args[i].sym];
  }
  changed = true;
  while (changed) {
    changed = false;
    for (const auto& r : p.rules) {
      std::map<Symbol, Symbol> var_dom;
      for (const auto& lit : r.body) {
        const auto& t = lit.term;
        if (p.domain_preds.count(t.functor)) {
          for (size_t i = 0; i < t.args.size(); ++i)
            if (t.args[i].is_var && !var_dom.count(t.args[i].sym))
              var_dom[t.args[i].sym] = domain_goal_tags[t.functor][i];
        } else {
          auto it = p.arg_domains.find(t.functor);
          if (it == p.arg_domains.end()) continue;
          for (size_t i = 0; i < t.args.size(); ++i)
            if (t.args[i].is_var && i < it->second.size() &&
                it->second[i] != 0 && !var_dom.count(t.args[i].sym))
              var_dom[t.args[i].sym] = it->second[i];
        }
      }
      auto& slots = p.arg_domains[r.head.functor];
      slots.resize(r.head.args.size(), 0);
      for (size_t i = 0; i < r.head.args.size(); ++i) {
        if (!r.head.args[i].is_var) continue;
        Symbol d = var_dom.count(r.head.args[i].sym)
                       ? var_dom[r.head.args[i].sym]
                       : 0;
        if (d != 0 && slots[i] == 0) {
          slots[i] = d;
          changed = true;
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Rule constraints and grounding

namespace detail {

// A set of ground relations usable as constraint goals.
struct RelationDB {
  const std::map<Symbol, TupleSet>* facts;

  const TupleSet& rows(Symbol pred) const {
    auto it = facts->find(pred);
    if (it == facts->end())
      throw ModelError("unknown domain predicate " + sym_name(pred));
    return it->second;
  }
  size_t arity(Symbol pred) const {
    const auto& r = rows(pred);
    return r.empty() ? 0 : r[0].size();
  }
};

// Constants belonging to a domain tag ("person", or "friend#0" projections).
inline std::vector<Symbol> domain_constants(const RelationDB& db, Symbol tag) {
  std::string name = sym_name(tag);
  auto hash = name.find('#');
  Symbol pred = tag;
  size_t pos = 0;
  if (hash != std::string::npos) {
    pred = intern(name.substr(0, hash));
    pos = std::stoul(name.substr(hash + 1));
  }
  std::vector<Symbol> out;
  for (const auto& t : db.rows(pred))
    if (std::find(out.begin(), out.end(), t[pos]) == out.end())
      out.push_back(t[pos]);
  return out;
}

// Constraint from a single domain goal over the goal's distinct variables.
inline Constraint goal_constraint(const RelationDB& db, const PTerm& goal) {
  const TupleSet& rows = db.rows(goal.functor);
  std::vector<Symbol> distinct = goal.vars();
  std::vector<Logvar> schema;
  for (Symbol v : distinct) {
    size_t pos = 0;
    for (size_t i = 0; i < goal.args.size(); ++i)
      if (goal.args[i].is_var && goal.args[i].sym == v) { pos = i; break; }
    schema.push_back({v, domain_tag(goal.functor, pos, goal.args.size())});
  }
  // Unary goal with a single variable: product column fast path.
  if (goal.args.size() == 1 && goal.args[0].is_var) {
    std::vector<Symbol> col;
    for (const auto& t : rows) col.push_back(t[0]);
    return Constraint::product(schema, {col});
  }
  TupleSet out;
  for (const auto& t : rows) {
    if (t.size() != goal.args.size())
      throw ModelError("domain goal arity mismatch for " +
                       sym_name(goal.functor));
    bool ok = true;
    std::map<Symbol, Symbol> env;
    for (size_t i = 0; i < goal.args.size(); ++i) {
      if (!goal.args[i].is_var) {
        if (t[i] != goal.args[i].sym) { ok = false; break; }
      } else {
        auto e = env.find(goal.args[i].sym);
        if (e == env.end())
          env[goal.args[i].sym] = t[i];
        else if (e->second != t[i]) { ok = false; break; }
      }
    }
    if (!ok) continue;
    Tuple row;
    for (Symbol v : distinct) row.push_back(env[v]);
    out.push_back(std::move(row));
  }
  return Constraint::explicit_set(schema, std::move(out));
}

inline RelationDB relations(const ProbLogProgram& p) {
  return RelationDB{&p.domain_facts};
}

struct RuleView {
  std::vector<PTerm> goals;         // domain goals
  std::vector<PLiteral> randoms;    // random literals in body order
  std::vector<Symbol> logvars;      // first occurrence: head, then body
  Constraint constraint;            // over logvars
  std::vector<Symbol> extra_vars;   // logvars not in the head
};

inline RuleView analyze_rule(const ProbLogProgram& p, const PRule& r) {
  RuleView v;
  auto add_var = [&](Symbol s) {
    if (std::find(v.logvars.begin(), v.logvars.end(), s) == v.logvars.end())
      v.logvars.push_back(s);
  };
  for (Symbol s : r.head.vars()) add_var(s);
  for (const auto& lit : r.body) {
    if (p.domain_preds.count(lit.term.functor)) {
      v.goals.push_back(lit.term);
    } else {
      v.randoms.push_back(lit);
    }
    for (Symbol s : lit.term.vars()) add_var(s);
  }
  Constraint c = Constraint::unit();
  for (const auto& g : v.goals) c = Constraint::join(c, goal_constraint(relations(p), g));
  // Columns for variables not bound by any goal come from inferred domains.
  for (Symbol lv : v.logvars) {
    if (c.column_of(lv) >= 0) continue;
    Symbol dom = 0;
    for (const auto& lit : r.body) {
      const auto& t = lit.term;
      if (p.domain_preds.count(t.functor)) continue;
      auto it = p.arg_domains.find(t.functor);
      if (it == p.arg_domains.end()) continue;
      for (size_t i = 0; i < t.args.size(); ++i)
        if (t.args[i].is_var && t.args[i].sym == lv && i < it->second.size() &&
            it->second[i] != 0)
          dom = it->second[i];
    }
    // head vars may also get a domain from the head predicate's other rules
    if (dom == 0) {
      auto it = p.arg_domains.find(r.head.functor);
      if (it != p.arg_domains.end())
        for (size_t i = 0; i < r.head.args.size(); ++i)
          if (r.head.args[i].is_var && r.head.args[i].sym == lv &&
              it->second[i] != 0)
            dom = it->second[i];
    }
    if (dom == 0)
      throw ModelError("cannot infer a domain for variable " + sym_name(lv) +
                       " in a rule for " + sym_name(r.head.functor));
    c = Constraint::join(
        c, Constraint::product({{lv, dom}}, {domain_constants(relations(p), dom)}));
  }
  v.constraint = c.reordered([&] {
    std::vector<Symbol> order = v.logvars;
    return order;
  }());
  for (Symbol lv : v.logvars) {
    auto hv = r.head.vars();
    if (std::find(hv.begin(), hv.end(), lv) == hv.end())
      v.extra_vars.push_back(lv);
  }
  return v;
}

inline Constraint fact_constraint(const ProbLogProgram& p, const PFactDecl& f) {
  Constraint c = Constraint::unit();
  for (const auto& g : f.domain_goals)
    c = Constraint::join(c, goal_constraint(relations(p), g));
  auto hv = f.head.vars();
  if (!hv.empty()) c = c.reordered(hv);
  return c;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Exact enumeration of the distribution semantics

struct GroundRule {
  int head = -1;                     // derived atom id
  std::vector<int> pos_facts, neg_facts;     // probabilistic fact ids
  std::vector<int> pos_derived, neg_derived; // derived atom ids
  int head_stratum = 0;
};

struct GroundProgram {
  std::vector<GroundAtom> fact_atoms;
  std::vector<double> fact_probs;
  std::map<GroundAtom, int> fact_ids;
  std::vector<GroundAtom> derived_atoms;
  std::map<GroundAtom, int> derived_ids;
  std::vector<GroundRule> rules;  // sorted by head stratum
};

inline GroundProgram ground_program(const ProbLogProgram& p) {
  GroundProgram g;
  for (const auto& f : p.prob_facts) {
    Constraint c = detail::fact_constraint(p, f);
    c.for_each([&](const Tuple& t) {
      std::map<Symbol, Symbol> env;
      for (size_t i = 0; i < c.schema().size(); ++i)
        env[c.schema()[i].name] = t[i];
      GroundAtom ga{f.head.functor, {}};
      for (const auto& a : f.head.args)
        ga.args.push_back(a.is_var ? env.at(a.sym) : a.sym);
      if (g.fact_ids.count(ga))
        throw ModelError("duplicate probabilistic fact " + ga.str());
      g.fact_ids[ga] = static_cast<int>(g.fact_atoms.size());
      g.fact_atoms.push_back(ga);
      g.fact_probs.push_back(f.p);
    });
  }
  auto derived_id = [&](const GroundAtom& a) {
    auto it = g.derived_ids.find(a);
    if (it != g.derived_ids.end()) return it->second;
    int id = static_cast<int>(g.derived_atoms.size());
    g.derived_ids[a] = id;
    g.derived_atoms.push_back(a);
    return id;
  };
  for (const auto& r : p.rules) {
    auto view = detail::analyze_rule(p, r);
    view.constraint.for_each([&](const Tuple& t) {
      std::map<Symbol, Symbol> env;
      for (size_t i = 0; i < view.constraint.schema().size(); ++i)
        env[view.constraint.schema()[i].name] = t[i];
      auto instantiate = [&](const PTerm& term) {
        GroundAtom ga{term.functor, {}};
        for (const auto& a : term.args)
          ga.args.push_back(a.is_var ? env.at(a.sym) : a.sym);
        return ga;
      };
      GroundRule gr;
      gr.head = derived_id(instantiate(r.head));
      gr.head_stratum = p.stratum.count(r.head.functor)
                            ? p.stratum.at(r.head.functor)
                            : 0;
      bool trivially_false = false;
      for (const auto& lit : view.randoms) {
        GroundAtom ga = instantiate(lit.term);
        if (p.prob_preds.count(lit.term.functor)) {
          auto it = g.fact_ids.find(ga);
          if (it == g.fact_ids.end()) {
            // a probabilistic atom outside the declared fact set is false
            if (lit.positive) trivially_false = true;
            continue;
          }
          (lit.positive ? gr.pos_facts : gr.neg_facts).push_back(it->second);
        } else {
          (lit.positive ? gr.pos_derived : gr.neg_derived)
              .push_back(derived_id(ga));
        }
      }
      if (!trivially_false) g.rules.push_back(std::move(gr));
    });
  }
  std::stable_sort(g.rules.begin(), g.rules.end(),
                   [](const GroundRule& a, const GroundRule& b) {
                     return a.head_stratum < b.head_stratum;
                   });
  return g;
}

// Truth of all derived atoms in the world given by fact bits (stratified
// bottom-up fixpoint).
inline void evaluate_world(const GroundProgram& g, uint64_t fact_bits,
                           std::vector<char>& truth) {
  truth.assign(g.derived_atoms.size(), 0);
  size_t i = 0;
  while (i < g.rules.size()) {
    size_t j = i;
    int s = g.rules[i].head_stratum;
    while (j < g.rules.size() && g.rules[j].head_stratum == s) ++j;
    bool changed = true;
    while (changed) {
      changed = false;
      for (size_t k = i; k < j; ++k) {
        const auto& r = g.rules[k];
        if (truth[r.head]) continue;
        bool fire = true;
        for (int f : r.pos_facts)
          if (!((fact_bits >> f) & 1)) { fire = false; break; }
        if (fire)
          for (int f : r.neg_facts)
            if ((fact_bits >> f) & 1) { fire = false; break; }
        if (fire)
          for (int d : r.pos_derived)
            if (!truth[d]) { fire = false; break; }
        if (fire)
          for (int d : r.neg_derived)
            if (truth[d]) { fire = false; break; }
        if (fire) {
          truth[r.head] = 1;
          changed = true;
        }
      }
    }
    i = j;
  }
}

// P(query [| evidence]) by exact world enumeration.
inline double enumerate_query(const ProbLogProgram& p, const GroundAtom& query,
                              const std::vector<std::pair<GroundAtom, bool>>& evidence = {},
                              uint64_t cap = 24, const Deadline& deadline = {}) {
  GroundProgram g = ground_program(p);
  size_t n = g.fact_atoms.size();
  if (n > cap)
    throw RefusedError("enumeration refused: " + std::to_string(n) +
                       " ground probabilistic facts exceed the cap of " +
                       std::to_string(cap));
  auto locate = [&](const GroundAtom& a) -> std::pair<bool, int> {
    auto itf = g.fact_ids.find(a);
    if (itf != g.fact_ids.end()) return {true, itf->second};
    auto itd = g.derived_ids.find(a);
    if (itd != g.derived_ids.end()) return {false, itd->second};
    if (p.derived_preds.count(a.functor) || p.prob_preds.count(a.functor))
      return {false, -1};  // valid predicate, underivable atom: always false
    throw ModelError("unknown query atom " + a.str());
  };
  auto [q_is_fact, q_id] = locate(query);
  std::vector<std::tuple<bool, int, bool>> ev;  // (is_fact, id, value)
  for (const auto& [atom, val] : evidence) {
    auto [isf, id] = locate(atom);
    ev.emplace_back(isf, id, val);
  }
  double pq = 0.0, pe = 0.0;
  std::vector<char> truth;
  for (uint64_t mask = 0; mask < (uint64_t(1) << n); ++mask) {
    if ((mask & 0xfff) == 0) deadline.check();
    double w = 1.0;
    for (size_t i = 0; i < n; ++i)
      w *= ((mask >> i) & 1) ? g.fact_probs[i] : 1.0 - g.fact_probs[i];
    if (w == 0.0) continue;
    evaluate_world(g, mask, truth);
    auto atom_true = [&](bool isf, int id) {
      if (id < 0) return false;
      return isf ? ((mask >> id) & 1) != 0 : truth[id] != 0;
    };
    bool e_ok = true;
    for (const auto& [isf, id, val] : ev)
      if (atom_true(isf, id) != val) { e_ok = false; break; }
    if (!e_ok) continue;
    pe += w;
    if (atom_true(q_is_fact, q_id)) pq += w;
  }
  if (!evidence.empty()) {
    if (pe <= 0.0) throw EvidenceError("evidence has probability zero");
    return pq / pe;
  }
  return pq;
}

// ---------------------------------------------------------------------------
// Translation to the extended factor model

enum class TranslateStyle {
  Compact,  // single-rule heads pair the head itself with its aggregator
  Uniform   // every rule gets its own deputised node, heads combine explicitly
};

namespace detail {

struct NameGen {
  std::set<Symbol> used;
  explicit NameGen(const ProbLogProgram& p) {
    for (const auto& [f, n] : p.arities) used.insert(f);
  }
  Symbol fresh(const std::string& base) {
    std::string name = base;
    while (used.count(intern(name))) name += "_";
    Symbol s = intern(name);
    used.insert(s);
    return s;
  }
};

inline PotentialTable conjunction_table(const std::vector<bool>& polarity) {
  size_t k = polarity.size();
  std::vector<uint64_t> card(k + 1, 2);
  std::vector<double> vals;
  vals.resize(uint64_t(1) << (k + 1));
  uint64_t pos = 0;
  for_each_assignment(card, [&](const std::vector<uint64_t>& a) {
    bool conj = true;
    for (size_t i = 0; i < k; ++i) {
      bool lit = a[i + 1] == 1;
      if (lit != polarity[i]) { conj = false; break; }
    }
    bool child_true = a[0] == 1;
    vals[pos++] = (child_true == conj) ? 1.0 : 0.0;
  });
  return PotentialTable(std::move(card), std::move(vals));
}

inline PotentialTable disjunction_table(size_t k) {
  std::vector<uint64_t> card(k + 1, 2);
  std::vector<double> vals;
  vals.resize(uint64_t(1) << (k + 1));
  uint64_t pos = 0;
  for_each_assignment(card, [&](const std::vector<uint64_t>& a) {
    bool any = false;
    for (size_t i = 0; i < k; ++i)
      if (a[i + 1] == 1) any = true;
    bool child_true = a[0] == 1;
    vals[pos++] = (child_true == any) ? 1.0 : 0.0;
  });
  return PotentialTable(std::move(card), std::move(vals));
}

inline Atom head_atom(const PRule& r) {
  Atom a;
  a.functor = r.head.functor;
  for (const auto& arg : r.head.args) {
    if (!arg.is_var)
      throw ModelError("rule heads with constant arguments are not supported");
    a.args.push_back(arg);
  }
  a.range = bool_range();
  std::set<Symbol> distinct;
  for (const auto& arg : a.args) distinct.insert(arg.sym);
  if (distinct.size() != a.args.size())
    throw ModelError("rule heads with repeated variables are not supported");
  return a;
}

inline Constraint head_constraint(const ProbLogProgram& p, const PRule& r) {
  Atom h = head_atom(r);
  std::vector<Logvar> schema;
  std::vector<std::vector<Symbol>> cols;
  const auto& doms = p.arg_domains.at(r.head.functor);
  for (size_t i = 0; i < h.args.size(); ++i) {
    if (doms[i] == 0)
      throw ModelError("cannot infer a domain for argument " +
                       std::to_string(i) + " of " + sym_name(r.head.functor));
    schema.push_back({h.args[i].sym, doms[i]});
    cols.push_back(domain_constants(relations(p), doms[i]));
  }
  return Constraint::product(std::move(schema), std::move(cols));
}

}  // namespace detail

inline Model translate(const ProbLogProgram& p,
                       TranslateStyle style = TranslateStyle::Compact) {
  if (!p.acyclic)
    throw ModelError(
        "translation requires an acyclic program (a rule cycle was found); "
        "the enumeration engine still handles stratified cycles");
  Model m;
  for (Symbol d : p.domain_pred_order) {
    if (p.arities.at(d) == 1) {
      std::vector<Symbol> col;
      for (const auto& t : p.domain_facts.at(d)) col.push_back(t[0]);
      m.domains[d] = col;
    }
  }
  detail::NameGen names(p);

  // Probabilistic facts: one parentless table per declaration.
  for (const auto& f : p.prob_facts) {
    Parfactor pf;
    pf.kind = FactorKind::Bayes;
    Atom a;
    a.functor = f.head.functor;
    a.args = f.head.args;
    a.range = bool_range();
    pf.atoms.emplace_back(a);
    pf.table = PotentialTable({2}, {1.0 - f.p, f.p});
    pf.constraint = detail::fact_constraint(p, f);
    m.add(std::move(pf));
  }

  // Group rules by head predicate, in first-appearance order.
  std::vector<Symbol> head_order;
  std::map<Symbol, std::vector<const PRule*>> by_head;
  for (const auto& r : p.rules) {
    if (!by_head.count(r.head.functor)) head_order.push_back(r.head.functor);
    by_head[r.head.functor].push_back(&r);
  }

  int ch_counter = 0;
  for (Symbol h : head_order) {
    const auto& rules = by_head[h];
    Atom head = detail::head_atom(*rules[0]);
    Constraint head_c = detail::head_constraint(p, *rules[0]);

    struct RuleCtx {
      detail::RuleView view;
      bool has_extras = false;
      bool needs_conj = false;
      Atom direct_literal;  // when !needs_conj
    };
    std::vector<RuleCtx> ctxs;
    for (const PRule* rp : rules) {
      RuleCtx ctx;
      ctx.view = detail::analyze_rule(p, *rp);
      if (detail::head_atom(*rp).args != head.args) {
        // unify head variable names across the rules of this predicate
        std::map<Symbol, Symbol> ren;
        Atom ra = detail::head_atom(*rp);
        for (size_t i = 0; i < ra.args.size(); ++i)
          ren[ra.args[i].sym] = head.args[i].sym;
        ctx.view.constraint = ctx.view.constraint.renamed(ren);
        for (auto& lit : ctx.view.randoms)
          for (auto& arg : lit.term.args)
            if (arg.is_var && ren.count(arg.sym)) arg.sym = ren.at(arg.sym);
        for (auto& lv : ctx.view.logvars)
          if (ren.count(lv)) lv = ren.at(lv);
        for (auto& lv : ctx.view.extra_vars)
          if (ren.count(lv)) lv = ren.at(lv);
      }
      ctx.has_extras = !ctx.view.extra_vars.empty();
      ctx.needs_conj =
          ctx.view.randoms.size() != 1 || !ctx.view.randoms[0].positive;
      if (!ctx.needs_conj) {
        ctx.direct_literal.functor = ctx.view.randoms[0].term.functor;
        ctx.direct_literal.args = ctx.view.randoms[0].term.args;
        ctx.direct_literal.range = bool_range();
      }
      ctxs.push_back(std::move(ctx));
    }

    // Emits the body-conjunction factor for rule i with the given child atom.
    auto add_conj = [&](const RuleCtx& ctx, const Atom& child) {
      Parfactor conj;
      conj.kind = FactorKind::Bayes;
      conj.atoms.emplace_back(child);
      std::vector<bool> polarity;
      for (const auto& lit : ctx.view.randoms) {
        Atom la;
        la.functor = lit.term.functor;
        la.args = lit.term.args;
        la.range = bool_range();
        conj.atoms.emplace_back(la);
        polarity.push_back(lit.positive);
      }
      conj.table = detail::conjunction_table(polarity);
      conj.constraint = ctx.view.constraint;
      m.add(std::move(conj));
    };

    // Contribution node for rule i: the literal itself, or a fresh
    // conjunction node carrying all rule logvars.
    auto make_contribution = [&](const RuleCtx& ctx, const std::string& base) {
      if (!ctx.needs_conj) return ctx.direct_literal;
      Atom node;
      node.functor = names.fresh(base);
      for (Symbol lv : ctx.view.logvars) node.args.push_back(var_arg(lv));
      node.range = bool_range();
      add_conj(ctx, node);
      return node;
    };

    auto add_het_deputy = [&](const Atom& regular, const Atom& prime,
                              const Atom& contribution,
                              const Constraint& agg_constraint,
                              const Constraint& reg_constraint) {
      Parfactor het;
      het.kind = FactorKind::Het;
      het.atoms.emplace_back(prime);
      het.atoms.emplace_back(contribution);
      het.table = identity_table();
      het.constraint = agg_constraint;
      het.convergent = {0};
      m.add(std::move(het));

      Parfactor dep;
      dep.kind = FactorKind::Deputy;
      dep.atoms.emplace_back(regular);
      dep.atoms.emplace_back(prime);
      dep.table = identity_table();
      dep.constraint = reg_constraint;
      m.add(std::move(dep));
    };

    bool any_extras = false;
    for (const auto& c : ctxs) any_extras |= c.has_extras;
    bool uniform_head =
        style == TranslateStyle::Uniform || (rules.size() > 1 && any_extras);

    if (uniform_head) {
      // One deputised node per rule, combined by disjunction (identity when
      // the head has a single rule).
      std::vector<Atom> regs;
      for (size_t i = 0; i < ctxs.size(); ++i) {
        Atom con = make_contribution(
            ctxs[i], ctxs[i].has_extras && ctxs[i].needs_conj
                         ? "ch" + std::to_string(++ch_counter)
                         : sym_name(h) + std::to_string(i + 1) + "c");
        Atom reg, prime;
        reg.functor = names.fresh(sym_name(h) + std::to_string(i + 1));
        reg.args = head.args;
        reg.range = bool_range();
        prime.functor = names.fresh(sym_name(reg.functor) + "p");
        prime.args = head.args;
        prime.range = bool_range();
        add_het_deputy(reg, prime, con, ctxs[i].view.constraint, head_c);
        regs.push_back(reg);
      }
      Parfactor comb;
      comb.kind = FactorKind::Bayes;
      comb.atoms.emplace_back(head);
      for (const auto& r : regs) comb.atoms.emplace_back(r);
      comb.table = regs.size() == 1 ? identity_table()
                                    : detail::disjunction_table(regs.size());
      comb.constraint = head_c;
      m.add(std::move(comb));
      continue;
    }

    if (ctxs.size() == 1) {
      RuleCtx& ctx = ctxs[0];
      if (ctx.has_extras) {
        // Aggregated single rule: the convergent aggregator pairs with the
        // head itself.
        Atom con = make_contribution(
            ctx, ctx.needs_conj ? "ch" + std::to_string(++ch_counter) : "");
        Atom prime;
        prime.functor = names.fresh(sym_name(h) + "1");
        prime.args = head.args;
        prime.range = bool_range();
        add_het_deputy(head, prime, con, ctx.view.constraint, head_c);
      } else if (ctx.needs_conj) {
        // Single rule, single grounding, several literals: the head is the
        // conjunction node itself.
        add_conj(ctx, head);
      } else {
        // Single rule, single grounding, one positive literal: identity link.
        Parfactor link;
        link.kind = FactorKind::Bayes;
        link.atoms.emplace_back(head);
        link.atoms.emplace_back(ctx.direct_literal);
        link.table = identity_table();
        link.constraint = ctx.view.constraint;
        m.add(std::move(link));
      }
    } else {
      // Several rules, none aggregated: per-rule nodes, one disjunction.
      Parfactor disj;
      disj.kind = FactorKind::Bayes;
      disj.atoms.emplace_back(head);
      std::vector<Atom> nodes;
      for (size_t i = 0; i < ctxs.size(); ++i)
        nodes.push_back(make_contribution(
            ctxs[i], sym_name(h) + std::to_string(i + 1)));
      for (const auto& n : nodes) disj.atoms.emplace_back(n);
      disj.table = detail::disjunction_table(nodes.size());
      disj.constraint = head_c;
      m.add(std::move(disj));
    }
  }
  return m;
}

}  // namespace lve
