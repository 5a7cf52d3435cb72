#pragma once

#include <algorithm>
#include <charconv>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "lve/common.hpp"
#include "lve/factor.hpp"
#include "lve/problog.hpp"

namespace lve {

// ---------------------------------------------------------------------------
// Parsing extended factor-model files: bayes/markov/het factor declarations,
// deputy links, named tables, ground domain facts, and range declarations.

namespace pfl_detail {

struct RawFactor {
  FactorKind kind;
  std::vector<PTerm> atoms;
  std::vector<double> inline_table;
  Symbol table_name = 0;  // when the table is given by name
  std::vector<PTerm> goals;
  int line = 0;
};

}  // namespace pfl_detail

inline Model parse_pfl(std::string_view text) {
  TokenStream ts(tokenize(text));
  std::vector<pfl_detail::RawFactor> raw;
  std::map<Symbol, std::vector<double>> named_tables;
  std::map<Symbol, TupleSet> facts;
  std::vector<Symbol> fact_order;
  std::map<Symbol, std::vector<Symbol>> ranges;

  auto parse_number_list = [&](std::vector<double>& out) {
    ts.expect("[", "to open a table");
    if (ts.accept("]")) return;
    while (true) {
      Token t = ts.next();
      if (t.kind != Token::Number)
        throw ParseError("line " + std::to_string(t.line) +
                         ": expected a number in table");
      out.push_back(t.number);
      if (ts.accept("]")) break;
      ts.expect(",", "between table entries");
    }
  };

  while (!ts.at_end()) {
    const Token& head = ts.peek();
    if (head.kind != Token::Ident)
      throw ParseError("line " + std::to_string(head.line) +
                       ": expected a clause, got '" + head.text + "'");
    std::string kw = head.text;
    if (kw == "bayes" || kw == "markov" || kw == "het" || kw == "deputy") {
      Token kt = ts.next();
      pfl_detail::RawFactor rf;
      rf.line = kt.line;
      rf.kind = kw == "bayes"    ? FactorKind::Bayes
                : kw == "markov" ? FactorKind::Markov
                : kw == "het"    ? FactorKind::Het
                                 : FactorKind::Deputy;
      while (true) {
        rf.atoms.push_back(detail::parse_term(ts));
        if (!ts.accept(",")) break;
      }
      ts.expect(";", "after the atom list");
      if (rf.kind != FactorKind::Deputy) {
        if (ts.peek().kind == Token::Ident) {
          rf.table_name = intern(ts.next().text);
        } else {
          parse_number_list(rf.inline_table);
        }
        ts.expect(";", "after the table");
      } else if (ts.peek().text == "[" && ts.peek(1).kind == Token::Number) {
        throw ParseError("line " + std::to_string(rf.line) +
                         ": deputy factors have a fixed table; none may be "
                         "declared");
      }
      ts.expect("[", "to open the constraint list");
      if (!ts.accept("]")) {
        while (true) {
          rf.goals.push_back(detail::parse_term(ts));
          if (ts.accept("]")) break;
          ts.expect(",", "between constraint goals");
        }
      }
      ts.expect(".", "at end of factor");
      raw.push_back(std::move(rf));
      continue;
    }
    if (kw == "range") {
      ts.next();
      Token f = ts.next();
      if (f.kind != Token::Ident)
        throw ParseError("line " + std::to_string(f.line) +
                         ": expected functor in range declaration");
      ts.expect("/", "in range declaration");
      Token ar = ts.next();
      if (ar.kind != Token::Number)
        throw ParseError("line " + std::to_string(ar.line) +
                         ": expected arity in range declaration");
      ts.expect("=", "in range declaration");
      std::vector<Symbol> values;
      ts.expect("[", "to open the range list");
      while (true) {
        Token v = ts.next();
        if (v.kind != Token::Ident && v.kind != Token::Number)
          throw ParseError("line " + std::to_string(v.line) +
                           ": expected range value");
        values.push_back(intern(v.text));
        if (ts.accept("]")) break;
        ts.expect(",", "between range values");
      }
      ts.expect(".", "at end of range declaration");
      if (values.size() < 2)
        throw ParseError("line " + std::to_string(f.line) +
                         ": ranges need at least two values");
      ranges[intern(f.text)] = values;
      continue;
    }
    // named table `ident([...]).` or ground fact `term.`
    if (ts.peek(1).kind == Token::Punct && ts.peek(1).text == "(" &&
        ts.peek(2).kind == Token::Punct && ts.peek(2).text == "[") {
      Token name = ts.next();
      ts.expect("(", "");
      std::vector<double> vals;
      parse_number_list(vals);
      ts.expect(")", "to close the table definition");
      ts.expect(".", "at end of table definition");
      named_tables[intern(name.text)] = std::move(vals);
      continue;
    }
    PTerm t = detail::parse_term(ts);
    ts.expect(".", "at end of fact");
    if (!t.ground())
      throw ParseError("line " + std::to_string(t.line) +
                       ": domain facts must be ground");
    Tuple row;
    for (const auto& a : t.args) row.push_back(a.sym);
    if (!facts.count(t.functor)) fact_order.push_back(t.functor);
    facts[t.functor].push_back(std::move(row));
  }
  for (auto& [pred, rows] : facts) detail::sort_unique(rows);

  Model m;
  m.ranges = ranges;
  for (Symbol d : fact_order)
    if (!facts[d].empty() && facts[d][0].size() == 1) {
      std::vector<Symbol> col;
      for (const auto& t : facts[d]) col.push_back(t[0]);
      m.domains[d] = col;
    }

  detail::RelationDB db{&facts};
  for (const auto& rf : raw) {
    Parfactor pf;
    pf.kind = rf.kind;
    Constraint c = Constraint::unit();
    for (const auto& g : rf.goals)
      c = Constraint::join(c, detail::goal_constraint(db, g));
    for (const auto& term : rf.atoms) {
      Atom a;
      a.functor = term.functor;
      a.args = term.args;
      auto it = ranges.find(term.functor);
      a.range = it == ranges.end() ? bool_range() : it->second;
      for (Symbol lv : a.logvars())
        if (c.column_of(lv) < 0)
          throw ParseError(
              "line " + std::to_string(rf.line) + ": logvar " + sym_name(lv) +
              " in atom " + a.str() + " is not bound by any constraint goal");
      pf.atoms.emplace_back(std::move(a));
    }
    // canonical column order: first occurrence across the atom list, then
    // any remaining goal-only columns
    {
      std::vector<Symbol> order;
      for (const auto& fa : pf.atoms)
        for (Symbol lv : fa.atom.logvars())
          if (std::find(order.begin(), order.end(), lv) == order.end())
            order.push_back(lv);
      for (const auto& lv : c.schema())
        if (std::find(order.begin(), order.end(), lv.name) == order.end())
          order.push_back(lv.name);
      c = c.reordered(order);
    }
    pf.constraint = std::move(c);
    try {
      if (rf.kind == FactorKind::Deputy) {
        pf.table = identity_table();
      } else if (rf.table_name != 0) {
        auto it = named_tables.find(rf.table_name);
        if (it == named_tables.end())
          throw ModelError("undefined table name " + sym_name(rf.table_name));
        pf.table = PotentialTable(pf.cards(), it->second);
      } else {
        pf.table = PotentialTable(pf.cards(), rf.inline_table);
      }
      if (rf.kind == FactorKind::Het) pf.convergent = {0};
      m.add(std::move(pf));
    } catch (const ModelError& e) {
      throw ParseError("line " + std::to_string(rf.line) + ": " + e.what());
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Canonical printer

namespace pfl_detail {

inline std::string fmt_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  std::string s(buf, end);
  if (s.find('.') == std::string::npos && s.find('e') == std::string::npos &&
      s.find("inf") == std::string::npos && s.find("nan") == std::string::npos)
    s += ".0";
  return s;
}

struct GoalPrinter {
  const Model* model;
  std::string aux;      // synthesized relation facts
  int next_rel = 0;

  // Reconstruct a goal list for a constraint. Columns matching a named
  // domain print as that domain's unary predicate; anything else becomes a
  // synthesized relation printed alongside the factors.
  std::string goals_for(const Constraint& c) {
    std::string out = "[";
    bool first = true;
    auto append = [&](const std::string& g) {
      if (!first) out += ",";
      out += g;
      first = false;
    };
    if (c.is_product()) {
      bool all_named = true;
      for (size_t i = 0; i < c.schema().size(); ++i) {
        auto it = model->domains.find(c.schema()[i].domain);
        if (it == model->domains.end()) { all_named = false; break; }
        auto sorted_dom = detail_sorted(it->second);
        auto sorted_col = detail_sorted(c.column_values(static_cast<int>(i)));
        if (sorted_dom != sorted_col) { all_named = false; break; }
      }
      if (all_named) {
        for (size_t i = 0; i < c.schema().size(); ++i)
          append(sym_name(c.schema()[i].domain) + "(" +
                 sym_name(c.schema()[i].name) + ")");
        return out + "]";
      }
    }
    if (c.arity() > 0) {
      std::string rel = "rel" + std::to_string(++next_rel);
      c.for_each([&](const Tuple& t) {
        aux += rel + "(";
        for (size_t i = 0; i < t.size(); ++i) {
          if (i) aux += ",";
          aux += sym_name(t[i]);
        }
        aux += ").\n";
      });
      std::string g = rel + "(";
      for (size_t i = 0; i < c.schema().size(); ++i) {
        if (i) g += ",";
        g += sym_name(c.schema()[i].name);
      }
      append(g + ")");
    }
    return out + "]";
  }

  static std::vector<Symbol> detail_sorted(std::vector<Symbol> v) {
    std::sort(v.begin(), v.end());
    return v;
  }
};

}  // namespace pfl_detail

inline std::string print_pfl(const Model& m) {
  std::string out;
  for (const auto& [name, consts] : m.domains)
    for (Symbol c : consts)
      out += sym_name(name) + "(" + sym_name(c) + ").\n";
  for (const auto& [functor, range] : m.ranges) {
    size_t arity = 0;
    for (const auto* pf : m.all())
      for (const auto& fa : pf->atoms)
        if (fa.atom.functor == functor) arity = fa.atom.args.size();
    out += "range " + sym_name(functor) + "/" + std::to_string(arity) + " = [";
    for (size_t i = 0; i < range.size(); ++i) {
      if (i) out += ",";
      out += sym_name(range[i]);
    }
    out += "].\n";
  }
  pfl_detail::GoalPrinter gp{&m, "", 0};
  std::string factors;
  auto print_factor = [&](const Parfactor& pf) {
    if (pf.kind == FactorKind::Het &&
        pf.convergent != std::vector<int>{0})
      throw ModelError("printer: het factors must have the leading atom "
                       "convergent");
    factors += kind_name(pf.kind);
    factors += " ";
    for (size_t i = 0; i < pf.atoms.size(); ++i) {
      if (pf.atoms[i].is_crv)
        throw ModelError("printer: counting formulas are internal only");
      if (i) factors += ", ";
      factors += pf.atoms[i].atom.str();
    }
    if (pf.kind != FactorKind::Deputy) {
      factors += " ; [";
      for (size_t i = 0; i < pf.table.vals.size(); ++i) {
        if (i) factors += ", ";
        factors += pfl_detail::fmt_double(pf.table.vals[i]);
      }
      factors += "]";
    }
    factors += " ; " + gp.goals_for(pf.constraint) + ".\n";
  };
  for (const auto& pf : m.f1) print_factor(pf);
  for (const auto& pf : m.f2) print_factor(pf);
  return out + gp.aux + factors;
}

// ---------------------------------------------------------------------------
// Structural model validation (diagnostics are data, not errors)

struct Diagnostic {
  enum Severity { Warning, Error } severity;
  std::string message;
};

inline std::vector<Diagnostic> validate_model(const Model& m) {
  std::vector<Diagnostic> out;
  auto err = [&](std::string msg) {
    out.push_back({Diagnostic::Error, std::move(msg)});
  };
  auto warn = [&](std::string msg) {
    out.push_back({Diagnostic::Warning, std::move(msg)});
  };

  auto atom_groundings = [](const Parfactor& pf, int idx) {
    const Atom& a = pf.atoms[idx].atom;
    std::vector<Symbol> lvs = a.logvars();
    if (lvs.empty()) {
      TupleSet one;
      Tuple t;
      for (const auto& arg : a.args) t.push_back(arg.sym);
      one.push_back(t);
      return one;
    }
    Constraint proj = pf.constraint.project(lvs);
    TupleSet outts;
    proj.for_each([&](const Tuple& t) {
      std::map<Symbol, Symbol> env;
      for (size_t i = 0; i < lvs.size(); ++i) env[lvs[i]] = t[i];
      Tuple row;
      for (const auto& arg : a.args)
        row.push_back(arg.is_var ? env[arg.sym] : arg.sym);
      outts.push_back(std::move(row));
    });
    detail::sort_unique(outts);
    return outts;
  };

  for (const auto* pf : m.all()) {
    try {
      pf->check();
    } catch (const ModelError& e) {
      err(e.what());
      continue;
    }
    std::set<Symbol> used;
    for (const auto& fa : pf->atoms)
      for (Symbol lv : fa.atom.logvars()) used.insert(lv);
    for (const auto& lv : pf->constraint.schema())
      if (!used.count(lv.name))
        warn("constraint variable " + sym_name(lv.name) +
             " is not used by any atom of a " +
             std::string(kind_name(pf->kind)) + " factor");
  }

  // Every convergent atom needs exactly one deputy factor whose prime side
  // covers the same ground randvars.
  for (const auto& het : m.f2) {
    for (int ci : het.convergent) {
      if (ci >= static_cast<int>(het.atoms.size())) continue;
      auto conv_rvs = atom_groundings(het, ci);
      int matches = 0;
      for (const auto& dep : m.f1) {
        if (dep.kind != FactorKind::Deputy) continue;
        if (dep.atoms[1].atom.functor != het.atoms[ci].atom.functor) continue;
        if (atom_groundings(dep, 1) == conv_rvs) ++matches;
      }
      if (matches == 0)
        err("orphan convergent variable " + het.atoms[ci].atom.str() +
            ": no deputy factor links it to a regular variable");
      else if (matches > 1)
        err("convergent variable " + het.atoms[ci].atom.str() +
            " has " + std::to_string(matches) + " deputy factors");
    }
  }
  for (const auto& dep : m.f1) {
    if (dep.kind != FactorKind::Deputy) continue;
    bool found = false;
    for (const auto& het : m.f2)
      for (int ci : het.convergent)
        if (het.atoms[ci].atom.functor == dep.atoms[1].atom.functor)
          found = true;
    if (!found)
      warn("deputy factor for " + dep.atoms[1].atom.str() +
           " has no heterogeneous factor");
  }
  return out;
}

// Structural equality modulo domain tags; used for round-trip checks.
inline bool parfactor_structurally_equal(const Parfactor& a, const Parfactor& b) {
  if (a.kind != b.kind || a.atoms.size() != b.atoms.size()) return false;
  for (size_t i = 0; i < a.atoms.size(); ++i) {
    if (a.atoms[i].atom.functor != b.atoms[i].atom.functor) return false;
    if (a.atoms[i].atom.args != b.atoms[i].atom.args) return false;
    if (a.atoms[i].atom.range != b.atoms[i].atom.range) return false;
    if (a.atoms[i].is_crv != b.atoms[i].is_crv) return false;
  }
  if (a.table.vals != b.table.vals) return false;
  if (a.convergent != b.convergent) return false;
  std::vector<Symbol> names;
  for (const auto& lv : a.constraint.schema()) names.push_back(lv.name);
  std::vector<Symbol> other;
  for (const auto& lv : b.constraint.schema()) other.push_back(lv.name);
  if (names != other) return false;
  return a.constraint.same_tuples(b.constraint);
}

inline bool model_structurally_equal(const Model& a, const Model& b) {
  if (a.f1.size() != b.f1.size() || a.f2.size() != b.f2.size()) return false;
  for (size_t i = 0; i < a.f1.size(); ++i)
    if (!parfactor_structurally_equal(a.f1[i], b.f1[i])) return false;
  for (size_t i = 0; i < a.f2.size(); ++i)
    if (!parfactor_structurally_equal(a.f2[i], b.f2[i])) return false;
  return true;
}

}  // namespace lve
