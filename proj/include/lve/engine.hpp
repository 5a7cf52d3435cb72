#pragma once

#include <string>
#include <vector>

#include "lve/common.hpp"
#include "lve/ground.hpp"
#include "lve/pfl.hpp"
#include "lve/problog.hpp"
#include "lve/schedule.hpp"

namespace lve {

enum class EngineKind { Lifted, VE1, VE, Enum };

inline const char* engine_name(EngineKind e) {
  switch (e) {
    case EngineKind::Lifted: return "lifted";
    case EngineKind::VE1: return "ve1";
    case EngineKind::VE: return "ve";
    case EngineKind::Enum: return "enum";
  }
  return "?";
}

inline EngineKind parse_engine(const std::string& s) {
  if (s == "lifted") return EngineKind::Lifted;
  if (s == "ve1") return EngineKind::VE1;
  if (s == "ve") return EngineKind::VE;
  if (s == "enum") return EngineKind::Enum;
  throw Error("unknown engine '" + s + "' (expected lifted|ve1|ve|enum)");
}

struct InferOptions {
  EngineKind engine = EngineKind::Lifted;
  uint64_t enum_cap = 24;
  uint64_t cell_budget = 10000000;
  uint64_t split_limit = 4096;
  Deadline deadline;
  std::vector<OpTrace>* trace = nullptr;
};

using EvidenceSpec = std::vector<std::pair<GroundAtom, Symbol>>;  // atom -> value

// Marginal of a ground query atom on a factor model.
inline Distribution infer_model(const Model& model, const GroundAtom& query,
                                const EvidenceSpec& evidence,
                                const InferOptions& opts) {
  std::vector<Symbol> range = model.range_of(query.functor);
  auto value_index = [&](Symbol functor, Symbol value) -> uint64_t {
    auto r = model.range_of(functor);
    for (size_t i = 0; i < r.size(); ++i)
      if (r[i] == value) return i;
    throw ValueRangeError("value " + sym_name(value) +
                          " is not in the range of " + sym_name(functor));
  };

  if (opts.engine == EngineKind::Lifted) {
    std::vector<std::pair<GroundAtom, uint64_t>> ev;
    for (const auto& [atom, value] : evidence)
      ev.emplace_back(atom, value_index(atom.functor, value));
    LiftedOptions lo;
    lo.cell_budget = opts.cell_budget;
    lo.split_limit = opts.split_limit;
    lo.deadline = opts.deadline;
    lo.trace = opts.trace;
    return {range, lifted_query(model, query, ev, lo)};
  }

  GroundModel gm = ground_model(model);
  uint64_t total_cells = 0;
  for (const auto& f : gm.f1) total_cells += f.cells();
  for (const auto& f : gm.f2) total_cells += f.cells();
  if (total_cells > opts.cell_budget)
    throw BudgetError("grounding exceeds the cell budget");
  int qid = gm.vars.find(query);
  if (qid < 0) throw ModelError("query atom " + query.str() +
                                " is not covered by the model");
  Evidence ev;
  for (const auto& [atom, value] : evidence) {
    int vid = gm.vars.find(atom);
    if (vid < 0)
      throw EvidenceError("evidence atom " + atom.str() +
                          " is not covered by the model");
    if (vid == qid)
      throw EvidenceError("the query atom may not appear in the evidence");
    ev.emplace_back(vid, value_index(atom.functor, value));
  }

  if (opts.engine == EngineKind::VE1) {
    return {range, run_ve1(gm.f1, gm.f2, qid, ev, gm.deputy_pairs, {},
                           opts.deadline)};
  }
  if (opts.engine == EngineKind::VE) {
    auto plain = expand_noisy_or(gm.f1, gm.f2, opts.cell_budget);
    return {range, run_ve(std::move(plain), qid, ev, {}, opts.deadline)};
  }
  throw Error("the enumeration engine needs a probabilistic logic program");
}

// Marginal of a query on a probabilistic logic program.
inline Distribution infer_problog(const ProbLogProgram& program,
                                  const GroundAtom& query,
                                  const EvidenceSpec& evidence,
                                  const InferOptions& opts) {
  if (opts.engine == EngineKind::Enum) {
    std::vector<std::pair<GroundAtom, bool>> ev;
    for (const auto& [atom, value] : evidence) {
      if (value != sym_true() && value != sym_false())
        throw ValueRangeError("enumeration evidence values must be f or t");
      ev.emplace_back(atom, value == sym_true());
    }
    double p =
        enumerate_query(program, query, ev, opts.enum_cap, opts.deadline);
    return {bool_range(), {1.0 - p, p}};
  }
  Model m = translate(program, TranslateStyle::Compact);
  return infer_model(m, query, evidence, opts);
}

}  // namespace lve
