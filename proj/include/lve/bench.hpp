#pragma once

#include <chrono>
#include <string>
#include <vector>

#include "lve/engine.hpp"

namespace lve {

// ---------------------------------------------------------------------------
// Benchmark model generators

enum class BenchProblem { WorkshopsAttributes, CompetingWorkshops, Plates };

inline const char* problem_name(BenchProblem p) {
  switch (p) {
    case BenchProblem::WorkshopsAttributes: return "workshops-attributes";
    case BenchProblem::CompetingWorkshops: return "competing-workshops";
    case BenchProblem::Plates: return "plates";
  }
  return "?";
}

inline BenchProblem parse_problem(const std::string& s) {
  if (s == "workshops-attributes") return BenchProblem::WorkshopsAttributes;
  if (s == "competing-workshops") return BenchProblem::CompetingWorkshops;
  if (s == "plates") return BenchProblem::Plates;
  throw Error("unknown problem '" + s +
              "' (expected workshops-attributes|competing-workshops|plates)");
}

struct BenchModel {
  std::string text;
  bool is_pfl = false;
  std::string query;
};

// The workshop-series program: one workshop, n invitees, m attributes.
inline BenchModel workshops_attributes_model(uint64_t people, uint64_t attrs) {
  std::string t;
  t += "series :- person(P), attends(P), sa(P).\n";
  t += "0.501::sa(P) :- person(P).\n";
  t += "attends(P) :- person(P), attr(A), at(P,A).\n";
  t += "0.3::at(P,A) :- person(P), attr(A).\n";
  for (uint64_t i = 1; i <= people; ++i)
    t += "person(p" + std::to_string(i) + ").\n";
  for (uint64_t i = 1; i <= attrs; ++i)
    t += "attr(a" + std::to_string(i) + ").\n";
  return {t, false, "series"};
}

// Competing workshops, factor-model form: w workshops, n invitees.
inline BenchModel competing_workshops_model(uint64_t people, uint64_t workshops) {
  std::string t;
  t += "bayes ch1(P), attends(P), sa(P) ; "
       "[1.0,1.0,1.0,0.0,0.0,0.0,0.0,1.0] ; [person(P)].\n";
  t += "het series1, ch1(P) ; [1.0,0.0,0.0,1.0] ; [person(P)].\n";
  t += "deputy series, series1 ; [].\n";
  t += "bayes sa(P) ; [0.499,0.501] ; [person(P)].\n";
  t += "het attends1(P), ch2(P,W) ; [1.0,0.0,0.0,1.0] ; "
       "[person(P),workshop(W)].\n";
  t += "deputy attends(P), attends1(P) ; [person(P)].\n";
  t += "bayes ch2(P,W), hot(W), ah(P,W) ; "
       "[1.0,1.0,1.0,0.0,0.0,0.0,0.0,1.0] ; [person(P),workshop(W)].\n";
  t += "bayes ah(P,W) ; [0.2,0.8] ; [person(P),workshop(W)].\n";
  for (uint64_t i = 1; i <= people; ++i)
    t += "person(p" + std::to_string(i) + ").\n";
  for (uint64_t i = 1; i <= workshops; ++i)
    t += "workshop(w" + std::to_string(i) + ").\n";
  return {t, true, "series"};
}

// Two interacting plates over individual sets X and Y.
inline BenchModel plates_model(uint64_t xs, uint64_t ys) {
  std::string t;
  t += "f :- e(Y).\n";
  t += "e(Y) :- d(Y), n1(Y).\n";
  t += "e(Y) :- y(Y), \\+ d(Y), n2(Y).\n";
  t += "d(Y) :- c(X,Y).\n";
  t += "c(X,Y) :- b(X), n3(X,Y).\n";
  t += "c(X,Y) :- x(X), \\+ b(X), n4(X,Y).\n";
  t += "b(X) :- a, n5(X).\n";
  t += "b(X) :- \\+ a, n6(X).\n";
  t += "a :- n7.\n";
  t += "0.1::n1(Y) :- y(Y).\n";
  t += "0.2::n2(Y) :- y(Y).\n";
  t += "0.3::n3(X,Y) :- x(X), y(Y).\n";
  t += "0.4::n4(X,Y) :- x(X), y(Y).\n";
  t += "0.5::n5(X) :- x(X).\n";
  t += "0.6::n6(X) :- x(X).\n";
  t += "0.7::n7.\n";
  for (uint64_t i = 1; i <= xs; ++i) t += "x(x" + std::to_string(i) + ").\n";
  for (uint64_t i = 1; i <= ys; ++i) t += "y(y" + std::to_string(i) + ").\n";
  return {t, false, "f"};
}

struct BenchSizes {
  uint64_t n = 0, m = 0, w = 0, x = 0, y = 0;
};

inline BenchModel generate_bench_model(BenchProblem p, const BenchSizes& s) {
  switch (p) {
    case BenchProblem::WorkshopsAttributes:
      return workshops_attributes_model(s.n, s.m);
    case BenchProblem::CompetingWorkshops:
      return competing_workshops_model(s.n, s.w);
    case BenchProblem::Plates:
      return plates_model(s.x, s.y);
  }
  throw Error("bad problem");
}

// ---------------------------------------------------------------------------
// Benchmark runner

struct BenchSpec {
  BenchProblem problem = BenchProblem::WorkshopsAttributes;
  std::vector<BenchSizes> sizes;
  std::vector<EngineKind> engines;
  int repetitions = 1;
  int64_t timeout_ms = 60000;
  uint64_t enum_cap = 24;
  uint64_t cell_budget = 10000000;
  bool time_shattering = true;  // include shattering in the measured window
};

struct BenchRecord {
  BenchProblem problem;
  BenchSizes sizes;
  EngineKind engine;
  int rep = 0;
  double ms = 0.0;
  double prob = 0.0;
  std::string status;  // ok | timeout | refused
};

inline std::string csv_header() { return "problem,n,m,w,x,y,engine,rep,ms,prob,status"; }

inline std::string csv_row(const BenchRecord& r) {
  auto num = [](uint64_t v) { return v == 0 ? std::string() : std::to_string(v); };
  char prob[32] = "";
  if (r.status == "ok") snprintf(prob, sizeof(prob), "%.9f", r.prob);
  char ms[32] = "";
  if (r.status != "refused") snprintf(ms, sizeof(ms), "%.3f", r.ms);
  return std::string(problem_name(r.problem)) + "," + num(r.sizes.n) + "," +
         num(r.sizes.m) + "," + num(r.sizes.w) + "," + num(r.sizes.x) + "," +
         num(r.sizes.y) + "," + engine_name(r.engine) + "," +
         std::to_string(r.rep) + "," + ms + "," + prob + "," + r.status;
}

inline BenchRecord run_bench_once(BenchProblem problem, const BenchSizes& sizes,
                                  EngineKind engine, int rep,
                                  const BenchSpec& spec) {
  BenchRecord rec{problem, sizes, engine, rep, 0.0, 0.0, "ok"};
  BenchModel bm = generate_bench_model(problem, sizes);
  InferOptions opts;
  opts.engine = engine;
  opts.enum_cap = spec.enum_cap;
  opts.cell_budget = spec.cell_budget;
  opts.deadline = Deadline::after_ms(spec.timeout_ms);
  try {
    GroundAtom query{intern(bm.query), {}};
    auto timed_infer = [&](const Model& m) {
      if (engine == EngineKind::Lifted && !spec.time_shattering) {
        LiftedOptions lo;
        lo.cell_budget = opts.cell_budget;
        lo.deadline = opts.deadline;
        auto pool = lifted_prepare(m, query, {}, lo);
        auto t0 = std::chrono::steady_clock::now();
        auto probs = lifted_solve(pool, query, lo);
        auto t1 = std::chrono::steady_clock::now();
        rec.ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        rec.prob = probs.back();
        return;
      }
      auto t0 = std::chrono::steady_clock::now();
      Distribution d = infer_model(m, query, {}, opts);
      auto t1 = std::chrono::steady_clock::now();
      rec.ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
      rec.prob = d.probs.back();
    };
    if (bm.is_pfl) {
      if (engine == EngineKind::Enum)
        throw RefusedError("enumeration needs a logic program");
      Model m = parse_pfl(bm.text);
      timed_infer(m);
    } else {
      ProbLogProgram p = parse_problog(bm.text);
      if (engine == EngineKind::Enum) {
        auto t0 = std::chrono::steady_clock::now();
        Distribution d = infer_problog(p, query, {}, opts);
        auto t1 = std::chrono::steady_clock::now();
        rec.ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        rec.prob = d.probs.back();
      } else {
        Model m = translate(p, TranslateStyle::Compact);
        timed_infer(m);
      }
    }
  } catch (const TimeoutError&) {
    rec.status = "timeout";
    rec.ms = static_cast<double>(spec.timeout_ms);
  } catch (const RefusedError&) {
    rec.status = "refused";
  } catch (const BudgetError&) {
    rec.status = "refused";
  }
  return rec;
}

inline std::vector<BenchRecord> run_bench(const BenchSpec& spec) {
  std::vector<BenchRecord> out;
  for (const auto& sizes : spec.sizes)
    for (EngineKind engine : spec.engines)
      for (int rep = 0; rep < spec.repetitions; ++rep)
        out.push_back(run_bench_once(spec.problem, sizes, engine, rep, spec));
  return out;
}

}  // namespace lve
