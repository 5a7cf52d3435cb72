// lve: exact inference for probabilistic logic programs and parametric
// factor models, with lifted, ground, and enumeration engines.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "lve/bench.hpp"
#include "lve/engine.hpp"
#include "lve/pfl.hpp"
#include "lve/problog.hpp"

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw lve::Error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool is_pfl_file(const std::string& path) {
  return path.size() >= 4 && path.substr(path.size() - 4) == ".pfl";
}

lve::GroundAtom parse_ground_atom(const std::string& text) {
  auto toks = lve::tokenize(text);
  lve::TokenStream ts(std::move(toks));
  lve::PTerm t = lve::detail::parse_term(ts);
  if (!ts.at_end()) throw lve::ParseError("trailing input after atom");
  if (!t.ground()) throw lve::ParseError("atom must be ground: " + text);
  lve::GroundAtom a{t.functor, {}};
  for (const auto& arg : t.args) a.args.push_back(arg.sym);
  return a;
}

lve::EvidenceSpec parse_evidence(const std::string& text) {
  lve::EvidenceSpec out;
  if (text.empty()) return out;
  size_t start = 0;
  int depth = 0;
  for (size_t i = 0; i <= text.size(); ++i) {
    if (i < text.size() && text[i] == '(') ++depth;
    if (i < text.size() && text[i] == ')') --depth;
    if (i == text.size() || (text[i] == ',' && depth == 0)) {
      std::string item = text.substr(start, i - start);
      auto eq = item.rfind('=');
      if (eq == std::string::npos)
        throw lve::ParseError("evidence items look like atom=value: " + item);
      out.emplace_back(parse_ground_atom(item.substr(0, eq)),
                       lve::intern(item.substr(eq + 1)));
      start = i + 1;
    }
  }
  return out;
}

std::vector<uint64_t> parse_size_list(const std::string& text) {
  std::vector<uint64_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stoull(item));
  }
  return out;
}

int cmd_query(const std::string& file, const std::string& engine_s,
              const std::string& query_s, const std::string& evidence_s,
              int64_t timeout_ms, uint64_t enum_cap, uint64_t cell_budget,
              bool csv, bool trace) {
  lve::InferOptions opts;
  opts.engine = lve::parse_engine(engine_s);
  opts.enum_cap = enum_cap;
  opts.cell_budget = cell_budget;
  if (timeout_ms > 0) opts.deadline = lve::Deadline::after_ms(timeout_ms);
  std::vector<lve::OpTrace> traces;
  if (trace) opts.trace = &traces;

  lve::GroundAtom query = parse_ground_atom(query_s);
  lve::EvidenceSpec evidence = parse_evidence(evidence_s);
  std::string text = read_file(file);

  lve::Distribution dist;
  try {
    if (is_pfl_file(file)) {
      if (opts.engine == lve::EngineKind::Enum)
        throw lve::Error("the enumeration engine needs a .pl program");
      lve::Model m = lve::parse_pfl(text);
      dist = lve::infer_model(m, query, evidence, opts);
    } else {
      lve::ProbLogProgram p = lve::parse_problog(text);
      dist = lve::infer_problog(p, query, evidence, opts);
    }
  } catch (...) {
    for (const auto& t : traces)
      std::cerr << "op " << t.tag << " " << t.shape << "\n";
    throw;
  }
  for (const auto& t : traces)
    std::cerr << "op " << t.tag << " " << t.shape << "\n";
  for (size_t i = 0; i < dist.values.size(); ++i) {
    if (csv)
      printf("%s,%.9f\n", lve::sym_name(dist.values[i]).c_str(), dist.probs[i]);
    else
      printf("P(%s=%s) = %.9f\n", query.str().c_str(),
             lve::sym_name(dist.values[i]).c_str(), dist.probs[i]);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"exact lifted inference for probabilistic logic programs"};
  app.require_subcommand(1);

  // query
  std::string q_file, q_engine = "lifted", q_query, q_evidence;
  int64_t q_timeout = 0;
  uint64_t q_enum_cap = 24, q_cell_budget = 10000000;
  bool q_csv = false, q_trace = false;
  auto* query = app.add_subcommand("query", "answer a marginal query");
  query->add_option("file", q_file, "model file (.pl or .pfl)")->required();
  query->add_option("--engine", q_engine, "lifted|ve1|ve|enum");
  query->add_option("--query", q_query, "ground query atom")->required();
  query->add_option("--evidence", q_evidence, "atom=value,...");
  query->add_option("--timeout", q_timeout, "time limit in ms");
  query->add_option("--enum-cap", q_enum_cap,
                    "max ground probabilistic facts for enumeration");
  query->add_option("--cell-budget", q_cell_budget,
                    "max table cells for grounding fallbacks");
  query->add_flag("--csv", q_csv, "emit value,prob lines");
  query->add_flag("--trace", q_trace, "print lifted operator trace to stderr");

  // translate
  std::string t_file, t_style = "compact";
  auto* translate = app.add_subcommand(
      "translate", "translate a .pl program to the factor-model format");
  translate->add_option("file", t_file, "ProbLog-subset file")->required();
  translate->add_option("--style", t_style, "compact|uniform");

  // validate
  std::string v_file;
  auto* validate = app.add_subcommand("validate", "check a model file");
  validate->add_option("file", v_file, "model file (.pl or .pfl)")->required();

  // bench
  std::string b_problem = "workshops-attributes", b_engines = "lifted";
  std::string b_n = "0", b_m = "0", b_w = "0", b_x = "0", b_y = "0";
  int b_reps = 1;
  int64_t b_timeout = 60000;
  uint64_t b_enum_cap = 24, b_cell_budget = 10000000, b_seed = 0;
  bool b_exclude_shatter = false;
  auto* bench = app.add_subcommand("bench", "run a benchmark sweep (CSV)");
  bench->add_option("--problem", b_problem,
                    "workshops-attributes|competing-workshops|plates");
  bench->add_option("--engines", b_engines, "comma-separated engine list");
  bench->add_option("--n", b_n, "people counts, comma-separated");
  bench->add_option("--m", b_m, "attribute counts, comma-separated");
  bench->add_option("--w", b_w, "workshop counts, comma-separated");
  bench->add_option("--x", b_x, "X-individual counts, comma-separated");
  bench->add_option("--y", b_y, "Y-individual counts, comma-separated");
  bench->add_option("--reps", b_reps, "repetitions per configuration");
  bench->add_option("--timeout", b_timeout, "per-run time limit in ms");
  bench->add_option("--enum-cap", b_enum_cap, "enumeration cap");
  bench->add_option("--cell-budget", b_cell_budget, "grounding cell budget");
  bench->add_option("--seed", b_seed, "seed recorded for reproducibility");
  bench->add_flag("--exclude-shatter-from-timing", b_exclude_shatter,
                  "measure elimination only, not shattering");

  CLI11_PARSE(app, argc, argv);

  try {
    if (query->parsed())
      return cmd_query(q_file, q_engine, q_query, q_evidence, q_timeout,
                       q_enum_cap, q_cell_budget, q_csv, q_trace);

    if (translate->parsed()) {
      lve::ProbLogProgram p = lve::parse_problog(read_file(t_file));
      lve::TranslateStyle style = t_style == "uniform"
                                      ? lve::TranslateStyle::Uniform
                                      : lve::TranslateStyle::Compact;
      lve::Model m = lve::translate(p, style);
      std::cout << lve::print_pfl(m);
      return 0;
    }

    if (validate->parsed()) {
      std::string text = read_file(v_file);
      lve::Model m = is_pfl_file(v_file)
                         ? lve::parse_pfl(text)
                         : lve::translate(lve::parse_problog(text));
      auto diags = lve::validate_model(m);
      bool bad = false;
      for (const auto& d : diags) {
        std::cerr << (d.severity == lve::Diagnostic::Error ? "error: "
                                                           : "warning: ")
                  << d.message << "\n";
        bad |= d.severity == lve::Diagnostic::Error;
      }
      if (!bad) std::cout << "model ok\n";
      return bad ? 1 : 0;
    }

    if (bench->parsed()) {
      lve::BenchSpec spec;
      spec.problem = lve::parse_problem(b_problem);
      spec.repetitions = b_reps;
      spec.timeout_ms = b_timeout;
      spec.enum_cap = b_enum_cap;
      spec.cell_budget = b_cell_budget;
      spec.time_shattering = !b_exclude_shatter;
      std::stringstream ss(b_engines);
      std::string e;
      while (std::getline(ss, e, ','))
        if (!e.empty()) spec.engines.push_back(lve::parse_engine(e));
      auto ns = parse_size_list(b_n), ms = parse_size_list(b_m),
           ws = parse_size_list(b_w), xs = parse_size_list(b_x),
           ys = parse_size_list(b_y);
      auto pick = [](const std::vector<uint64_t>& v) {
        return v.empty() ? std::vector<uint64_t>{0} : v;
      };
      for (uint64_t n : pick(ns))
        for (uint64_t m : pick(ms))
          for (uint64_t w : pick(ws))
            for (uint64_t x : pick(xs))
              for (uint64_t y : pick(ys))
                spec.sizes.push_back({n, m, w, x, y});
      std::cout << lve::csv_header() << "\n";
      for (const auto& rec : lve::run_bench(spec))
        std::cout << lve::csv_row(rec) << "\n";
      return 0;
    }
  } catch (const lve::TimeoutError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 124;
  } catch (const lve::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
