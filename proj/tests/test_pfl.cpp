#include <doctest.h>

#include "lve/bench.hpp"
#include "lve/pfl.hpp"
#include "support.hpp"

using namespace lve;

TEST_CASE("parsing the two-line workshop model") {
  Model m = parse_pfl(R"(
bayes attends(P), at(P,A) ; [0.7, 0.3, 0.3, 0.7] ; [person(P),attribute(A)].
bayes series, attends(P) ; [0.51, 0.49, 0.49, 0.51] ; [person(P)].
person(p1). person(p2).
attribute(a1).
)");
  REQUIRE(m.f1.size() == 2);
  CHECK(m.f2.empty());
  CHECK(m.f1[0].table.vals == std::vector<double>{0.7, 0.3, 0.3, 0.7});
  CHECK(m.f1[1].table.vals == std::vector<double>{0.51, 0.49, 0.49, 0.51});
  CHECK(m.f1[0].constraint.size() == 2);
  CHECK(m.f1[1].constraint.size() == 2);
}

TEST_CASE("parsing the extended kinds with named tables") {
  Model m = parse_pfl(R"(
het series1p, s; identity ; [].
het series2p, attends(P); identity; [person(P)].
deputy series2, series2p; [].
deputy series1, series1p; [].
bayes series, series1, series2; disjunction ; [].
het attends1p(P), at(P,A); identity; [person(P),attribute(A)].
deputy attends1(P), attends1p(P); [person(P)].
bayes attends(P), attends1(P); identity; [person(P)].
bayes s; [0.9, 0.1]; [].
bayes at(P,A); [0.7, 0.3] ; [person(P),attribute(A)].

identity([1,0,0,1]).
disjunction([1,0,0,0,
             0,1,1,1]).

person(p1). person(p2).
attribute(a1). attribute(a2).
)");
  CHECK(m.f2.size() == 3);
  int deputies = 0;
  for (const auto& pf : m.f1)
    if (pf.kind == FactorKind::Deputy) ++deputies;
  CHECK(deputies == 3);
  for (const auto& pf : m.f2) {
    CHECK(pf.kind == FactorKind::Het);
    CHECK(pf.convergent == std::vector<int>{0});
    CHECK(pf.table.vals == identity_table().vals);
  }
  CHECK(validate_model(m).empty());
}

TEST_CASE("a deputy declaration with an explicit table is rejected") {
  CHECK_THROWS_AS(parse_pfl("deputy a, b ; [1,0,0,1] ; []."), ParseError);
}

TEST_CASE("table errors are reported") {
  CHECK_THROWS_AS(parse_pfl("bayes a ; [0.5, 0.5, 0.5] ; []."), ParseError);
  CHECK_THROWS_AS(parse_pfl("bayes a ; mystery_table ; []."), ParseError);
  CHECK_THROWS_AS(parse_pfl("bayes a(X) ; [0.5, 0.5] ; []. d(x1)."),
                  ParseError);
}

TEST_CASE("non-Boolean ranges via range declarations") {
  Model m = parse_pfl(R"(
range w/1 = [low, mid, high].
bayes w(X) ; [0.2, 0.3, 0.5] ; [d(X)].
d(x1). d(x2).
)");
  REQUIRE(m.f1.size() == 1);
  CHECK(m.f1[0].atoms[0].atom.range.size() == 3);
  CHECK(m.range_of(intern("w")).size() == 3);
}

TEST_CASE("parse-print-parse round-trips to an identical model") {
  const char* sources[] = {
      R"(
het series1, ch1(P) ; [1.0,0.0,0.0,1.0] ; [person(P)].
deputy series, series1 ; [].
bayes ch1(P), attends(P), sa(P) ; [1.0,1.0,1.0,0.0,0.0,0.0,0.0,1.0] ; [person(P)].
bayes sa(P) ; [0.499,0.501] ; [person(P)].
person(p1). person(p2). person(p3).
)",
      R"(
bayes p(X,Y), q(X) ; [0.25, 0.75, 0.5, 0.5] ; [edge(X,Y)].
edge(a,b). edge(b,c). edge(a,c).
)"};
  for (const char* src : sources) {
    Model m1 = parse_pfl(src);
    std::string printed = print_pfl(m1);
    Model m2 = parse_pfl(printed);
    CHECK(model_structurally_equal(m1, m2));
    CHECK(print_pfl(m2) == printed);
  }
}

TEST_CASE("translated programs print and re-parse equivalently") {
  ProbLogProgram p = parse_problog(workshops_attributes_model(2, 2).text);
  Model direct = translate(p);
  Model reparsed = parse_pfl(print_pfl(direct));
  CHECK(model_structurally_equal(direct, reparsed));
}

TEST_CASE("validation diagnoses broken heterogeneous structure") {
  // orphan convergent variable: no deputy factor
  Model orphan = parse_pfl(R"(
het e1, cause ; [1,0,0,1] ; [].
bayes cause ; [0.5, 0.5] ; [].
)");
  auto diags = validate_model(orphan);
  bool found = false;
  for (const auto& d : diags)
    if (d.severity == Diagnostic::Error &&
        d.message.find("orphan convergent") != std::string::npos)
      found = true;
  CHECK(found);

  // an unused constraint variable draws a warning
  Model unused = parse_pfl(R"(
bayes a ; [0.5, 0.5] ; [].
bayes b, a ; [1,0,0,1] ; [].
)");
  CHECK(validate_model(unused).empty());
}

TEST_CASE("negative potentials are diagnosed as model errors") {
  Parfactor bad;
  bad.kind = FactorKind::Bayes;
  bad.atoms.emplace_back(Atom{intern("v"), {}, bool_range()});
  bad.table = PotentialTable({2}, {0.5, 0.5});
  bad.table.vals[1] = -0.25;
  bad.constraint = Constraint::unit();
  Model m;
  m.f1.push_back(bad);
  auto diags = validate_model(m);
  REQUIRE(!diags.empty());
  CHECK(diags[0].severity == Diagnostic::Error);
}
