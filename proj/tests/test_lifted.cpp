#include <doctest.h>

#include <cmath>

#include "lve/bench.hpp"
#include "lve/lifted.hpp"
#include "lve/schedule.hpp"
#include "support.hpp"

using namespace lve;
using lvetest::Rng;

namespace {

Symbol S(const char* s) { return intern(s); }

LiftedFactor make_lf(std::vector<FactorAtom> atoms, std::vector<double> vals,
                     Constraint c, std::vector<int> conv = {}) {
  LiftedFactor f;
  f.atoms = std::move(atoms);
  std::vector<uint64_t> card;
  for (const auto& fa : f.atoms) card.push_back(fa.range_size());
  f.table = PotentialTable(card, std::move(vals));
  f.constraint = std::move(c);
  f.convergent = std::move(conv);
  return f;
}

FactorAtom atom0(const char* name) {
  return FactorAtom(Atom{S(name), {}, bool_range()});
}
FactorAtom atom1(const char* name, const char* v) {
  return FactorAtom(Atom{S(name), {var_arg(S(v))}, bool_range()});
}
FactorAtom atom2(const char* name, const char* v1, const char* v2) {
  return FactorAtom(Atom{S(name), {var_arg(S(v1)), var_arg(S(v2))}, bool_range()});
}

std::vector<Symbol> consts(const char* prefix, int n) {
  std::vector<Symbol> out;
  for (int i = 1; i <= n; ++i)
    out.push_back(intern(std::string(prefix) + std::to_string(i)));
  return out;
}

// All ground factors of a lifted factor, via the shared grounding machinery.
std::vector<GroundFactor> ground_lf(const LiftedFactor& lf, GroundVarTable& vars,
                                    bool heterogeneous) {
  Parfactor pf;
  pf.kind = heterogeneous ? FactorKind::Het : FactorKind::Markov;
  pf.atoms = lf.atoms;
  pf.table = lf.table;
  pf.constraint = lf.constraint;
  pf.convergent = lf.convergent;
  return ground_parfactor(pf, vars);
}

}  // namespace

TEST_CASE("lifted multiplication degenerates to the pointwise product") {
  Rng rng(11);
  auto c0 = Constraint::unit();
  LiftedFactor a = make_lf({atom0("u")}, {2, 3}, c0);
  LiftedFactor b = make_lf({atom0("u"), atom0("v")}, {5, 7, 11, 13}, c0);
  LiftedFactor p = lifted_multiply(a, b);
  CHECK(p.table.vals == std::vector<double>{10, 14, 33, 39});
}

TEST_CASE("lifted multiplication groundings equal pairwise ground products") {
  Rng rng(22);
  Constraint xs = Constraint::product({{S("X"), S("xd")}}, {consts("x", 2)});
  auto rnd = [&] { return lvetest::pick_pot(rng); };
  LiftedFactor g1 = make_lf({atom1("p", "X")}, {rnd(), rnd()}, xs);
  LiftedFactor g2 =
      make_lf({atom1("p", "X"), atom1("q", "X")}, {rnd(), rnd(), rnd(), rnd()},
              xs);
  LiftedFactor prod = lifted_multiply(g1, g2);
  GroundVarTable vars;
  auto gp = ground_lf(prod, vars, false);
  auto ga = ground_lf(g1, vars, false);
  auto gb = ground_lf(g2, vars, false);
  REQUIRE(gp.size() == 2);
  for (size_t i = 0; i < gp.size(); ++i) {
    GroundFactor direct = gf_multiply(ga[i], gb[i]);
    for_each_assignment(gp[i].card, [&](const std::vector<uint64_t>& asg) {
      std::vector<uint64_t> da(asg.size());
      for (size_t k = 0; k < asg.size(); ++k)
        da[direct.axis_of(gp[i].vars[k])] = asg[k];
      CHECK(gp[i].at(asg) == doctest::Approx(direct.at(da)).epsilon(1e-12));
    });
  }
}

TEST_CASE("the multiplication exponent compensates grounding counts") {
  // g2 has three exclusive Y-groundings per X: phi1 enters with exponent 1/3
  Rng rng(33);
  auto rnd = [&] { return lvetest::pick_pot(rng); };
  Constraint xs = Constraint::product({{S("X"), S("xd")}}, {consts("x", 1)});
  Constraint xy = Constraint::product({{S("X"), S("xd")}, {S("Y"), S("yd")}},
                                      {consts("x", 1), consts("y", 3)});
  std::vector<double> t1{rnd(), rnd()};
  std::vector<double> t2{rnd(), rnd(), rnd(), rnd()};
  LiftedFactor g1 = make_lf({atom1("p", "X")}, t1, xs);
  LiftedFactor g2 = make_lf({atom1("p", "X"), atom2("q", "X", "Y")}, t2, xy);
  LiftedFactor prod = lifted_multiply(g1, g2);
  // the product of the three result groundings must equal phi1 * phi2^3 group
  GroundVarTable vars;
  auto gp = ground_lf(prod, vars, false);
  REQUIRE(gp.size() == 3);
  GroundFactor total = gf_unit();
  for (const auto& f : gp) total = gf_multiply(total, f);
  auto ga = ground_lf(g1, vars, false);
  auto gb = ground_lf(g2, vars, false);
  GroundFactor expected = ga[0];
  for (const auto& f : gb) expected = gf_multiply(expected, f);
  for_each_assignment(total.card, [&](const std::vector<uint64_t>& asg) {
    std::vector<uint64_t> da(asg.size());
    for (size_t k = 0; k < asg.size(); ++k)
      da[expected.axis_of(total.vars[k])] = asg[k];
    CHECK(total.at(asg) == doctest::Approx(expected.at(da)).epsilon(1e-9));
  });
}

TEST_CASE("lifted sum-out matches small ground eliminations") {
  // eliminate s from a two-variable factor
  Rng rng(44);
  auto rnd = [&] { return lvetest::pick_pot(rng); };
  std::vector<double> joint{rnd(), rnd(), rnd(), rnd()};
  LiftedFactor two = make_lf({atom0("s"), atom0("w")}, joint, Constraint::unit());
  LiftedFactor marg = lf_sum_out(two, 0);
  CHECK(marg.atoms.size() == 1);
  CHECK(marg.table.vals[0] == doctest::Approx(joint[0] + joint[2]));
  CHECK(marg.table.vals[1] == doctest::Approx(joint[1] + joint[3]));

  // a factor with only the summed atom collapses to a scalar
  LiftedFactor only = make_lf({atom0("s")}, {0.9, 0.1}, Constraint::unit());
  LiftedFactor scalar = lf_sum_out(only, 0);
  CHECK(scalar.atoms.empty());
  CHECK(scalar.table.vals[0] == doctest::Approx(1.0));

  // the exclusive-count exponent: phi'(w) = (sum_p phi)^n
  Constraint xs = Constraint::product({{S("X"), S("xd")}}, {consts("x", 3)});
  std::vector<double> t{rnd(), rnd(), rnd(), rnd()};
  LiftedFactor lifted = make_lf({atom0("w"), atom1("p", "X")}, t, xs);
  LiftedFactor out = lf_sum_out(lifted, 1);
  CHECK(out.table.vals[0] == doctest::Approx(std::pow(t[0] + t[1], 3.0)));
  CHECK(out.table.vals[1] == doctest::Approx(std::pow(t[2] + t[3], 3.0)));
}

TEST_CASE("the worked heterogeneous multiplication table") {
  // phi(p(X2),q(X2,Y2)) cells built from phi1^(1/3) and phi2^(1/2)
  Rng rng(55);
  auto rnd = [&] { return lvetest::pick_pot(rng); };
  std::vector<double> p1{rnd(), rnd()};
  std::vector<double> p2{rnd(), rnd(), rnd(), rnd()};
  // C1 carries a dangling logvar with conditional count 2
  Constraint c1 = Constraint::product({{S("X1"), S("xd")}, {S("Y1"), S("wd")}},
                                      {consts("x", 1), consts("w", 2)});
  Constraint c2 = Constraint::product({{S("X2"), S("xd")}, {S("Y2"), S("zd")}},
                                      {consts("x", 1), consts("z", 3)});
  LiftedFactor g1 = make_lf({atom1("p", "X1")}, p1, c1, {0});
  LiftedFactor g2 = make_lf({atom1("p", "X2"), atom2("q", "X2", "Y2")}, p2, c2,
                            {0});
  LiftedFactor out = het_multiply(g1, g2);
  REQUIRE(out.atoms.size() == 2);
  auto f1 = [&](int v) { return std::pow(p1[v], 1.0 / 3.0); };
  auto f2 = [&](int e, int q) { return std::pow(p2[2 * e + q], 0.5); };
  CHECK(out.table.vals[0] == doctest::Approx(f1(0) * f2(0, 0)).epsilon(1e-12));
  CHECK(out.table.vals[1] == doctest::Approx(f1(0) * f2(0, 1)).epsilon(1e-12));
  CHECK(out.table.vals[2] ==
        doctest::Approx(f1(0) * f2(1, 0) + f1(1) * f2(0, 0) + f1(1) * f2(1, 0))
            .epsilon(1e-12));
  CHECK(out.table.vals[3] ==
        doctest::Approx(f1(0) * f2(1, 1) + f1(1) * f2(0, 1) + f1(1) * f2(1, 1))
            .epsilon(1e-12));
  // the joined constraint covers both exclusive columns
  CHECK(out.constraint.size() == 6);
}

TEST_CASE("heterogeneous multiplication with every atom convergent") {
  Rng rng(66);
  auto rnd = [&] { return lvetest::pick_pot(rng); };
  Constraint cxy = Constraint::product({{S("X1"), S("xd")}, {S("Y1"), S("yd")}},
                                       {consts("x", 2), consts("y", 2)});
  Constraint cxy2 = Constraint::product({{S("X2"), S("xd")}, {S("Y2"), S("yd")}},
                                        {consts("x", 2), consts("y", 2)});
  std::vector<double> p1{rnd(), rnd(), rnd(), rnd()};
  std::vector<double> p2{rnd(), rnd(), rnd(), rnd()};
  LiftedFactor g1 =
      make_lf({atom1("p", "X1"), atom2("q", "X1", "Y1")}, p1, cxy, {0, 1});
  LiftedFactor g2 =
      make_lf({atom1("p", "X2"), atom2("q", "X2", "Y2")}, p2, cxy2, {0, 1});
  LiftedFactor out = het_multiply(g1, g2);
  auto v1 = [&](int a, int b) { return p1[2 * a + b]; };
  auto v2 = [&](int a, int b) { return p2[2 * a + b]; };
  CHECK(out.table.vals[0] == doctest::Approx(v1(0, 0) * v2(0, 0)).epsilon(1e-12));
  CHECK(out.table.vals[1] ==
        doctest::Approx(v1(0, 0) * v2(0, 1) + v1(0, 1) * v2(0, 0) +
                        v1(0, 1) * v2(0, 1))
            .epsilon(1e-12));
  CHECK(out.table.vals[2] ==
        doctest::Approx(v1(1, 0) * v2(0, 0) + v1(0, 0) * v2(1, 0) +
                        v1(1, 0) * v2(1, 0))
            .epsilon(1e-12));
  // the nine-term cell
  double tt = v1(0, 0) * v2(1, 1) + v1(0, 1) * v2(1, 0) + v1(0, 1) * v2(1, 1) +
              v1(1, 0) * v2(0, 1) + v1(1, 1) * v2(0, 0) + v1(1, 1) * v2(0, 1) +
              v1(1, 0) * v2(1, 1) + v1(1, 1) * v2(1, 0) + v1(1, 1) * v2(1, 1);
  CHECK(out.table.vals[3] == doctest::Approx(tt).epsilon(1e-12));
  CHECK(out.convergent == std::vector<int>{0, 1});
}

TEST_CASE("aligned heterogeneous multiplication equals the ground operator") {
  Rng rng(77);
  for (int round = 0; round < 30; ++round) {
    auto rnd = [&] { return lvetest::pick_pot(rng); };
    int nx = lvetest::pick(rng, 1, 3);
    Constraint xs = Constraint::product({{S("X"), S("xd")}}, {consts("x", nx)});
    std::vector<double> p1{rnd(), rnd(), rnd(), rnd()};
    std::vector<double> p2{rnd(), rnd(), rnd(), rnd()};
    LiftedFactor g1 = make_lf({atom1("e", "X"), atom1("u", "X")}, p1, xs, {0});
    LiftedFactor g2 = make_lf({atom1("e", "X"), atom1("v", "X")}, p2, xs, {0});
    LiftedFactor out = het_multiply(g1, g2);
    GroundVarTable vars;
    auto go = ground_lf(out, vars, true);
    auto ga = ground_lf(g1, vars, true);
    auto gb = ground_lf(g2, vars, true);
    REQUIRE(static_cast<int>(go.size()) == nx);
    for (int i = 0; i < nx; ++i) {
      GroundFactor direct = gf_het_multiply(ga[i], gb[i]);
      for_each_assignment(go[i].card, [&](const std::vector<uint64_t>& asg) {
        std::vector<uint64_t> da(asg.size());
        for (size_t k = 0; k < asg.size(); ++k)
          da[direct.axis_of(go[i].vars[k])] = asg[k];
        CHECK(go[i].at(asg) == doctest::Approx(direct.at(da)).epsilon(1e-9));
      });
    }
  }
}

TEST_CASE("the worked heterogeneous sum-out table") {
  Rng rng(88);
  auto rnd = [&] { return lvetest::pick_pot(rng); };
  Constraint cxy = Constraint::product({{S("X"), S("xd")}, {S("Y"), S("yd")}},
                                       {consts("x", 1), consts("y", 2)});
  std::vector<double> t(8);
  for (auto& v : t) v = rnd();
  LiftedFactor g =
      make_lf({atom0("r"), atom1("p", "X"), atom2("q", "X", "Y")}, t, cxy,
              {0, 1});
  uint64_t r = 0;
  LiftedFactor out = lf_sum_out(g, 2, &r);
  CHECK(r == 2);
  auto phi = [&](int a, int b, int c) { return t[4 * a + 2 * b + c]; };
  double ff = std::pow(phi(0, 0, 0) + phi(0, 0, 1), 2.0);
  double ft = std::pow(phi(0, 1, 0) + phi(0, 1, 1) + phi(0, 0, 0) + phi(0, 0, 1),
                       2.0) -
              ff;
  double tf = std::pow(phi(1, 0, 0) + phi(1, 0, 1) + phi(0, 0, 0) + phi(0, 0, 1),
                       2.0) -
              ff;
  double tt = std::pow(phi(1, 1, 0) + phi(1, 1, 1) + phi(1, 0, 0) + phi(1, 0, 1) +
                           phi(0, 1, 0) + phi(0, 1, 1) + phi(0, 0, 0) +
                           phi(0, 0, 1),
                       2.0) -
              tf - ft - ff;
  CHECK(out.table.vals[0] == doctest::Approx(ff).epsilon(1e-12));
  CHECK(out.table.vals[1] == doctest::Approx(ft).epsilon(1e-12));
  CHECK(out.table.vals[2] == doctest::Approx(tf).epsilon(1e-12));
  CHECK(out.table.vals[3] == doctest::Approx(tt).epsilon(1e-12));
}

TEST_CASE("heterogeneous sum-out equals grounding then eliminating") {
  Rng rng(999);
  for (int round = 0; round < 40; ++round) {
    auto rnd = [&] { return lvetest::pick_pot(rng); };
    int nx = lvetest::pick(rng, 1, 2);
    int r = lvetest::pick(rng, 1, 3);
    Constraint cxy = Constraint::product(
        {{S("X"), S("xd")}, {S("Y"), S("yd")}},
        {consts("x", nx), consts("y", r)});
    bool with_b = lvetest::pick(rng, 0, 1) == 1;
    std::vector<FactorAtom> atoms{atom0("r0"), atom1("p", "X"),
                                  atom2("q", "X", "Y")};
    if (with_b) atoms.push_back(atom1("s", "X"));
    uint64_t cells = 1;
    for (const auto& fa : atoms) cells *= fa.range_size();
    std::vector<double> t(cells);
    for (auto& v : t) v = rnd();
    LiftedFactor g = make_lf(atoms, t, cxy, {0, 1});
    LiftedFactor out = lf_sum_out(g, 2);

    GroundVarTable vars;
    auto gout = ground_lf(out, vars, true);
    auto gin = ground_lf(g, vars, true);
    REQUIRE(static_cast<int>(gout.size()) == nx);
    // ground side: eliminate each q(x,y) from its factor, then combine the
    // per-x results with the heterogeneous operator
    std::map<int, std::vector<GroundFactor>> by_x;
    for (auto& f : gin) {
      int qvar = -1;
      for (int v : f.vars)
        if (vars.atom(v).functor == S("q")) qvar = v;
      REQUIRE(qvar >= 0);
      GroundFactor elim = gf_sum_out(f, qvar);
      int pvar = -1;
      for (int v : elim.vars)
        if (vars.atom(v).functor == S("p")) pvar = v;
      by_x[pvar].push_back(elim);
    }
    size_t xi = 0;
    for (auto& [pvar, fs] : by_x) {
      GroundFactor combined = fs[0];
      for (size_t i = 1; i < fs.size(); ++i)
        combined = gf_het_multiply(combined, fs[i]);
      const GroundFactor& lifted = gout[xi++];
      for_each_assignment(lifted.card, [&](const std::vector<uint64_t>& asg) {
        std::vector<uint64_t> da(asg.size());
        for (size_t k = 0; k < asg.size(); ++k)
          da[combined.axis_of(lifted.vars[k])] = asg[k];
        CHECK(lifted.at(asg) == doctest::Approx(combined.at(da)).epsilon(1e-9));
      });
    }
  }
}

TEST_CASE("heterogeneous sum-out of a counting formula applies Mul") {
  // one convergent atom, target CRV over 3 Boolean constituents
  Rng rng(1212);
  auto rnd = [&] { return lvetest::pick_pot(rng); };
  Symbol Y = S("Y");
  Constraint ys = Constraint::product({{Y, S("yd")}}, {consts("y", 3)});
  Atom qa{S("q"), {var_arg(Y)}, bool_range()};
  FactorAtom crv = FactorAtom::counting(qa, Y, 3, ys);
  HistogramRange hr{3, 2};
  std::vector<double> t(2 * hr.size());
  for (auto& v : t) v = rnd();
  LiftedFactor g = make_lf({atom0("e"), crv}, t, Constraint::unit(), {0});
  LiftedFactor out = lf_sum_out(g, 1);
  // phi'(f) = sum_h Mul(h) phi(f,h); phi'(t) = sum over both minus phi'(f)
  double mf = 0.0, mt = 0.0;
  for (uint64_t h = 0; h < hr.size(); ++h) {
    mf += mul(hr.at(h)) * t[h];
    mt += mul(hr.at(h)) * t[hr.size() + h];
  }
  CHECK(out.table.vals[0] == doctest::Approx(mf).epsilon(1e-12));
  CHECK(out.table.vals[1] == doctest::Approx(mf + mt - mf).epsilon(1e-9));
}

TEST_CASE("counting conversion reparametrizes a product of groundings") {
  Rng rng(1313);
  auto rnd = [&] { return lvetest::pick_pot(rng); };
  Constraint ps = Constraint::product({{S("P"), S("pd")}}, {consts("p", 2)});
  std::vector<double> t{rnd(), rnd(), rnd(), rnd()};
  LiftedFactor g = make_lf({atom0("s"), atom1("at", "P")}, t, ps);
  LiftedFactor converted = counting_convert(g, S("P"));
  REQUIRE(converted.atoms[1].is_crv);
  CHECK(converted.atoms[1].range_size() == 3);
  CHECK(converted.constraint.arity() == 0);

  // ground both and compare joints over (s, at(p1), at(p2))
  GroundVarTable vars;
  auto gc = ground_lf(converted, vars, false);
  auto go = ground_lf(g, vars, false);
  REQUIRE(gc.size() == 1);
  GroundFactor direct = gf_unit();
  for (const auto& f : go) direct = gf_multiply(direct, f);
  for_each_assignment(gc[0].card, [&](const std::vector<uint64_t>& asg) {
    std::vector<uint64_t> da(asg.size());
    for (size_t k = 0; k < asg.size(); ++k)
      da[direct.axis_of(gc[0].vars[k])] = asg[k];
    CHECK(gc[0].at(asg) == doctest::Approx(direct.at(da)).epsilon(1e-12));
  });

  // post-conversion sum-out of s equals the ground elimination
  LiftedFactor after = lf_sum_out(converted, 0);
  int svar = vars.find({S("s"), {}});
  GroundFactor ground_after = gf_sum_out(direct, svar);
  GroundVarTable vars2;
  auto ga = ground_lf(after, vars2, false);
  REQUIRE(ga.size() == 1);
  // compare over the shared constituents
  for_each_assignment(ga[0].card, [&](const std::vector<uint64_t>& asg) {
    std::vector<uint64_t> da(asg.size());
    for (size_t k = 0; k < asg.size(); ++k) {
      const GroundAtom& atom = vars2.atom(ga[0].vars[k]);
      da[ground_after.axis_of(vars.find(atom))] = asg[k];
    }
    CHECK(ga[0].at(asg) == doctest::Approx(ground_after.at(da)).epsilon(1e-9));
  });

  // a single grounding converts to a two-histogram relabeling
  Constraint one = Constraint::product({{S("P"), S("pd")}}, {consts("p", 1)});
  LiftedFactor g1 = make_lf({atom0("s"), atom1("at", "P")}, t, one);
  LiftedFactor conv1 = counting_convert(g1, S("P"));
  CHECK(conv1.atoms[1].range_size() == 2);
  // histograms enumerate all-t first: the table is the original up to the
  // range relabeling
  HistogramRange hr1{1, 2};
  for (uint64_t s_val = 0; s_val < 2; ++s_val)
    for (uint64_t h = 0; h < 2; ++h) {
      uint64_t orig_v = hr1.at(h)[1] == 1 ? 1 : 0;
      CHECK(conv1.table.vals[2 * s_val + h] ==
            doctest::Approx(g1.table.vals[2 * s_val + orig_v]));
    }
}

TEST_CASE("counting conversion preconditions") {
  Constraint ps = Constraint::product({{S("P"), S("pd")}}, {consts("p", 2)});
  LiftedFactor two =
      make_lf({atom1("u", "P"), atom1("v", "P")}, {1, 2, 3, 4}, ps);
  CHECK_THROWS_AS(counting_convert(two, S("P")), ModelError);
  LiftedFactor het =
      make_lf({atom1("u", "P"), atom0("e")}, {1, 2, 3, 4}, ps, {1});
  CHECK_THROWS_AS(counting_convert(het, S("P")), ModelError);
}

TEST_CASE("queries against constant instances split the constraint") {
  // query attends(p1) on the workshop model: the person column shatters
  ProbLogProgram p = parse_problog(workshops_attributes_model(3, 2).text);
  GroundAtom q{S("attends"), {intern("p1")}};
  double oracle = enumerate_query(p, q, {}, 40);
  InferOptions opts;
  opts.engine = EngineKind::Lifted;
  CHECK(infer_problog(p, q, {}, opts).probs[1] ==
        doctest::Approx(oracle).epsilon(1e-9));
}

TEST_CASE("overlapping constraints are shattered into a partition") {
  // two factors over {x1,x2} and {x2,x3} for the same predicate
  Model m = parse_pfl(R"(
bayes p(X) ; [0.6, 0.4] ; [da(X)].
bayes w(X), p(X) ; [0.9, 0.2, 0.1, 0.8] ; [db(X)].
da(x1). da(x2).
db(x2). db(x3).
)");
  GroundAtom q{S("w"), {intern("x2")}};
  InferOptions opts;
  opts.engine = EngineKind::VE1;
  double expected = infer_model(m, q, {}, opts).probs[1];
  opts.engine = EngineKind::Lifted;
  CHECK(infer_model(m, q, {}, opts).probs[1] ==
        doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("a model without heterogeneous factors runs as plain lifted VE") {
  Model m = parse_pfl(R"(
bayes attends(P), at(P,A) ; [0.7, 0.3, 0.3, 0.7] ; [person(P),attribute(A)].
bayes series, attends(P) ; [0.51, 0.49, 0.49, 0.51] ; [person(P)].
bayes at(P,A) ; [0.8, 0.2] ; [person(P),attribute(A)].
person(p1). person(p2). person(p3).
attribute(a1). attribute(a2).
)");
  GroundAtom q{S("series"), {}};
  InferOptions opts;
  std::vector<OpTrace> trace;
  opts.trace = &trace;
  opts.engine = EngineKind::Lifted;
  double lifted = infer_model(m, q, {}, opts).probs[1];
  opts.trace = nullptr;
  opts.engine = EngineKind::VE1;
  double ground = infer_model(m, q, {}, opts).probs[1];
  CHECK(lifted == doctest::Approx(ground).epsilon(1e-9));
  for (const auto& t : trace) {
    CHECK(t.tag != "het-sum-out");
    CHECK(t.tag != "het-multiply");
    CHECK(t.tag != "propositionalize");
  }
}

TEST_CASE("evidence conditioning agrees with the enumeration oracle") {
  ProbLogProgram p = parse_problog(workshops_attributes_model(2, 2).text);
  GroundAtom q{S("series"), {}};
  EvidenceSpec ev{{GroundAtom{S("sa"), {intern("p1")}}, sym_true()},
                  {GroundAtom{S("at"), {intern("p2"), intern("a1")}},
                   sym_false()}};
  InferOptions opts;
  opts.engine = EngineKind::Enum;
  double oracle = infer_problog(p, q, ev, opts).probs[1];
  for (EngineKind e : {EngineKind::VE, EngineKind::VE1, EngineKind::Lifted}) {
    opts.engine = e;
    CHECK(infer_problog(p, q, ev, opts).probs[1] ==
          doctest::Approx(oracle).epsilon(1e-9));
  }
}

TEST_CASE("the lifted operator sequence does not depend on the domain size") {
  auto trace_for = [&](uint64_t m) {
    ProbLogProgram p =
        parse_problog(workshops_attributes_model(50, m).text);
    Model model = translate(p);
    std::vector<OpTrace> trace;
    LiftedOptions lo;
    lo.trace = &trace;
    lifted_query(model, {S("series"), {}}, {}, lo);
    return trace;
  };
  auto t1 = trace_for(10);
  auto t2 = trace_for(20);
  REQUIRE(t1.size() == t2.size());
  for (size_t i = 0; i < t1.size(); ++i) {
    CHECK(t1[i].tag == t2[i].tag);
    CHECK(t1[i].shape == t2[i].shape);
  }
  bool any_het = false;
  for (const auto& t : t1) any_het |= t.tag == "het-sum-out";
  CHECK(any_het);
}

TEST_CASE("heterogeneous sum-out output is deterministic") {
  Rng rng(31415);
  auto rnd = [&] { return lvetest::pick_pot(rng); };
  Constraint cxy = Constraint::product({{S("X"), S("xd")}, {S("Y"), S("yd")}},
                                       {consts("x", 2), consts("y", 2)});
  std::vector<double> t(16);
  for (auto& v : t) v = rnd();
  LiftedFactor g = make_lf(
      {atom0("r"), atom1("p", "X"), atom2("q", "X", "Y"), atom0("b")}, t, cxy,
      {0, 1});
  LiftedFactor a = lf_sum_out(g, 2);
  LiftedFactor b = lf_sum_out(g, 2);
  CHECK(a.table.vals == b.table.vals);
}

TEST_CASE("shattering an already-shattered model changes nothing") {
  ProbLogProgram p = parse_problog(workshops_attributes_model(3, 2).text);
  Model m = translate(p);
  sched_detail::Pool pool;
  for (const auto& pf : m.f1) {
    LiftedFactor lf{pf.atoms, pf.table, pf.constraint, {}};
    if (lf_canonicalize(lf)) pool.f1.push_back(std::move(lf));
  }
  for (const auto& pf : m.f2) {
    LiftedFactor lf{pf.atoms, pf.table, pf.constraint, pf.convergent};
    if (lf_canonicalize(lf)) pool.f2.push_back(std::move(lf));
  }
  size_t n1 = pool.f1.size(), n2 = pool.f2.size();
  // the query atom series is ground, so the model is already shattered
  sched_detail::shatter(pool, {GroundAtom{S("series"), {}}}, {});
  CHECK(pool.f1.size() == n1);
  CHECK(pool.f2.size() == n2);
}

TEST_CASE("non-Boolean ranges run through both engines") {
  Model m = parse_pfl(R"(
range w/1 = [low, mid, high].
bayes w(X) ; [0.2, 0.3, 0.5] ; [d(X)].
bayes h, w(X) ; [0.9, 0.6, 0.2, 0.1, 0.4, 0.8] ; [d(X)].
d(x1). d(x2).
)");
  GroundAtom q{S("h"), {}};
  InferOptions opts;
  opts.engine = EngineKind::VE1;
  double ground = infer_model(m, q, {}, opts).probs[1];
  opts.engine = EngineKind::Lifted;
  double lifted = infer_model(m, q, {}, opts).probs[1];
  CHECK(lifted == doctest::Approx(ground).epsilon(1e-9));

  EvidenceSpec ev{{GroundAtom{S("w"), {intern("x1")}}, intern("mid")}};
  opts.engine = EngineKind::VE1;
  double g2 = infer_model(m, q, ev, opts).probs[1];
  opts.engine = EngineKind::Lifted;
  double l2 = infer_model(m, q, ev, opts).probs[1];
  CHECK(l2 == doctest::Approx(g2).epsilon(1e-9));
  CHECK(std::abs(g2 - ground) > 1e-6);  // conditioning moved the posterior
}

TEST_CASE("conditioning agrees across engines on random programs") {
  Rng rng(0xE71DE);
  int checked = 0;
  for (int round = 0; round < 40 && checked < 20; ++round) {
    lvetest::RandomProgram rp = lvetest::random_program(rng);
    ProbLogProgram prog = parse_problog(rp.text);
    GroundProgram g = ground_program(prog);
    if (g.fact_atoms.empty()) continue;
    GroundAtom q = lvetest::parse_atom(rp.query);
    GroundAtom ev_atom =
        g.fact_atoms[lvetest::pick(rng, 0, (int)g.fact_atoms.size() - 1)];
    bool val = lvetest::pick(rng, 0, 1) == 1;
    double oracle;
    try {
      oracle = enumerate_query(prog, q, {{ev_atom, val}});
    } catch (const EvidenceError&) {
      continue;  // evidence had probability zero
    }
    EvidenceSpec ev{{ev_atom, val ? sym_true() : sym_false()}};
    InferOptions opts;
    for (EngineKind e : {EngineKind::VE1, EngineKind::Lifted}) {
      opts.engine = e;
      CHECK(infer_problog(prog, q, ev, opts).probs[1] ==
            doctest::Approx(oracle).epsilon(1e-9));
    }
    ++checked;
  }
  CHECK(checked >= 20);
}

TEST_CASE("undirected factor models normalize correctly") {
  Model m = parse_pfl(R"(
markov u(X), v(X) ; [1.0, 2.0, 3.0, 4.0] ; [d(X)].
markov v(X), w ; [0.5, 2.0, 1.5, 0.25] ; [d(X)].
d(c1). d(c2). d(c3).
)");
  InferOptions opts;
  for (const char* atom : {"u(c2)", "w"}) {
    GroundAtom q = lvetest::parse_atom(atom);
    opts.engine = EngineKind::VE1;
    double ground = infer_model(m, q, {}, opts).probs[1];
    opts.engine = EngineKind::Lifted;
    double lifted = infer_model(m, q, {}, opts).probs[1];
    CHECK(lifted == doctest::Approx(ground).epsilon(1e-9));
  }
}

TEST_CASE("evidence on effects informs causes") {
  ProbLogProgram p = parse_problog(workshops_attributes_model(2, 2).text);
  GroundAtom q{S("at"), {intern("p1"), intern("a1")}};
  EvidenceSpec ev{{GroundAtom{S("attends"), {intern("p1")}}, sym_true()}};
  InferOptions opts;
  opts.engine = EngineKind::Enum;
  double prior = infer_problog(p, q, {}, opts).probs[1];
  double oracle = infer_problog(p, q, ev, opts).probs[1];
  CHECK(prior == doctest::Approx(0.3));
  CHECK(oracle > prior + 0.1);  // observing the effect raises the cause
  for (EngineKind e : {EngineKind::VE, EngineKind::VE1, EngineKind::Lifted}) {
    opts.engine = e;
    CHECK(infer_problog(p, q, ev, opts).probs[1] ==
          doctest::Approx(oracle).epsilon(1e-9));
  }
}

TEST_CASE("deterministic facts and fact-only queries") {
  ProbLogProgram p = parse_problog(
      "1.0::sure. 0.0::never. q :- sure, \\+ never. 0.4::maybe(X) :- d(X). "
      "d(c1). d(c2).");
  for (EngineKind e : {EngineKind::Enum, EngineKind::VE, EngineKind::VE1,
                       EngineKind::Lifted}) {
    InferOptions opts;
    opts.engine = e;
    CHECK(infer_problog(p, lvetest::parse_atom("q"), {}, opts).probs[1] ==
          doctest::Approx(1.0));
    CHECK(infer_problog(p, lvetest::parse_atom("maybe(c2)"), {}, opts)
              .probs[1] == doctest::Approx(0.4));
  }
}

TEST_CASE("random factor models agree between lifted and ground engines") {
  // direct factor-model fuzz: overlapping subdomain constraints, mixed
  // bayes/markov kinds, identity-linked het/deputy chains
  Rng rng(0xF022);
  int checked = 0;
  for (int round = 0; round < 60 && checked < 30; ++round) {
    int nd = lvetest::pick(rng, 2, 3);
    std::string text;
    for (int i = 1; i <= nd; ++i) text += "d(c" + std::to_string(i) + ").\n";
    for (int s = 0; s < 2; ++s) {
      int picked = 0;
      for (int i = 1; i <= nd; ++i)
        if (lvetest::pick(rng, 0, 1)) {
          text += "sub" + std::to_string(s) + "(c" + std::to_string(i) + ").\n";
          ++picked;
        }
      if (picked == 0)
        text += "sub" + std::to_string(s) + "(c1).\n";
    }
    auto tbl = [&](int cells) {
      std::string t = "[";
      for (int i = 0; i < cells; ++i)
        t += (i ? "," : "") + std::to_string(lvetest::pick_pot(rng));
      return t + "]";
    };
    text += "bayes u(X) ; " + tbl(2) + " ; [d(X)].\n";
    text += "markov u(X), v(X) ; " + tbl(4) + " ; [sub0(X)].\n";
    text += "bayes v(X) ; " + tbl(2) + " ; [d(X)].\n";
    text += "het e1, u(X) ; [1.0,0.0,0.0,1.0] ; [sub1(X)].\n";
    text += "deputy e, e1 ; [].\n";
    Model m;
    try {
      m = parse_pfl(text);
    } catch (const Error&) {
      continue;
    }
    GroundAtom q = lvetest::pick(rng, 0, 1) ? GroundAtom{S("e"), {}}
                                            : GroundAtom{S("u"), {intern("c1")}};
    InferOptions opts;
    opts.engine = EngineKind::VE1;
    double ground = infer_model(m, q, {}, opts).probs[1];
    opts.engine = EngineKind::Lifted;
    double lifted = infer_model(m, q, {}, opts).probs[1];
    CHECK(lifted == doctest::Approx(ground).epsilon(1e-9));
    ++checked;
  }
  CHECK(checked >= 30);
}
