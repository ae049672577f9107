#include "fedstl/error.hpp"
#include "fedstl/projection.hpp"

#include "../support/generators.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

namespace fedstl {
namespace {

const std::vector<std::string> kX{"x"};

LinearConstraint box(std::size_t step, Cmp cmp, double bound) {
  return LinearConstraint{step, {{0, 1.0}}, cmp, bound};
}

bool same(const LinearConstraint& a, const LinearConstraint& b) {
  return a.step == b.step && a.terms == b.terms && a.cmp == b.cmp && a.bound == b.bound;
}

void expect_clause(const Clause& c, std::vector<LinearConstraint> expected) {
  ASSERT_EQ(c.constraints.size(), expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_TRUE(same(c.constraints[i], expected[i])) << i;
}

TEST(Dnf, AlwaysIsOneClause) {
  auto d = to_dnf(parse("G[0,1](x >= 2)"), kX, 2);
  ASSERT_EQ(d.clauses.size(), 1u);
  expect_clause(d.clauses[0], {box(0, Cmp::Ge, 2), box(1, Cmp::Ge, 2)});
}

TEST(Dnf, EventuallyIsOneClausePerStep) {
  auto d = to_dnf(parse("F[0,1](x >= 2)"), kX, 2);
  ASSERT_EQ(d.clauses.size(), 2u);
  expect_clause(d.clauses[0], {box(0, Cmp::Ge, 2)});
  expect_clause(d.clauses[1], {box(1, Cmp::Ge, 2)});
}

TEST(Dnf, UntilExample) {
  auto d = to_dnf(parse("(x >= 0) U[0,2] (x >= 5)"), kX, 3);
  ASSERT_EQ(d.clauses.size(), 3u);
  expect_clause(d.clauses[0], {box(0, Cmp::Ge, 5)});
  expect_clause(d.clauses[1], {box(0, Cmp::Ge, 0), box(1, Cmp::Ge, 5)});
  expect_clause(d.clauses[2], {box(0, Cmp::Ge, 0), box(1, Cmp::Ge, 0), box(2, Cmp::Ge, 5)});
}

TEST(Dnf, ImplicationAndNegation) {
  auto d = to_dnf(parse("!(x > 1) -> x >= 3"), kX, 1);
  ASSERT_EQ(d.clauses.size(), 2u);
  expect_clause(d.clauses[0], {box(0, Cmp::Gt, 1)});
  expect_clause(d.clauses[1], {box(0, Cmp::Ge, 3)});
}

TEST(Dnf, Errors) {
  EXPECT_THROW(to_dnf(parse("G[0,2](x >= 0)"), kX, 2), RangeError);
  EXPECT_THROW(to_dnf(parse("!((x >= 0) U[0,1] (x >= 1))"), kX, 3), UnsupportedError);
  EXPECT_THROW(to_dnf(parse("y >= 0"), kX, 1), RangeError);
  // 2^13 clauses.
  std::string big = "F[0,1](x >= 0)";
  for (int i = 1; i < 13; ++i) big += " & F[" + std::to_string(2 * i) + "," + std::to_string(2 * i + 1) + "](x >= 0)";
  EXPECT_THROW(to_dnf(parse(big), kX, 26), Error);
}

TEST(Dnf, DumpFormat) {
  auto d = to_dnf(parse("G[0,1](x1 - 2*x2 >= 3)"), {"x1", "x2"}, 2);
  EXPECT_EQ(dump_clause(d.clauses[0], {"x1", "x2"}), "t=0  x1 - 2*x2 >= 3\nt=1  x1 - 2*x2 >= 3\n");
}

TEST(Project, IntervalClamp) {
  Clause c{{box(0, Cmp::Ge, 2), box(0, Cmp::Le, 5)}};
  auto p = project_clause(c, Trace::univariate("x", {7}));
  ASSERT_TRUE(p.feasible);
  EXPECT_EQ(p.trace, Trace::univariate("x", {5}));
  EXPECT_EQ(p.cost, 2.0);
}

TEST(Project, AlreadySatisfied) {
  auto p = project_clause(Clause{{box(0, Cmp::Ge, 5)}}, Trace::univariate("x", {5}));
  EXPECT_EQ(p.trace, Trace::univariate("x", {5}));
  EXPECT_EQ(p.cost, 0.0);
}

TEST(Project, LinearTieRaisesFirstTerm) {
  Clause c{{LinearConstraint{0, {{0, 1.0}, {1, -1.0}}, Cmp::Ge, 3}}};
  auto p = project_clause(c, Trace({"x1", "x2"}, {4, 2}));
  ASSERT_TRUE(p.feasible);
  EXPECT_EQ(p.trace, Trace({"x1", "x2"}, {5, 2}));
  EXPECT_EQ(p.cost, 1.0);
}

TEST(Project, LinearRespectsBox) {
  // x1 capped at 4.5, so the rest comes from lowering x2.
  Clause c{{LinearConstraint{0, {{0, 1.0}, {1, -1.0}}, Cmp::Ge, 3},
            LinearConstraint{0, {{0, 1.0}}, Cmp::Le, 4.5}}};
  auto p = project_clause(c, Trace({"x1", "x2"}, {4, 2}));
  ASSERT_TRUE(p.feasible);
  EXPECT_DOUBLE_EQ(p.trace.at(0, 0), 4.5);
  EXPECT_DOUBLE_EQ(p.trace.at(0, 1), 1.5);
  EXPECT_DOUBLE_EQ(p.cost, 1.0);
}

TEST(Project, TwoHalfspacesExact) {
  // x + y >= 4 and x - y >= 0 from the origin: every optimum costs 4.
  Clause c{{LinearConstraint{0, {{0, 1.0}, {1, 1.0}}, Cmp::Ge, 4},
            LinearConstraint{0, {{0, 1.0}, {1, -1.0}}, Cmp::Ge, 0}}};
  auto p = project_clause(c, Trace({"x", "y"}, {0, 0}));
  ASSERT_TRUE(p.feasible);
  EXPECT_TRUE(c.satisfied(p.trace));
  EXPECT_NEAR(p.cost, 4.0, 1e-12);
}

TEST(Project, Infeasible) {
  Clause c{{box(0, Cmp::Ge, 5), box(0, Cmp::Le, 2)}};
  auto p = project_clause(c, Trace::univariate("x", {3}));
  EXPECT_FALSE(p.feasible);
  Clause open{{box(0, Cmp::Gt, 2), box(0, Cmp::Lt, 2)}};
  EXPECT_FALSE(project_clause(open, Trace::univariate("x", {3})).feasible);
}

TEST(Loss, Examples) {
  EXPECT_DOUBLE_EQ(property_loss(parse("G[0,2](x <= 3)"), Trace::univariate("x", {1, 2, 5}), 3), 2.0);
  EXPECT_DOUBLE_EQ(property_loss(parse("F[0,1](x >= 4)"), Trace::univariate("x", {1, 3}), 2), 1.0);
  EXPECT_EQ(property_loss(parse("F[0,1](x >= 4)"), Trace::univariate("x", {1, 5}), 2), 0.0);
  EXPECT_EQ(property_loss(parse("true"), Trace::univariate("x", {1, 5}), 2), 0.0);
}

TEST(Teacher, Examples) {
  EXPECT_EQ(teacher_correct(parse("G[0,2](x <= 3)"), Trace::univariate("x", {1, 2, 5}), 3),
            Trace::univariate("x", {1, 2, 3}));
  Trace y = Trace::univariate("x", {1, 2});
  EXPECT_EQ(teacher_correct(parse("G[0,1](x <= 3)"), y, 2), y);
  ProjectionOptions o;
  o.delta = 1e-3;
  Trace t = teacher_correct(parse("F[0,1](x > 4)"), Trace::univariate("x", {1, 3}), 2, o);
  EXPECT_EQ(t.at(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(t.at(1, 0), 4.001);
}

TEST(Teacher, TiesGoToLowestClause) {
  Trace t = teacher_correct(parse("F[0,1](x >= 4)"), Trace::univariate("x", {3, 3}), 2);
  EXPECT_EQ(t, Trace::univariate("x", {4, 3}));
}

TEST(Teacher, AllInfeasible) {
  EXPECT_THROW(teacher_correct(parse("x >= 5 & x <= 2"), Trace::univariate("x", {3}), 1),
               InfeasibleError);
}

TEST(Compiled, IndependentConjunctsFactor) {
  std::string text = "F[0,1](x >= 0)";
  for (int i = 1; i < 12; ++i) text += " & F[" + std::to_string(2 * i) + "," + std::to_string(2 * i + 1) + "](x >= 0)";
  CompiledProperty p(parse(text), kX, 24);
  EXPECT_EQ(p.component_count(), 12u);
  EXPECT_EQ(p.clause_count(), 4096u);
  std::vector<double> y(24, -1.0);
  EXPECT_DOUBLE_EQ(p.loss(Trace::univariate("x", y)), 12.0);
}

TEST(Compiled, ShapeChecks) {
  CompiledProperty p(parse("G[0,1](x >= 0)"), kX, 2);
  EXPECT_THROW(p.loss(Trace::univariate("x", {1})), ShapeError);
  EXPECT_THROW(p.loss(Trace::univariate("y", {1, 1})), ShapeError);
  EXPECT_THROW(CompiledProperty(parse("G[0,2](x >= 0)"), kX, 2), RangeError);
}

// ---------------------------------------------------------------------------
// Properties

testing::FormulaShape fragment_shape(std::vector<std::string> vars, int budget) {
  testing::FormulaShape s;
  s.vars = std::move(vars);
  s.projection_fragment = true;
  s.allow_linear = s.vars.size() > 1;
  s.horizon_budget = budget;
  s.max_depth = 3;
  return s;
}

TEST(DnfProperty, EquivalentToSource) {
  testing::Rng rng(99);
  auto shape = fragment_shape({"x", "y"}, 4);
  for (int i = 0; i < 500; ++i) {
    Formula f = testing::random_formula(rng, shape);
    const std::size_t horizon = static_cast<std::size_t>(horizon_of(f)) + 1;
    DnfFormula d = to_dnf(f, shape.vars, horizon);
    for (int k = 0; k < 5; ++k) {
      Trace tr = testing::random_trace(rng, shape.vars, horizon, -4, 4, k % 2 == 0);
      ASSERT_EQ(d.satisfied(tr), eval_bool(f, tr)) << render(f);
      double r = robustness(f, tr);
      double rd = d.robustness(tr);
      if (std::isinf(r)) {
        ASSERT_EQ(r, rd);
      } else {
        ASSERT_NEAR(r, rd, 1e-9) << render(f);
      }
    }
  }
}

TEST(TeacherProperty, AlwaysSatisfiesAndZeroLossIffSatisfied) {
  testing::Rng rng(3);
  auto shape = fragment_shape({"x", "y"}, 4);
  int checked = 0;
  for (int i = 0; i < 500; ++i) {
    Formula f = testing::random_formula(rng, shape);
    const std::size_t horizon = static_cast<std::size_t>(horizon_of(f)) + 1;
    CompiledProperty p(f, shape.vars, horizon);
    Trace y = testing::random_trace(rng, shape.vars, horizon, -4, 4, i % 2 == 0);
    Projection c = [&] {
      try {
        return p.correct(y);
      } catch (const InfeasibleError&) {
        return Projection{y, 0.0, false};
      }
    }();
    if (!c.feasible) continue;
    ++checked;
    ASSERT_TRUE(eval_bool(f, c.trace)) << render(f);
    ASSERT_EQ(c.cost == 0.0, eval_bool(f, y)) << render(f);
    ASSERT_EQ(p.loss(y), c.cost);
  }
  EXPECT_GT(checked, 400);
}

TEST(LossProperty, MidpointConvexOnConjunctiveAlways) {
  testing::Rng rng(17);
  for (int i = 0; i < 300; ++i) {
    Formula f = testing::random_convex_formula(rng, "x", 3, 3);
    const std::size_t h = static_cast<std::size_t>(horizon_of(f)) + 1;
    CompiledProperty p(f, kX, h);
    Trace a = testing::random_trace(rng, kX, h, -5, 5, false);
    Trace b = testing::random_trace(rng, kX, h, -5, 5, false);
    std::vector<double> mid(h);
    for (std::size_t s = 0; s < h; ++s) mid[s] = 0.5 * (a.at(s, 0) + b.at(s, 0));
    double lm, la, lb;
    try {
      lm = p.loss(Trace::univariate("x", mid));
      la = p.loss(a);
      lb = p.loss(b);
    } catch (const InfeasibleError&) {
      continue;
    }
    EXPECT_LE(lm, 0.5 * (la + lb) + 1e-9) << render(f);
  }
}

}  // namespace
}  // namespace fedstl
