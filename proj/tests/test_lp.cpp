#include <hydromarket/lp.hpp>
#include <hydromarket/rng.hpp>

#include <gtest/gtest.h>

#include <sstream>

using namespace hydromarket;

namespace {

LinearProgram thermal_lp(double demand) {
  LinearProgram lp;
  const int g1 = lp.add_variable("g1", 0, 10, 50);
  const int g2 = lp.add_variable("g2", 0, 15, 200);
  lp.add_constraint("load_balance", {{g1, 1}, {g2, 1}}, Relation::Equal, demand);
  return lp;
}

void expect_feasible(const LinearProgram& lp, const LpSolution& s, double tol = 1e-6) {
  for (int j = 0; j < lp.num_variables(); ++j) {
    EXPECT_GE(s.primal[j], lp.variable(j).lower - tol);
    EXPECT_LE(s.primal[j], lp.variable(j).upper + tol);
  }
  for (const auto& c : lp.constraints()) {
    double a = 0;
    for (auto t : c.terms) a += t.coef * s.primal[t.var];
    if (c.relation == Relation::LessEqual) EXPECT_LE(a, c.rhs + tol);
    if (c.relation == Relation::GreaterEqual) EXPECT_GE(a, c.rhs - tol);
    if (c.relation == Relation::Equal) EXPECT_NEAR(a, c.rhs, tol);
  }
}

// Random bounded LP that is always feasible: rows are built around a known point.
LinearProgram random_lp(Rng& rng, Sense sense) {
  LinearProgram lp(sense);
  const int n = 2 + rng.uniform_int(7);
  const int m = 1 + rng.uniform_int(6);
  std::vector<double> x0(n);
  for (int j = 0; j < n; ++j) {
    lp.add_variable("x" + std::to_string(j), 0, 1 + 9 * rng.uniform(), -5 + 10 * rng.uniform());
    x0[j] = lp.variable(j).upper * rng.uniform();
  }
  for (int i = 0; i < m; ++i) {
    std::vector<Term> terms;
    double a = 0;
    for (int j = 0; j < n; ++j) {
      if (rng.uniform() < 0.3) continue;
      const double c = -3 + 6 * rng.uniform();
      terms.push_back({j, c});
      a += c * x0[j];
    }
    if (terms.empty()) continue;
    const int kind = rng.uniform_int(3);
    const Relation rel = kind == 0 ? Relation::LessEqual : kind == 1 ? Relation::GreaterEqual : Relation::Equal;
    const double slack = rel == Relation::LessEqual ? rng.uniform() : rel == Relation::GreaterEqual ? -rng.uniform() : 0.0;
    lp.add_constraint("r" + std::to_string(i), terms, rel, a + slack);
  }
  return lp;
}

}  // namespace

TEST(Lp, ThermalMeritOrder) {
  const auto lp = thermal_lp(20);
  const auto s = solve(lp);
  ASSERT_TRUE(s.optimal());
  EXPECT_NEAR(s.objective, 2500, 1e-9);
  EXPECT_NEAR(dual_of(lp, s, "load_balance"), 200, 1e-9);
  EXPECT_NEAR(s.primal[0], 10, 1e-9);
  EXPECT_NEAR(s.primal[1], 10, 1e-9);
}

TEST(Lp, FiniteDifferenceMatchesDual) {
  const auto lp = thermal_lp(20);
  const auto base = solve(lp);
  const auto up = perturb_rhs(lp, "load_balance", 1.0);
  ASSERT_TRUE(up.optimal());
  EXPECT_NEAR(up.objective, 2700, 1e-9);
  EXPECT_NEAR(up.objective - base.objective, base.dual[0], 1e-9);
}

TEST(Lp, ZeroPerturbationIsNoOp) {
  const auto lp = thermal_lp(20);
  const auto a = solve(lp);
  const auto b = perturb_rhs(lp, 0, 0.0);
  EXPECT_EQ(a.objective, b.objective);
  EXPECT_EQ(a.primal, b.primal);
  EXPECT_EQ(a.dual, b.dual);
}

TEST(Lp, CapacityExhaustionIsInfeasible) {
  const auto lp = thermal_lp(20);
  EXPECT_EQ(perturb_rhs(lp, 0, 6.0).status, LpStatus::Infeasible);
}

TEST(Lp, BoundOnly) {
  LinearProgram lp;
  lp.add_variable("x", 0, kInf, 1);
  const auto s = solve(lp);
  ASSERT_TRUE(s.optimal());
  EXPECT_EQ(s.objective, 0);
  EXPECT_EQ(s.primal[0], 0);
}

TEST(Lp, Unbounded) {
  LinearProgram lp;
  lp.add_variable("x", 0, kInf, -1);
  EXPECT_EQ(solve(lp).status, LpStatus::Unbounded);
  LinearProgram lp2;
  const int x = lp2.add_variable("x", -kInf, kInf, 1);
  const int y = lp2.add_variable("y", 0, kInf, 0);
  lp2.add_constraint("c", {{x, 1}, {y, -1}}, Relation::LessEqual, 3);
  EXPECT_EQ(solve(lp2).status, LpStatus::Unbounded);
}

TEST(Lp, MaximizeSenseDuals) {
  // max 3x + 2y s.t. x + y <= 4, x <= 3  -> x=3, y=1, obj 11; dual of cap row = 2.
  LinearProgram lp(Sense::Maximize);
  const int x = lp.add_variable("x", 0, kInf, 3);
  const int y = lp.add_variable("y", 0, kInf, 2);
  lp.add_constraint("cap", {{x, 1}, {y, 1}}, Relation::LessEqual, 4);
  lp.add_constraint("xmax", {{x, 1}}, Relation::LessEqual, 3);
  const auto s = solve(lp);
  ASSERT_TRUE(s.optimal());
  EXPECT_NEAR(s.objective, 11, 1e-9);
  EXPECT_NEAR(s.dual[0], 2, 1e-9);
  EXPECT_NEAR(s.dual[1], 1, 1e-9);
  EXPECT_NEAR(dual_objective(lp, s), 11, 1e-9);
}

TEST(Lp, RejectsMalformedInput) {
  LinearProgram lp;
  EXPECT_THROW(lp.add_variable("x", 1, 0), std::invalid_argument);
  EXPECT_THROW(lp.add_constraint("c", {{3, 1}}, Relation::Equal, 0), std::invalid_argument);
}

TEST(Lp, FreeVariablesAndEqualityRows) {
  // min |x - 3| via x - p + n = 3 with free x pinned by another row.
  LinearProgram lp;
  const int x = lp.add_variable("x", -kInf, kInf, 0);
  const int p = lp.add_variable("p", 0, kInf, 1);
  const int n = lp.add_variable("n", 0, kInf, 1);
  lp.add_constraint("dev", {{x, 1}, {p, -1}, {n, 1}}, Relation::Equal, 3);
  lp.add_constraint("pin", {{x, 1}}, Relation::Equal, -2);
  const auto s = solve(lp);
  ASSERT_TRUE(s.optimal());
  EXPECT_NEAR(s.objective, 5, 1e-9);
  EXPECT_NEAR(s.primal[x], -2, 1e-9);
}

TEST(Lp, RedundantEqualitiesAreHandled) {
  LinearProgram lp;
  const int x = lp.add_variable("x", 0, 10, 1);
  const int y = lp.add_variable("y", 0, 10, 2);
  lp.add_constraint("a", {{x, 1}, {y, 1}}, Relation::Equal, 5);
  lp.add_constraint("b", {{x, 2}, {y, 2}}, Relation::Equal, 10);
  const auto s = solve(lp);
  ASSERT_TRUE(s.optimal());
  EXPECT_NEAR(s.objective, 5, 1e-9);
  EXPECT_NEAR(dual_objective(lp, s), 5, 1e-6);
}

TEST(LpProperty, StrongDualityAndFeasibility) {
  Rng rng(7, 1);
  int checked = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const auto lp = random_lp(rng, trial % 2 ? Sense::Maximize : Sense::Minimize);
    const auto s = solve(lp);
    ASSERT_TRUE(s.optimal()) << "trial " << trial;
    expect_feasible(lp, s);
    EXPECT_NEAR(dual_objective(lp, s), s.objective, 1e-6 * (1 + std::abs(s.objective))) << "trial " << trial;
    // Dual sign feasibility in the minimization form.
    const double sg = lp.sense() == Sense::Maximize ? -1 : 1;
    for (int i = 0; i < lp.num_constraints(); ++i) {
      const double y = sg * s.dual[i];
      if (lp.constraint(i).relation == Relation::LessEqual) EXPECT_LE(y, 1e-7);
      if (lp.constraint(i).relation == Relation::GreaterEqual) EXPECT_GE(y, -1e-7);
    }
    ++checked;
  }
  EXPECT_EQ(checked, 300);
}

TEST(LpProperty, DualsMatchCentralDifferences) {
  Rng rng(11, 2);
  int compared = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const auto lp = random_lp(rng, Sense::Minimize);
    const auto s = solve(lp);
    ASSERT_TRUE(s.optimal());
    const double h = 1e-5;
    for (int i = 0; i < lp.num_constraints(); ++i) {
      const auto up = perturb_rhs(lp, i, h);
      const auto dn = perturb_rhs(lp, i, -h);
      if (!up.optimal() || !dn.optimal()) continue;
      const double right = (up.objective - s.objective) / h;
      const double left = (s.objective - dn.objective) / h;
      if (std::abs(right - left) > 1e-6) continue;  // kink: not differentiable
      EXPECT_NEAR(s.dual[i], 0.5 * (right + left), 1e-4) << "trial " << trial << " row " << i;
      ++compared;
    }
  }
  EXPECT_GT(compared, 100);
}

TEST(Lp, ExportFormat) {
  const auto lp = thermal_lp(20);
  std::ostringstream os;
  write_lp(os, lp);
  const auto text = os.str();
  EXPECT_NE(text.find("Minimize"), std::string::npos);
  EXPECT_NE(text.find("load_balance: g1 + g2 = 20"), std::string::npos);
  EXPECT_NE(text.find("0 <= g2 <= 15"), std::string::npos);
  EXPECT_NE(text.find("End"), std::string::npos);
}

TEST(Lp, IterationLimitThrowsWithDiagnostics) {
  SimplexOptions opt;
  opt.max_iterations = 1;
  LinearProgram lp;
  std::vector<Term> row;
  for (int j = 0; j < 5; ++j) row.push_back({lp.add_variable("x" + std::to_string(j), 0, 1, -1.0 - j), 1});
  lp.add_constraint("cap", row, Relation::LessEqual, 3);
  try {
    solve(lp, opt);
    FAIL() << "expected LpError";
  } catch (const LpError& e) {
    EXPECT_GE(e.iterations(), 1);
    EXPECT_NE(std::string(e.what()).find("iteration"), std::string::npos);
  }
}
