#include <gtest/gtest.h>

#include "chj/homotopy.hpp"

using namespace chj;

namespace {

const Grid<1> kGrid(40);

GridField<1> constant(double c) { return GridField<1>::constant(kGrid, c); }

std::map<std::string, DeformationPath<1>> paths(double sub_start, double super_start) {
  return {{"sub", linear_deformation(constant(sub_start), constant(1.0), 64, "sub")},
          {"super", linear_deformation(constant(super_start), constant(1.0), 64, "super")}};
}

}  // namespace

TEST(DeformationPath, LinearAndSampled) {
  const auto p = linear_deformation(constant(0.0), constant(1.0));
  EXPECT_DOUBLE_EQ(p.slice(0.25)[3], 0.25);
  EXPECT_EQ(p.samples, 64);
  const auto q = sampled_deformation(kGrid, {std::vector<double>(40, 0.0), std::vector<double>(40, 2.0),
                                             std::vector<double>(40, 1.0)});
  EXPECT_EQ(q.samples, 2);
  EXPECT_DOUBLE_EQ(q.value(0, 0.25), 1.0);
  EXPECT_DOUBLE_EQ(q.value(0, 0.75), 1.5);
  EXPECT_DOUBLE_EQ(q.value(0, 1.0), 1.0);
  EXPECT_THROW(sampled_deformation(kGrid, {std::vector<double>(40, 0.0)}), ConfigError);
  EXPECT_THROW(sampled_deformation(kGrid, {std::vector<double>(40), std::vector<double>(3)}), ConfigError);
  EXPECT_THROW(linear_deformation(constant(0.0), GridField<1>::constant(Grid<1>(8), 1.0)), ConfigError);
}

TEST(CheckDeformation, MoebiusSubAndSuper) {
  const auto m = make_moebius();
  const auto sub = check_sub_deformation(m, linear_deformation(constant(-0.5), constant(1.0)), constant(1.0));
  EXPECT_TRUE(sub.ok);
  EXPECT_TRUE(sub.endpoint_ok);
  EXPECT_LT(sub.worst.margin, 0.0);
  EXPECT_GT(sub.worst.s, 0.98);
  EXPECT_EQ(sub.points_checked, (64u + 20u) * 40u);

  const auto super = check_super_deformation(m, linear_deformation(constant(1.2), constant(1.0)), constant(1.0));
  EXPECT_TRUE(super.ok);
  EXPECT_FALSE(check_sub_deformation(m, linear_deformation(constant(1.2), constant(1.0)), constant(1.0)).ok);
}

TEST(CheckDeformation, SubBelowTheUnstableLevelFails) {
  const auto m = make_moebius();
  const auto r = check_sub_deformation(m, linear_deformation(constant(-1.5), constant(1.0)), constant(1.0));
  EXPECT_FALSE(r.ok);
  EXPECT_DOUBLE_EQ(r.worst.s, 0.0);
  EXPECT_GT(r.worst.margin, 1.0);
}

TEST(CheckDeformation, EndpointAndSampleGuards) {
  const auto m = make_moebius();
  const auto r = check_sub_deformation(m, linear_deformation(constant(0.0), constant(0.9)), constant(1.0));
  EXPECT_FALSE(r.endpoint_ok);
  EXPECT_FALSE(r.ok);
  EXPECT_THROW(check_sub_deformation(m, linear_deformation(constant(0.0), constant(1.0), 5), constant(1.0)),
               ConfigError);
}

TEST(Theorem, ConditionsHoldBetweenTheRestPoints) {
  const auto m = make_moebius();
  const auto report = check_theorem_conditions(m, constant(0.3), constant(1.0), paths(0.3, 1.2));
  EXPECT_EQ(report.u_minus_gradient, "analytic");
  ASSERT_EQ(report.conditions.size(), 6u);
  EXPECT_EQ(report.conditions.at("a").verdict, Verdict::holds);
  EXPECT_EQ(report.conditions.at("c").verdict, Verdict::holds);
  EXPECT_EQ(report.conditions.at("a'").verdict, Verdict::holds);
  EXPECT_EQ(report.conditions.at("c'").verdict, Verdict::holds);
  // u0 lies below u_-, so the super path cannot be ordered above u0 >= u_-.
  EXPECT_EQ(report.conditions.at("b").verdict, Verdict::fails);
  EXPECT_TRUE(report.conditions.at("b").sign_ok);
  EXPECT_FALSE(report.conditions.at("b").ordering_ok);
}

TEST(Theorem, BelowTheUnstableLevelEverythingFails) {
  const auto m = make_moebius();
  const auto report = check_theorem_conditions(m, constant(-1.5), constant(1.0), paths(-1.5, 1.2));
  for (const char* key : {"a", "c", "a'", "c'"}) {
    EXPECT_EQ(report.conditions.at(key).verdict, Verdict::fails) << key;
    EXPECT_FALSE(report.conditions.at(key).sign_ok) << key;
  }
}

TEST(Theorem, MissingPathsAreNotCheckable) {
  const auto m = make_moebius();
  const auto report = check_theorem_conditions(m, constant(0.3), constant(1.0), {});
  for (const auto& [key, c] : report.conditions) {
    EXPECT_EQ(c.verdict, Verdict::not_checkable) << key;
    EXPECT_FALSE(c.witness.has_value());
  }
  EXPECT_STREQ(to_string(Verdict::not_checkable), "not checkable");
  auto no_equilibrium = m;
  no_equilibrium.equilibrium.reset();
  EXPECT_EQ(check_theorem_conditions(no_equilibrium, constant(0.3), constant(1.0), {}).u_minus_gradient,
            "centered differences");
}
