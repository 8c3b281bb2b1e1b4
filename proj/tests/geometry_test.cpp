#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "chj/geometry.hpp"

using namespace chj;

TEST(TorusPoint, NormalizesIntoUnitCube) {
  const TorusPoint<2> q(Vec<2>{1.25, -0.25});
  EXPECT_DOUBLE_EQ(q[0], 0.25);
  EXPECT_DOUBLE_EQ(q[1], 0.75);
  EXPECT_DOUBLE_EQ(TorusPoint<1>(1.0)[0], 0.0);
  EXPECT_DOUBLE_EQ(TorusPoint<1>(-1e-20)[0], 0.0);
}

TEST(TorusPoint, PeriodicDistanceIsAMetricOnSamples) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int trial = 0; trial < 200; ++trial) {
    const TorusPoint<2> a(Vec<2>{u(rng), u(rng)}), b(Vec<2>{u(rng), u(rng)}),
        c(Vec<2>{u(rng), u(rng)});
    EXPECT_DOUBLE_EQ(periodic_distance(a, a), 0.0);
    EXPECT_DOUBLE_EQ(periodic_distance(a, b), periodic_distance(b, a));
    EXPECT_LE(periodic_distance(a, c), periodic_distance(a, b) + periodic_distance(b, c) + 1e-15);
    EXPECT_LE(periodic_distance(a, b), std::sqrt(0.5) + 1e-15);
  }
  EXPECT_NEAR(periodic_distance(TorusPoint<1>(0.05), TorusPoint<1>(0.95)), 0.1, 1e-15);
}

TEST(Grid, IndexingWrapsPerAxis) {
  const Grid<2> g(5);
  EXPECT_EQ(g.size(), 25u);
  EXPECT_DOUBLE_EQ(g.spacing(), 0.2);
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_EQ(g.flatten(g.unflatten(i)), i);
  const auto i = g.flatten({4, 0});
  EXPECT_EQ(g.shifted(i, 0, 1), g.flatten({0, 0}));
  EXPECT_EQ(g.shifted(i, 1, -1), g.flatten({4, 4}));
  EXPECT_DOUBLE_EQ(g.node(g.flatten({3, 1}))[0], 0.6);
  EXPECT_EQ(g.nearest_node(TorusPoint<2>(Vec<2>{0.99, 0.31})), g.flatten({0, 2}));
  EXPECT_THROW(Grid<1>(1), ConfigError);
}

TEST(GridField, RejectsNonFiniteAndUnflaggedBarrier) {
  const Grid<1> g(4);
  EXPECT_THROW(GridField<1>(g, {0.0, NAN, 0.0, 0.0}), NumericsError);
  EXPECT_THROW(GridField<1>(g, {0.0, kBarrier, 0.0, 0.0}), NumericsError);
  EXPECT_THROW(GridField<1>(g, {0.0, 1.0}), ConfigError);
  const GridField<1> f(g, {0.0, kBarrier, 0.0, 0.0}, true);
  EXPECT_TRUE(f.has_barrier());
  EXPECT_TRUE(f.is_barrier_at(1));
}

TEST(Interp, ConstantField) {
  const auto f = GridField<2>::constant(Grid<2>(7), 3.0);
  for (double x : {0.0, 0.13, 0.5, 0.999}) EXPECT_DOUBLE_EQ(interp(f, TorusPoint<2>(Vec<2>{x, 1 - x})), 3.0);
}

TEST(Interp, LinearSegmentAndPeriodicWrap) {
  const GridField<1> f(Grid<1>(4), {0.0, 1.0, 2.0, 1.0});
  EXPECT_DOUBLE_EQ(interp(f, TorusPoint<1>(0.125)), 0.5);
  EXPECT_DOUBLE_EQ(interp(f, TorusPoint<1>(0.875)), 0.5);
  EXPECT_DOUBLE_EQ(interp(f, TorusPoint<1>(0.5)), 2.0);
}

TEST(Interp, BarrierPropagatesOnlyFromWeightedCorners) {
  const GridField<1> f(Grid<1>(4), {0.0, kBarrier, 2.0, 1.0}, true);
  EXPECT_TRUE(is_barrier(interp(f, TorusPoint<1>(0.1))));
  EXPECT_DOUBLE_EQ(interp(f, TorusPoint<1>(0.0)), 0.0);
  EXPECT_DOUBLE_EQ(interp(f, TorusPoint<1>(0.625)), 1.5);
}

TEST(FieldMetrics, HandExamples) {
  const Grid<1> g2(2), g4(4);
  const GridField<1> f(g4, {0.0, 1.0, 0.0, 1.0});
  const auto self = field_metrics(f, f);
  EXPECT_DOUBLE_EQ(self.sup_norm, 0.0);
  EXPECT_DOUBLE_EQ(self.lip, 0.0);
  EXPECT_DOUBLE_EQ(field_metrics(GridField<1>(g2, {0.0, 1.0}), GridField<1>::constant(g2, 0.0)).sup_norm, 1.0);
  EXPECT_DOUBLE_EQ(field_metrics(f, GridField<1>::constant(g4, 0.0)).lip, 4.0);
  EXPECT_THROW(field_metrics(f, GridField<1>::constant(g2, 0.0)), ConfigError);
}

TEST(Gradient, CenteredDifferenceOfCosine) {
  const Grid<1> g(400);
  const auto f = GridField<1>::from_function(g, [](const TorusPoint<1>& q) { return std::cos(2 * M_PI * q[0]); });
  double worst = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double exact = -2 * M_PI * std::sin(2 * M_PI * g.node(i)[0]);
    worst = std::max(worst, std::abs(gradient_at(f, i)[0] - exact));
  }
  EXPECT_LT(worst, 1e-3);
  const auto fwd = gradient_at(f, 0, Difference::forward)[0];
  const auto bwd = gradient_at(f, 0, Difference::backward)[0];
  EXPECT_NEAR(fwd, -bwd, 1e-12);
}

TEST(Csv, RoundTripIsExact) {
  const Grid<2> g(6);
  std::mt19937_64 rng(11);
  std::normal_distribution<double> nd;
  std::vector<double> v(g.size());
  for (auto& x : v) x = nd(rng);
  const GridField<2> f(g, v);
  std::ostringstream os;
  write_csv(os, f);
  std::istringstream is(os.str());
  const auto back = read_csv<2>(is);
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_EQ(back[i], f[i]);
  std::ostringstream again;
  write_csv(again, back);
  EXPECT_EQ(os.str(), again.str());
}

TEST(Csv, RejectsMalformedInput) {
  auto parse = [](const std::string& s) {
    std::istringstream is(s);
    return read_csv<1>(is);
  };
  EXPECT_THROW(parse(""), ConfigError);
  EXPECT_THROW(parse("dim=1 n=2\n"), ConfigError);
  EXPECT_THROW(parse("# dim=2 n=2\n"), ConfigError);
  EXPECT_THROW(parse("# dim=1 n=2\n0,0,1\n0,0,1\n"), ConfigError);
  EXPECT_THROW(parse("# dim=1 n=2\n0,0,1\n"), ConfigError);
  EXPECT_THROW(parse("# dim=1 n=2\n0,1\n1,0.5,2\n"), ConfigError);
  EXPECT_NO_THROW(parse("# dim=1 n=2\n1,0.5,2\n0,0,1\n"));
}
