#include <gtest/gtest.h>

#include "chj/connect.hpp"

using namespace chj;

namespace {

PhasePoint<1> point(double q, double p, double u) { return {TorusPoint<1>(q), {p}, u}; }

}  // namespace

TEST(MinimizingCharacteristic, MoebiusStaysPutAndMatchesTheFlow) {
  const auto m = make_moebius();
  const Grid<1> g(100);
  const LegendrianGraph<1> u0(g, constant_function<1>(0.0));
  const auto lc = minimizing_characteristic(m, u0, TorusPoint<1>(0.37), 1.0, 1e-2);
  EXPECT_EQ(lc.curve.size(), 101u);
  EXPECT_DOUBLE_EQ(lc.graph_start.q[0], g.node(g.nearest_node(TorusPoint<1>(0.37)))[0]);
  EXPECT_DOUBLE_EQ(lc.lifted_start.p[0], 0.0);
  EXPECT_DOUBLE_EQ(lc.graph_start.u, 0.0);
  EXPECT_NEAR(lc.ode.back().sigma.u, std::tanh(1.0), 1e-8);
  EXPECT_LT(lc.residual, 2e-3);
}

TEST(MinimizingCharacteristic, CertificationFailureCarriesTheResidual) {
  const auto m = make_moebius();
  const LegendrianGraph<1> u0(Grid<1>(100), constant_function<1>(0.0));
  ConnectOptions opt;
  opt.certify_tol = 1e-9;
  try {
    minimizing_characteristic(m, u0, TorusPoint<1>(0.37), 1.0, 1e-2, opt);
    FAIL() << "expected a certification error";
  } catch (const CertificationError& e) {
    EXPECT_NE(std::string(e.what()).find("characteristic lift failed"), std::string::npos);
  }
}

TEST(CertifyOmega, TailWindowOnly) {
  ConnectingOrbitReport<1> r;
  r.horizon = 10.0;
  EXPECT_FALSE(certify_omega(r, 2.0, 1e-3));
  r.dist_profile = {{0.0, 1.0}, {7.9, 0.5}, {8.0, 5e-4}, {10.0, 1e-4}};
  EXPECT_TRUE(certify_omega(r, 2.0, 1e-3));
  EXPECT_FALSE(certify_omega(r, 2.5, 1e-3));
  r.failure = "blow-up";
  EXPECT_FALSE(certify_omega(r, 2.0, 1e-3));
}

TEST(Clusters, NearbyStartsAreIdentified) {
  const std::vector<PhasePoint<1>> pts{point(0.1, 0.0, 0.0), point(0.11, 0.0, 0.0), point(0.5, 0.0, 0.0),
                                       point(0.1, 0.0, 0.3)};
  EXPECT_EQ(detail::count_clusters(pts, 5e-2), 3u);
  EXPECT_EQ(detail::count_clusters(pts, 1.0), 1u);
}

TEST(Graph1, RejectsBadConfiguration) {
  const auto m = make_moebius();
  const Grid<1> g(50);
  const LegendrianGraph<1> u0(g, constant_function<1>(0.0)), um(g, constant_function<1>(1.0));
  const std::vector<TorusPoint<1>> targets{TorusPoint<1>(0.3)};
  EXPECT_THROW(connect_graph1(m, u0, um, {}, {4.0}, 8.0, 0.02), ConfigError);
  EXPECT_THROW(connect_graph1(m, u0, um, targets, {}, 8.0, 0.02), ConfigError);
  EXPECT_THROW(connect_graph1(m, u0, um, targets, {0.0, 4.0}, 8.0, 0.02), ConfigError);
  EXPECT_THROW(connect_graph1(m, u0, um, targets, {4.0}, 2.0, 0.02), ConfigError);
  const LegendrianGraph<1> other(Grid<1>(40), constant_function<1>(1.0));
  EXPECT_THROW(connect_graph1(m, u0, other, targets, {4.0}, 8.0, 0.02), ConfigError);
}

TEST(Graph1, ConvergenceGuard) {
  const auto m = make_moebius();
  const Grid<1> g(50);
  const LegendrianGraph<1> u0(g, constant_function<1>(0.0)), um(g, constant_function<1>(1.0));
  try {
    connect_graph1(m, u0, um, {TorusPoint<1>(0.3)}, {1.0}, 4.0, 0.02);
    FAIL() << "expected a hypothesis error";
  } catch (const HypothesisError& e) {
    EXPECT_NE(std::string(e.what()).find("hypothesis (convergence1) fails"), std::string::npos);
  }
}

TEST(Graph1, MoebiusFromTheZeroSection) {
  const auto m = make_moebius();
  const Grid<1> g(50);
  const LegendrianGraph<1> u0(g, constant_function<1>(0.0)), um(g, constant_function<1>(1.0));
  const std::vector<TorusPoint<1>> targets{g.node(7), g.node(31)};
  const auto r = connect_graph1(m, u0, um, targets, {4.0, 8.0}, 12.0, 0.02);
  EXPECT_EQ(r.method, "graph1");
  ASSERT_EQ(r.approx_points.size(), 4u);
  EXPECT_EQ(r.starts.size(), 4u);
  EXPECT_EQ(r.start_clusters, 2u);
  EXPECT_LT(r.approx_points[1].distance, r.approx_points[0].distance);
  EXPECT_NEAR(r.approx_points[1].distance, 1.0 - std::tanh(8.0), 1e-6);
  EXPECT_DOUBLE_EQ(r.sigma0.q[0], g.node(7)[0]);
  EXPECT_DOUBLE_EQ(r.lift_gap, 0.0);
  EXPECT_TRUE(r.certified) << r.failure;
  EXPECT_TRUE(r.failure.empty());
  EXPECT_DOUBLE_EQ(r.trajectory.back().t, 12.0);
  EXPECT_EQ(r.dist_profile.size(), r.trajectory.size());
  EXPECT_TRUE(std::isnan(r.entry_time));
}

TEST(Graph2, ManufacturedModel) {
  const auto m = make_monotone_manufactured<1>(1.0, cosine_function<1>());
  const Grid<1> g(200);
  ConnectOptions opt;
  opt.scheme.v_max = 8.0;
  const LegendrianGraph<1> um(g, cosine_function<1>()), u0(g, constant_function<1>(0.0));
  const auto r = connect_graph2(m, u0, um, 0.3, 10.0, 1e-2, opt);
  EXPECT_EQ(r.method, "graph2");
  EXPECT_TRUE(r.certified) << r.failure;
  EXPECT_NEAR(r.entry_time, std::log(1.0 / 0.3), 0.15);
  ASSERT_EQ(r.approx_points.size(), 1u);
  EXPECT_NEAR(r.approx_points[0].time, r.entry_time, 1e-12);

  const auto none = connect_graph2(m, u0, um, 1e-9, 6.0, 1e-2, opt);
  EXPECT_FALSE(none.certified);
  EXPECT_EQ(none.failure, "no approximating point entered the attractor neighbourhood");
}

TEST(Graph2, HypothesisGuards) {
  const auto m = make_monotone_manufactured<1>(1.0, cosine_function<1>());
  const Grid<1> g(100);
  ConnectOptions opt;
  opt.scheme.v_max = 8.0;
  const LegendrianGraph<1> um(g, cosine_function<1>());
  auto message = [&](double offset) {
    try {
      connect_graph2(m, LegendrianGraph<1>(g, cosine_function<1>(1.0, offset)), um, 0.3, 1.0, 2e-2, opt);
    } catch (const HypothesisError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  EXPECT_EQ(message(-0.5).rfind("hypothesis (1) fails", 0), 0u);
  EXPECT_EQ(message(0.5).rfind("hypothesis (2) fails", 0), 0u);
  const LegendrianGraph<1> u0(g, constant_function<1>(0.0));
  EXPECT_THROW(connect_graph2(m, u0, um, 0.0, 8.0, 2e-2, opt), ConfigError);
  EXPECT_THROW(connect_graph2(m, u0, um, 0.3, 0.02, 2e-2, opt), ConfigError);
}
