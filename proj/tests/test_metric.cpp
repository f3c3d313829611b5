#include "heatlab/registry.hpp"

#include <gtest/gtest.h>

using namespace heatlab;
namespace hz = heatlab::heisenberg;

namespace {

BuiltModel make(ModelKind kind, int dim, int res, double extent = 1.0) {
  ModelSpec s;
  s.kind = kind;
  s.dim = dim;
  s.resolution = res;
  s.extent = extent;
  return build_model(s);
}

double norm3(const hz::Point& p) { return std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]); }

}  // namespace

TEST(Graph, CircleDistancesAreArcSteps) {
  const int N = 40;
  auto b = make(ModelKind::torus, 1, N);
  const double h = 2.0 * std::numbers::pi / N;
  for (Index src : {0, 7}) {
    auto d = graph_distance(b.model, src);
    for (Index i = 0; i < N; ++i) {
      Index k = std::abs(i - src);
      EXPECT_NEAR(d.values[i], std::min<Index>(k, N - k) * h, 1e-12);
    }
  }
}

TEST(Graph, GridDistanceIsTheL1Metric) {
  auto b = make(ModelKind::euclidean, 2, 12, 1.0);
  auto d = graph_distance(b.model, 0);
  for (Index i = 0; i < b.model.size(); ++i) {
    double l1 = std::abs(b.model.nodes(i, 0) - b.model.nodes(0, 0)) + std::abs(b.model.nodes(i, 1) - b.model.nodes(0, 1));
    EXPECT_NEAR(d.values[i], l1, 1e-12);
  }
}

// On a 1-d lattice the graph distance is itself feasible (Gamma = 1), and any
// feasible field gains at most one step over it.
TEST(Dual, SandwichedByGraphDistanceOnTheCircle) {
  const int N = 32;
  auto b = make(ModelKind::torus, 1, N);
  const double h = 2.0 * std::numbers::pi / N;
  auto g = graph_distance(b.model, 0);
  for (Index y : {5, 11, 16}) {
    auto r = dual_distance(b.model, 0, y);
    EXPECT_LE(r.max_gamma, 1.0 + 1e-12);
    EXPECT_GE(r.bound, g.values[y] * (1.0 - 1e-3));
    EXPECT_LE(r.bound, g.values[y] + h);
    Vec gam = gamma_values(b.model, r.field.values());
    EXPECT_LE(gam.maxCoeff(), 1.0 + 1e-12);
    EXPECT_NEAR(r.field[0] - r.field[y], r.bound, 1e-12 * (1.0 + r.bound));
  }
}

TEST(Dual, PlaneBoundTracksEuclideanDistance) {
  auto b = make(ModelKind::euclidean, 2, 16, 1.0);
  const auto& m = b.model;
  Index x = 0, y = m.size() - 1;
  auto r = dual_distance(m, x, y);
  double e = (m.nodes.row(x) - m.nodes.row(y)).norm();
  EXPECT_GE(r.bound, e * 0.95);
  EXPECT_LE(r.bound, e + m.mesh_h);
}

TEST(Heisenberg, GroupLaw) {
  hz::Point a{0.3, -0.2, 0.1}, b{-0.5, 0.4, 0.7}, c{0.1, 0.9, -0.3};
  auto ab_c = hz::multiply(hz::multiply(a, b), c);
  auto a_bc = hz::multiply(a, hz::multiply(b, c));
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(ab_c[k], a_bc[k], 1e-15);
  auto e = hz::multiply(a, hz::inverse(a));
  EXPECT_LE(norm3(e), 1e-15);
  // commutator lands on the centre: [a, b] = (0, 0, x y' - y x')
  auto comm = hz::multiply(hz::multiply(a, b), hz::inverse(hz::multiply(b, a)));
  EXPECT_NEAR(comm[2], a[0] * b[1] - a[1] * b[0], 1e-15);
}

TEST(Heisenberg, DistanceClosedForms) {
  EXPECT_NEAR(hz::cc_distance({0, 0, 0}, {0.7, 0, 0}), 0.7, 1e-14);
  for (double z : {0.05, 0.3, 1.0})
    EXPECT_NEAR(hz::cc_distance({0, 0, 0}, {0, 0, z}), 2.0 * std::sqrt(std::numbers::pi * z), 1e-12);

  hz::Point p{0.2, 0.1, 0.05}, q{-0.3, 0.4, 0.2}, g{0.5, -0.7, 0.3};
  double d = hz::cc_distance(p, q);
  EXPECT_NEAR(hz::cc_distance(hz::multiply(g, p), hz::multiply(g, q)), d, 1e-10);
  EXPECT_NEAR(hz::cc_distance(q, p), d, 1e-10);
  for (double lam : {0.5, 2.0}) {
    hz::Point dp{lam * p[0], lam * p[1], lam * lam * p[2]}, dq{lam * q[0], lam * q[1], lam * lam * q[2]};
    EXPECT_NEAR(hz::cc_distance(dp, dq), lam * d, 1e-9 * lam);
  }
  // horizontal projection never exceeds the distance
  auto r = hz::relative(p, q);
  EXPECT_GE(d, std::hypot(r[0], r[1]) - 1e-12);
}

TEST(Heisenberg, SubunitCurveReachesTheVerticalTarget) {
  for (double z : {0.1, 0.5}) {
    auto r = subunit_distance_heisenberg({0, 0, 0}, {0, 0, z});
    double exact = 2.0 * std::sqrt(std::numbers::pi * z);
    EXPECT_LE(r.miss, 1e-8);
    EXPECT_NEAR(r.length, exact, 0.02 * exact);
    EXPECT_GE(r.length, exact * (1.0 - 1e-6));
  }
}

TEST(Balls, PlaneDiscVolumes) {
  auto b = make(ModelKind::euclidean, 2, 80, 5.0);
  const auto& m = b.model;
  Index c = 0;
  for (Index i = 1; i < m.size(); ++i)
    if (m.nodes.row(i).norm() < m.nodes.row(c).norm()) c = i;
  auto d = oracle_distance(b, c);
  // radii of 16 and more lattice steps; at 8 steps the count is already 2% short
  auto t = ball_table(m, d, {2.0, 4.0});
  for (size_t k = 0; k < t.radii.size(); ++k) {
    double exact = std::numbers::pi * t.radii[k] * t.radii[k];
    EXPECT_NEAR(t.volumes[k], exact, 0.02 * exact);
  }
  EXPECT_NEAR(t.volumes[1] / t.volumes[0], 4.0, 0.08);
}

TEST(Balls, SphereCapsFromTheOracle) {
  auto b = make(ModelKind::sphere, 2, 48);
  auto d = oracle_distance(b, b.model.size() / 2);
  auto t = ball_table(b.model, d, {0.5, 1.0, 2.0}, Coverage::smooth, PerimeterKind::none, 2.0);
  for (size_t k = 0; k < t.radii.size(); ++k) {
    double exact = 2.0 * std::numbers::pi * (1.0 - std::cos(t.radii[k]));
    EXPECT_NEAR(t.volumes[k], exact, 0.03 * exact);
  }
}
