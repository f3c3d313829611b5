#include "heatlab/registry.hpp"

#include <gtest/gtest.h>

using namespace heatlab;

namespace {

ModelSpec spec(ModelKind kind, int dim, int res, double extent = 1.0) {
  ModelSpec s;
  s.kind = kind;
  s.dim = dim;
  s.resolution = res;
  s.extent = extent;
  return s;
}

const Lab& sphere() {
  static const Lab lab = make_lab(spec(ModelKind::sphere, 2, 16));
  return lab;
}

const Lab& plane() {
  static const Lab lab = [] {
    LabOptions o;
    o.cn.tol = 1e-7;
    return make_lab(spec(ModelKind::euclidean, 2, 40, 3.0), o);
  }();
  return lab;
}

}  // namespace

// f = |x|^2 / 2 on the lattice: Lf = n and Gamma(f) = |x|^2 + n h^2 / 4 exactly,
// hence Gamma_2(f) = L(|x|^2) / 2 = n at every interior node.
TEST(Bochner, QuadraticOnTheGrid) {
  auto b = build_model(spec(ModelKind::euclidean, 2, 20, 1.0));
  const auto& m = b.model;
  const double h = m.mesh_h;
  Vec f = 0.5 * m.nodes.rowwise().squaredNorm();
  Vec Lf = m.L * f, G = gamma_values(m, f), G2 = gamma2_values(m, f);
  auto mask = deep_interior(m, 2);
  int seen = 0;
  for (Index i = 0; i < m.size(); ++i) {
    if (!mask[i]) continue;
    ++seen;
    EXPECT_NEAR(Lf[i], 2.0, 1e-9);
    EXPECT_NEAR(G[i], m.nodes.row(i).squaredNorm() + 2.0 * h * h / 4.0, 1e-9);
    EXPECT_NEAR(G2[i], 2.0, 1e-8);
  }
  EXPECT_GT(seen, 100);
}

TEST(Bochner, SphereCurvatureOne) {
  auto suite = default_suite(sphere(), 1);
  auto r = check_cd(sphere(), suite);
  EXPECT_TRUE(r.passed()) << r.min_margin;
}

TEST(Bochner, OverstatedCurvatureFails) {
  auto suite = default_suite(sphere(), 1);
  CDOptions o;
  o.params = CDParameters{3.0, 1.0, 0.0, 2.0};
  auto r = check_cd(sphere(), suite, o);
  EXPECT_FALSE(r.passed());
}

TEST(SpectralGap, SphereFirstEigenvalueAtLeastTwo) {
  auto r = check_spectral_gap(sphere(), {20, 3});
  EXPECT_TRUE(r.passed()) << r.min_margin;
  ASSERT_TRUE(sphere().spectral);
  EXPECT_NEAR(sphere().spectral->eigenvalues[1], 2.0, 0.05);
}

TEST(LiYau, PlaneAtDimensionTwo) {
  auto suite = default_suite(plane(), 0);
  LiYauOptions o;
  o.t_grid = {0.1, 0.3};
  auto r = check_li_yau(plane(), suite, o);
  EXPECT_TRUE(r.passed()) << r.min_margin;
}

TEST(LiYau, UnderstatedDimensionFails) {
  auto suite = default_suite(plane(), 0);
  LiYauOptions o;
  o.t_grid = {0.1, 0.3};
  o.n = 0.5;
  auto r = check_li_yau(plane(), suite, o);
  EXPECT_FALSE(r.passed());
}

TEST(Completeness, EveryCompactModelConserves) {
  EXPECT_TRUE(check_completeness(sphere()).passed());
  EXPECT_TRUE(check_completeness(plane(), {0.2, 1.0}).passed());
}

TEST(Margins, TightestLevelIsReported) {
  MarginReport root("root", "m");
  root.add({}, 0.0, 1.0);
  root.finalize(Tolerance{0.1, 0.0, 0}, 0.1, 1.0);
  MarginReport child("child", "m");
  child.add({}, 0.0, 0.5);
  child.finalize(Tolerance{0.1, 0.0, 0}, 0.1, 1.0);
  root.parts.push_back(child);
  EXPECT_EQ(root.tightest().check_id, "child");
}
