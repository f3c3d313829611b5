#include "heatlab/registry.hpp"

#include <gtest/gtest.h>

using namespace heatlab;

namespace {

ModelSpec make_spec(ModelKind kind, int dim, int res, double extent = 1.0) {
  ModelSpec s;
  s.kind = kind;
  s.dim = dim;
  s.resolution = res;
  s.extent = extent;
  return s;
}

// Gamma straight from the definition 1/2 (L(fg) - f Lg - g Lf).
Vec gamma_by_definition(const DiscretizedModel& m, const Vec& f) {
  Vec ff = f.cwiseProduct(f);
  Vec Lf = m.L * f;
  return 0.5 * (m.L * ff - 2.0 * f.cwiseProduct(Lf));
}

// sum_l (2l+1)/(4 pi) e^{-l(l+1)t} P_l(c), own recurrence, generous cutoff.
double zonal_series(double t, double c, int L = 400) {
  double p0 = 1.0, p1 = c, sum = 1.0 / (4.0 * std::numbers::pi);
  sum += 3.0 / (4.0 * std::numbers::pi) * std::exp(-2.0 * t) * p1;
  for (int l = 2; l <= L; ++l) {
    double p2 = ((2.0 * l - 1.0) * c * p1 - (l - 1.0) * p0) / l;
    sum += (2.0 * l + 1.0) / (4.0 * std::numbers::pi) * std::exp(-l * (l + 1.0) * t) * p2;
    p0 = p1;
    p1 = p2;
  }
  return sum;
}

class EveryModel : public ::testing::TestWithParam<ModelSpec> {};

}  // namespace

TEST_P(EveryModel, GeneratorAxioms) {
  auto b = build_model(GetParam());
  const auto& m = b.model;
  Rng rng(11);
  const double scale = m.L.diagonal().cwiseAbs().maxCoeff();
  for (int k = 0; k < 5; ++k) {
    Vec f = random_values(m.size(), rng), g = random_values(m.size(), rng);
    double lhs = m.inner(f, m.L * g), rhs = m.inner(m.L * f, g);
    EXPECT_LE(std::abs(lhs - rhs), 1e-10 * scale * m.total_measure());
    EXPECT_LE(m.inner(f, m.L * f), 1e-12 * scale * m.inner(f, f));
    Vec direct = gamma_by_definition(m, f);
    Vec edge = gamma_values(m, f);
    EXPECT_LE((direct - edge).cwiseAbs().maxCoeff(), 1e-9 * direct.cwiseAbs().maxCoeff());
    EXPECT_GE(edge.minCoeff(), -1e-12 * edge.maxCoeff());
  }
  Vec ones = m.L * Vec::Ones(m.size());
  for (Index i = 0; i < m.size(); ++i)
    if (!m.boundary[i]) EXPECT_LE(std::abs(ones[i]), 1e-10 * scale);
}

TEST_P(EveryModel, AxiomReportPasses) {
  auto b = build_model(GetParam());
  auto r = check_operator_axioms(b.model, 20, 3);
  EXPECT_TRUE(r.passed()) << to_json(r).dump(1);
}

INSTANTIATE_TEST_SUITE_P(Catalog, EveryModel,
                         ::testing::Values(make_spec(ModelKind::euclidean, 1, 40, 0.5),
                                           make_spec(ModelKind::euclidean, 2, 16, 1.0),
                                           make_spec(ModelKind::euclidean, 3, 8, 1.0),
                                           make_spec(ModelKind::torus, 1, 32), make_spec(ModelKind::torus, 2, 16),
                                           make_spec(ModelKind::sphere, 2, 12),
                                           make_spec(ModelKind::heisenberg, 3, 8, 1.0)));

TEST(Models, TorusSpectrumMatchesTheDiscreteFormula) {
  const int N = 24;
  auto b = build_model(make_spec(ModelKind::torus, 1, N));
  auto sd = spectral_decompose_dense(b.model, N);
  std::vector<double> exact;
  const double h = 2.0 * std::numbers::pi / N;
  for (int k = 0; k < N; ++k) exact.push_back(4.0 / (h * h) * std::pow(std::sin(std::numbers::pi * k / N), 2));
  std::sort(exact.begin(), exact.end());
  for (int k = 0; k < N; ++k) EXPECT_NEAR(sd.eigenvalues[k], exact[k], 1e-9 * exact.back());
}

TEST(Models, LanczosAgreesWithDense) {
  auto b = build_model(make_spec(ModelKind::sphere, 2, 16));
  auto dense = spectral_decompose_dense(b.model, 12);
  auto lan = spectral_decompose(b.model, 12, {5});
  for (Index k = 0; k < 12; ++k) EXPECT_NEAR(dense.eigenvalues[k], lan.eigenvalues[k], 1e-8);
  // mu-orthonormal columns
  Mat G = lan.eigenfields.transpose() * b.model.mu.asDiagonal() * lan.eigenfields;
  EXPECT_LE((G - Mat::Identity(12, 12)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Models, ExactContinuumOracles) {
  // Gaussian kernel integrates to one
  double s = 0.0, dx = 0.01;
  for (double x = -10; x <= 10; x += dx) s += gaussian_kernel(0.7, x * x, 1) * dx;
  EXPECT_NEAR(s, 1.0, 1e-6);
  EXPECT_NEAR(gaussian_kernel(0.5, 0.0, 2), 1.0 / (4.0 * std::numbers::pi * 0.5), 1e-15);

  // sphere zonal kernel against an independent Legendre sum
  for (double t : {0.05, 0.3, 1.0})
    for (double c : {-0.9, 0.0, 0.4, 1.0}) EXPECT_NEAR(sphere_zonal_kernel(t, c).value, zonal_series(t, c), 1e-9);

  // periodic kernel: image sum against the Fourier sum
  const double P = 2.0 * std::numbers::pi;
  for (double t : {0.1, 1.0})
    for (double d : {0.0, 1.0, 3.0}) {
      double fourier = 1.0 / P;
      for (int k = 1; k < 200; ++k) fourier += 2.0 / P * std::exp(-k * k * t) * std::cos(k * d);
      EXPECT_NEAR(periodic_kernel_1d(t, d, P), fourier, 1e-10);
    }

  auto sph = build_model(make_spec(ModelKind::sphere, 2, 12));
  ChartPoint x(3);
  x << 0, 0, 1;
  EXPECT_NEAR(sph.oracle.exact_ball_volume(x, std::numbers::pi), 4.0 * std::numbers::pi, 1e-12);
  EXPECT_NEAR(sph.oracle.exact_ball_volume(x, 0.1), 2.0 * std::numbers::pi * (1 - std::cos(0.1)), 1e-15);
  auto ev = sph.oracle.exact_spectrum(9);
  EXPECT_EQ(ev, (std::vector<double>{0, 2, 2, 2, 6, 6, 6, 6, 6}));
}

TEST(Models, MeasureTotals) {
  auto sph = build_model(make_spec(ModelKind::sphere, 2, 24));
  EXPECT_NEAR(sph.model.total_measure(), 4.0 * std::numbers::pi, 1e-9);
  auto tor = build_model(make_spec(ModelKind::torus, 2, 16));
  EXPECT_NEAR(tor.model.total_measure(), std::pow(2.0 * std::numbers::pi, 2), 1e-9);
  auto box = build_model(make_spec(ModelKind::euclidean, 3, 8, 1.5));
  EXPECT_NEAR(box.model.total_measure(), 27.0, 1e-9);
}

TEST(Models, SpecValidationNamesTheProblem) {
  auto s = make_spec(ModelKind::euclidean, 2, 4);
  try {
    s.validate();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::config);
    EXPECT_NE(std::string(e.what()).find("resolution"), std::string::npos);
  }
  EXPECT_THROW(build_model(make_spec(ModelKind::torus, 3, 8)), Error);
}

TEST(Models, ModelHashTracksTheOperator) {
  auto a = build_model(make_spec(ModelKind::torus, 1, 32));
  auto b = build_model(make_spec(ModelKind::torus, 1, 32));
  auto c = build_model(make_spec(ModelKind::torus, 1, 33));
  EXPECT_EQ(model_hash(a.model), model_hash(b.model));
  EXPECT_NE(model_hash(a.model), model_hash(c.model));
}

TEST(Fields, HeisenbergVerticalFormOnPolynomials) {
  // Gamma^Z(z) = (Z z)^2 = 1 away from the truncation
  auto b = build_model(make_spec(ModelKind::heisenberg, 3, 12, 1.0));
  ASSERT_TRUE(b.vform.has_value());
  Vec z = b.model.nodes.col(2);
  Vec gz = gammaZ_values(b.model, *b.vform, z);
  auto mask = deep_interior(b.model, *b.vform, 2);
  int checked = 0;
  for (Index i = 0; i < b.model.size(); ++i)
    if (mask[i]) {
      EXPECT_NEAR(gz[i], 1.0, 1e-9);
      ++checked;
    }
  EXPECT_GT(checked, 0);
}

TEST(Fields, PositiveShiftLiftsOffZero) {
  Vec f(4);
  f << -2, 0, 1, 2;
  auto s = positive_shift(f, 0.1);
  EXPECT_NEAR(s.values.minCoeff(), 0.4, 1e-15);
  EXPECT_NEAR(s.values.maxCoeff() - s.values.minCoeff(), 4.0, 1e-15);
}
