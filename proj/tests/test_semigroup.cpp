#include "heatlab/registry.hpp"

#include <gtest/gtest.h>

using namespace heatlab;

namespace {

BuiltModel circle(int N) {
  ModelSpec s;
  s.kind = ModelKind::torus;
  s.dim = 1;
  s.resolution = N;
  return build_model(s);
}

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("heatlab-unit-" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

// On the periodic lattice cos(kx) is an exact eigenvector with eigenvalue
// (4/h^2) sin^2(kh/2), so P_t cos(kx) = exp(-lambda t) cos(kx) to solver accuracy.
TEST(Semigroup, StepperMatchesExactDiscreteDecay) {
  const int N = 64;
  auto b = circle(N);
  const auto& m = b.model;
  const double h = 2.0 * std::numbers::pi / N;
  CrankNicolsonSemigroup cn(m);
  for (int k : {1, 3}) {
    Vec f = m.nodes.col(0).unaryExpr([k](double x) { return std::cos(k * x); });
    double lam = 4.0 / (h * h) * std::pow(std::sin(k * h / 2.0), 2);
    for (double t : {0.1, 0.5, 2.0}) {
      Vec u = cn.apply(f, t);
      EXPECT_LE((u - std::exp(-lam * t) * f).cwiseAbs().maxCoeff(), 1e-7) << "k=" << k << " t=" << t;
    }
  }
}

TEST(Semigroup, SpectralAndStepperAgree) {
  auto b = circle(48);
  auto sd = spectral_decompose_dense(b.model, 48);
  SpectralSemigroup sp(b.model, sd);
  CrankNicolsonSemigroup cn(b.model, {64, 8192, 1e-10});
  Rng rng(5);
  Vec f = random_values(b.model.size(), rng);
  for (double t : {0.05, 0.4}) EXPECT_LE((sp.apply(f, t) - cn.apply(f, t)).cwiseAbs().maxCoeff(), 1e-7);
}

TEST(Semigroup, MassAndConstantsArePreserved) {
  ModelSpec s;
  s.kind = ModelKind::euclidean;
  s.dim = 2;
  s.resolution = 20;
  auto b = build_model(s);
  CrankNicolsonSemigroup cn(b.model);
  Vec ones = Vec::Ones(b.model.size());
  EXPECT_LE((cn.apply(ones, 1.0) - ones).cwiseAbs().maxCoeff(), 1e-9);
  Rng rng(2);
  Vec f = random_values(b.model.size(), rng).cwiseAbs();
  Vec u = cn.apply(f, 0.3);
  EXPECT_NEAR(b.model.integrate(u), b.model.integrate(f), 1e-9 * b.model.integrate(f));
  EXPECT_GE(u.minCoeff(), 0.0);
  EXPECT_LE(u.maxCoeff(), f.maxCoeff());
}

TEST(Semigroup, KernelIsSymmetricInTheMeasure) {
  auto b = circle(32);
  auto sd = spectral_decompose_dense(b.model, 32);
  for (double t : {0.1, 1.0}) {
    double a = heat_kernel(b.model, sd, t, 3, 17).value;
    double c = heat_kernel(b.model, sd, t, 17, 3).value;
    EXPECT_NEAR(a, c, 1e-12);
    // discrete kernel approaches the image-sum kernel as h -> 0; loose check here
    double exact = periodic_kernel_1d(t, (17 - 3) * 2.0 * std::numbers::pi / 32, 2.0 * std::numbers::pi);
    EXPECT_NEAR(a, exact, 0.05 * exact + 1e-6);
  }
}

TEST(Semigroup, FitSlopeRecoversALine) {
  std::vector<double> x{0, 1, 2, 3, 4}, y;
  for (double v : x) y.push_back(-2.5 * v + 7.0);
  EXPECT_NEAR(fit_slope(x, y), -2.5, 1e-14);
}

TEST(Cache, RoundTripAndRejection) {
  auto dir = scratch("cache");
  auto b = circle(32);
  auto sd = spectral_decompose_dense(b.model, 10);
  sd.model_id = b.model.id;
  sd.model_hash = model_hash(b.model);
  auto path = dir / "circle.spec";
  save_spectral_cache(path, sd);
  EXPECT_FALSE(std::filesystem::exists(dir / "circle.spec.tmp"));

  auto back = load_spectral_cache(path, b.model);
  ASSERT_TRUE(back.has_value());
  EXPECT_EQ(back->eigenvalues, sd.eigenvalues);
  EXPECT_EQ(back->eigenfields, sd.eigenfields);
  EXPECT_FALSE(load_spectral_cache(path, b.model, 11).has_value());

  // another operator with the same node count
  auto other = circle(32);
  other.model.L *= 2.0;
  EXPECT_FALSE(load_spectral_cache(path, other.model).has_value());

  // bumped version byte
  std::string bytes;
  {
    std::ifstream is(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(is), {});
  }
  bytes[8] = static_cast<char>(kCacheVersion + 1);
  write_file_atomic(path, bytes);
  EXPECT_FALSE(load_spectral_cache(path, b.model).has_value());

  // truncated payload
  bytes[8] = static_cast<char>(kCacheVersion);
  write_file_atomic(path, bytes.substr(0, bytes.size() / 2));
  EXPECT_FALSE(load_spectral_cache(path, b.model).has_value());
  EXPECT_FALSE(load_spectral_cache(dir / "missing.spec", b.model).has_value());
  std::filesystem::remove_all(dir);
}
