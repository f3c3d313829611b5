#pragma once

#include "heatlab/lab.hpp"

namespace heatlab {

struct TestField {
  std::string name;
  Vec values;
};

struct TestFieldSuite {
  std::vector<TestField> fields;

  void add(std::string name, Vec v) { fields.push_back({std::move(name), std::move(v)}); }
  void append(const TestFieldSuite& o) { fields.insert(fields.end(), o.fields.begin(), o.fields.end()); }
  size_t size() const { return fields.size(); }
  bool empty() const { return fields.empty(); }
  Json names() const {
    Json j = Json::array();
    for (const auto& f : fields) j.push_back(f.name);
    return j;
  }
};

// Coordinates and their pairwise products in the model chart.
inline TestFieldSuite coordinate_fields(const DiscretizedModel& m, bool products = true) {
  TestFieldSuite s;
  const Index d = m.nodes.cols();
  for (Index a = 0; a < d; ++a) s.add("x" + std::to_string(a), m.nodes.col(a));
  if (products)
    for (Index a = 0; a < d; ++a)
      for (Index b = a; b < d; ++b)
        s.add("x" + std::to_string(a) + "x" + std::to_string(b), m.nodes.col(a).cwiseProduct(m.nodes.col(b)));
  return s;
}

// Eigenfields 1..count and `combos` random combinations of eigenfields 1..count.
inline TestFieldSuite eigen_fields(const SpectralData& sd, Index count, int combos, std::uint64_t seed) {
  TestFieldSuite s;
  count = std::min<Index>(count, sd.count() - 1);
  for (Index k = 1; k <= count; ++k) s.add("phi" + std::to_string(k), sd.eigenfields.col(k));
  Rng rng(seed);
  std::normal_distribution<double> g;
  for (int c = 0; c < combos; ++c) {
    Vec v = Vec::Zero(sd.eigenfields.rows());
    for (Index k = 1; k <= count; ++k) v += g(rng) * sd.eigenfields.col(k);
    s.add("eigcombo" + std::to_string(c), v);
  }
  return s;
}

// exp(-d^2 / w^2) around the given nodes, d the chart distance.
inline TestFieldSuite bump_fields(const DiscretizedModel& m, const std::vector<Index>& centres, double width) {
  TestFieldSuite s;
  for (Index c : centres) {
    Vec d2 = (m.nodes.rowwise() - m.nodes.row(c)).rowwise().squaredNorm();
    s.add("bump" + std::to_string(c), (-d2.array() / (width * width)).exp().matrix());
  }
  return s;
}

// Uniform noise smoothed by the heat flow for time eps.
inline TestFieldSuite heat_noise_fields(const Lab& lab, int count, double eps, std::uint64_t seed) {
  TestFieldSuite s;
  Rng rng(seed);
  for (int c = 0; c < count; ++c) s.add("noise" + std::to_string(c), lab.heat(random_values(lab.model().size(), rng), eps));
  return s;
}

// Sobolev extremal profile (1 + lambda cos d)^(-2/(p-2)), d the oracle
// distance to `pole` (cos d is the sine of the latitude seen from the pole).
inline Vec extremal_profile(const Lab& lab, Index pole, double lambda, double p) {
  const auto& m = lab.model();
  Vec v(m.size());
  for (Index i = 0; i < m.size(); ++i) {
    double d = distance_between(lab, pole, i);
    v[i] = std::pow(1.0 + lambda * std::cos(d), -2.0 / (p - 2.0));
  }
  return v;
}

// x + y z on the Heisenberg chart: its Gamma_2 sits on the curvature boundary.
inline Vec heisenberg_extremal(const DiscretizedModel& m) {
  return m.nodes.col(0) + m.nodes.col(1).cwiseProduct(m.nodes.col(2));
}

// Random combinations of the chart monomials of degree <= 2 (plus x + y z on 3-dim charts).
inline TestFieldSuite random_polynomials(const DiscretizedModel& m, int count, Rng& rng) {
  TestFieldSuite base = coordinate_fields(m);
  if (m.nodes.cols() == 3) base.add("x+yz", heisenberg_extremal(m));
  std::normal_distribution<double> g;
  TestFieldSuite s;
  for (int c = 0; c < count; ++c) {
    Vec v = Vec::Zero(m.size());
    for (const auto& f : base.fields) v += g(rng) * f.values;
    s.add("poly" + std::to_string(c), v);
  }
  return s;
}

// Standard suite per model kind.
inline TestFieldSuite default_suite(const Lab& lab, std::uint64_t seed = 0) {
  const auto& m = lab.model();
  TestFieldSuite s;
  switch (lab.built->spec.kind) {
    case ModelKind::sphere:
      s.append(coordinate_fields(m));
      if (lab.spectral) s.append(eigen_fields(*lab.spectral, 8, 4, seed));
      break;
    case ModelKind::torus:
      if (lab.spectral) s.append(eigen_fields(*lab.spectral, 8, 4, seed));
      break;
    case ModelKind::euclidean: {
      s.append(coordinate_fields(m));
      double a = lab.built->spec.extent;
      s.append(bump_fields(m, {centre_node(*lab.built)}, 0.4 * a));
      break;
    }
    case ModelKind::heisenberg:
      s.append(coordinate_fields(m));
      s.add("x+yz", heisenberg_extremal(m));
      s.add("z2", m.nodes.col(2).cwiseAbs2());
      s.add("x2y", m.nodes.col(0).cwiseAbs2().cwiseProduct(m.nodes.col(1)));
      break;
    case ModelKind::hyperbolic: break;
  }
  Rng rng(seed ^ 0x9e3779b97f4a7c15ull);
  if (lab.built->spec.kind == ModelKind::heisenberg) {
    // grid noise in z is barely damped by the flow; random polynomials are resolved
    s.append(random_polynomials(m, 2, rng));
    return s;
  }
  for (int c = 0; c < 2; ++c) {
    Vec v = random_values(m.size(), rng);
    s.add("smooth_noise" + std::to_string(c), lab.heat(v, 0.2));
  }
  return s;
}

// f_eps = f - min f + eps * (max f - min f): nonnegative field lifted off zero.
struct Shifted {
  Vec values;
  double eps = 0.0;
};

inline Shifted positive_shift(const Vec& f, double eps_rel = 1e-3) {
  double lo = f.minCoeff(), hi = f.maxCoeff();
  double span = std::max(hi - lo, std::abs(hi));
  if (span == 0.0) span = 1.0;
  Shifted s;
  s.eps = eps_rel * span;
  s.values = (f.array() - lo + s.eps).matrix();
  return s;
}

}  // namespace heatlab
