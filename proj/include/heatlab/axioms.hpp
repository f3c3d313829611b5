#pragma once

#include "heatlab/forms.hpp"
#include "heatlab/report.hpp"

#include <random>

namespace heatlab {

using Rng = std::mt19937_64;

inline Vec random_values(Index n, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Vec v(n);
  for (Index i = 0; i < n; ++i) v[i] = g(rng);
  return v;
}

struct AxiomResiduals {
  double symmetry = 0.0;
  double constants = 0.0;
  double dirichlet = 0.0;  // largest normalized <f, Lf>, should be <= 0
  double gamma_min = 0.0;  // most negative normalized Gamma value
  double gamma_paths = 0.0;
};

inline double weighted_symmetry_residual(const DiscretizedModel& m) {
  SpMat DL = m.mu.asDiagonal() * m.L;
  SpMat diff = SpMat(DL - SpMat(DL.transpose()));
  double scale = 0.0, worst = 0.0;
  for (Index r = 0; r < DL.outerSize(); ++r)
    for (SpMat::InnerIterator it(DL, r); it; ++it) scale = std::max(scale, std::abs(it.value()));
  for (Index r = 0; r < diff.outerSize(); ++r)
    for (SpMat::InnerIterator it(diff, r); it; ++it) worst = std::max(worst, std::abs(it.value()));
  return scale > 0 ? worst / scale : worst;
}

inline double operator_scale(const DiscretizedModel& m) {
  double s = 0.0;
  for (Index i = 0; i < m.size(); ++i) s = std::max(s, std::abs(m.L.coeff(i, i)));
  return s > 0 ? s : 1.0;
}

inline MarginReport check_operator_axioms(const DiscretizedModel& m, int n_fields = 100, std::uint64_t seed = 0) {
  MarginReport rep("operator_axioms", m.id);
  const double lscale = operator_scale(m);
  double sym = weighted_symmetry_residual(m);
  rep.add({{"axiom", 0}}, sym, 0.0);

  Vec one_image = m.L * Vec::Ones(m.size());
  double ones = 0.0;
  for (Index i = 0; i < m.size(); ++i)
    if (!m.boundary[i]) ones = std::max(ones, std::abs(one_image[i]));
  ones /= lscale;
  rep.add({{"axiom", 1}}, ones, 0.0);

  Rng rng(seed);
  std::vector<char> interior(static_cast<size_t>(m.size()));
  for (Index i = 0; i < m.size(); ++i) interior[i] = !m.boundary[i];
  double dir_worst = -std::numeric_limits<double>::infinity();
  double gam_worst = std::numeric_limits<double>::infinity();
  double path_worst = 0.0;
  for (int k = 0; k < n_fields; ++k) {
    Vec f = random_values(m.size(), rng);
    double form = m.inner(f, m.L * f) / (m.inner(f, f) * lscale);
    dir_worst = std::max(dir_worst, form);
    rep.add({{"axiom", 2}, {"field", k}}, form, 0.0);

    Vec g = gamma_values(m, f);
    double gmax = g.cwiseAbs().maxCoeff();
    double gmin = std::numeric_limits<double>::infinity();
    for (Index i = 0; i < m.size(); ++i)
      if (interior[i]) gmin = std::min(gmin, g[i]);
    gmin /= (gmax > 0 ? gmax : 1.0);
    gam_worst = std::min(gam_worst, gmin);
    rep.add({{"axiom", 3}, {"field", k}}, -gmin, 0.0);

    if (k < 5) {
      ScalarField sf(m, f);
      Vec comp = carre_du_champ_composed(m, sf, sf).values();
      double d = (comp - g).cwiseAbs().maxCoeff() / (gmax > 0 ? gmax : 1.0);
      path_worst = std::max(path_worst, d);
    }
  }
  rep.add({{"axiom", 4}}, path_worst, 0.0);
  rep.finalize(Tolerance{1e-10, 0.0, 0}, m.mesh_h, 1.0);
  rep.metadata["symmetry_residual"] = sym;
  rep.metadata["constant_residual"] = ones;
  rep.metadata["dirichlet_max_normalized"] = dir_worst;
  rep.metadata["gamma_min_normalized"] = gam_worst;
  rep.metadata["gamma_path_residual"] = path_worst;
  rep.metadata["fields"] = n_fields;
  rep.metadata["seed"] = seed;
  rep.metadata["axiom_legend"] = "0 weighted symmetry, 1 L1=0 off boundary, 2 <f,Lf> normalized, 3 -min Gamma normalized, 4 edge vs composed Gamma";
  return rep;
}

}  // namespace heatlab
