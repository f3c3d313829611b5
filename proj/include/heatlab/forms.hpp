#pragma once

#include "heatlab/core.hpp"

namespace heatlab {

// Second edge form carrying the vertical (transverse) directions.
struct VerticalForm {
  std::string model_id;
  std::vector<Edge> edges;
  bool empty() const { return edges.empty(); }
};

namespace detail {

inline Vec edge_form(const DiscretizedModel& m, const std::vector<Edge>& edges, const Vec& f, const Vec& g) {
  Vec out = Vec::Zero(m.size());
  for (const auto& e : edges) {
    double w = 0.5 * e.c * (f[e.j] - f[e.i]) * (g[e.j] - g[e.i]);
    out[e.i] += w;
    out[e.j] += w;
  }
  return out.cwiseQuotient(m.mu);
}

}  // namespace detail

inline Vec gamma_values(const DiscretizedModel& m, const Vec& f, const Vec& g) {
  return detail::edge_form(m, m.edges, f, g);
}
inline Vec gamma_values(const DiscretizedModel& m, const Vec& f) { return gamma_values(m, f, f); }

inline ScalarField carre_du_champ(const DiscretizedModel& m, const ScalarField& f, const ScalarField& g) {
  check_belongs(m, f);
  check_belongs(m, g);
  return {m, gamma_values(m, f.values(), g.values())};
}
inline ScalarField carre_du_champ(const DiscretizedModel& m, const ScalarField& f) {
  return carre_du_champ(m, f, f);
}

// 1/2 (L(fg) - f Lg - g Lf), the operator-composition path.
inline ScalarField carre_du_champ_composed(const DiscretizedModel& m, const ScalarField& f, const ScalarField& g) {
  check_belongs(m, f);
  check_belongs(m, g);
  const Vec& a = f.values();
  const Vec& b = g.values();
  Vec fg = a.cwiseProduct(b);
  Vec r = 0.5 * (m.L * fg - a.cwiseProduct(m.L * b) - b.cwiseProduct(m.L * a));
  return {m, r};
}

inline Vec gamma2_values(const DiscretizedModel& m, const Vec& f) {
  Vec Lf = m.L * f;
  return 0.5 * (m.L * gamma_values(m, f)) - gamma_values(m, f, Lf);
}

inline ScalarField gamma2(const DiscretizedModel& m, const ScalarField& f) {
  check_belongs(m, f);
  return {m, gamma2_values(m, f.values())};
}

inline void check_vform(const DiscretizedModel& m, const VerticalForm& vf) {
  require(vf.empty() || vf.model_id == m.id, ErrorKind::dimension_mismatch, "vertical form attached to another model");
}

inline Vec gammaZ_values(const DiscretizedModel& m, const VerticalForm& vf, const Vec& f, const Vec& g) {
  if (vf.empty()) return Vec::Zero(m.size());
  return detail::edge_form(m, vf.edges, f, g);
}
inline Vec gammaZ_values(const DiscretizedModel& m, const VerticalForm& vf, const Vec& f) {
  return gammaZ_values(m, vf, f, f);
}

inline Vec gamma2Z_values(const DiscretizedModel& m, const VerticalForm& vf, const Vec& f) {
  if (vf.empty()) return Vec::Zero(m.size());
  Vec Lf = m.L * f;
  return 0.5 * (m.L * gammaZ_values(m, vf, f)) - gammaZ_values(m, vf, f, Lf);
}

inline ScalarField gammaZ(const DiscretizedModel& m, const VerticalForm& vf, const ScalarField& f,
                          const ScalarField& g) {
  check_belongs(m, f);
  check_belongs(m, g);
  check_vform(m, vf);
  return {m, gammaZ_values(m, vf, f.values(), g.values())};
}

inline ScalarField gamma2Z(const DiscretizedModel& m, const VerticalForm& vf, const ScalarField& f) {
  check_belongs(m, f);
  check_vform(m, vf);
  return {m, gamma2Z_values(m, vf, f.values())};
}

// Deep interior when the forms also reach along vertical edges: hops count
// both horizontal and vertical steps.
inline std::vector<char> deep_interior(const DiscretizedModel& m, const VerticalForm& vf, int hops = 2) {
  if (vf.empty()) return deep_interior(m, hops);
  const Index n = m.size();
  std::vector<std::vector<Index>> up(static_cast<size_t>(n));
  for (const auto& e : vf.edges) {
    up[e.i].push_back(e.j);
    up[e.j].push_back(e.i);
  }
  auto bad = untrusted_or_boundary(m);
  std::vector<int> hop(static_cast<size_t>(n), std::numeric_limits<int>::max());
  std::deque<Index> q;
  for (Index i = 0; i < n; ++i)
    if (bad[i]) {
      hop[i] = 0;
      q.push_back(i);
    }
  auto visit = [&](Index from, Index to) {
    if (hop[to] > hop[from] + 1) {
      hop[to] = hop[from] + 1;
      q.push_back(to);
    }
  };
  while (!q.empty()) {
    Index i = q.front();
    q.pop_front();
    for (const auto& nb : m.adjacency[i]) visit(i, nb.node);
    for (Index j : up[i]) visit(i, j);
  }
  std::vector<char> mask(static_cast<size_t>(n));
  for (Index i = 0; i < n; ++i) mask[i] = hop[i] >= hops;
  return mask;
}

// Apply a scalar map node-wise.
template <class Fn>
Vec map_values(const Vec& f, Fn fn) {
  Vec out(f.size());
  for (Index i = 0; i < f.size(); ++i) out[i] = fn(f[i]);
  return out;
}

}  // namespace heatlab
