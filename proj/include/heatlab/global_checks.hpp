#pragma once

#include "heatlab/local_checks.hpp"

namespace heatlab {

namespace detail {

inline DistanceField distance_field(const Lab& lab, Index source, DistanceMethod method) {
  switch (method) {
    case DistanceMethod::oracle: return oracle_distance(*lab.built, source);
    case DistanceMethod::graph: {
      // unreachable nodes (corners of a truncated sub-Riemannian box) stay at +inf: outside every ball
      std::vector<char> seed(static_cast<size_t>(lab.model().size()), 0);
      seed[source] = 1;
      return {source, distance_to_set(lab.model(), seed), DistanceMethod::graph, Json::object()};
    }
    default: throw Error(ErrorKind::invalid_argument, "distance method must be oracle or graph here");
  }
}

inline DistanceMethod default_method(const Lab& lab) {
  return lab.oracle().exact_distance ? DistanceMethod::oracle : DistanceMethod::graph;
}

inline double pair_distance(const Lab& lab, Index i, Index j, DistanceMethod method) {
  if (method == DistanceMethod::oracle) {
    const auto& m = lab.model();
    return lab.oracle().exact_distance(m.nodes.row(i), m.nodes.row(j));
  }
  return graph_distance(lab.model(), i).values[j];
}

// Sup over the sample of the spread of a positive series, relative to its mean.
inline double relative_spread(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  return (*hi - *lo) / mean;
}

}  // namespace detail

// D_alpha of the sub-Riemannian Harnack exponent.
inline double harnack_exponent(const CDParameters& p, double alpha) {
  require(alpha > 2.0, ErrorKind::invalid_argument, "alpha must exceed 2");
  require(p.rho2 > 0.0, ErrorKind::invalid_argument, "rho2 must be positive");
  return p.n * (alpha - 1.0) * (alpha - 1.0) * (1.0 + alpha * p.kappa / ((alpha - 1.0) * p.rho2)) / (4.0 * (alpha - 2.0));
}

// ------------------------------------------------------------ Harnack

enum class HarnackMode { semigroup, kernel, sub_riemannian };

inline const char* to_string(HarnackMode m) {
  switch (m) {
    case HarnackMode::semigroup: return "semigroup";
    case HarnackMode::kernel: return "kernel";
    case HarnackMode::sub_riemannian: return "sub_riemannian";
  }
  return "unknown";
}

struct HarnackOptions {
  HarnackMode mode = HarnackMode::semigroup;
  std::vector<double> times{0.25, 0.5, 1.0};
  int pairs = 200;
  std::uint64_t seed = 0;
  double alpha = 3.0;
  std::optional<CDParameters> cd;   // sub_riemannian; default oracle cd_params
  std::optional<double> exponent;   // overrides D (sub_riemannian) or n (Riemannian)
  std::optional<DistanceMethod> distance;
  double floor_rel = 1e-8;          // skip u(y, t) below floor_rel * max u(., t)
  Tolerance tol{1e-8, 1.0, 2};      // margins are in log units
};

// Log-form margins of
//   u(x, s) <= u(y, t) (t/s)^(D/2) exp(c d^2/(t - s) + K d^2/6 + n K (t - s)/4)
// with D = n, c = 1/4 (Riemannian, K = max(0, -rho)) or D = D_alpha,
// c = D_alpha/(4n) (sub-Riemannian, K = 0). u is P f for suite fields, or the
// heat kernel from the model centre.
inline MarginReport check_harnack(const Lab& lab, const TestFieldSuite& suite, const HarnackOptions& opt = {}) {
  const auto& m = lab.model();
  require(opt.times.size() >= 2, ErrorKind::invalid_argument, "Harnack needs at least two times");
  require(std::is_sorted(opt.times.begin(), opt.times.end()) && opt.times.front() > 0, ErrorKind::invalid_argument,
          "Harnack times must be positive and ascending");
  const auto method = opt.distance.value_or(detail::default_method(lab));
  double D, c, K = 0.0, n;
  if (opt.mode == HarnackMode::sub_riemannian) {
    CDParameters p = opt.cd ? *opt.cd : lab.oracle().cd_params.value_or(CDParameters{});
    require(opt.cd || lab.oracle().cd_params, ErrorKind::not_applicable, "sub-Riemannian Harnack needs CD parameters");
    n = p.n;
    D = opt.exponent.value_or(harnack_exponent(p, opt.alpha));
    c = D / (4.0 * n);
  } else {
    require(!std::isnan(lab.rho()), ErrorKind::not_applicable, "Harnack needs a Ricci lower bound");
    n = lab.dim();
    D = opt.exponent.value_or(n);
    c = 0.25;
    K = lab.oracle().curvature_defect();
  }

  // u_k per source, k indexing times
  std::vector<std::vector<Vec>> u;
  std::vector<std::string> names;
  const bool use_kernel = opt.mode != HarnackMode::semigroup;
  if (use_kernel) {
    Index z = centre_node(*lab.built);
    std::vector<Vec> cols;
    for (double t : opt.times) cols.push_back(lab.kernel(t, z));
    u.push_back(std::move(cols));
    names.push_back("kernel@" + std::to_string(z));
  } else {
    for (const auto& f : suite.fields) {
      auto sh = positive_shift(f.values);
      std::vector<Vec> cols;
      for (double t : opt.times) cols.push_back(lab.heat(sh.values, t));
      u.push_back(std::move(cols));
      names.push_back(f.name);
    }
  }
  require(!u.empty(), ErrorKind::invalid_argument, "empty suite");
  auto mask = detail::both(heat_mask(m, opt.times.back()), detail::form_mask(lab, 1));
  auto nodes = mask_indices(mask);
  require(!nodes.empty(), ErrorKind::not_applicable, "heat mask is empty at the largest time");

  MarginReport rep(std::string("harnack_") + to_string(opt.mode), m.id);
  Rng rng(opt.seed);
  std::uniform_int_distribution<size_t> pick_src(0, u.size() - 1), pick_node(0, nodes.size() - 1);
  std::uniform_int_distribution<size_t> pick_t(0, opt.times.size() - 1);
  int made = 0, tries = 0;
  while (made < opt.pairs && tries < 50 * opt.pairs) {
    ++tries;
    size_t src = pick_src(rng);
    size_t a = pick_t(rng), b = pick_t(rng);
    if (a == b) continue;
    if (a > b) std::swap(a, b);
    const double s = opt.times[a], t = opt.times[b];
    Index x = nodes[pick_node(rng)];
    // half of the pairs on the diagonal, where the time factor is tight
    Index y = (tries % 2) ? x : nodes[pick_node(rng)];
    const Vec& us = u[src][a];
    const Vec& ut = u[src][b];
    if (ut[y] < opt.floor_rel * ut.cwiseAbs().maxCoeff() || us[x] <= 0.0) continue;
    double d = x == y ? 0.0 : detail::pair_distance(lab, x, y, method);
    double lhs = std::log(us[x]);
    double rhs = std::log(ut[y]) + 0.5 * D * std::log(t / s) + c * d * d / (t - s) + K * d * d / 6.0 +
                 n * K * (t - s) / 4.0;
    rep.add({{"source", static_cast<double>(src)}, {"s", s}, {"t", t}, {"x", static_cast<double>(x)},
             {"y", static_cast<double>(y)}, {"d", d}},
            lhs, rhs);
    ++made;
  }
  rep.finalize(opt.tol, m.mesh_h, 1.0);
  rep.metadata["exponent"] = D;
  rep.metadata["distance_coefficient"] = c;
  rep.metadata["K"] = K;
  rep.metadata["n"] = n;
  rep.metadata["distance"] = to_string(method);
  rep.metadata["sources"] = names;
  rep.metadata["times"] = opt.times;
  rep.metadata["log_form"] = true;
  if (opt.mode == HarnackMode::sub_riemannian) rep.metadata["alpha"] = opt.alpha;
  return rep;
}

// ------------------------------------------------------------ kernel bounds

struct KernelBoundOptions {
  std::vector<double> t_grid{0.25, 0.5, 1.0};
  std::vector<double> radii{0.5, 0.75, 1.0, 1.25};  // on-diagonal products p(x, x, r^2) mu(B(x, r))
  std::vector<double> A_grid{0.5, 1.0, 2.0, 4.0};   // ball-mass scan
  double epsilon = 0.5;                              // two-sided Gaussian fit
  double reach = 2.0;                                // off-diagonal samples with d <= reach sqrt(t)
  bool two_sided = false;                            // Cheeger-Yau is an equality (flat space)
  double product_rel = 0.05;                         // on-diagonal product vs closed form
  std::optional<DistanceMethod> distance;
  Tolerance tol{1e-9, 1.0, 2};
};

namespace detail {

// Ball volume around `centre`: oracle closed form if given, else smooth coverage.
inline double ball_volume(const Lab& lab, const DistanceField& d, double r) {
  const auto& m = lab.model();
  return ball_table(m, d, {r}, Coverage::smooth, PerimeterKind::none, lab.dim()).volumes[0];
}

}  // namespace detail

// Cheeger-Yau lower bound, on-diagonal sandwich, two-sided Gaussian fit and
// ball mass, all from the kernel at the model centre.
inline MarginReport check_kernel_bounds(const Lab& lab, const KernelBoundOptions& opt = {}) {
  const auto& m = lab.model();
  const auto method = opt.distance.value_or(detail::default_method(lab));
  const Index z = centre_node(*lab.built);
  const double n = lab.dim();
  const bool riemannian = !std::isnan(lab.rho());
  const double K = riemannian ? lab.oracle().curvature_defect() : 0.0;
  auto dz = detail::distance_field(lab, z, method);
  auto form = detail::form_mask(lab, 1);

  MarginReport cy("cheeger_yau", m.id);
  double scale = 0.0;
  if (riemannian) {
    for (double t : opt.t_grid) {
      Vec p = lab.kernel(t, z);
      auto mask = detail::both(heat_mask(m, t), form);
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      Index li = -1, hi_i = -1;
      double ll = 0, lr = 0;
      const double peak = std::pow(4.0 * std::numbers::pi * t, -0.5 * n);
      // the kernel varies on the scale sqrt(t): stencil error ~ (h^2/t) * peak
      scale = std::max(scale, peak / t);
      for (Index i = 0; i < m.size(); ++i) {
        if (!mask[i] || dz.values[i] > opt.reach * std::sqrt(t)) continue;
        double d = dz.values[i];
        double lower = peak * std::exp(-d * d / (4.0 * t) - K * d * d / 6.0 - n * K * t / 4.0);
        double mg = p[i] - lower;
        if (mg < lo) {
          lo = mg;
          li = i;
          ll = lower;
          lr = p[i];
        }
        if (mg > hi) {
          hi = mg;
          hi_i = i;
        }
      }
      if (li < 0) continue;
      cy.add({{"t", t}, {"node", static_cast<double>(li)}}, ll, lr);
      if (opt.two_sided) cy.add({{"t", t}, {"node", static_cast<double>(hi_i)}, {"mirrored", 1}}, 0.0, -hi);
    }
    cy.finalize(opt.tol, m.mesh_h, scale);
    cy.metadata["K"] = K;
    cy.metadata["reach"] = opt.reach;
    if (opt.two_sided) cy.metadata["note"] = "mirrored samples carry minus the largest margin, so passing bounds |margin|";
  } else {
    cy.gated = false;
    cy.metadata["note"] = "no Ricci bound: Cheeger-Yau not applicable";
    cy.finalize(opt.tol, m.mesh_h, 1.0);
  }

  // on-diagonal products: K* = inf p(x,x,2r^2) V(r), C = sup p(x,x,r^2) V(r)
  MarginReport diag("on_diagonal", m.id);
  std::vector<double> upper, lower;
  double reference = std::numeric_limits<double>::quiet_NaN();
  if (lab.oracle().exact_kernel && lab.oracle().exact_ball_volume) {
    ChartPoint x = m.nodes.row(z);
    double r = 1.0;
    reference = lab.oracle().exact_kernel(r * r, x, x) * lab.oracle().exact_ball_volume(x, r);
  }
  for (double r : opt.radii) {
    double V = detail::ball_volume(lab, dz, r);
    double p1 = lab.kernel(r * r, z)[z];
    double p2 = lab.kernel(2.0 * r * r, z)[z];
    upper.push_back(p1 * V);
    lower.push_back(p2 * V);
    if (!std::isnan(reference) && lab.built->spec.kind == ModelKind::euclidean)
      diag.add({{"r", r}, {"product", p1 * V}}, std::abs(p1 * V / reference - 1.0), opt.product_rel);
  }
  const double Kstar = *std::min_element(lower.begin(), lower.end());
  const double Cn = *std::max_element(upper.begin(), upper.end());
  // finite and ordered: 0 < K* <= C
  diag.add({{"kind", 0}}, 0.0, std::isfinite(Kstar) && std::isfinite(Cn) && Kstar > 0 ? Cn - Kstar : -1.0);
  diag.finalize(Tolerance{1e-12, 0.0, 0}, m.mesh_h, 1.0);
  diag.metadata["K_star"] = Kstar;
  diag.metadata["C"] = Cn;
  diag.metadata["products"] = upper;
  diag.metadata["products_2r2"] = lower;
  diag.metadata["radii"] = opt.radii;
  diag.metadata["spread"] = detail::relative_spread(upper);
  diag.metadata["reference"] = json_number(reference);

  // two-sided Gaussian: smallest C with C^-1 e^{-d^2/((4-eps)t)} <= p V(sqrt t) <= C e^{-d^2/((4+eps)t)}
  MarginReport gauss("gaussian_fit", m.id);
  gauss.gated = false;
  double Cfit = 0.0;
  for (double t : opt.t_grid) {
    Vec p = lab.kernel(t, z);
    double V = detail::ball_volume(lab, dz, std::sqrt(t));
    auto mask = detail::both(heat_mask(m, t), form);
    for (Index i = 0; i < m.size(); ++i) {
      if (!mask[i] || dz.values[i] > opt.reach * std::sqrt(t) || p[i] <= 0) continue;
      double d2 = dz.values[i] * dz.values[i];
      double up = p[i] * V * std::exp(d2 / ((4.0 + opt.epsilon) * t));
      double lo = 1.0 / (p[i] * V * std::exp(d2 / ((4.0 - opt.epsilon) * t)));
      Cfit = std::max({Cfit, up, lo});
    }
    gauss.add({{"t", t}}, Cfit, std::numeric_limits<double>::max());
  }
  gauss.finalize(Tolerance{0.0, 0.0, 0}, m.mesh_h, 1.0);
  gauss.metadata["epsilon"] = opt.epsilon;
  gauss.metadata["C"] = Cfit;

  // ball mass: largest K(A) with P_{A r^2} 1_B(x, r) (x) >= K(A)
  MarginReport mass("ball_mass", m.id);
  mass.gated = false;
  Json kA = Json::array();
  for (double A : opt.A_grid) {
    double k = std::numeric_limits<double>::infinity();
    for (double r : opt.radii) {
      Vec ind(m.size());
      for (Index i = 0; i < m.size(); ++i) ind[i] = dz.values[i] <= r ? 1.0 : 0.0;
      k = std::min(k, lab.heat(ind, A * r * r)[z]);
    }
    mass.add({{"A", A}}, 0.0, k);
    kA.push_back({{"A", A}, {"K", k}});
  }
  mass.finalize(Tolerance{0.0, 0.0, 0}, m.mesh_h, 1.0);
  mass.metadata["K_of_A"] = kA;

  MarginReport rep("kernel_bounds", m.id);
  rep.add({{"kind", 0}}, 0.0, 0.0);
  rep.finalize(Tolerance{0.0, 0.0, 0}, m.mesh_h, 1.0);
  rep.metadata["centre"] = z;
  rep.metadata["distance"] = to_string(method);
  rep.metadata["note"] = "verdict carried by the parts";
  rep.parts = {std::move(cy), std::move(diag), std::move(gauss), std::move(mass)};
  return rep;
}

// ------------------------------------------------------------ volume

struct VolumeOptions {
  std::vector<double> radii;        // doubling evaluated at r and 2r; default per model
  int centres = 3;
  std::optional<double> lower;      // ratio band, default per model
  std::optional<double> upper;
  std::optional<DistanceMethod> distance;
  Coverage coverage = Coverage::smooth;
  double exponent_rel = 0.10;       // reverse-doubling fit vs log2(doubling constant)
  Tolerance tol{1e-12, 0.0, 0};     // the band is the tolerance
};

struct VolumeDefaults {
  std::vector<double> radii;
  double lower, upper;
  DistanceMethod method;
};

inline VolumeDefaults volume_defaults(const Lab& lab) {
  const double n = lab.dim();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  switch (lab.built->spec.kind) {
    case ModelKind::euclidean: {
      double a = lab.built->spec.extent;
      // grid ratio is 2^n up to coverage error, pinned at 2%
      return {{0.15 * a, 0.2 * a, 0.25 * a}, std::pow(2.0, n) * 0.98, std::pow(2.0, n) * 1.02, DistanceMethod::oracle};
    }
    case ModelKind::sphere: return {{0.1, 0.2, 0.4, 0.8, 1.2}, nan, 4.0, DistanceMethod::oracle};
    // flat below half the period, so the same 2% coverage band as the plane
    case ModelKind::torus:
      return {{0.6, 0.8, 1.0}, std::pow(2.0, n) * 0.98, std::pow(2.0, n) * 1.02, DistanceMethod::oracle};
    case ModelKind::heisenberg: return {{0.4, 0.5, 0.6}, 14.0, 18.0, DistanceMethod::oracle};
    case ModelKind::hyperbolic: break;
  }
  throw Error(ErrorKind::unsupported, "no volume defaults for this model");
}

// Doubling ratios V(2r)/V(r) within a band, and the reverse-doubling exponent:
// the log-log slope of V over the radii against log2 of the doubling constant.
inline MarginReport check_volume_regularity(const Lab& lab, const VolumeOptions& opt = {}) {
  const auto& m = lab.model();
  auto def = volume_defaults(lab);
  auto radii = opt.radii.empty() ? def.radii : opt.radii;
  const double lo = opt.lower.value_or(def.lower), hi = opt.upper.value_or(def.upper);
  const auto method = opt.distance.value_or(def.method);
  require(std::is_sorted(radii.begin(), radii.end()) && radii.front() > 0, ErrorKind::invalid_argument,
          "radii must be positive and ascending");

  // centres: the model centre plus nearby nodes, all with 2 r_max clear of the boundary
  const double rmax = 2.0 * radii.back();
  std::vector<char> clear(static_cast<size_t>(m.size()), 1);
  if (m.has_boundary()) {
    Vec db = distance_to_set(m, m.boundary);
    for (Index i = 0; i < m.size(); ++i) clear[i] = db[i] > rmax;
  }
  Index z = centre_node(*lab.built);
  require(clear[z], ErrorKind::invalid_argument, "radii exceed the safe in-box range");
  std::vector<Index> centres{z};
  for (const auto& nb : m.adjacency[z]) {
    if (static_cast<int>(centres.size()) >= opt.centres) break;
    if (clear[nb.node]) centres.push_back(nb.node);
  }

  MarginReport rep("doubling", m.id);
  MarginReport band_lo("doubling_lower", m.id);
  double Cdbl = 0.0;
  std::vector<double> lr, lv;
  std::vector<double> all_r = radii;
  for (double r : radii) all_r.push_back(2.0 * r);
  std::sort(all_r.begin(), all_r.end());
  all_r.erase(std::unique(all_r.begin(), all_r.end()), all_r.end());
  for (Index c : centres) {
    auto d = detail::distance_field(lab, c, method);
    auto tab = ball_table(m, d, all_r, opt.coverage, PerimeterKind::none, lab.dim());
    auto vol = [&](double r) {
      auto it = std::find(all_r.begin(), all_r.end(), r);
      return tab.volumes[static_cast<size_t>(it - all_r.begin())];
    };
    for (double r : radii) {
      double ratio = vol(2.0 * r) / vol(r);
      Cdbl = std::max(Cdbl, ratio);
      rep.add({{"centre", static_cast<double>(c)}, {"r", r}, {"ratio", ratio}}, ratio, hi);
      if (!std::isnan(lo)) band_lo.add({{"centre", static_cast<double>(c)}, {"r", r}}, lo, ratio);
    }
    if (c == z)
      for (size_t k = 0; k < all_r.size(); ++k) {
        lr.push_back(std::log(all_r[k]));
        lv.push_back(std::log(tab.volumes[k]));
      }
  }
  rep.finalize(opt.tol, m.mesh_h, hi);
  rep.metadata["distance"] = to_string(method);
  rep.metadata["doubling_constant"] = Cdbl;
  rep.metadata["band"] = {json_number(lo), hi};
  rep.metadata["radii"] = radii;
  rep.metadata["centres"] = centres;
  if (!std::isnan(lo)) {
    band_lo.finalize(opt.tol, m.mesh_h, lo);
    rep.parts.push_back(std::move(band_lo));
  }

  MarginReport rev("reverse_doubling", m.id);
  const double Q = std::log2(Cdbl);
  const double slope = fit_slope(lr, lv);
  rev.add({{"kind", 0}, {"slope", slope}, {"Q", Q}}, std::abs(slope - Q), opt.exponent_rel * Q);
  // V(s r) >= C^-1 s^Q V(r) at the centre
  for (size_t a = 0; a < lr.size(); ++a)
    for (size_t b = a + 1; b < lr.size(); ++b) {
      double s = std::exp(lr[b] - lr[a]);
      double ratio = std::exp(lv[b] - lv[a]);
      rev.add({{"kind", 1}, {"r", std::exp(lr[a])}, {"s", s}}, std::pow(s, Q) / Cdbl, ratio);
    }
  rev.finalize(Tolerance{1e-12, 0.0, 0}, m.mesh_h, 1.0);
  rev.metadata["Q"] = Q;
  rev.metadata["slope"] = slope;
  rev.metadata["kind_legend"] = "0 |slope - log2 C| <= 10% log2 C, 1 reverse doubling at the centre";
  rep.parts.push_back(std::move(rev));
  return rep;
}

// ------------------------------------------------------------ Neumann Poincare

enum class DomainKind { whole, ball };

struct DomainSpec {
  DomainKind kind = DomainKind::whole;
  double radius = 0.0;
};

struct NeumannOptions {
  std::vector<DomainSpec> domains{{DomainKind::whole, 0.0}};
  double constant = std::numbers::pi * std::numbers::pi;  // Payne-Weinberger for convex domains
  double scale_factor = 2.0;  // ball mode: lambda_1 r^2 agree within this factor across radii
  std::optional<double> equality_rel;  // also require lambda_1 diam^2 within this of the constant
  Tolerance tol{1e-9, 1.0, 2};
};

struct NeumannDomain {
  std::vector<Index> nodes;
  double diameter = 0.0;
  double lambda1 = 0.0;
};

// First nonzero Neumann eigenvalue and diameter of a node subset. The diameter
// is the largest pairwise node distance plus one edge length (cell-centred nodes
// sit half a cell inside the domain); metric balls use 2r.
inline NeumannDomain neumann_domain(const Lab& lab, const DomainSpec& dom) {
  const auto& m = lab.model();
  NeumannDomain out;
  if (dom.kind == DomainKind::whole) {
    for (Index i = 0; i < m.size(); ++i) out.nodes.push_back(i);
  } else {
    require(dom.radius > 0, ErrorKind::invalid_argument, "ball radius must be positive");
    Index z = centre_node(*lab.built);
    auto d = detail::distance_field(lab, z, detail::default_method(lab));
    // component of the centre inside the ball (lattice balls need not be edge-connected)
    std::vector<char> in(static_cast<size_t>(m.size()), 0), seen(in);
    for (Index i = 0; i < m.size(); ++i) in[i] = d.values[i] <= dom.radius;
    std::vector<Index> stack{z};
    seen[z] = 1;
    while (!stack.empty()) {
      Index i = stack.back();
      stack.pop_back();
      out.nodes.push_back(i);
      for (const auto& nb : m.adjacency[i])
        if (in[nb.node] && !seen[nb.node]) {
          seen[nb.node] = 1;
          stack.push_back(nb.node);
        }
    }
    std::sort(out.nodes.begin(), out.nodes.end());
  }
  require(out.nodes.size() >= 3, ErrorKind::invalid_argument, "domain has too few nodes");
  auto sub = neumann_restrict(m, out.nodes);
  if (dom.kind == DomainKind::ball) {
    out.diameter = 2.0 * dom.radius;
  } else if (lab.oracle().diameter) {
    out.diameter = *lab.oracle().diameter;
  } else {
    double dmax = 0.0;
    for (size_t a = 0; a < out.nodes.size(); ++a)
      for (size_t b = a + 1; b < out.nodes.size(); ++b)
        dmax = std::max(dmax, distance_between(lab, out.nodes[a], out.nodes[b]));
    out.diameter = dmax + m.max_edge_length();
  }
  out.lambda1 = spectral_decompose(sub, 2).eigenvalues[1];
  return out;
}

inline MarginReport check_neumann_poincare(const Lab& lab, const NeumannOptions& opt = {}) {
  const auto& m = lab.model();
  MarginReport rep("neumann_poincare", m.id);
  MarginReport eq("neumann_equality", m.id);
  std::vector<double> scaled;
  Json doms = Json::array();
  for (const auto& d : opt.domains) {
    auto nd = neumann_domain(lab, d);
    double prod = nd.lambda1 * nd.diameter * nd.diameter;
    rep.add({{"kind", static_cast<double>(d.kind)}, {"radius", d.radius}, {"product", prod}}, opt.constant / (nd.diameter * nd.diameter),
            nd.lambda1);
    if (opt.equality_rel) eq.add({{"radius", d.radius}}, std::abs(prod / opt.constant - 1.0), *opt.equality_rel);
    if (d.kind == DomainKind::ball) scaled.push_back(nd.lambda1 * d.radius * d.radius);
    doms.push_back({{"kind", d.kind == DomainKind::whole ? "whole" : "ball"}, {"radius", d.radius},
                    {"nodes", nd.nodes.size()}, {"diameter", nd.diameter}, {"lambda1", nd.lambda1},
                    {"lambda1_diam2", prod}});
  }
  rep.finalize(opt.tol, m.mesh_h, opt.constant);
  rep.metadata["constant"] = opt.constant;
  rep.metadata["domains"] = doms;
  if (opt.equality_rel) {
    eq.finalize(Tolerance{1e-12, 0.0, 0}, m.mesh_h, 1.0);
    rep.parts.push_back(std::move(eq));
  }
  if (scaled.size() >= 2) {
    MarginReport sc("ball_scale_invariance", m.id);
    auto [a, b] = std::minmax_element(scaled.begin(), scaled.end());
    sc.add({{"kind", 0}}, *b / *a, opt.scale_factor);
    sc.finalize(Tolerance{1e-12, 0.0, 0}, m.mesh_h, 1.0);
    sc.metadata["lambda1_r2"] = scaled;
    rep.parts.push_back(std::move(sc));
  }
  return rep;
}

// ------------------------------------------------------------ Sobolev family

inline double lp_norm(const DiscretizedModel& m, const Vec& f, double p, bool normalized = false) {
  double s = (m.mu.array() * f.array().abs().pow(p)).sum();
  if (normalized) s /= m.total_measure();
  return std::pow(s, 1.0 / p);
}

// Constant of the Varopoulos-type Sobolev bound from an on-diagonal bound C t^(-n/2).
inline double varopoulos_constant(double n, double C) {
  return std::pow(2.0, 1.0 - 1.0 / n) * 2.0 * n * std::pow(C, 1.0 / n) / ((n - 2.0) * std::sqrt(std::numbers::pi));
}

// Euclidean n >= 3: ||f||_{2n/(n-2)} <= K ||sqrt Gamma f||_2 with K from C = (4 pi)^(-n/2).
inline MarginReport check_varopoulos(const Lab& lab, const TestFieldSuite& suite, const Tolerance& tol = {1e-9, 1.0, 2}) {
  const auto& m = lab.model();
  const double n = lab.dim();
  require(n > 2, ErrorKind::not_applicable, "Varopoulos form needs n > 2");
  const double C = std::pow(4.0 * std::numbers::pi, -0.5 * n);
  const double K = varopoulos_constant(n, C);
  const double q = 2.0 * n / (n - 2.0);
  MarginReport rep("sobolev_varopoulos", m.id);
  double best = 0.0;
  for (size_t fi = 0; fi < suite.size(); ++fi) {
    const Vec& f = suite.fields[fi].values;
    double g = std::sqrt(m.integrate(gamma_values(m, f)));
    if (g <= 0) continue;
    double lhs = lp_norm(m, f, q) / g;  // normalized so the gradient norm is 1
    best = std::max(best, lhs);
    rep.add({{"field", static_cast<double>(fi)}}, lhs, K);
  }
  rep.finalize(tol, m.mesh_h, K);
  rep.metadata["C"] = C;
  rep.metadata["constant"] = K;
  rep.metadata["exponent"] = q;
  rep.metadata["best_ratio"] = best;
  rep.metadata["fields"] = suite.names();
  return rep;
}

struct IsoperimetricOptions {
  std::vector<double> radii{1.0, 1.5, 2.0, 2.5};
  double reference = 0.5 / std::sqrt(std::numbers::pi);  // disk value for n = 2
  Tolerance tol{1e-9, 1.0, 1};  // perimeters are first order
};

// mu(B)^((n-1)/n) / P(B) over radii: a fitted C3 that must not drift with r.
inline MarginReport check_isoperimetric(const Lab& lab, const IsoperimetricOptions& opt = {}) {
  const auto& m = lab.model();
  const double n = lab.dim();
  Index z = centre_node(*lab.built);
  auto d = detail::distance_field(lab, z, detail::default_method(lab));
  auto tab = ball_table(m, d, opt.radii, Coverage::smooth, PerimeterKind::level_set, n);
  MarginReport rep("isoperimetric", m.id);
  std::vector<double> ratios;
  for (size_t k = 0; k < opt.radii.size(); ++k) {
    double ratio = std::pow(tab.volumes[k], (n - 1.0) / n) / tab.perimeters[k];
    ratios.push_back(ratio);
  }
  const double C3 = *std::max_element(ratios.begin(), ratios.end());
  for (size_t k = 0; k < ratios.size(); ++k) {
    // two-sided against the reference: constant in r within the mesh tolerance
    rep.add({{"r", opt.radii[k]}, {"ratio", ratios[k]}}, ratios[k], opt.reference);
    rep.add({{"r", opt.radii[k]}, {"mirrored", 1}}, opt.reference, ratios[k]);
  }
  rep.finalize(opt.tol, m.mesh_h, opt.reference / opt.radii.front());
  rep.metadata["C3"] = C3;
  rep.metadata["ratios"] = ratios;
  rep.metadata["spread"] = detail::relative_spread(ratios);
  rep.metadata["reference"] = opt.reference;
  rep.metadata["perimeter"] = "level_set";
  return rep;
}

// V (||f||_p^2 - ||f||_2^2)/(p - 2) on the normalized measure; p = 2 is the
// limit V Ent(f^2)/2.
inline double sobolev_lhs(const DiscretizedModel& m, const Vec& f, double p) {
  const double V = m.total_measure();
  if (std::abs(p - 2.0) < 1e-12) return 0.5 * V * entropy(m, f.cwiseAbs2());
  double a = std::pow(lp_norm(m, f, p, true), 2), b = std::pow(lp_norm(m, f, 2.0, true), 2);
  return V * (a - b) / (p - 2.0);
}

struct SharpSobolevOptions {
  std::vector<double> p_grid{1.0, 2.0, 4.0, 40.0};
  double extremal_lambda = 0.05;
  double extremal_rel = 0.05;  // extremal candidates within 5% of equality
  double diameter_rel = 0.05;  // bound within 5% of the true diameter at the largest p
  Tolerance tol{1e-9, 1.0, 2};
};

// Sobolev profile for exponent p: (1 + lambda cos d)^(-2/(p-2)), exp(lambda cos d) at p = 2.
inline Vec sobolev_extremal(const Lab& lab, Index pole, double lambda, double p) {
  if (std::abs(p - 2.0) < 1e-12) {
    Vec v = extremal_profile(lab, pole, lambda, 4.0);  // 1/(1 + lambda cos d)
    return map_values(v, [](double x) { return std::exp(1.0 / x - 1.0); });
  }
  return extremal_profile(lab, pole, lambda, p);
}

// (n rho/((n-1)(p-2))) (||f||_p^2 - ||f||_2^2) <= int Gamma(f) dmu / V, written as
// V (||f||_p^2 - ||f||_2^2)/(p-2) <= ((n-1)/(n rho)) int Gamma so that p = 1
// is the Poincare margin verbatim. Also the diameter bound it implies.
inline MarginReport check_sharp_sobolev(const Lab& lab, const TestFieldSuite& suite, const SharpSobolevOptions& opt = {}) {
  const auto& m = lab.model();
  const double n = lab.dim(), rho = lab.rho();
  require(rho > 0 && n > 1, ErrorKind::not_applicable, "sharp Sobolev needs rho > 0 and n > 1");
  require(lab.oracle().total_measure.has_value(), ErrorKind::not_applicable, "sharp Sobolev needs a compact model");
  const double c = (n - 1.0) / (n * rho);
  MarginReport rep("sobolev_sharp", m.id);
  MarginReport ext("sobolev_extremal", m.id);
  double scale = 0.0;
  Index pole = centre_node(*lab.built);
  std::vector<double> verified;
  for (double p : opt.p_grid) {
    require(p >= 1.0, ErrorKind::invalid_argument, "p must be at least 1");
    if (n > 2) require(p <= 2.0 * n / (n - 2.0), ErrorKind::invalid_argument, "p above the critical exponent");
    bool ok = true;
    for (size_t fi = 0; fi < suite.size(); ++fi) {
      auto sh = positive_shift(suite.fields[fi].values);
      const Vec& f = sh.values;
      double lhs = sobolev_lhs(m, f, p);
      double rhs = c * m.integrate(gamma_values(m, f));
      scale = std::max(scale, std::abs(rhs));
      auto& s = rep.add({{"p", p}, {"field", static_cast<double>(fi)}}, lhs, rhs);
      ok = ok && s.margin >= -opt.tol.bound(std::abs(rhs), m.mesh_h);
    }
    Vec e = sobolev_extremal(lab, pole, opt.extremal_lambda, p);
    double el = sobolev_lhs(m, e, p), er = c * m.integrate(gamma_values(m, e));
    // equality ratio of the near-extremal profile
    ext.add({{"p", p}, {"ratio", el / er}}, std::abs(el / er - 1.0), opt.extremal_rel);
    if (ok) verified.push_back(p);
  }
  rep.finalize(opt.tol, m.mesh_h, scale);
  rep.metadata["constant"] = c;
  rep.metadata["fields"] = suite.names();
  rep.metadata["p_grid"] = opt.p_grid;
  rep.metadata["form"] = "V (|f|_p^2 - |f|_2^2)/(p-2) <= (n-1)/(n rho) int Gamma(f); p = 2 is V Ent(f^2)/2";
  ext.finalize(Tolerance{1e-12, 0.0, 0}, m.mesh_h, 1.0);
  ext.metadata["lambda"] = opt.extremal_lambda;
  ext.metadata["profile"] = "(1 + lambda cos d)^(-2/(p-2)), exp(lambda cos d) at p = 2";
  rep.parts.push_back(std::move(ext));

  // diameter from the verified constant A = (n-1)(p-2)/(n rho) at the largest p > 2
  MarginReport dia("diameter_bound", m.id);
  double pmax = 0.0;
  for (double p : verified)
    if (p > 2.0) pmax = std::max(pmax, p);
  if (pmax > 2.0) {
    const double A = (n - 1.0) * (pmax - 2.0) / (n * rho);
    const double bound = std::numbers::pi * std::sqrt(2.0 * pmax * A) / (pmax - 2.0);
    const double diam = lab.oracle().diameter.value_or(std::numeric_limits<double>::quiet_NaN());
    double mesh_diam = 0.0;
    auto dz = oracle_distance(*lab.built, pole);
    mesh_diam = dz.values.maxCoeff();
    dia.add({{"p", pmax}, {"kind", 0}}, std::isnan(diam) ? mesh_diam : diam, bound);
    if (!std::isnan(diam)) dia.add({{"p", pmax}, {"kind", 1}}, bound / diam - 1.0, opt.diameter_rel);
    dia.finalize(Tolerance{1e-12, 0.0, 0}, m.mesh_h, 1.0);
    dia.metadata["A"] = A;
    dia.metadata["bound"] = bound;
    dia.metadata["diameter"] = json_number(diam);
    dia.metadata["mesh_diameter"] = mesh_diam;
    dia.metadata["myers"] = std::numbers::pi * std::sqrt((n - 1.0) / rho);
  } else {
    dia.metadata["note"] = "no verified exponent above 2";
    dia.finalize(Tolerance{1e-12, 0.0, 0}, m.mesh_h, 1.0);
  }
  rep.parts.push_back(std::move(dia));
  return rep;
}

// ------------------------------------------------------------ report-only diagnostics

// Euclidean r-balls near the z-axis sit in CC balls of radius C r^(1/2): fitted C.
inline MarginReport diagnose_fefferman_phong(const Lab& lab, const std::vector<double>& radii = {0.1, 0.2, 0.4}) {
  const auto& m = lab.model();
  require(lab.built->spec.kind == ModelKind::heisenberg, ErrorKind::not_applicable, "Heisenberg only");
  MarginReport rep("fefferman_phong", m.id);
  rep.gated = false;
  Index z = centre_node(*lab.built);
  ChartPoint x = m.nodes.row(z);
  double Cfit = 0.0;
  for (double r : radii) {
    double worst = 0.0;
    for (Index i = 0; i < m.size(); ++i) {
      if ((m.nodes.row(i) - x).norm() > r) continue;
      worst = std::max(worst, lab.oracle().exact_distance(x, m.nodes.row(i)) / std::sqrt(r));
    }
    Cfit = std::max(Cfit, worst);
    rep.add({{"r", r}}, worst, std::numeric_limits<double>::max());
  }
  rep.finalize(Tolerance{0.0, 0.0, 0}, m.mesh_h, 1.0);
  rep.metadata["C"] = Cfit;
  rep.metadata["exponent"] = 0.5;
  return rep;
}

// lambda_1 r^2 of Neumann CC balls: the empirical ball-Poincare constant.
inline MarginReport diagnose_ball_poincare(const Lab& lab, const std::vector<double>& radii = {0.6, 0.9}) {
  const auto& m = lab.model();
  MarginReport rep("ball_poincare", m.id);
  rep.gated = false;
  Json vals = Json::array();
  for (double r : radii) {
    auto nd = neumann_domain(lab, {DomainKind::ball, r});
    rep.add({{"r", r}, {"nodes", static_cast<double>(nd.nodes.size())}}, 0.0, nd.lambda1 * r * r);
    vals.push_back({{"r", r}, {"lambda1", nd.lambda1}, {"lambda1_r2", nd.lambda1 * r * r}});
  }
  rep.finalize(Tolerance{0.0, 0.0, 0}, m.mesh_h, 1.0);
  rep.metadata["values"] = vals;
  return rep;
}

// ||(-L + 1)^(-alpha/2) f||_q <= C ||f||_p on eigen-combination fields, spectral.
inline MarginReport diagnose_small_time_sobolev(const Lab& lab, const TestFieldSuite& suite, double p = 1.5,
                                                double alpha = 1.0) {
  const auto& m = lab.model();
  require(lab.spectral != nullptr, ErrorKind::not_applicable, "needs spectral data");
  const double n = lab.dim();
  const double q = 1.0 / (1.0 / p - alpha / n);
  require(q > 0, ErrorKind::invalid_argument, "alpha p must stay below n");
  const auto& sd = *lab.spectral;
  MarginReport rep("small_time_sobolev", m.id);
  rep.gated = false;
  double Cfit = 0.0;
  for (size_t fi = 0; fi < suite.size(); ++fi) {
    Vec c = sd.eigenfields.transpose() * m.mu.cwiseProduct(suite.fields[fi].values);
    Vec proj = sd.eigenfields * c;
    for (Index k = 0; k < c.size(); ++k) c[k] *= std::pow(sd.eigenvalues[k] + 1.0, -0.5 * alpha);
    Vec g = sd.eigenfields * c;
    double ratio = lp_norm(m, g, q) / lp_norm(m, proj, p);
    Cfit = std::max(Cfit, ratio);
    rep.add({{"field", static_cast<double>(fi)}}, ratio, std::numeric_limits<double>::max());
  }
  rep.finalize(Tolerance{0.0, 0.0, 0}, m.mesh_h, 1.0);
  rep.metadata["C"] = Cfit;
  rep.metadata["p"] = p;
  rep.metadata["q"] = q;
  rep.metadata["alpha"] = alpha;
  return rep;
}

}  // namespace heatlab
