#pragma once

#include "heatlab/fields.hpp"

namespace heatlab {

namespace detail {

// Mask for pointwise second-order forms, vertical edges included.
inline std::vector<char> form_mask(const Lab& lab, int hops = 2) {
  return lab.has_vform() ? deep_interior(lab.model(), lab.vform(), hops) : deep_interior(lab.model(), hops);
}

inline std::vector<char> both(std::vector<char> a, const std::vector<char>& b) {
  for (size_t i = 0; i < a.size(); ++i) a[i] = a[i] && b[i];
  return a;
}

inline double masked_max(const Vec& v, const std::vector<char>& mask) {
  double m = 0.0;
  for (Index i = 0; i < v.size(); ++i)
    if (mask[i]) m = std::max(m, std::abs(v[i]));
  return m;
}

inline double resolve(double v, double fallback) { return std::isnan(v) ? fallback : v; }

inline Vec log_values(const Vec& u) {
  return map_values(u, [](double x) { return std::log(x); });
}

}  // namespace detail

// ------------------------------------------------------------ curvature-dimension

struct CDOptions {
  std::optional<CDParameters> params;  // default: oracle (rho, n) or oracle cd_params
  std::vector<double> nu_grid;         // generalized mode: empty = exact minimum over nu > 0
  bool two_sided = false;              // equality cases: also record the negated largest margin
  Tolerance tol{1e-9, 3.0, 2};         // abs + 3 h^2 * scale, measured 2.3 on the sphere
};

// Riemannian Bochner inequality Gamma_2 >= (Lf)^2/n + rho Gamma plus the
// Gamma(Gamma) bound; generalized mode adds the vertical terms
// with the nu minimization. Fields are normalized to max Gamma = 1 on the mask.
inline MarginReport check_cd(const Lab& lab, const TestFieldSuite& suite, const CDOptions& opt = {}) {
  const auto& m = lab.model();
  const bool generalized = lab.has_vform() || (opt.params && opt.params->kappa > 0);
  CDParameters p;
  if (opt.params)
    p = *opt.params;
  else if (generalized && lab.oracle().cd_params)
    p = *lab.oracle().cd_params;
  else
    p = CDParameters{lab.rho(), 1.0, 0.0, static_cast<double>(lab.dim())};
  p.validate();
  require(!std::isnan(p.rho1), ErrorKind::not_applicable, "no curvature bound known for " + m.id);
  require(!generalized || lab.has_vform(), ErrorKind::not_applicable, "generalized CD needs a vertical form");
  for (double nu : opt.nu_grid) require(nu > 0, ErrorKind::invalid_argument, "nu grid must be positive");
  auto mask = detail::form_mask(lab);
  require(mask_count(mask) > 0, ErrorKind::not_applicable, "deep-interior mask is empty");

  MarginReport rep(generalized ? "cd_generalized" : "cd", m.id);
  MarginReport lem("gamma_gamma_bound", m.id);
  double scale = 0.0, lscale = 0.0, bz_min = 0.0;
  for (size_t fi = 0; fi < suite.size(); ++fi) {
    Vec f = suite.fields[fi].values;
    double gmax = detail::masked_max(gamma_values(m, f), mask);
    if (gmax <= 0.0) continue;
    f /= std::sqrt(gmax);
    Vec G = gamma_values(m, f), G2 = gamma2_values(m, f), Lf = m.L * f;
    Vec GZ, B;
    if (generalized) {
      GZ = gammaZ_values(m, lab.vform(), f);
      B = gamma2Z_values(m, lab.vform(), f);
    }
    double worst = std::numeric_limits<double>::infinity(), top = -worst;
    Index wi = -1, ti = -1;
    double wl = 0, wr = 0, wnu = 0;
    for (Index i = 0; i < m.size(); ++i) {
      if (!mask[i]) continue;
      double lhs = Lf[i] * Lf[i] / p.n + p.rho1 * G[i];
      double rhs = G2[i];
      double nu_used = 0.0;
      if (generalized) {
        bz_min = std::min(bz_min, B[i]);
        double b = std::max(B[i], 0.0);
        lhs += p.rho2 * GZ[i];
        if (opt.nu_grid.empty()) {
          // min over nu of nu b + kappa G / nu, attained at sqrt(kappa G / b)
          rhs += 2.0 * std::sqrt(p.kappa * G[i] * b);
          nu_used = b > 0 ? std::sqrt(p.kappa * G[i] / b) : std::numeric_limits<double>::infinity();
        } else {
          double best = std::numeric_limits<double>::infinity();
          for (double nu : opt.nu_grid) {
            double v = nu * b + p.kappa * G[i] / nu;
            if (v < best) {
              best = v;
              nu_used = nu;
            }
          }
          rhs += best;
        }
      }
      scale = std::max({scale, std::abs(lhs), std::abs(rhs)});
      if (rhs - lhs < worst) {
        worst = rhs - lhs;
        wi = i;
        wl = lhs;
        wr = rhs;
        wnu = nu_used;
      }
      if (rhs - lhs > top) {
        top = rhs - lhs;
        ti = i;
      }
    }
    auto& s = rep.add({{"field", static_cast<double>(fi)}, {"node", static_cast<double>(wi)}}, wl, wr);
    if (generalized) s.params.push_back({"nu", wnu});
    if (opt.two_sided) rep.add({{"field", static_cast<double>(fi)}, {"node", static_cast<double>(ti)}, {"mirrored", 1}}, 0.0, -top);

    if (!generalized) {
      Vec GG = gamma_values(m, G);
      double lw = std::numeric_limits<double>::infinity();
      Index li = -1;
      double ll = 0, lr = 0;
      for (Index i = 0; i < m.size(); ++i) {
        if (!mask[i]) continue;
        double lhs = GG[i], rhs = 4.0 * G[i] * (G2[i] - p.rho1 * G[i]);
        lscale = std::max({lscale, std::abs(lhs), std::abs(rhs)});
        if (rhs - lhs < lw) {
          lw = rhs - lhs;
          li = i;
          ll = lhs;
          lr = rhs;
        }
      }
      lem.add({{"field", static_cast<double>(fi)}, {"node", static_cast<double>(li)}}, ll, lr);
    }
  }
  rep.finalize(opt.tol, m.mesh_h, scale);
  rep.metadata["params"] = {{"rho1", p.rho1}, {"rho2", p.rho2}, {"kappa", p.kappa}, {"n", p.n}};
  rep.metadata["fields"] = suite.names();
  rep.metadata["mask_nodes"] = mask_count(mask);
  rep.metadata["nu"] = opt.nu_grid.empty() ? Json("exact minimum") : Json(opt.nu_grid);
  if (generalized) rep.metadata["gamma2Z_min"] = bz_min;
  if (opt.two_sided) rep.metadata["note"] = "mirrored samples carry minus the largest margin, so passing bounds |margin|";
  if (!generalized) {
    lem.finalize(opt.tol, m.mesh_h, lscale);
    lem.metadata["rho"] = p.rho1;
    rep.parts.push_back(std::move(lem));
  }
  return rep;
}

struct Rho1Scan {
  double rho1 = 0.0;  // largest rho1 with every sampled margin >= 0
  double rho1_tol = 0.0;  // same, with the mesh tolerance added to each margin
  CDParameters params;
  std::string field;
  Index node = -1;
  double tol_used = 0.0;
};

// Largest rho1 with min margin >= -tol for the given (rho2, kappa, n). The
// margin is affine in rho1, so the answer is a minimum of ratios.
inline Rho1Scan scan_rho1(const Lab& lab, const TestFieldSuite& suite, double rho2, double kappa, double n,
                          const Tolerance& tol = {1e-9, 2.0, 2}) {
  const auto& m = lab.model();
  require(lab.has_vform(), ErrorKind::not_applicable, "rho1 scan needs a vertical form");
  CDParameters probe{0.0, rho2, kappa, n};
  probe.validate();
  auto mask = detail::form_mask(lab);
  struct Item {
    double c, g;
    size_t field;
    Index node;
  };
  std::vector<Item> items;
  double scale = 0.0;
  for (size_t fi = 0; fi < suite.size(); ++fi) {
    Vec f = suite.fields[fi].values;
    double gmax = detail::masked_max(gamma_values(m, f), mask);
    if (gmax <= 0.0) continue;
    f /= std::sqrt(gmax);
    Vec G = gamma_values(m, f), G2 = gamma2_values(m, f), Lf = m.L * f;
    Vec GZ = gammaZ_values(m, lab.vform(), f), B = gamma2Z_values(m, lab.vform(), f);
    for (Index i = 0; i < m.size(); ++i) {
      if (!mask[i]) continue;
      double c = G2[i] + 2.0 * std::sqrt(kappa * G[i] * std::max(B[i], 0.0)) - Lf[i] * Lf[i] / n - rho2 * GZ[i];
      scale = std::max({scale, std::abs(G2[i]), Lf[i] * Lf[i] / n, rho2 * GZ[i]});
      items.push_back({c, G[i], fi, i});
    }
  }
  Rho1Scan out;
  out.params = probe;
  out.tol_used = tol.bound(scale, m.mesh_h);
  const double inf = std::numeric_limits<double>::infinity();
  // fields have max Gamma = 1; where Gamma is negligible only the sign of c (up to roundoff) matters
  auto ratio = [&](double c, double g) { return g > 1e-8 ? c / g : (c >= -tol.abs ? inf : -inf); };
  out.rho1 = out.rho1_tol = inf;
  for (const auto& it : items) {
    double r = ratio(it.c, it.g);
    out.rho1_tol = std::min(out.rho1_tol, ratio(it.c + out.tol_used, it.g));
    if (r < out.rho1) {
      out.rho1 = r;
      out.field = suite.fields[it.field].name;
      out.node = it.node;
    }
  }
  out.params.rho1 = out.rho1;
  return out;
}

struct Rho1ScanOptions {
  std::vector<std::pair<double, double>> grid{{0.5, 1.0}};  // (rho2, kappa)
  double n = 2.0;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  double reproducibility = 0.01;  // relative to max(|rho1|, rho2)
  Tolerance tol{1e-9, 2.0, 2};
};

// Report form of the scan: rho1 = 0 feasible within tolerance for some grid
// point, and the scanned value stable across field-suite seeds.
template <class SuiteFn>
MarginReport check_rho1_scan(const Lab& lab, SuiteFn&& suite_for_seed, const Rho1ScanOptions& opt = {}) {
  const auto& m = lab.model();
  require(!opt.grid.empty() && !opt.seeds.empty(), ErrorKind::invalid_argument, "empty scan grid or seed list");
  std::vector<TestFieldSuite> suites;
  for (auto s : opt.seeds) suites.push_back(suite_for_seed(s));
  MarginReport rep("rho1_scan", m.id), rep_spread("rho1_reproducibility", m.id);
  double best = -std::numeric_limits<double>::infinity();
  double best_rho2 = 0.0, best_kappa = 0.0;
  Json scans = Json::array();
  for (auto [rho2, kappa] : opt.grid) {
    std::vector<double> vals;
    double worst_tol = std::numeric_limits<double>::infinity();
    for (size_t k = 0; k < suites.size(); ++k) {
      auto sc = scan_rho1(lab, suites[k], rho2, kappa, opt.n, opt.tol);
      vals.push_back(sc.rho1);
      worst_tol = std::min(worst_tol, sc.rho1_tol);
      scans.push_back({{"rho2", rho2}, {"kappa", kappa}, {"seed", opt.seeds[k]}, {"rho1", json_number(sc.rho1)},
                       {"rho1_tol", json_number(sc.rho1_tol)}, {"field", sc.field}, {"node", sc.node}});
    }
    auto [lo, hi] = std::minmax_element(vals.begin(), vals.end());
    double ref = std::max(std::abs(vals.front()), rho2);
    rep_spread.add({{"rho2", rho2}, {"kappa", kappa}}, *hi - *lo, opt.reproducibility * ref);
    if (worst_tol > best) {
      best = worst_tol;
      best_rho2 = rho2;
      best_kappa = kappa;
    }
  }
  // "for some (rho2, kappa)": the best grid point carries the verdict
  rep.add({{"rho2", best_rho2}, {"kappa", best_kappa}}, 0.0, best);
  rep.finalize(Tolerance{0.0, 0.0, 0}, m.mesh_h, 1.0);
  rep.metadata["scans"] = scans;
  rep.metadata["best"] = {{"rho1_tol", json_number(best)}, {"rho2", best_rho2}, {"kappa", best_kappa}, {"n", opt.n}};
  rep.metadata["note"] = "rhs is the largest rho1 with every margin >= -tol; rho1 = 0 must be feasible";
  rep_spread.finalize(Tolerance{0.0, 0.0, 0}, m.mesh_h, 1.0);
  rep.parts.push_back(std::move(rep_spread));
  return rep;
}

// ------------------------------------------------------------ gradient bound

struct GradientOptions {
  std::vector<double> t_grid{0.1, 0.5, 1.0};
  Tolerance tol{1e-9, 1.0, 2};
};

// sqrt Gamma(P_t f) <= exp(-rho t) P_t sqrt Gamma(f), fields normalized to max sqrt Gamma = 1.
inline MarginReport check_gradient_bound(const Lab& lab, const TestFieldSuite& suite, const GradientOptions& opt = {}) {
  const auto& m = lab.model();
  const double rho = lab.rho();
  require(!std::isnan(rho), ErrorKind::not_applicable, "gradient bound needs a Ricci lower bound");
  MarginReport rep("gradient_bound", m.id);
  for (size_t fi = 0; fi < suite.size(); ++fi) {
    Vec f = suite.fields[fi].values;
    Vec sg = gamma_values(m, f).cwiseSqrt();
    double smax = sg.maxCoeff();
    if (smax <= 0) continue;
    f /= smax;
    sg /= smax;
    for (double t : opt.t_grid) {
      require(t >= 0, ErrorKind::invalid_argument, "negative time");
      auto mask = detail::both(heat_mask(m, t), detail::form_mask(lab, 1));
      Vec lhs = gamma_values(m, lab.heat(f, t)).cwiseSqrt();
      Vec rhs = std::exp(-rho * t) * lab.heat(sg, t);
      Index wi = -1;
      double w = std::numeric_limits<double>::infinity();
      for (Index i = 0; i < m.size(); ++i)
        if (mask[i] && rhs[i] - lhs[i] < w) {
          w = rhs[i] - lhs[i];
          wi = i;
        }
      if (wi >= 0)
        rep.add({{"field", static_cast<double>(fi)}, {"t", t}, {"node", static_cast<double>(wi)}}, lhs[wi], rhs[wi]);
    }
  }
  rep.finalize(opt.tol, m.mesh_h, 1.0);
  rep.metadata["rho"] = rho;
  rep.metadata["fields"] = suite.names();
  rep.metadata["safety_radius"] = "3 sqrt(t)";
  return rep;
}

// ------------------------------------------------------------ stochastic completeness

inline MarginReport check_completeness(const Lab& lab, const std::vector<double>& t_grid = {0.2, 1.0, 10.0}) {
  const auto& m = lab.model();
  MarginReport rep("completeness", m.id);
  Vec one = Vec::Ones(m.size());
  for (double t : t_grid) {
    double r = (lab.heat(one, t) - one).cwiseAbs().maxCoeff();
    rep.add({{"t", t}}, r, 0.0);
  }
  rep.finalize(Tolerance{1e-10, 0.0, 0}, m.mesh_h, 1.0);
  return rep;
}

// ------------------------------------------------------------ spectral gap / Poincare

struct GapOptions {
  int random_fields = 100;
  std::uint64_t seed = 0;
  Tolerance tol{1e-9, 1.0, 2};
};

// lambda_1 >= n rho / (n - 1) and the Poincare form
// (n-1)/(n rho) int Gamma(f) + (int f)^2 / mu(M) - int f^2 >= 0.
inline MarginReport check_spectral_gap(const Lab& lab, const GapOptions& opt = {}) {
  const auto& m = lab.model();
  const double rho = lab.rho(), n = lab.dim();
  require(rho > 0 && n > 1, ErrorKind::not_applicable, "spectral gap bound needs rho > 0 and n > 1");
  require(lab.spectral && lab.spectral->count() >= 2, ErrorKind::not_applicable, "spectral gap needs eigenpairs");
  const double bound = n * rho / (n - 1.0);
  const double lambda1 = lab.spectral->eigenvalues[1];
  MarginReport rep("spectral_gap", m.id);
  rep.add({{"kind", 0}}, bound, lambda1);
  rep.finalize(opt.tol, m.mesh_h, bound);
  rep.metadata["lambda1"] = lambda1;
  rep.metadata["bound"] = bound;
  rep.metadata["equality_ratio"] = lambda1 / bound;

  MarginReport poin("poincare", m.id);
  const double c = (n - 1.0) / (n * rho);
  const double mass = m.total_measure();
  auto add_field = [&](const Vec& f0, double kind, double index) {
    double var0 = m.inner(f0, f0) - std::pow(m.integrate(f0), 2) / mass;
    if (var0 <= 0) return;
    Vec f = f0 / std::sqrt(var0);
    double var = m.inner(f, f) - std::pow(m.integrate(f), 2) / mass;
    double dir = -m.inner(f, m.L * f);
    poin.add({{"kind", kind}, {"field", index}}, var, c * dir);
  };
  add_field(lab.spectral->eigenfields.col(1), 1, 1);
  Rng rng(opt.seed);
  for (int k = 0; k < opt.random_fields; ++k) add_field(random_values(m.size(), rng), 2, k);
  poin.finalize(opt.tol, m.mesh_h, 1.0);
  poin.metadata["constant"] = c;
  poin.metadata["kind_legend"] = "1 first eigenfield (equality case), 2 random field";
  rep.parts.push_back(std::move(poin));
  return rep;
}

// Poincare margin of a single field, in the units used by check_spectral_gap.
inline double poincare_margin(const DiscretizedModel& m, double n, double rho, const Vec& f) {
  const double mass = m.total_measure();
  return (n - 1.0) / (n * rho) * (-m.inner(f, m.L * f)) + std::pow(m.integrate(f), 2) / mass - m.inner(f, f);
}

// ------------------------------------------------------------ log-Sobolev and entropy

inline double entropy(const DiscretizedModel& m, const Vec& g) {
  const double mass = m.total_measure();
  double ig = m.integrate(g) / mass;
  double s = 0.0;
  for (Index i = 0; i < g.size(); ++i)
    if (g[i] > 0) s += m.mu[i] * g[i] * std::log(g[i]);
  return s / mass - ig * std::log(ig);
}

struct LogSobolevOptions {
  std::vector<double> t_grid{0.3, 0.6, 0.9, 1.2, 1.5};
  double slope_allowance = 0.05;
  double eps_rel = 1e-3;
  Tolerance tol{1e-9, 1.0, 2};
};

// Ent(f^2) <= (2/rho) int Gamma(f) on the normalized measure, and entropy
// decay of P_t f fitted as a log-slope against -2 rho.
inline MarginReport check_log_sobolev(const Lab& lab, const TestFieldSuite& suite, const LogSobolevOptions& opt = {}) {
  const auto& m = lab.model();
  const double rho = lab.rho();
  require(rho > 0, ErrorKind::not_applicable, "log-Sobolev needs rho > 0");
  require(lab.oracle().total_measure.has_value(), ErrorKind::not_applicable, "log-Sobolev needs a compact model");
  const double mass = m.total_measure();
  MarginReport rep("log_sobolev", m.id);
  MarginReport dec("entropy_decay", m.id);
  MarginReport slope("entropy_slope", m.id);
  double scale = 0.0;
  for (size_t fi = 0; fi < suite.size(); ++fi) {
    for (double shrink : {1.0, 0.1}) {
      auto sh = positive_shift(suite.fields[fi].values, opt.eps_rel * shrink);
      Vec f = sh.values / std::sqrt(m.inner(sh.values, sh.values) / mass);
      double ent = entropy(m, f.cwiseAbs2());
      double dir = -m.inner(f, m.L * f) / mass;
      scale = std::max(scale, ent);
      rep.add({{"field", static_cast<double>(fi)}, {"eps", sh.eps}}, ent, 2.0 / rho * dir);
    }
    auto sh = positive_shift(suite.fields[fi].values, opt.eps_rel);
    Vec g = sh.values / (m.integrate(sh.values) / mass);
    double e0 = entropy(m, g);
    std::vector<double> ts, logs;
    for (double t : opt.t_grid) {
      double et = entropy(m, lab.heat(g, t));
      dec.add({{"field", static_cast<double>(fi)}, {"t", t}}, et, std::exp(-2.0 * rho * t) * e0);
      if (et > 0) {
        ts.push_back(t);
        logs.push_back(std::log(et));
      }
    }
    if (ts.size() >= 2)
      slope.add({{"field", static_cast<double>(fi)}}, fit_slope(ts, logs), -2.0 * rho + opt.slope_allowance);
  }
  rep.finalize(opt.tol, m.mesh_h, std::max(scale, 1e-12));
  rep.metadata["constant"] = 2.0 / rho;
  rep.metadata["fields"] = suite.names();
  rep.metadata["eps_rel"] = {opt.eps_rel, opt.eps_rel * 0.1};
  dec.finalize(Tolerance{1e-12, 0.0, 0}, m.mesh_h, 1.0);
  slope.finalize(Tolerance{1e-12, 0.0, 0}, m.mesh_h, 1.0);
  slope.metadata["rate"] = 2.0 * rho;
  slope.metadata["allowance"] = opt.slope_allowance;
  slope.metadata["t_grid"] = opt.t_grid;
  rep.parts.push_back(std::move(dec));
  rep.parts.push_back(std::move(slope));
  return rep;
}

// ------------------------------------------------------------ Li-Yau family

enum class LiYauMode { rho0, general_alpha, v_schedule, exponential, bakry_qian, sub_riemannian };

inline const char* to_string(LiYauMode m) {
  switch (m) {
    case LiYauMode::rho0: return "rho0";
    case LiYauMode::general_alpha: return "general_alpha";
    case LiYauMode::v_schedule: return "v_schedule";
    case LiYauMode::exponential: return "exponential";
    case LiYauMode::bakry_qian: return "bakry_qian";
    case LiYauMode::sub_riemannian: return "sub_riemannian";
  }
  return "unknown";
}

inline LiYauMode parse_li_yau_mode(const std::string& s) {
  for (auto m : {LiYauMode::rho0, LiYauMode::general_alpha, LiYauMode::v_schedule, LiYauMode::exponential,
                 LiYauMode::bakry_qian, LiYauMode::sub_riemannian})
    if (s == to_string(m)) return m;
  throw Error(ErrorKind::config, "unknown li_yau mode '" + s + "'");
}

struct LiYauOptions {
  LiYauMode mode = LiYauMode::rho0;
  std::vector<double> t_grid{0.25, 0.5, 1.0};
  double alpha = 1.0;
  double rho = std::numeric_limits<double>::quiet_NaN();  // default: oracle
  double n = std::numeric_limits<double>::quiet_NaN();    // default: oracle dim
  std::optional<CDParameters> cd;                         // sub_riemannian
  double int_v2 = 0.0;                                    // v_schedule: int_0^T V^2
  double int_dv2 = 0.0;                                   // v_schedule: int_0^T V'^2
  double eps_rel = 1e-3;
  bool saturation = false;  // also evaluate the heat kernel itself (Euclidean equality case)
  Tolerance tol{1e-9, 1.0, 2};
  Tolerance saturation_tol{1e-9, 1.0, 2};
};

// Integrals of V^2 and V'^2 over [0, T] for the exponential schedule.
inline std::pair<double, double> exponential_schedule_integrals(double rho, double T, int steps = 4000) {
  const double E = std::exp(-2.0 * rho * T / 3.0);
  auto V = [&](double s) { return std::exp(-rho * s / 3.0) * (std::exp(-2.0 * rho * s / 3.0) - E) / (1.0 - E); };
  auto dV = [&](double s) {
    return (-rho / 3.0 * std::exp(-rho * s / 3.0) * (std::exp(-2.0 * rho * s / 3.0) - E) +
            std::exp(-rho * s / 3.0) * (-2.0 * rho / 3.0) * std::exp(-2.0 * rho * s / 3.0)) /
           (1.0 - E);
  };
  double h = T / steps, i2 = 0.0, id2 = 0.0;
  for (int k = 0; k <= steps; ++k) {
    double w = (k == 0 || k == steps) ? 1.0 : (k % 2 ? 4.0 : 2.0);
    double s = k * h;
    i2 += w * V(s) * V(s);
    id2 += w * dV(s) * dV(s);
  }
  return {i2 * h / 3.0, id2 * h / 3.0};
}

namespace detail {

struct LiYauTerms {
  double coef_q = 1.0;   // multiplies L u / u
  double constant = 0.0;
  double coef_z = 0.0;   // multiplies Gamma^Z(ln u) on the left
  bool bakry_qian = false;
};

inline LiYauTerms li_yau_terms(const LiYauOptions& o, double rho, double n, double t) {
  LiYauTerms r;
  switch (o.mode) {
    case LiYauMode::rho0:
      r.constant = n / (2.0 * t);
      break;
    case LiYauMode::general_alpha: {
      double a = o.alpha;
      require(a > 0.5, ErrorKind::invalid_argument, "general_alpha needs alpha > 1/2");
      r.coef_q = 1.0 - 2.0 * rho * t / (2.0 * a + 1.0);
      r.constant = 0.5 * n * (a * a / ((2.0 * a - 1.0) * t) + rho * rho * t / (2.0 * a + 1.0) - rho);
      break;
    }
    case LiYauMode::v_schedule:
      r.coef_q = 1.0 - 2.0 * rho * o.int_v2;
      r.constant = 0.5 * n * (o.int_dv2 + rho * rho * o.int_v2 - rho);
      break;
    case LiYauMode::exponential: {
      require(rho > 0, ErrorKind::not_applicable, "exponential schedule needs rho > 0");
      auto [i2, id2] = exponential_schedule_integrals(rho, t);
      r.coef_q = 1.0 - 2.0 * rho * i2;
      r.constant = 0.5 * n * (id2 + rho * rho * i2 - rho);
      break;
    }
    case LiYauMode::bakry_qian:
      require(rho > 0, ErrorKind::not_applicable, "bakry_qian needs rho > 0");
      require(t >= 2.0 / rho, ErrorKind::invalid_argument, "bakry_qian holds for t >= 2/rho");
      r.bakry_qian = true;
      r.constant = n * rho / 4.0;
      break;
    case LiYauMode::sub_riemannian: {
      require(o.cd.has_value(), ErrorKind::invalid_argument, "sub_riemannian mode needs CD parameters");
      const auto& p = *o.cd;
      double a = o.alpha;
      require(a > 2.0, ErrorKind::invalid_argument, "sub_riemannian mode needs alpha > 2");
      double F = 1.0 + a * p.kappa / ((a - 1.0) * p.rho2);
      r.coef_z = 2.0 * p.rho2 * t / a;
      r.coef_q = F - 2.0 * p.rho1 * t / a;
      r.constant = p.n * p.rho1 * p.rho1 * t / (2.0 * a) - p.rho1 * p.n * F / 2.0 +
                   p.n * (a - 1.0) * (a - 1.0) * F * F / (8.0 * (a - 2.0) * t);
      break;
    }
  }
  return r;
}

}  // namespace detail

// Pointwise Li-Yau type inequality for u = P_t f_eps on the heat mask.
inline MarginReport check_li_yau(const Lab& lab, const TestFieldSuite& suite, const LiYauOptions& opt = {}) {
  const auto& m = lab.model();
  const double rho = detail::resolve(opt.rho, lab.rho());
  const double n = detail::resolve(opt.n, opt.cd ? opt.cd->n : static_cast<double>(lab.dim()));
  if (opt.mode != LiYauMode::sub_riemannian)
    require(!std::isnan(rho), ErrorKind::not_applicable, "Li-Yau mode needs a Ricci lower bound");
  if (opt.mode == LiYauMode::rho0)
    require(rho >= 0, ErrorKind::not_applicable, "rho0 mode needs nonnegative curvature");
  if (opt.mode == LiYauMode::sub_riemannian) require(lab.has_vform(), ErrorKind::not_applicable, "no vertical form");
  MarginReport rep(std::string("li_yau_") + to_string(opt.mode), m.id);
  double scale = 0.0;
  auto form = detail::form_mask(lab, 2);
  auto eval = [&](MarginReport& r, const Vec& u, double t, const std::vector<char>& mask,
                  std::vector<std::pair<std::string, double>> params) {
    auto terms = detail::li_yau_terms(opt, rho, n, t);
    Vec lu = detail::log_values(u);
    Vec G = gamma_values(m, lu);
    Vec Q = (m.L * u).cwiseQuotient(u);
    Vec GZ = terms.coef_z != 0.0 ? gammaZ_values(m, lab.vform(), lu) : Vec::Zero(m.size());
    double w = std::numeric_limits<double>::infinity(), wl = 0, wr = 0;
    Index wi = -1;
    for (Index i = 0; i < m.size(); ++i) {
      if (!mask[i]) continue;
      double lhs, rhs;
      if (terms.bakry_qian) {
        lhs = Q[i];
        rhs = terms.constant;
      } else {
        lhs = G[i] + terms.coef_z * GZ[i];
        rhs = terms.coef_q * Q[i] + terms.constant;
      }
      if (rhs - lhs < w) {
        w = rhs - lhs;
        wl = lhs;
        wr = rhs;
        wi = i;
      }
    }
    if (wi < 0) return;
    params.push_back({"node", static_cast<double>(wi)});
    r.add(std::move(params), wl, wr);
  };
  for (double t : opt.t_grid) {
    require(t > 0, ErrorKind::invalid_argument, "Li-Yau times must be positive");
    auto terms = detail::li_yau_terms(opt, rho, n, t);
    scale = std::max(scale, std::abs(terms.constant));
    auto mask = detail::both(heat_mask(m, t), form);
    for (size_t fi = 0; fi < suite.size(); ++fi)
      for (double shrink : {1.0, 0.1}) {
        auto sh = positive_shift(suite.fields[fi].values, opt.eps_rel * shrink);
        eval(rep, lab.heat(sh.values, t), t, mask, {{"field", static_cast<double>(fi)}, {"t", t}, {"eps", sh.eps}});
      }
  }
  rep.finalize(opt.tol, m.mesh_h, scale);
  rep.metadata["mode"] = to_string(opt.mode);
  rep.metadata["rho"] = json_number(rho);
  rep.metadata["n"] = n;
  rep.metadata["alpha"] = opt.alpha;
  rep.metadata["fields"] = suite.names();
  rep.metadata["safety_radius"] = "3 sqrt(t)";
  if (opt.cd) rep.metadata["cd"] = {{"rho1", opt.cd->rho1}, {"rho2", opt.cd->rho2}, {"kappa", opt.cd->kappa}, {"n", opt.cd->n}};

  if (opt.saturation) {
    // u = p(t, ., c): equality in the flat sharp form, checked on d(c, .) <= 2 sqrt(t)
    MarginReport sat("li_yau_saturation", m.id);
    double sscale = 0.0;
    Index c = centre_node(*lab.built);
    for (double t : opt.t_grid) {
      auto mask = detail::both(heat_mask(m, t), form);
      for (Index i = 0; i < m.size(); ++i)
        if (mask[i] && distance_between(lab, c, i) > 2.0 * std::sqrt(t)) mask[i] = 0;
      Vec u = lab.kernel(t, c);
      auto terms = detail::li_yau_terms(opt, rho, n, t);
      // the kernel varies on the scale sqrt(t), so the stencil error goes like (h^2/t) n/(2t)
      sscale = std::max(sscale, std::abs(terms.constant) / t);
      // both extremes matter for an equality case
      Vec lu = detail::log_values(u);
      Vec G = gamma_values(m, lu);
      Vec Q = (m.L * u).cwiseQuotient(u);
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      Index li = -1, hi_i = -1;
      for (Index i = 0; i < m.size(); ++i) {
        if (!mask[i]) continue;
        double mg = terms.coef_q * Q[i] + terms.constant - G[i];
        if (mg < lo) {
          lo = mg;
          li = i;
        }
        if (mg > hi) {
          hi = mg;
          hi_i = i;
        }
      }
      if (li < 0) continue;
      sat.add({{"t", t}, {"node", static_cast<double>(li)}}, G[li], terms.coef_q * Q[li] + terms.constant);
      // mirror the upper excursion so |margin| <= tol is what passes
      sat.add({{"t", t}, {"node", static_cast<double>(hi_i)}}, 0.0, -hi);
    }
    sat.finalize(opt.saturation_tol, m.mesh_h, sscale);
    sat.metadata["note"] = "second sample per t is the negated largest margin, so the pair bounds |margin|";
    rep.parts.push_back(std::move(sat));
  }
  return rep;
}

// ------------------------------------------------------------ transverse symmetry

// |Gamma(f, Gamma^Z f) - Gamma^Z(f, Gamma f)| on the deep interior.
inline MarginReport check_h2(const Lab& lab, const TestFieldSuite& suite, const Tolerance& tol = {1e-9, 1.0, 2}) {
  const auto& m = lab.model();
  const auto& vf = lab.vform();
  auto mask = detail::form_mask(lab, 2);
  MarginReport rep("h2_commutation", m.id);
  double scale = 0.0;
  for (size_t fi = 0; fi < suite.size(); ++fi) {
    const Vec& f = suite.fields[fi].values;
    Vec a = gamma_values(m, f, gammaZ_values(m, vf, f));
    Vec b = gammaZ_values(m, vf, f, gamma_values(m, f));
    double w = 0.0, s = 0.0;
    Index wi = -1;
    for (Index i = 0; i < m.size(); ++i) {
      if (!mask[i]) continue;
      s = std::max({s, std::abs(a[i]), std::abs(b[i])});
      if (std::abs(a[i] - b[i]) >= w) {
        w = std::abs(a[i] - b[i]);
        wi = i;
      }
    }
    scale = std::max(scale, s);
    rep.add({{"field", static_cast<double>(fi)}, {"node", static_cast<double>(wi)}}, w, 0.0);
  }
  rep.finalize(tol, m.mesh_h, scale);
  rep.metadata["fields"] = suite.names();
  return rep;
}

}  // namespace heatlab
