#pragma once

#include "heatlab/basic_checks.hpp"
#include "heatlab/global_checks.hpp"
#include "heatlab/params.hpp"

#include <functional>

namespace heatlab {

// ------------------------------------------------------------ test-field suites

struct SuiteSpec {
  std::string kind = "default";
  std::vector<std::string> fields;  // keep only these names (empty: all)
  std::vector<double> bump_widths{0.6, 1.0};
};

inline const std::vector<std::string>& suite_kinds() {
  static const std::vector<std::string> k{"default", "coordinates", "eigen", "half_square",
                                          "bumps",   "polynomials", "extremal", "none"};
  return k;
}

inline SuiteSpec parse_suite(Params& p, const std::string& def = "default") {
  SuiteSpec s;
  s.kind = p.choice("suite", def, suite_kinds());
  s.fields = p.strs("fields", {});
  s.bump_widths = p.positives("bump_widths", s.bump_widths);
  return s;
}

inline TestFieldSuite build_suite(const Lab& lab, const SuiteSpec& spec, std::uint64_t seed) {
  const auto& m = lab.model();
  TestFieldSuite s;
  if (spec.kind == "default") {
    s = default_suite(lab, seed);
  } else if (spec.kind == "coordinates") {
    s = coordinate_fields(m);
  } else if (spec.kind == "eigen") {
    require(lab.spectral != nullptr, ErrorKind::not_applicable, "eigen suite needs spectral data");
    s = eigen_fields(*lab.spectral, 8, 4, seed);
  } else if (spec.kind == "half_square") {
    s.add("half_square", 0.5 * m.nodes.rowwise().squaredNorm().transpose());
  } else if (spec.kind == "bumps") {
    for (double w : spec.bump_widths) s.append(bump_fields(m, {centre_node(*lab.built)}, w));
  } else if (spec.kind == "polynomials") {
    Rng rng(seed);
    s = random_polynomials(m, 4, rng);
  } else if (spec.kind == "extremal") {
    s.add("x+yz", heisenberg_extremal(m));
  }
  if (spec.fields.empty()) return s;
  TestFieldSuite kept;
  for (const auto& name : spec.fields) {
    auto it = std::find_if(s.fields.begin(), s.fields.end(), [&](const TestField& f) { return f.name == name; });
    require(it != s.fields.end(), ErrorKind::config, "suite '" + spec.kind + "' has no field '" + name + "'");
    kept.fields.push_back(*it);
  }
  return kept;
}

// ------------------------------------------------------------ registry

struct CheckSettings {
  std::uint64_t seed = 0;
  double tol_scale = 1.0;
  std::optional<Tolerance> tolerance;  // replaces the check's main tolerance
};

using CheckRunner = std::function<MarginReport(const Lab&)>;
using CheckFactory = std::function<CheckRunner(Params&, const CheckSettings&)>;

struct CheckInfo {
  std::string summary;
  CheckFactory make;
  bool tunable = true;  // honours tolerance overrides and --tol-scale
};

namespace detail {

inline Tolerance pick(Tolerance def, const CheckSettings& s) { return s.tolerance.value_or(def).scaled(s.tol_scale); }

inline DistanceMethod parse_distance(const std::string& s) {
  if (s == "graph") return DistanceMethod::graph;
  if (s == "dual") return DistanceMethod::dual;
  if (s == "oracle") return DistanceMethod::oracle;
  return DistanceMethod::subunit;
}

inline std::optional<DistanceMethod> opt_distance(Params& p) {
  if (!p.has("distance")) return std::nullopt;
  return parse_distance(p.choice("distance", "graph", {"graph", "dual", "oracle"}));
}

// {rho1, rho2, kappa, n}; missing keys fall back to `def`.
inline std::optional<CDParameters> opt_cd(Params& p, const std::string& key, std::optional<CDParameters> def = {}) {
  if (!p.has(key)) return def;
  Params c = p.child(key);
  CDParameters out = def.value_or(CDParameters{});
  out.rho1 = c.num("rho1", out.rho1);
  out.rho2 = c.positive("rho2", out.rho2);
  out.kappa = c.nonnegative("kappa", out.kappa);
  out.n = c.positive("n", out.n);
  c.finish();
  return out;
}

}  // namespace detail

inline const std::map<std::string, CheckInfo>& check_registry() {
  using detail::pick;
  static const std::map<std::string, CheckInfo> reg = [] {
    std::map<std::string, CheckInfo> r;

    r["axioms"] = {"weighted symmetry, L1 = 0, Dirichlet positivity, Gamma >= 0",
                   [](Params& p, const CheckSettings& s) -> CheckRunner {
                     int fields = p.count("fields", 100);
                     return [=](const Lab& lab) { return check_operator_axioms(lab.model(), fields, s.seed); };
                   },
                   false};

    r["completeness"] = {"P_t 1 = 1",
                         [](Params& p, const CheckSettings&) -> CheckRunner {
                           auto t = p.positives("t_grid", {0.2, 1.0, 10.0});
                           return [=](const Lab& lab) { return check_completeness(lab, t); };
                         },
                         false};

    r["kernel_laws"] = {"kernel symmetry, Chapman-Kolmogorov, trace, spectral vs stepper",
                        [](Params& p, const CheckSettings& s) -> CheckRunner {
                          KernelLawOptions o;
                          o.t_grid = p.positives("t_grid", o.t_grid);
                          o.nodes = p.count("nodes", o.nodes, 2);
                          o.trace_t = p.positive("trace_t", o.trace_t);
                          o.cross_t = p.positive("cross_t", o.cross_t);
                          o.seed = s.seed;
                          o.tol = pick(o.tol, s);
                          o.cross_tol = o.cross_tol.scaled(s.tol_scale);
                          return [=](const Lab& lab) { return check_kernel_laws(lab, o); };
                        }};

    r["spectrum"] = {"first eigenvalues and multiplicities against the closed form",
                     [](Params& p, const CheckSettings& s) -> CheckRunner {
                       SpectrumOptions o;
                       o.count = p.count("count", 0, 0);
                       if (auto rel = p.opt_num("rel")) {
                         require(*rel > 0, ErrorKind::config, p.field("rel") + ": must be positive");
                         o.rel = *rel * s.tol_scale;
                       }
                       o.tol = pick(o.tol, s);
                       return [=](const Lab& lab) { return check_spectrum(lab, o); };
                     }};

    r["distances"] = {"dual <= graph sandwich, subunit vertical distance",
                      [](Params& p, const CheckSettings& s) -> CheckRunner {
                        DistanceOptions o;
                        o.pairs = p.count("pairs", o.pairs);
                        o.dual.max_iter = p.count("dual_iterations", o.dual.max_iter);
                        o.vertical = p.positives("vertical", o.vertical);
                        o.controls = p.count("controls", o.controls, 4);
                        o.vertical_rel = p.positive("vertical_rel", o.vertical_rel) * s.tol_scale;
                        o.threads = p.count("threads", 0, 0);
                        o.seed = s.seed;
                        o.tol = pick(o.tol, s);
                        return [=](const Lab& lab) { return check_distances(lab, o); };
                      }};

    r["cd"] = {"curvature-dimension inequality (Riemannian or generalized)",
               [](Params& p, const CheckSettings& s) -> CheckRunner {
                 auto suite = parse_suite(p);
                 CDOptions o;
                 o.params = detail::opt_cd(p, "params");
                 o.nu_grid = p.positives("nu_grid", {});
                 o.two_sided = p.flag("two_sided", false);
                 o.tol = pick(o.tol, s);
                 return [=](const Lab& lab) { return check_cd(lab, build_suite(lab, suite, s.seed), o); };
               }};

    r["rho1_scan"] = {"largest feasible rho1 of the generalized CD inequality",
                      [](Params& p, const CheckSettings& s) -> CheckRunner {
                        auto suite = parse_suite(p);
                        Rho1ScanOptions o;
                        auto r2 = p.positives("rho2", {0.5});
                        auto ka = p.nums("kappa", {1.0});
                        for (size_t i = 0; i < ka.size(); ++i)
                          require(ka[i] >= 0, ErrorKind::config,
                                  p.field("kappa") + "[" + std::to_string(i) + "]: must be nonnegative");
                        o.grid.clear();
                        for (double a : r2)
                          for (double b : ka) o.grid.push_back({a, b});
                        o.n = p.positive("n", o.n);
                        auto seeds = p.nums("seeds", {0, 1, 2});
                        o.seeds.clear();
                        for (double v : seeds) {
                          require(v >= 0 && v == std::floor(v), ErrorKind::config,
                                  p.field("seeds") + ": entries must be nonnegative integers");
                          o.seeds.push_back(static_cast<std::uint64_t>(v) + s.seed);
                        }
                        o.reproducibility = p.positive("reproducibility", o.reproducibility) * s.tol_scale;
                        o.tol = pick(o.tol, s);
                        return [=](const Lab& lab) {
                          return check_rho1_scan(lab, [&](std::uint64_t seed) { return build_suite(lab, suite, seed); },
                                                 o);
                        };
                      }};

    r["h2"] = {"vertical-form commutation hypothesis",
               [](Params& p, const CheckSettings& s) -> CheckRunner {
                 auto suite = parse_suite(p);
                 Tolerance tol = pick({1e-9, 1.0, 2}, s);
                 return [=](const Lab& lab) { return check_h2(lab, build_suite(lab, suite, s.seed), tol); };
               }};

    r["gradient_bound"] = {"pointwise gradient bound for P_t",
                           [](Params& p, const CheckSettings& s) -> CheckRunner {
                             auto suite = parse_suite(p);
                             GradientOptions o;
                             o.t_grid = p.positives("t_grid", o.t_grid);
                             o.tol = pick(o.tol, s);
                             return [=](const Lab& lab) {
                               return check_gradient_bound(lab, build_suite(lab, suite, s.seed), o);
                             };
                           }};

    r["spectral_gap"] = {"Lichnerowicz bound and Poincare inequality",
                         [](Params& p, const CheckSettings& s) -> CheckRunner {
                           GapOptions o;
                           o.random_fields = p.count("random_fields", o.random_fields, 0);
                           o.seed = s.seed;
                           o.tol = pick(o.tol, s);
                           return [=](const Lab& lab) { return check_spectral_gap(lab, o); };
                         }};

    r["log_sobolev"] = {"log-Sobolev inequality and entropy decay",
                        [](Params& p, const CheckSettings& s) -> CheckRunner {
                          auto suite = parse_suite(p);
                          LogSobolevOptions o;
                          o.t_grid = p.positives("t_grid", o.t_grid);
                          o.slope_allowance = p.nonnegative("slope_allowance", o.slope_allowance) * s.tol_scale;
                          o.eps_rel = p.positive("eps_rel", o.eps_rel);
                          o.tol = pick(o.tol, s);
                          return [=](const Lab& lab) {
                            return check_log_sobolev(lab, build_suite(lab, suite, s.seed), o);
                          };
                        }};

    r["li_yau"] = {"Li-Yau gradient estimates",
                   [](Params& p, const CheckSettings& s) -> CheckRunner {
                     auto suite = parse_suite(p);
                     LiYauOptions o;
                     o.mode = parse_li_yau_mode(p.choice(
                         "mode", "rho0",
                         {"rho0", "general_alpha", "v_schedule", "exponential", "bakry_qian", "sub_riemannian"}));
                     o.t_grid = p.positives("t_grid", o.t_grid);
                     o.alpha = p.positive("alpha", o.alpha);
                     if (auto v = p.opt_num("rho")) o.rho = *v;
                     if (auto v = p.opt_num("n")) o.n = *v;
                     o.cd = detail::opt_cd(p, "cd");
                     o.int_v2 = p.nonnegative("int_v2", o.int_v2);
                     o.int_dv2 = p.nonnegative("int_dv2", o.int_dv2);
                     o.eps_rel = p.positive("eps_rel", o.eps_rel);
                     o.saturation = p.flag("saturation", false);
                     o.tol = pick(o.tol, s);
                     o.saturation_tol = p.tolerance("saturation_tolerance", o.saturation_tol).scaled(s.tol_scale);
                     return [=](const Lab& lab) {
                       LiYauOptions q = o;
                       if (q.mode == LiYauMode::sub_riemannian && !q.cd) q.cd = lab.oracle().cd_params;
                       return check_li_yau(lab, build_suite(lab, suite, s.seed), q);
                     };
                   }};

    r["harnack"] = {"parabolic Harnack inequality",
                    [](Params& p, const CheckSettings& s) -> CheckRunner {
                      auto suite = parse_suite(p);
                      HarnackOptions o;
                      std::string mode = p.choice("mode", "semigroup", {"semigroup", "kernel", "sub_riemannian"});
                      o.mode = mode == "kernel" ? HarnackMode::kernel
                               : mode == "sub_riemannian" ? HarnackMode::sub_riemannian
                                                          : HarnackMode::semigroup;
                      o.times = p.positives("times", o.times);
                      o.pairs = p.count("pairs", o.pairs);
                      o.alpha = p.num("alpha", o.alpha);
                      require(o.alpha > 2.0, ErrorKind::config, p.field("alpha") + ": must exceed 2");
                      o.cd = detail::opt_cd(p, "cd");
                      if (auto v = p.opt_num("exponent")) {
                        require(*v > 0, ErrorKind::config, p.field("exponent") + ": must be positive");
                        o.exponent = *v;
                      }
                      o.distance = detail::opt_distance(p);
                      o.floor_rel = p.nonnegative("floor_rel", o.floor_rel);
                      o.seed = s.seed;
                      o.tol = pick(o.tol, s);
                      return [=](const Lab& lab) { return check_harnack(lab, build_suite(lab, suite, s.seed), o); };
                    }};

    r["kernel_bounds"] = {"Cheeger-Yau, on-diagonal and Gaussian kernel bounds",
                          [](Params& p, const CheckSettings& s) -> CheckRunner {
                            KernelBoundOptions o;
                            o.t_grid = p.positives("t_grid", o.t_grid);
                            o.radii = p.positives("radii", o.radii);
                            o.A_grid = p.positives("A_grid", o.A_grid);
                            o.epsilon = p.positive("epsilon", o.epsilon);
                            o.reach = p.positive("reach", o.reach);
                            o.two_sided = p.flag("two_sided", false);
                            o.product_rel = p.positive("product_rel", o.product_rel) * s.tol_scale;
                            o.distance = detail::opt_distance(p);
                            o.tol = pick(o.tol, s);
                            return [=](const Lab& lab) { return check_kernel_bounds(lab, o); };
                          }};

    r["volume"] = {"volume doubling and reverse doubling",
                   [](Params& p, const CheckSettings& s) -> CheckRunner {
                     VolumeOptions o;
                     o.radii = p.positives("radii", {});
                     o.centres = p.count("centres", o.centres);
                     o.lower = p.opt_num("lower");
                     o.upper = p.opt_num("upper");
                     o.distance = detail::opt_distance(p);
                     o.coverage = p.choice("coverage", "smooth", {"smooth", "sharp"}) == "sharp" ? Coverage::sharp
                                                                                              : Coverage::smooth;
                     o.exponent_rel = p.positive("exponent_rel", o.exponent_rel) * s.tol_scale;
                     o.tol = pick(o.tol, s);
                     return [=](const Lab& lab) { return check_volume_regularity(lab, o); };
                   }};

    r["neumann_poincare"] = {"Neumann Poincare constants on domains",
                             [](Params& p, const CheckSettings& s) -> CheckRunner {
                               NeumannOptions o;
                               if (auto* d = p.raw("domains")) {
                                 require(d->is_array() && !d->empty(), ErrorKind::config,
                                         p.field("domains") + ": expected a non-empty list");
                                 o.domains.clear();
                                 for (size_t i = 0; i < d->size(); ++i) {
                                   Params q((*d)[i], p.field("domains") + "[" + std::to_string(i) + "]");
                                   DomainSpec ds;
                                   ds.kind = q.choice("kind", "whole", {"whole", "ball"}) == "ball" ? DomainKind::ball
                                                                                                   : DomainKind::whole;
                                   ds.radius = q.nonnegative("radius", 0.0);
                                   require(ds.kind == DomainKind::whole || ds.radius > 0, ErrorKind::config,
                                           q.field("radius") + ": ball domains need a positive radius");
                                   q.finish();
                                   o.domains.push_back(ds);
                                 }
                               }
                               o.constant = p.positive("constant", o.constant);
                               o.scale_factor = p.positive("scale_factor", o.scale_factor);
                               if (auto v = p.opt_num("equality_rel")) o.equality_rel = *v * s.tol_scale;
                               o.tol = pick(o.tol, s);
                               return [=](const Lab& lab) { return check_neumann_poincare(lab, o); };
                             }};

    r["varopoulos"] = {"Sobolev inequality from the on-diagonal kernel bound",
                       [](Params& p, const CheckSettings& s) -> CheckRunner {
                         auto suite = parse_suite(p, "bumps");
                         Tolerance tol = pick({1e-9, 1.0, 2}, s);
                         return [=](const Lab& lab) { return check_varopoulos(lab, build_suite(lab, suite, s.seed), tol); };
                       }};

    r["isoperimetric"] = {"isoperimetric ratio of metric balls",
                          [](Params& p, const CheckSettings& s) -> CheckRunner {
                            IsoperimetricOptions o;
                            o.radii = p.positives("radii", o.radii);
                            o.reference = p.positive("reference", o.reference);
                            o.tol = pick(o.tol, s);
                            return [=](const Lab& lab) { return check_isoperimetric(lab, o); };
                          }};

    r["sharp_sobolev"] = {"sharp Sobolev family and the diameter bound",
                          [](Params& p, const CheckSettings& s) -> CheckRunner {
                            auto suite = parse_suite(p);
                            SharpSobolevOptions o;
                            o.p_grid = p.positives("p_grid", o.p_grid);
                            o.extremal_lambda = p.positive("extremal_lambda", o.extremal_lambda);
                            o.extremal_rel = p.positive("extremal_rel", o.extremal_rel) * s.tol_scale;
                            o.diameter_rel = p.positive("diameter_rel", o.diameter_rel) * s.tol_scale;
                            o.tol = pick(o.tol, s);
                            return [=](const Lab& lab) {
                              return check_sharp_sobolev(lab, build_suite(lab, suite, s.seed), o);
                            };
                          }};

    r["fefferman_phong"] = {"Euclidean balls inside CC balls (report only)",
                            [](Params& p, const CheckSettings&) -> CheckRunner {
                              auto radii = p.positives("radii", {0.1, 0.2, 0.4});
                              return [=](const Lab& lab) { return diagnose_fefferman_phong(lab, radii); };
                            },
                            false};

    r["ball_poincare"] = {"Neumann lambda_1 r^2 on metric balls (report only)",
                          [](Params& p, const CheckSettings&) -> CheckRunner {
                            auto radii = p.positives("radii", {0.6, 0.9});
                            return [=](const Lab& lab) { return diagnose_ball_poincare(lab, radii); };
                          },
                          false};

    r["small_time_sobolev"] = {"resolvent Sobolev constant (report only)",
                               [](Params& p, const CheckSettings& s) -> CheckRunner {
                                 auto suite = parse_suite(p, "eigen");
                                 double pp = p.positive("p", 1.5), alpha = p.positive("alpha", 1.0);
                                 return [=](const Lab& lab) {
                                   return diagnose_small_time_sobolev(lab, build_suite(lab, suite, s.seed), pp, alpha);
                                 };
                               },
                               false};
    return r;
  }();
  return reg;
}

}  // namespace heatlab
