// End-to-end acceptance run: one line per criterion, nonzero exit if any fails.
// Tolerances and runtime budgets are pinned below; nothing reads them from
// the environment or the command line.

#include "heatlab/campaign.hpp"
#include "heatlab/yaml.hpp"

#include <unistd.h>

#include <chrono>
#include <iostream>

using namespace heatlab;
namespace fs = std::filesystem;

namespace pinned {
constexpr double axiom_residual = 1e-10;
constexpr double gamma_floor = -1e-10;
constexpr double kernel_law = 1e-8;
constexpr double cross_oracle = 1e-4;
constexpr double sphere_lambda_rel = 0.02;
constexpr double interval_lambda_rel = 0.01;
constexpr double reproducibility = 0.01;
constexpr double product_rel = 0.05;
constexpr double doubling_band_rel = 0.02;  // grid coverage error around 2^n
constexpr double heis_ratio_lo = 14.0, heis_ratio_hi = 18.0;
constexpr double exponent_rel = 0.10;
constexpr double lichnerowicz_rel = 0.02;
constexpr double entropy_slope_max = -2.0 + 0.05;
constexpr double sobolev_poincare_abs = 1e-8;
constexpr double diameter_rel = 0.05;
constexpr double vertical_rel = 0.02;
constexpr int distance_pairs = 50;
constexpr int harnack_pairs = 200;
constexpr int gamma_fields = 100;
constexpr double budget_axioms = 10, budget_kernel = 60, budget_spectra = 60, budget_campaign = 300;
}  // namespace pinned

namespace {

using clock_type = std::chrono::steady_clock;

struct Item {
  std::string what;
  bool ok;
  std::string detail;
};

struct Outcome {
  std::vector<Item> items;
  void add(std::string what, bool ok, std::string detail = {}) {
    items.push_back({std::move(what), ok, std::move(detail)});
  }
  // a report whose every level holds
  void add(const std::string& what, const MarginReport& r) {
    const auto& t = r.tightest();
    add(what, r.holds(), t.check_id + " min margin " + num(t.min_margin) + " allowed " + num(t.allowed()));
  }
  bool ok() const {
    return std::all_of(items.begin(), items.end(), [](const Item& i) { return i.ok; });
  }
  static std::string num(double v) {
    std::ostringstream os;
    os << std::setprecision(4) << v;
    return os.str();
  }
};

const MarginReport& part(const MarginReport& r, const std::string& id) {
  auto* f = detail::find_report(r, id);
  if (!f) throw std::out_of_range("no part " + id + " in " + r.check_id);
  return *f;
}

// Labs built on first use and shared between criteria.
class Labs {
 public:
  const Lab& get(const std::string& name) {
    auto it = labs_.find(name);
    if (it != labs_.end()) return it->second;
    return labs_.emplace(name, build(name)).first->second;
  }
  static ModelSpec spec(const std::string& name) {
    ModelSpec s;
    s.name = name;
    if (name == "sphere") {
      s.kind = ModelKind::sphere;
      s.resolution = 32;
    } else if (name == "plane") {
      s.kind = ModelKind::euclidean;
      s.resolution = 80;
      s.extent = 5;
    } else if (name == "circle") {
      s.kind = ModelKind::torus;
      s.dim = 1;
      s.resolution = 64;
    } else if (name == "torus") {
      s.kind = ModelKind::torus;
      s.resolution = 32;
    } else if (name == "interval") {
      s.kind = ModelKind::euclidean;
      s.dim = 1;
      s.resolution = 200;
      s.extent = 0.5;
    } else if (name == "space") {
      s.kind = ModelKind::euclidean;
      s.dim = 3;
      s.resolution = 24;
      s.extent = 3;
    } else if (name == "heisenberg" || name == "heisenberg_coarse") {
      s.kind = ModelKind::heisenberg;
      s.dim = 3;
      s.resolution = name == "heisenberg" ? 20 : 12;
      s.extent = 2;
      s.options["z_extent"] = "1";
    } else {
      throw std::invalid_argument(name);
    }
    return s;
  }
  static std::vector<std::string> catalog() {
    return {"sphere", "plane", "circle", "torus", "interval", "space", "heisenberg", "heisenberg_coarse"};
  }

 private:
  static Lab build(const std::string& name) {
    LabOptions lo;
    lo.cn.tol = 1e-7;
    if (name == "space") lo.modes = 0;
    return make_lab(spec(name), lo);
  }
  std::map<std::string, Lab> labs_;
};

Labs labs;

// ------------------------------------------------------------ criteria

Outcome operator_axioms() {
  Outcome o;
  for (const auto& name : Labs::catalog()) {
    auto b = build_model(Labs::spec(name));
    const auto& m = b.model;
    auto r = check_operator_axioms(m, pinned::gamma_fields, 1);
    bool resid = r.metadata["symmetry_residual"].get<double>() < pinned::axiom_residual &&
                 r.metadata["constant_residual"].get<double>() < pinned::axiom_residual &&
                 r.metadata["dirichlet_max_normalized"].get<double>() < pinned::axiom_residual;
    // Gamma on the interior, unnormalized, over fresh random fields
    Rng rng(2);
    double gmin = std::numeric_limits<double>::infinity();
    for (int k = 0; k < pinned::gamma_fields; ++k) {
      Vec f = random_values(m.size(), rng);
      Vec g = gamma_values(m, f);
      for (Index i = 0; i < m.size(); ++i)
        if (!m.boundary[i]) gmin = std::min(gmin, g[i]);
    }
    o.add(name, resid && gmin >= pinned::gamma_floor && r.holds(),
          "sym " + Outcome::num(r.metadata["symmetry_residual"].get<double>()) + " min Gamma " + Outcome::num(gmin));
  }
  return o;
}

Outcome kernel_laws() {
  Outcome o;
  for (const auto& name : {"circle", "torus", "sphere"}) {
    KernelLawOptions k;
    k.tol = {pinned::kernel_law, 0.0, 0};
    k.cross_tol = {pinned::cross_oracle, 0.0, 0};
    o.add(name, check_kernel_laws(labs.get(name), k));
  }
  return o;
}

Outcome spectra() {
  Outcome o;
  {
    // torus {0, 1, 1, 4, 4} within the h^2 mesh tolerance
    SpectrumOptions s;
    s.count = 5;
    auto r = check_spectrum(labs.get("circle"), s);
    o.add("circle first five", r);
  }
  {
    SpectrumOptions s;
    s.count = 4;
    s.rel = pinned::sphere_lambda_rel;
    auto r = check_spectrum(labs.get("sphere"), s);
    const auto& ev = labs.get("sphere").spectral->eigenvalues;
    int mult = 0;
    for (Index k = 0; k < ev.size(); ++k) mult += std::abs(ev[k] - 2.0) <= pinned::sphere_lambda_rel * 2.0;
    o.add("sphere lambda_1 = 2 x3", r.holds() && mult == 3,
          "lambda " + Outcome::num(ev[1]) + ".." + Outcome::num(ev[3]) + " in band " + std::to_string(mult));
  }
  {
    const auto& ev = labs.get("interval").spectral->eigenvalues;
    const double pi2 = std::numbers::pi * std::numbers::pi;
    double rel = std::abs(ev[1] - pi2) / pi2;
    o.add("interval lambda_1 = pi^2", rel <= pinned::interval_lambda_rel, "rel error " + Outcome::num(rel));
  }
  return o;
}

Outcome curvature() {
  Outcome o;
  const auto& sphere = labs.get("sphere");
  auto cd = check_cd(sphere, eigen_fields(*sphere.spectral, 8, 4, 0));
  o.add("sphere CD(1, 2) eigen suite", cd);
  o.add("sphere Gamma(Gamma) bound", part(cd, "gamma_gamma_bound"));

  const auto& plane = labs.get("plane");
  TestFieldSuite half;
  half.add("half_square", 0.5 * plane.model().nodes.rowwise().squaredNorm().transpose());
  CDOptions two;
  two.two_sided = true;
  o.add("plane |x|^2/2 equality", check_cd(plane, half, two));

  const auto& heis = labs.get("heisenberg");
  Rho1ScanOptions so;
  so.reproducibility = pinned::reproducibility;
  auto scan = check_rho1_scan(heis, [&](std::uint64_t s) { return default_suite(heis, s); }, so);
  o.add("heisenberg rho1 scan", scan.holds(),
        "best rho1 " + scan.metadata["best"]["rho1_tol"].dump() + ", seed spread " +
            Outcome::num(scan.parts[0].samples[0].lhs));
  return o;
}

Outcome li_yau() {
  Outcome o;
  const auto& plane = labs.get("plane");
  LiYauOptions lo;
  lo.saturation = true;
  auto r = check_li_yau(plane, default_suite(plane), lo);
  MarginReport main = r;
  main.parts.clear();
  o.add("plane rho0", main);
  o.add("plane Gaussian saturation", part(r, "li_yau_saturation"));

  const auto& sphere = labs.get("sphere");
  auto suite = default_suite(sphere);
  LiYauOptions ga;
  ga.mode = LiYauMode::general_alpha;
  ga.alpha = 1.0;
  o.add("sphere general alpha = 1", check_li_yau(sphere, suite, ga));
  LiYauOptions bq;
  bq.mode = LiYauMode::bakry_qian;
  bq.t_grid = {2.0, 3.0};
  o.add("sphere Bakry-Qian t >= 2", check_li_yau(sphere, suite, bq));

  const auto& heis = labs.get("heisenberg");
  auto hs = default_suite(heis);
  TestFieldSuite small;
  for (const auto& f : hs.fields)
    if (f.name == "x0" || f.name == "x1x1") small.fields.push_back(f);
  LiYauOptions sr;
  sr.mode = LiYauMode::sub_riemannian;
  sr.alpha = 3.0;
  sr.cd = heis.oracle().cd_params;
  sr.t_grid = {0.1, 0.2};
  o.add("heisenberg alpha = 3", check_li_yau(heis, small, sr));
  return o;
}

Outcome harnack_and_kernels() {
  Outcome o;
  const auto& plane = labs.get("plane");
  KernelBoundOptions ko;
  ko.two_sided = true;
  ko.product_rel = pinned::product_rel;
  auto kb = check_kernel_bounds(plane, ko);
  o.add("plane Cheeger-Yau equality", part(kb, "cheeger_yau"));
  const auto& diag = part(kb, "on_diagonal");
  double worst = 0.0;
  for (const auto& p : diag.metadata["products"]) worst = std::max(worst, std::abs(p.get<double>() / 0.25 - 1.0));
  o.add("plane p(x,x,r^2) mu(B) = 1/4", diag.holds() && worst <= pinned::product_rel,
        "worst rel " + Outcome::num(worst));

  for (const auto& name : {"sphere", "plane", "torus"}) {
    const auto& lab = labs.get(name);
    HarnackOptions h;
    h.pairs = pinned::harnack_pairs;
    auto r = check_harnack(lab, default_suite(lab), h);
    o.add(std::string(name) + " Harnack", r);
  }
  const auto& heis = labs.get("heisenberg");
  HarnackOptions hs;
  hs.mode = HarnackMode::sub_riemannian;
  hs.times = {0.05, 0.1, 0.2};
  auto r = check_harnack(heis, {}, hs);
  o.add("heisenberg Harnack, D from the CD constants", r);
  // literal reading with the topological dimension: printed, not gated
  hs.exponent = 2.0;
  auto lit = check_harnack(heis, {}, hs);
  std::cout << "  note: heisenberg Harnack with exponent 2 has min margin " << Outcome::num(lit.min_margin)
            << " (diagnostic)\n";
  return o;
}

Outcome volume() {
  Outcome o;
  {
    VolumeOptions v;
    v.lower = 4.0 * (1 - pinned::doubling_band_rel);
    v.upper = 4.0 * (1 + pinned::doubling_band_rel);
    v.exponent_rel = pinned::exponent_rel;
    o.add("plane ratio 4", check_volume_regularity(labs.get("plane"), v));
  }
  {
    VolumeOptions v;
    v.upper = 4.0;
    v.exponent_rel = pinned::exponent_rel;
    o.add("sphere ratio <= 4", check_volume_regularity(labs.get("sphere"), v));
  }
  {
    VolumeOptions v;
    v.lower = pinned::heis_ratio_lo;
    v.upper = pinned::heis_ratio_hi;
    v.distance = DistanceMethod::oracle;
    v.exponent_rel = pinned::exponent_rel;
    auto r = check_volume_regularity(labs.get("heisenberg"), v);
    o.add("heisenberg ratio in [14, 18], reverse doubling", r);
  }
  return o;
}

Outcome functional() {
  Outcome o;
  const auto& sphere = labs.get("sphere");
  auto gap = check_spectral_gap(sphere);
  o.add("Poincare", part(gap, "poincare"));
  double l1 = sphere.spectral->eigenvalues[1];
  double rel = std::abs(l1 - 2.0) / 2.0;
  o.add("Lichnerowicz equality", gap.holds() && rel <= pinned::lichnerowicz_rel, "lambda_1 " + Outcome::num(l1));

  auto suite = default_suite(sphere);
  LogSobolevOptions ls;
  ls.slope_allowance = 0.05;
  auto lsr = check_log_sobolev(sphere, suite, ls);
  MarginReport main = lsr;
  main.parts.clear();
  o.add("log-Sobolev 2/rho", main);
  double slope = -std::numeric_limits<double>::infinity();
  for (const auto& s : part(lsr, "entropy_slope").samples) slope = std::max(slope, s.lhs);
  o.add("entropy log-slope", slope <= pinned::entropy_slope_max, "max slope " + Outcome::num(slope));

  GradientOptions g;
  g.t_grid = {0.1, 0.5, 1.0};
  o.add("gradient bound", check_gradient_bound(sphere, suite, g));
  return o;
}

Outcome sobolev() {
  Outcome o;
  const auto& space = labs.get("space");
  TestFieldSuite bumps = bump_fields(space.model(), {centre_node(*space.built)}, 0.6);
  bumps.append(bump_fields(space.model(), {centre_node(*space.built)}, 1.0));
  o.add("space Varopoulos", check_varopoulos(space, bumps));

  o.add("plane isoperimetric 1/(2 sqrt pi)", check_isoperimetric(labs.get("plane")));

  const auto& sphere = labs.get("sphere");
  const auto& m = sphere.model();
  auto suite = default_suite(sphere);
  SharpSobolevOptions so;
  so.diameter_rel = pinned::diameter_rel;
  auto r = check_sharp_sobolev(sphere, suite, so);
  // p = 1 against the Poincare form on the same lifted fields
  double worst = 0.0;
  const double V = m.total_measure(), c = 0.5;  // (n - 1)/(n rho) with n = 2, rho = 1
  for (const auto& s : r.samples) {
    if (s.param("p") != 1.0) continue;
    auto sh = positive_shift(suite.fields[static_cast<size_t>(s.param("field"))].values);
    const Vec& f = sh.values;
    double I = m.integrate(f);
    double poincare = c * m.integrate(gamma_values(m, f)) + I * I / V - m.integrate(f.cwiseAbs2());
    worst = std::max(worst, std::abs(s.margin - poincare));
  }
  o.add("p = 1 is the Poincare margin", worst <= pinned::sobolev_poincare_abs, "max diff " + Outcome::num(worst));
  const auto& dia = part(r, "diameter_bound");
  double bound = dia.metadata.value("bound", 0.0);
  o.add("diameter bound", dia.holds() && bound >= std::numbers::pi &&
                              bound <= std::numbers::pi * (1 + pinned::diameter_rel),
        "bound " + Outcome::num(bound));
  return o;
}

Outcome distances() {
  Outcome o;
  for (const auto& name : {"sphere", "plane", "circle", "torus", "interval", "heisenberg_coarse"}) {
    DistanceOptions d;
    d.pairs = pinned::distance_pairs;
    d.vertical_rel = pinned::vertical_rel;
    auto r = check_distances(labs.get(name), d);
    MarginReport main = r;
    main.parts.clear();
    o.add(std::string(name) + " dual <= graph", main);
    if (!r.parts.empty()) o.add("subunit distance to (0, 0, z)", part(r, "subunit_vertical"));
  }
  const auto& heis = labs.get("heisenberg");
  o.add("H.2 residual", check_h2(heis, default_suite(heis)));
  return o;
}

std::map<std::string, std::string> snapshot(const fs::path& out) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(out)) {
    if (!e.is_regular_file() || e.path().filename() == "timing.json") continue;
    std::ifstream is(e.path(), std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    files[fs::relative(e.path(), out).string()] = ss.str();
  }
  return files;
}

Outcome determinism() {
  Outcome o;
  fs::path root = fs::temp_directory_path() / ("heatlab-acceptance-" + std::to_string(::getpid()));
  fs::remove_all(root);
  Json j = load_config_file(HEATLAB_DEFAULT_CONFIG);
  double worst = 0.0;
  std::vector<std::map<std::string, std::string>> snaps;
  bool all_pass = true;
  for (int run = 0; run < 2; ++run) {
    ConfigOverrides ov;
    ov.output_dir = root / ("run" + std::to_string(run));
    ov.cache_dir = root / "cache";  // cold on the first run, warm on the second
    auto cfg = parse_config(j, ov);
    auto t0 = clock_type::now();
    auto res = run_campaign(cfg);
    double s = std::chrono::duration<double>(clock_type::now() - t0).count();
    worst = std::max(worst, s);
    all_pass = all_pass && res.exit_code == 0;
    snaps.push_back(snapshot(*ov.output_dir));
    o.add("run " + std::to_string(run + 1) + " verdicts", res.exit_code == 0,
          std::to_string(res.tasks.size()) + " tasks in " + Outcome::num(s) + " s");
  }
  o.add("byte-identical outputs", snaps[0] == snaps[1] && !snaps[0].empty(),
        std::to_string(snaps[0].size()) + " files");
  o.add("runtime", worst < pinned::budget_campaign, "slowest run " + Outcome::num(worst) + " s");
  fs::remove_all(root);
  return o;
}

struct Criterion {
  int id;
  std::string title;
  Outcome (*run)();
  double budget;  // seconds; 0 = none
};

}  // namespace

int main() {
  std::vector<Criterion> criteria = {
      {1, "operator axioms", operator_axioms, pinned::budget_axioms},
      {2, "kernel laws", kernel_laws, pinned::budget_kernel},
      {3, "spectra", spectra, pinned::budget_spectra},
      {4, "curvature-dimension", curvature, 0},
      {5, "Li-Yau", li_yau, 0},
      {6, "Harnack and kernel bounds", harnack_and_kernels, 0},
      {7, "volume growth", volume, 0},
      {8, "functional inequalities on the sphere", functional, 0},
      {9, "Sobolev and diameter", sobolev, 0},
      {10, "distances", distances, 0},
      {11, "determinism and runtime", determinism, 0},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    auto t0 = clock_type::now();
    Outcome o;
    std::string err;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      err = e.what();
    }
    double s = std::chrono::duration<double>(clock_type::now() - t0).count();
    bool in_time = c.budget <= 0 || s < c.budget;
    bool ok = err.empty() && o.ok() && in_time;
    failed += !ok;
    std::cout << "criterion " << std::setw(2) << c.id << ": " << (ok ? "PASS" : "FAIL") << "  " << c.title << " ("
              << std::fixed << std::setprecision(1) << s << " s";
    if (c.budget > 0) std::cout << ", budget " << c.budget << " s";
    std::cout << ")" << std::defaultfloat << '\n';
    for (const auto& i : o.items)
      std::cout << "    " << (i.ok ? "ok   " : "FAIL ") << i.what << (i.detail.empty() ? "" : ": " + i.detail) << '\n';
    if (!err.empty()) std::cout << "    error: " << err << '\n';
    std::cout.flush();
  }
  std::cout << (failed ? std::to_string(failed) + " criteria failed" : "all criteria pass") << '\n';
  return failed ? 1 : 0;
}
