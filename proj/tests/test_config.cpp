#include "heatlab/campaign.hpp"
#include "heatlab/yaml.hpp"

#include <gtest/gtest.h>

#include <cstdlib>

using namespace heatlab;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("heatlab-unit-" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string config_error(const std::string& yaml) {
  try {
    parse_config(parse_yaml_text(yaml, "test"));
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::config);
    return e.what();
  }
  ADD_FAILURE() << "config accepted:\n" << yaml;
  return {};
}

bool mentions(const std::string& haystack, const std::string& needle) {
  return haystack.find(needle) != std::string::npos;
}

const char* kSmall = R"(
version: 1
seed: 3
models:
  - {name: ring, kind: torus, dim: 1, resolution: 24}
checks:
  - {check: axioms, params: {fields: 10}}
  - {check: completeness}
  - {check: spectrum, params: {count: 3, rel: 0.01}}
)";

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file() || e.path().filename() == "timing.json") continue;
    std::ifstream is(e.path(), std::ios::binary);
    out[fs::relative(e.path(), dir).string()] = std::string(std::istreambuf_iterator<char>(is), {});
  }
  return out;
}

// least squares written out longhand, kept apart from the library fit
double ls_slope(const std::vector<double>& x, const std::vector<double>& y) {
  double n = x.size(), sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (size_t i = 0; i < x.size(); ++i) sx += x[i], sy += y[i], sxx += x[i] * x[i], sxy += x[i] * y[i];
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace

TEST(Schema, ErrorsNameTheField) {
  std::string base = "models:\n  - {kind: torus, dim: 1, resolution: 16}\nchecks:\n";
  EXPECT_TRUE(mentions(config_error(base + "  - {check: spectrum, tolerance: {abs: -1}}\n"),
                       "checks[0].tolerance.abs: must be nonnegative"));
  EXPECT_TRUE(mentions(config_error(base + "  - {check: spectrum, colour: red}\n"), "checks[0].colour: unknown field"));
  EXPECT_TRUE(mentions(config_error(base + "  - {check: no_such_check}\n"), "checks[0].check: unknown check"));
  EXPECT_TRUE(mentions(config_error(base + "  - {check: spectrum, models: [nowhere]}\n"),
                       "checks[0].models[0]: unknown model 'nowhere'"));
  EXPECT_TRUE(mentions(config_error(base + "  - {check: spectrum}\n  - {check: spectrum}\n"),
                       "checks[1].name: duplicate check name"));
  EXPECT_TRUE(mentions(config_error(base + "  - {check: spectrum, params: {count: many}}\n"),
                       "checks[0].params.count"));
  EXPECT_TRUE(mentions(config_error(base + "  - {check: axioms, tolerance: {abs: 1}}\n"), "fixed tolerance"));
  EXPECT_TRUE(mentions(config_error("models:\n  - {kind: torus, resolution: 4}\nchecks:\n  - {check: axioms}\n"),
                       "models[0].resolution"));
  EXPECT_TRUE(mentions(config_error("version: 9\n" + base + "  - {check: axioms}\n"), "version"));
  EXPECT_TRUE(mentions(config_error("models: []\nchecks: []\n"), "models: expected a non-empty list"));
}

TEST(Schema, AllProblemsReportedAtOnce) {
  auto msg = config_error(
      "models:\n  - {kind: torus, dim: 1, resolution: 16}\nchecks:\n  - {check: spectrum, colour: red}\n"
      "  - {check: nope}\nbogus: 1\n");
  EXPECT_TRUE(mentions(msg, "checks[0].colour"));
  EXPECT_TRUE(mentions(msg, "checks[1].check"));
  EXPECT_TRUE(mentions(msg, "bogus: unknown field"));
}

TEST(Schema, BundledConfigsParse) {
  for (const char* name : {"default.yaml", "heisenberg.yaml", "full.yaml"}) {
    auto cfg = parse_config(load_config_file(fs::path(HEATLAB_CONFIG_DIR) / name));
    EXPECT_FALSE(cfg.models.empty()) << name;
    EXPECT_FALSE(cfg.checks.empty()) << name;
  }
}

TEST(Yaml, QuotedScalarsStayStrings) {
  auto j = parse_yaml_text("a: 1\nb: '1'\nc: 1.5\nd: true\ne: \"yes\"\nf: ~\ng: 1e-3\nh: word\n", "t");
  EXPECT_TRUE(j["a"].is_number_integer());
  EXPECT_TRUE(j["b"].is_string());
  EXPECT_TRUE(j["c"].is_number_float());
  EXPECT_TRUE(j["d"].is_boolean());
  EXPECT_TRUE(j["e"].is_string());
  EXPECT_TRUE(j["f"].is_null());
  EXPECT_DOUBLE_EQ(j["g"].get<double>(), 1e-3);
  EXPECT_EQ(j["h"], "word");
  EXPECT_THROW(parse_yaml_text("a: [1, 2", "t"), Error);
}

TEST(Yaml, JsonFilesAreAccepted) {
  auto dir = scratch("json");
  std::ofstream(dir / "c.json") << R"({"models": [{"kind": "torus", "dim": 1, "resolution": 16}],
                                     "checks": [{"check": "completeness"}]})";
  auto cfg = parse_config(load_config_file(dir / "c.json"));
  EXPECT_EQ(cfg.checks.size(), 1u);
  std::ofstream(dir / "bad.json") << "{\"models\": [";
  EXPECT_THROW(load_config_file(dir / "bad.json"), Error);
  fs::remove_all(dir);
}

TEST(Plots, KindsAndLayouts) {
  EXPECT_THROW(parse_plot_kind("histogram"), Error);
  EXPECT_EQ(parse_plot_kind("li_yau"), PlotKind::li_yau);

  MarginReport ly("li_yau_rho0", "m");
  ly.add({{"t", 0.5}, {"node", 2}, {"field", 0}}, 1.0, 2.0);
  ly.add({{"t", 0.1}, {"node", 3}, {"field", 1}}, 1.0, 3.0);
  auto pd = plot_data(ly, PlotKind::li_yau);
  EXPECT_EQ(pd.csv.substr(0, pd.csv.find('\n')), "t,node,field,lhs,rhs,margin");
  EXPECT_LT(pd.csv.find("\n" + format_double(0.1) + ","), pd.csv.find("\n" + format_double(0.5) + ","));
  EXPECT_TRUE(mentions(pd.svg, "<polyline"));
  EXPECT_FALSE(plot_applies(ly, PlotKind::doubling));
  EXPECT_THROW(plot_data(ly, PlotKind::doubling), Error);

  MarginReport db("doubling", "m");
  db.add({{"centre", 1}, {"r", 0.4}, {"ratio", 4.1}}, 0, 0);
  db.add({{"centre", 0}, {"r", 0.8}, {"ratio", 4.0}}, 0, 0);
  db.add({{"centre", 0}, {"r", 0.2}, {"ratio", 3.9}}, 0, 0);
  db.add({{"centre", 0}}, 0, 0);  // no ratio: skipped
  auto dd = plot_data(db, PlotKind::doubling);
  auto row = [](double c, double r, double q) {
    return format_double(c) + "," + format_double(r) + "," + format_double(q) + "\n";
  };
  EXPECT_EQ(dd.csv, "centre,r,ratio\n" + row(0, 0.2, 3.9) + row(0, 0.8, 4.0) + row(1, 0.4, 4.1));
}

TEST(Plots, EntropyHeaderSlopeMatchesTheRows) {
  MarginReport root("log_sobolev", "m");
  MarginReport dec("entropy_decay", "m"), sl("entropy_slope", "m");
  std::vector<double> ts{0.1, 0.2, 0.4, 0.8}, logs;
  for (double t : ts) {
    double e = 3.0 * std::exp(-4.0 * t) * (1.0 + 0.01 * t * t);
    dec.add({{"field", 0}, {"t", t}}, e, 0.0);
    logs.push_back(std::log(e));
  }
  sl.add({{"field", 0}}, fit_slope(ts, logs), -2.0);
  root.parts = {dec, sl};
  auto pd = plot_data(root, PlotKind::entropy);
  std::istringstream is(pd.csv);
  std::string line;
  double header = NAN;
  std::vector<double> x, y;
  while (std::getline(is, line)) {
    if (line.rfind("# slope field=0 ", 0) == 0) header = std::stod(line.substr(16));
    else if (!line.empty() && line[0] != '#' && line[0] != 'f') {
      double f, t, l;
      char c;
      std::istringstream ls(line);
      ls >> f >> c >> t >> c >> l;
      x.push_back(t);
      y.push_back(l);
    }
  }
  ASSERT_EQ(x.size(), 4u);
  EXPECT_NEAR(header, ls_slope(x, y), 1e-9);
}

TEST(Campaign, DeterministicResumableAndFailing) {
  auto dir = scratch("campaign");
  ConfigOverrides ov;
  ov.output_dir = dir / "a";
  ov.cache_dir = dir / "cache";
  ov.workers = 2;
  auto cfg = parse_config(parse_yaml_text(kSmall, "small"), ov);
  auto r1 = run_campaign(cfg, {false, true, nullptr});
  EXPECT_EQ(r1.exit_code, 0);
  ASSERT_EQ(r1.tasks.size(), 3u);
  for (const auto& t : r1.tasks) EXPECT_EQ(t.status, "pass") << t.check << " " << t.error;
  EXPECT_TRUE(fs::exists(dir / "a" / "summary.json"));
  EXPECT_TRUE(fs::exists(dir / "a" / "summary.csv"));

  cfg.output_dir = dir / "b";
  cfg.workers = 1;
  auto r2 = run_campaign(cfg, {false, true, nullptr});
  EXPECT_EQ(snapshot(dir / "a"), snapshot(dir / "b"));

  auto r3 = run_campaign(cfg, {true, true, nullptr});
  for (const auto& t : r3.tasks) EXPECT_TRUE(t.cached) << t.check;
  EXPECT_EQ(snapshot(dir / "a"), snapshot(dir / "b"));

  for (const auto& e : fs::recursive_directory_iterator(dir))
    EXPECT_NE(e.path().extension(), ".tmp") << e.path();

  // exact discrete vs continuum spectrum at a hair's tolerance must fail
  auto bad = parse_config(parse_yaml_text(
      "models:\n  - {kind: torus, dim: 1, resolution: 16}\nchecks:\n  - {check: spectrum, params: {rel: 1.0e-9}}\n",
      "bad"), {std::nullopt, std::nullopt, dir / "c", std::nullopt, 1});
  auto r4 = run_campaign(bad, {false, false, nullptr});
  EXPECT_EQ(r4.exit_code, 1);
  EXPECT_EQ(r4.tasks.at(0).status, "fail");
  fs::remove_all(dir);
}

#ifdef HEATLAB_CLI
namespace {
int cli(const std::string& args) {
  std::string cmd = std::string("\"") + HEATLAB_CLI + "\" " + args + " > /dev/null 2>&1";
  int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}
}  // namespace

TEST(Cli, ExitCodes) {
  auto dir = scratch("cli");
  const std::string ring = "--model '{name: ring, kind: torus, dim: 1, resolution: 16}' ";
  const std::string out = "--out '" + (dir / "out").string() + "' ";
  EXPECT_EQ(cli("check " + ring + "--check completeness " + out), 0);
  EXPECT_EQ(cli("check " + ring + "--check spectrum --params '{rel: 1.0e-9}' " + out), 1);
  EXPECT_EQ(cli("check " + ring + "--check no_such_check " + out), 2);
  EXPECT_EQ(cli("check " + ring + "--check spectrum --params '{count: -3}' " + out), 2);
  EXPECT_EQ(cli("campaign --config '" + (dir / "missing.yaml").string() + "' " + out), 2);
  EXPECT_EQ(cli("frobnicate"), 2);
  EXPECT_EQ(cli("report " + out + "--kind histogram"), 2);
  EXPECT_EQ(cli("report " + out + "--kind margins"), 0);
  EXPECT_EQ(cli("build " + ring + "--cache '" + (dir / "cache").string() + "'"), 0);
  EXPECT_EQ(cli("list"), 0);
  fs::remove_all(dir);
}
#endif
