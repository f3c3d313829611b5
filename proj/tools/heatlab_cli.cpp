// heatlab: build models, run checks and campaigns, re-emit plot data.
// Exit status: 0 all gated checks pass, 1 a gated check fails, 2 bad config.

#include "heatlab/campaign.hpp"
#include "heatlab/yaml.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace fs = std::filesystem;
using namespace heatlab;

namespace {

constexpr int kExitPass = 0, kExitFail = 1, kExitConfig = 2;

int exit_for(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::config:
    case ErrorKind::io:
    case ErrorKind::not_applicable:
    case ErrorKind::unsupported: return kExitConfig;
    default: return kExitFail;
  }
}

struct Common {
  std::string config;
  std::string model;
  std::string check;
  std::string params;
  std::optional<std::uint64_t> seed;
  std::optional<double> tol_scale;
  std::string out;
  std::string cache;
  std::optional<int> workers;
  bool no_resume = false;
  bool no_plots = false;
};

bool looks_inline(const std::string& s) { return !s.empty() && s.front() == '{'; }

// Config from --config, or a one-model one-check config from inline flags.
std::string short_number(double v) {
  if (std::abs(v) >= 1e300) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os << std::setprecision(4) << v;
  return os.str();
}

Json load_or_synthesize(const Common& c, bool need_check) {
  Json j;
  if (!c.config.empty()) {
    j = load_config_file(c.config);
  } else {
    j = Json::object();
    j["models"] = Json::array();
    j["checks"] = Json::array();
  }
  require(j.is_object(), ErrorKind::config, "config: expected a mapping at the top level");
  if (looks_inline(c.model)) {
    Json m = parse_yaml_text(c.model, "--model");
    require(m.is_object(), ErrorKind::config, "--model: expected a mapping or a model name");
    if (!j.contains("models") || !j["models"].is_array()) j["models"] = Json::array();
    j["models"].push_back(m);
  }
  if (need_check && !c.check.empty()) {
    bool named = false;
    if (j.contains("checks") && j["checks"].is_array())
      for (const auto& e : j["checks"])
        if (e.is_object() && (e.value("name", e.value("check", "")) == c.check)) named = true;
    if (!named) {
      require(check_registry().count(c.check) > 0, ErrorKind::config, "--check: unknown check '" + c.check + "'");
      Json e = {{"check", c.check}};
      if (!c.params.empty()) e["params"] = parse_yaml_text(c.params, "--params");
      if (!j.contains("checks") || !j["checks"].is_array()) j["checks"] = Json::array();
      j["checks"].push_back(e);
    } else {
      require(c.params.empty(), ErrorKind::config, "--params: only valid with an inline check");
    }
  }
  return j;
}

ConfigOverrides overrides(const Common& c) {
  ConfigOverrides ov;
  ov.seed = c.seed;
  ov.tol_scale = c.tol_scale;
  if (!c.out.empty()) ov.output_dir = c.out;
  if (!c.cache.empty()) ov.cache_dir = c.cache;
  ov.workers = c.workers;
  return ov;
}

std::string selected_model_name(const Common& c, const Json& j) {
  if (!looks_inline(c.model)) return c.model;
  // the inline model was appended last
  return parse_model_entry(j["models"].back(), "--model").spec.id();
}

// Keeps one check entry (by name or id) and, optionally, one model.
CampaignConfig select(CampaignConfig cfg, const std::string& check, const std::string& model) {
  if (!model.empty()) {
    cfg.model(model);  // throws on unknown names
    std::erase_if(cfg.models, [&](const ModelEntry& m) { return m.spec.id() != model; });
  }
  std::erase_if(cfg.checks, [&](const CheckEntry& e) { return e.name != check; });
  if (cfg.checks.empty()) throw Error(ErrorKind::config, "--check: no check named '" + check + "' in the config");
  for (auto& e : cfg.checks) {
    if (!model.empty()) {
      bool listed = std::find(e.models.begin(), e.models.end(), model) != e.models.end();
      require(listed, ErrorKind::config, "--model: check '" + check + "' does not run on '" + model + "'");
      e.models = {model};
    }
  }
  return cfg;
}

void print_summary(const CampaignResult& r) {
  size_t width = 8;
  for (const auto& t : r.tasks) width = std::max(width, t.model.size() + t.check.size() + 3);
  for (const auto& t : r.tasks) {
    std::string key = t.model + " / " + t.check;
    std::cout << std::left << std::setw(static_cast<int>(width)) << key << "  " << std::setw(7) << t.status
              << (t.gated ? "" : " (report only)");
    if (t.status == "error")
      std::cout << "  " << t.error;
    else
      std::cout << "  min margin " << short_number(t.min_margin) << " (allowed " << short_number(t.allowed) << ")";
    std::cout << '\n';
  }
  std::cout << "exit " << r.exit_code << " after " << std::fixed << std::setprecision(1) << r.seconds << " s\n";
}

int cmd_build(const Common& c) {
  require(!c.model.empty(), ErrorKind::config, "--model: required");
  Json j = load_or_synthesize(c, false);
  ModelEntry entry;
  if (looks_inline(c.model)) {
    entry = parse_model_entry(j["models"].back(), "--model");
  } else {
    require(j.contains("models") && j["models"].is_array(), ErrorKind::config, "--config: needed to look up a model by name");
    bool found = false;
    for (size_t i = 0; i < j["models"].size(); ++i) {
      auto e = parse_model_entry(j["models"][i], "models[" + std::to_string(i) + "]");
      if (e.spec.id() == c.model) entry = e, found = true;
    }
    require(found, ErrorKind::config, "--model: unknown model '" + c.model + "'");
  }
  std::uint64_t seed = c.seed.value_or(j.value("seed", 0ull));
  fs::path cache = !c.cache.empty() ? fs::path(c.cache) : fs::path(j.value("cache_dir", std::string()));
  require(!cache.empty(), ErrorKind::config, "--cache: required (or cache_dir in the config)");
  auto t0 = std::chrono::steady_clock::now();
  auto lb = build_lab(entry, cache, seed);
  const auto& m = lb.lab.model();
  Json info = {{"model", m.id},
               {"nodes", m.size()},
               {"edges", m.edges.size()},
               {"mesh_h", m.mesh_h},
               {"model_hash", hex64(model_hash(m))},
               {"modes", lb.lab.spectral ? lb.lab.spectral->count() : 0},
               {"cache_hit", lb.cache_hit},
               {"seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()}};
  if (lb.lab.spectral) {
    info["cache_file"] = spectral_cache_path(cache, m).string();
    Json ev = Json::array();
    for (Index k = 0; k < std::min<Index>(10, lb.lab.spectral->count()); ++k)
      ev.push_back(lb.lab.spectral->eigenvalues[k]);
    info["first_eigenvalues"] = ev;
    info["residual"] = lb.lab.spectral->residual;
  }
  std::cout << info.dump(2) << '\n';
  return kExitPass;
}

int cmd_check(const Common& c) {
  require(!c.check.empty(), ErrorKind::config, "--check: required");
  Json j = load_or_synthesize(c, true);
  auto cfg = parse_config(j, overrides(c));
  std::string model = c.model.empty() ? "" : selected_model_name(c, j);
  cfg = select(std::move(cfg), c.check, model);
  RunOptions ro;
  ro.resume = !c.no_resume;
  ro.plots = !c.no_plots;
  ro.log = &std::cerr;
  auto r = run_campaign(cfg, ro);
  print_summary(r);
  return r.exit_code;
}

int cmd_campaign(const Common& c) {
  require(!c.config.empty(), ErrorKind::config, "--config: required");
  Json j = load_config_file(c.config);
  auto cfg = parse_config(j, overrides(c));
  RunOptions ro;
  ro.resume = !c.no_resume;
  ro.plots = !c.no_plots;
  ro.log = &std::cerr;
  auto r = run_campaign(cfg, ro);
  print_summary(r);
  std::cout << "reports in " << (cfg.output_dir / "reports").string() << '\n';
  return r.exit_code;
}

// Re-emits plot files from stored reports: a single report file or every
// report under <out>/reports.
int cmd_report(const std::string& out, const std::string& report, const std::string& kind, const std::string& dest) {
  std::optional<PlotKind> only;
  if (!kind.empty()) only = parse_plot_kind(kind);
  std::vector<fs::path> files;
  if (!report.empty()) {
    files.push_back(report);
  } else {
    fs::path dir = fs::path(out) / "reports";
    require(fs::is_directory(dir), ErrorKind::config, "--out: no reports directory under '" + out + "'");
    for (const auto& e : fs::directory_iterator(dir))
      if (e.path().extension() == ".json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
  }
  fs::path plots = !dest.empty() ? fs::path(dest) : (report.empty() ? fs::path(out) / "plots" : fs::path("."));
  int written = 0;
  for (const auto& f : files) {
    std::ifstream is(f);
    require(static_cast<bool>(is), ErrorKind::io, f.string() + ": cannot open");
    MarginReport r;
    try {
      r = report_from_json(Json::parse(is));
    } catch (const Json::exception& e) {
      throw Error(ErrorKind::io, f.string() + ": " + e.what());
    }
    std::string stem = f.stem().string();
    if (!only) {
      emit_all_plots(r, plots, stem);
      ++written;
      continue;
    }
    if (!plot_applies(r, *only)) {
      if (!report.empty())
        throw Error(ErrorKind::config, std::string("--kind: '") + to_string(*only) + "' does not apply to " + f.string());
      continue;
    }
    auto pd = plot_data(r, *only);
    write_file_atomic(plots / (stem + "." + to_string(*only) + ".csv"), pd.csv);
    write_file_atomic(plots / (stem + "." + to_string(*only) + ".svg"), pd.svg);
    ++written;
  }
  std::cout << written << " report(s) plotted into " << plots.string() << '\n';
  return kExitPass;
}

int cmd_list() {
  for (const auto& [id, info] : check_registry())
    std::cout << std::left << std::setw(20) << id << info.summary << (info.tunable ? "" : " [fixed tolerance]") << '\n';
  return kExitPass;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"heatlab: heat semigroup inequalities on discretized geometries"};
  app.require_subcommand(1);
  Common c;

  auto add_run_flags = [&](CLI::App* s) {
    s->add_option("--config,-c", c.config, "YAML or JSON config file");
    s->add_option("--seed", c.seed, "override the config seed");
    s->add_option("--tol-scale", c.tol_scale, "multiply every tunable tolerance");
    s->add_option("--out,-o", c.out, "output directory");
    s->add_option("--cache", c.cache, "spectral cache directory");
    s->add_option("--workers,-j", c.workers, "worker threads (0: all cores)");
    s->add_flag("--no-resume", c.no_resume, "recompute even when a matching report exists");
    s->add_flag("--no-plots", c.no_plots, "skip CSV/SVG plot data");
  };

  auto* build = app.add_subcommand("build", "build a model and its spectral cache");
  build->add_option("--config,-c", c.config, "YAML or JSON config file");
  build->add_option("--model,-m", c.model, "model name from the config, or an inline mapping")->required();
  build->add_option("--cache", c.cache, "spectral cache directory");
  build->add_option("--seed", c.seed, "eigensolver seed");

  auto* check = app.add_subcommand("check", "run a single check");
  add_run_flags(check);
  check->add_option("--check,-k", c.check, "check name from the config, or a check id")->required();
  check->add_option("--model,-m", c.model, "model name from the config, or an inline mapping");
  check->add_option("--params,-p", c.params, "inline parameters for a check id");

  auto* campaign = app.add_subcommand("campaign", "run every check of a config");
  add_run_flags(campaign);

  std::string report_out = "heatlab-out", report_file, report_kind, report_dest;
  auto* report = app.add_subcommand("report", "re-emit plot data from stored reports");
  report->add_option("--out,-o", report_out, "campaign output directory");
  report->add_option("--report,-r", report_file, "a single report file");
  report->add_option("--kind", report_kind, "margins, li_yau, doubling or entropy (default: all that apply)");
  report->add_option("--plots", report_dest, "destination directory");

  app.add_subcommand("list", "list available checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*build) return cmd_build(c);
    if (*check) return cmd_check(c);
    if (*campaign) return cmd_campaign(c);
    if (*report) return cmd_report(report_out, report_file, report_kind, report_dest);
    return cmd_list();
  } catch (const Error& e) {
    std::cerr << "heatlab: " << e.what() << '\n';
    return exit_for(e);
  } catch (const std::exception& e) {
    std::cerr << "heatlab: " << e.what() << '\n';
    return kExitFail;
  }
}
