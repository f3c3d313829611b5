#pragma once

#include "heatlab/plots.hpp"
#include "heatlab/registry.hpp"

#include <chrono>
#include <iomanip>

namespace heatlab {

inline constexpr int kConfigVersion = 1;

struct ModelEntry {
  ModelSpec spec;
  Index modes = -1;  // -1: model default
  CrankNicolsonOptions cn;
  Json source;       // as written, for task hashes
};

struct CheckEntry {
  std::string check;  // registry id
  std::string name;   // report key; defaults to the id
  std::vector<std::string> models;
  std::optional<bool> gated;
  CheckRunner run;
  Json source;
};

struct CampaignConfig {
  int version = kConfigVersion;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "heatlab-out";
  std::filesystem::path cache_dir;  // empty: no spectral cache
  int workers = 0;                  // 0: hardware concurrency
  double tol_scale = 1.0;
  std::vector<ModelEntry> models;
  std::vector<CheckEntry> checks;

  const ModelEntry& model(const std::string& name) const {
    for (const auto& m : models)
      if (m.spec.id() == name) return m;
    throw Error(ErrorKind::config, "unknown model '" + name + "'");
  }
};

// Overrides applied on top of the file, from the command line.
struct ConfigOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<double> tol_scale;
  std::optional<std::filesystem::path> output_dir;
  std::optional<std::filesystem::path> cache_dir;
  std::optional<int> workers;
};

inline ModelEntry parse_model_entry(const Json& j, const std::string& path) {
  Params p(j, path);
  ModelEntry e;
  e.source = j;
  auto& s = e.spec;
  s.name = p.str("name", "");
  std::string kind = p.choice("kind", "", {"euclidean", "torus", "sphere", "heisenberg", "hyperbolic"});
  s.kind = parse_model_kind(kind);
  s.dim = p.count("dim", s.kind == ModelKind::heisenberg ? 3 : 2);
  s.resolution = p.count("resolution", 32, 8);
  s.extent = p.positive("extent", 1.0);
  if (auto* o = p.raw("options")) {
    require(o->is_object(), ErrorKind::config, p.field("options") + ": expected a mapping");
    for (const auto& [k, v] : o->items()) {
      if (v.is_string())
        s.options[k] = v.get<std::string>();
      else if (v.is_number())
        s.options[k] = format_double(v.get<double>());
      else
        throw Error(ErrorKind::config, p.field("options") + "." + k + ": expected a number or string");
    }
  }
  e.modes = p.integer("modes", -1);
  require(e.modes >= -1, ErrorKind::config, p.field("modes") + ": must be -1 (default), 0 or positive");
  e.cn.tol = p.positive("cn_tol", 1e-7);
  e.cn.max_steps = p.count("cn_max_steps", e.cn.max_steps, 128);
  p.finish();
  try {
    s.validate();
  } catch (const Error& err) {
    throw Error(ErrorKind::config, path + ": " + err.what());
  }
  require(!(s.kind == ModelKind::heisenberg && s.resolution % 2), ErrorKind::config,
          p.field("resolution") + ": heisenberg resolution must be even");
  return e;
}

inline CheckEntry parse_check_entry(const Json& j, const std::string& path, const CampaignConfig& cfg) {
  Params p(j, path);
  CheckEntry e;
  e.source = j;
  e.check = p.str("check", "");
  require(!e.check.empty(), ErrorKind::config, p.field("check") + ": missing");
  const auto& reg = check_registry();
  auto it = reg.find(e.check);
  require(it != reg.end(), ErrorKind::config, p.field("check") + ": unknown check '" + e.check + "'");
  e.name = p.str("name", e.check);
  e.models = p.strs("models", {});
  if (e.models.empty())
    for (const auto& m : cfg.models) e.models.push_back(m.spec.id());
  for (size_t i = 0; i < e.models.size(); ++i) {
    bool found = false;
    for (const auto& m : cfg.models) found = found || m.spec.id() == e.models[i];
    require(found, ErrorKind::config,
            p.field("models") + "[" + std::to_string(i) + "]: unknown model '" + e.models[i] + "'");
  }
  if (p.has("gated")) e.gated = p.flag("gated", true);
  CheckSettings st;
  st.seed = cfg.seed;
  st.tol_scale = cfg.tol_scale;
  if (p.has("tolerance")) {
    require(it->second.tunable, ErrorKind::config,
            p.field("tolerance") + ": check '" + e.check + "' has a fixed tolerance");
    st.tolerance = p.tolerance("tolerance", Tolerance{});
  }
  Params params = p.child("params");
  e.run = it->second.make(params, st);
  params.finish();
  p.finish();
  return e;
}

// Every schema problem is collected, so one run reports all of them.
inline CampaignConfig parse_config(const Json& j, const ConfigOverrides& ov = {}) {
  std::vector<std::string> errors;
  auto guard = [&](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      std::string w = e.what(), prefix = std::string(to_string(e.kind())) + ": ";
      errors.push_back(w.rfind(prefix, 0) == 0 && e.kind() == ErrorKind::config ? w.substr(prefix.size()) : w);
    }
  };
  CampaignConfig cfg;
  Params top(j, "");
  guard([&] {
    cfg.version = top.count("version", kConfigVersion);
    require(cfg.version == kConfigVersion, ErrorKind::config,
            "version: unsupported config version " + std::to_string(cfg.version));
  });
  guard([&] {
    long long s = top.integer("seed", 0);
    require(s >= 0, ErrorKind::config, "seed: must be nonnegative");
    cfg.seed = static_cast<std::uint64_t>(s);
  });
  guard([&] { cfg.output_dir = top.str("output_dir", cfg.output_dir.string()); });
  guard([&] { cfg.cache_dir = top.str("cache_dir", ""); });
  guard([&] { cfg.workers = top.count("workers", 0, 0); });
  guard([&] { cfg.tol_scale = top.positive("tol_scale", 1.0); });
  if (ov.seed) cfg.seed = *ov.seed;
  if (ov.tol_scale) {
    if (*ov.tol_scale > 0)
      cfg.tol_scale = *ov.tol_scale;
    else
      errors.push_back("--tol-scale: must be positive");
  }
  if (ov.output_dir) cfg.output_dir = *ov.output_dir;
  if (ov.cache_dir) cfg.cache_dir = *ov.cache_dir;
  if (ov.workers) cfg.workers = *ov.workers;

  const Json* models = top.raw("models");
  if (!models || !models->is_array() || models->empty()) {
    errors.push_back("models: expected a non-empty list");
  } else {
    for (size_t i = 0; i < models->size(); ++i)
      guard([&] {
        auto e = parse_model_entry((*models)[i], "models[" + std::to_string(i) + "]");
        for (const auto& o : cfg.models)
          require(o.spec.id() != e.spec.id(), ErrorKind::config,
                  "models[" + std::to_string(i) + "].name: duplicate model '" + e.spec.id() + "'");
        cfg.models.push_back(std::move(e));
      });
  }
  const Json* checks = top.raw("checks");
  if (!checks || !checks->is_array() || checks->empty()) {
    errors.push_back("checks: expected a non-empty list");
  } else {
    for (size_t i = 0; i < checks->size(); ++i)
      guard([&] {
        auto e = parse_check_entry((*checks)[i], "checks[" + std::to_string(i) + "]", cfg);
        for (const auto& o : cfg.checks)
          require(o.name != e.name, ErrorKind::config,
                  "checks[" + std::to_string(i) + "].name: duplicate check name '" + e.name + "'");
        cfg.checks.push_back(std::move(e));
      });
  }
  guard([&] { top.finish(); });
  if (!errors.empty()) {
    std::string msg = "invalid config:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw Error(ErrorKind::config, msg);
  }
  return cfg;
}

// ------------------------------------------------------------ labs and caches

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

inline std::string safe_name(const std::string& s) {
  std::string out;
  for (char c : s) out += std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.' ? c : '_';
  return out;
}

inline std::filesystem::path spectral_cache_path(const std::filesystem::path& dir, const DiscretizedModel& m) {
  return dir / (safe_name(m.id) + "-" + hex64(model_hash(m)) + ".spec");
}

struct LabBuild {
  Lab lab;
  bool cache_hit = false;
};

inline LabBuild build_lab(const ModelEntry& e, const std::filesystem::path& cache_dir, std::uint64_t seed) {
  BuiltModel b = build_model(e.spec);
  LabOptions lo;
  lo.modes = e.modes;
  lo.cn = e.cn;
  lo.seed = seed;
  Index want = e.modes < 0 ? default_modes(b) : e.modes;
  LabBuild out;
  if (!cache_dir.empty() && want > 0) {
    auto path = spectral_cache_path(cache_dir, b.model);
    if (auto sd = load_spectral_cache(path, b.model, want)) {
      if (sd->count() > want) {
        sd->eigenvalues.conservativeResize(want);
        sd->eigenfields.conservativeResize(Eigen::NoChange, want);
      }
      lo.spectral = std::make_shared<const SpectralData>(std::move(*sd));
      out.cache_hit = true;
    } else {
      auto fresh = std::make_shared<const SpectralData>(spectral_decompose(b.model, want, {seed}));
      save_spectral_cache(path, *fresh);
      lo.spectral = fresh;
    }
  }
  out.lab = make_lab(std::move(b), lo);
  return out;
}

// ------------------------------------------------------------ running

struct TaskResult {
  std::string model;
  std::string check;  // entry name
  std::string check_id;
  std::string status;  // pass, fail, error
  bool gated = true;
  bool cached = false;
  double min_margin = std::numeric_limits<double>::quiet_NaN();
  double allowed = std::numeric_limits<double>::quiet_NaN();
  std::string error;
  ErrorKind error_kind = ErrorKind::invalid_argument;
  double seconds = 0.0;
  std::filesystem::path report_path;
};

struct CampaignResult {
  std::vector<TaskResult> tasks;
  int exit_code = 0;
  double seconds = 0.0;
};

inline std::string task_hash(const CampaignConfig& cfg, const ModelEntry& m, const CheckEntry& c) {
  Json key = {{"schema", kReportSchemaVersion},     {"model", m.source}, {"check", c.source},
              {"seed", cfg.seed},                   {"tol_scale", cfg.tol_scale}};
  std::string s = key.dump();
  return hex64(fnv1a(s.data(), s.size()));
}

inline std::filesystem::path report_path(const std::filesystem::path& out, const std::string& model,
                                         const std::string& check) {
  return out / "reports" / (safe_name(model) + "__" + safe_name(check) + ".json");
}

inline std::string seconds_text(double s) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(s < 10 ? 2 : 1) << s;
  return os.str();
}

inline std::string report_text(const MarginReport& r) { return to_json(r).dump(2) + "\n"; }

// Minimal bounded pool: jobs are indices, results land in caller-owned slots.
template <class F>
void run_pool(size_t count, int workers, F&& fn) {
  if (workers <= 0) workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  workers = static_cast<int>(std::min<size_t>(static_cast<size_t>(workers), std::max<size_t>(count, 1)));
  std::atomic<size_t> next{0};
  auto body = [&] {
    for (size_t i; (i = next++) < count;) fn(i);
  };
  if (workers == 1) {
    body();
    return;
  }
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) pool.emplace_back(body);
  for (auto& t : pool) t.join();
}

struct RunOptions {
  bool resume = true;
  bool plots = true;
  std::ostream* log = nullptr;
};

inline CampaignResult run_campaign(const CampaignConfig& cfg, const RunOptions& ro = {}) {
  namespace fs = std::filesystem;
  using clock = std::chrono::steady_clock;
  auto t0 = clock::now();
  std::mutex log_mu;
  auto log = [&](const std::string& s) {
    if (!ro.log) return;
    std::lock_guard<std::mutex> lk(log_mu);
    *ro.log << s << std::endl;
  };
  fs::create_directories(cfg.output_dir / "reports");

  struct Task {
    const ModelEntry* model;
    const CheckEntry* check;
    std::string hash;
  };
  std::vector<Task> tasks;
  for (const auto& c : cfg.checks)
    for (const auto& mn : c.models) {
      const auto& m = cfg.model(mn);
      tasks.push_back({&m, &c, task_hash(cfg, m, c)});
    }

  CampaignResult res;
  res.tasks.resize(tasks.size());
  std::vector<char> pending(tasks.size(), 1);
  for (size_t i = 0; i < tasks.size(); ++i) {
    auto& tr = res.tasks[i];
    tr.model = tasks[i].model->spec.id();
    tr.check = tasks[i].check->name;
    tr.check_id = tasks[i].check->check;
    tr.report_path = report_path(cfg.output_dir, tr.model, tr.check);
    if (!ro.resume || !fs::exists(tr.report_path)) continue;
    try {
      std::ifstream is(tr.report_path);
      Json j = Json::parse(is);
      if (j.value("schema_version", -1) != kReportSchemaVersion) continue;
      if (!j.contains("metadata") || j["metadata"].value("task_hash", "") != tasks[i].hash) continue;
      MarginReport r = report_from_json(j);
      tr.status = r.verdict();
      tr.gated = r.gated;
      tr.min_margin = r.tightest().min_margin;
      tr.allowed = r.tightest().allowed();
      tr.cached = true;
      pending[i] = 0;
      log("cached  " + tr.model + " " + tr.check);
    } catch (const std::exception&) {
      // unreadable report: recompute
    }
  }

  // Labs are built once per model, lazily, by whichever task needs one first.
  struct LabSlot {
    std::once_flag once;
    std::optional<Lab> lab;
    std::string error;
    ErrorKind kind = ErrorKind::invalid_argument;
  };
  std::map<std::string, std::unique_ptr<LabSlot>> labs;
  for (size_t i = 0; i < tasks.size(); ++i)
    if (pending[i] && !labs.count(res.tasks[i].model)) labs[res.tasks[i].model] = std::make_unique<LabSlot>();

  std::vector<size_t> todo;
  for (size_t i = 0; i < tasks.size(); ++i)
    if (pending[i]) todo.push_back(i);

  run_pool(todo.size(), cfg.workers, [&](size_t k) {
    size_t i = todo[k];
    auto& tr = res.tasks[i];
    const auto& task = tasks[i];
    auto& slot = *labs[tr.model];
    std::call_once(slot.once, [&] {
      auto tb = clock::now();
      try {
        auto lb = build_lab(*task.model, cfg.cache_dir, cfg.seed);
        slot.lab = std::move(lb.lab);
        log("built   " + tr.model + (lb.cache_hit ? " (spectral cache hit)" : "") + " in " +
            seconds_text(std::chrono::duration<double>(clock::now() - tb).count()) + " s");
      } catch (const Error& e) {
        slot.error = e.what();
        slot.kind = e.kind();
      } catch (const std::exception& e) {
        slot.error = e.what();
      }
    });
    auto ts = clock::now();
    try {
      if (!slot.lab) throw Error(slot.kind, "model build failed: " + slot.error);
      MarginReport r = task.check->run(*slot.lab);
      if (task.check->gated) r.gated = *task.check->gated;
      r.metadata["task_hash"] = task.hash;
      r.metadata["check_name"] = task.check->name;
      r.metadata["seed"] = cfg.seed;
      r.metadata["tol_scale"] = cfg.tol_scale;
      std::string text = report_text(r);
      write_file_atomic(tr.report_path, text);
      // plots come from the stored form, so `report` re-emits identical files
      if (ro.plots)
        emit_all_plots(report_from_json(Json::parse(text)), cfg.output_dir / "plots",
                       safe_name(tr.model) + "__" + safe_name(tr.check));
      tr.status = r.verdict();
      tr.gated = r.gated;
      tr.min_margin = r.tightest().min_margin;
      tr.allowed = r.tightest().allowed();
    } catch (const Error& e) {
      tr.status = "error";
      tr.error = e.what();
      tr.error_kind = e.kind();
    } catch (const std::exception& e) {
      tr.status = "error";
      tr.error = e.what();
    }
    tr.seconds = std::chrono::duration<double>(clock::now() - ts).count();
    log(tr.status + std::string(8 - std::min<size_t>(7, tr.status.size()), ' ') + tr.model + " " + tr.check + " (" +
        seconds_text(tr.seconds) + " s)" + (tr.error.empty() ? "" : ": " + tr.error));
  });
  res.seconds = std::chrono::duration<double>(clock::now() - t0).count();

  // summary: deterministic content only; timings go to a separate file
  Json summary = {{"schema_version", kReportSchemaVersion}, {"seed", cfg.seed}, {"tol_scale", cfg.tol_scale}};
  Json rows = Json::array(), timing = Json::array();
  std::ostringstream csv;
  csv << "model,check,check_id,verdict,gated,min_margin,allowed\n";  // tightest level of each report
  bool config_error = false, failed = false;
  for (const auto& t : res.tasks) {
    Json row = {{"model", t.model},  {"check", t.check},         {"check_id", t.check_id},
                {"verdict", t.status}, {"gated", t.gated},       {"min_margin", json_number(t.min_margin)},
                {"allowed", json_number(t.allowed)}};
    if (!t.error.empty()) row["error"] = t.error;
    rows.push_back(row);
    timing.push_back({{"model", t.model}, {"check", t.check}, {"seconds", t.seconds}, {"cached", t.cached}});
    csv << t.model << ',' << t.check << ',' << t.check_id << ',' << t.status << ',' << (t.gated ? 1 : 0) << ','
        << format_double(t.min_margin) << ',' << format_double(t.allowed) << '\n';
    if (t.status == "error") {
      bool cfg_kind = t.error_kind == ErrorKind::config || t.error_kind == ErrorKind::not_applicable ||
                      t.error_kind == ErrorKind::unsupported;
      (cfg_kind ? config_error : failed) = true;
    }
    if (t.status == "fail" && t.gated) failed = true;
  }
  summary["results"] = rows;
  summary["all_pass"] = !failed && !config_error;
  write_file_atomic(cfg.output_dir / "summary.json", summary.dump(2) + "\n");
  write_file_atomic(cfg.output_dir / "summary.csv", csv.str());
  write_file_atomic(cfg.output_dir / "timing.json",
                    Json{{"total_seconds", res.seconds}, {"tasks", timing}}.dump(2) + "\n");
  res.exit_code = config_error ? 2 : failed ? 1 : 0;
  return res;
}

}  // namespace heatlab
