#pragma once

#include "heatlab/core.hpp"

#include <json.hpp>

#include <map>
#include <sstream>

namespace heatlab {

inline constexpr int kReportSchemaVersion = 1;

using Json = nlohmann::json;

inline Json json_number(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

inline double number_from_json(const Json& j) {
  if (j.is_number()) return j.get<double>();
  std::string s = j.get<std::string>();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  return std::numeric_limits<double>::quiet_NaN();
}

struct Sample {
  std::vector<std::pair<std::string, double>> params;
  double lhs = 0.0;
  double rhs = 0.0;
  double margin = 0.0;

  double param(const std::string& key, double fallback = std::numeric_limits<double>::quiet_NaN()) const {
    for (const auto& [k, v] : params)
      if (k == key) return v;
    return fallback;
  }
};

struct MarginReport {
  std::string check_id;
  std::string model_id;
  std::vector<Sample> samples;
  double min_margin = std::numeric_limits<double>::infinity();
  double tol_abs = 0.0;
  double tol_rel = 0.0;
  double scale = 0.0;
  bool pass = false;
  bool gated = true;
  Json metadata = Json::object();
  std::vector<MarginReport> parts;

  MarginReport() = default;
  MarginReport(std::string check, std::string model) : check_id(std::move(check)), model_id(std::move(model)) {}

  Sample& add(std::vector<std::pair<std::string, double>> params, double lhs, double rhs) {
    samples.push_back({std::move(params), lhs, rhs, rhs - lhs});
    return samples.back();
  }

  double allowed() const { return tol_abs + tol_rel * scale; }

  // Computes min_margin and the verdict. `sc` is the magnitude the relative
  // tolerance refers to; mesh size h feeds the mesh-order factor.
  MarginReport& finalize(const Tolerance& tol, double h, double sc) {
    tol_abs = tol.abs;
    tol_rel = tol.rel_at(h);
    scale = sc;
    min_margin = std::numeric_limits<double>::infinity();
    bool any_nan = false;
    for (const auto& s : samples) {
      if (std::isnan(s.margin)) any_nan = true;
      min_margin = std::min(min_margin, s.margin);
    }
    pass = !samples.empty() && !any_nan && min_margin >= -allowed();
    if (samples.empty()) metadata["note"] = "no samples evaluated";
    return *this;
  }

  bool passed() const {
    if (!gated) return true;
    bool ok = pass;
    for (const auto& p : parts) ok = ok && p.passed();
    return ok;
  }

  // Margins within tolerance at every level, gating ignored.
  bool holds() const {
    bool ok = pass;
    for (const auto& p : parts) ok = ok && p.holds();
    return ok;
  }

  // "pass" / "fail" for gated reports, "report" for diagnostics.
  std::string verdict() const { return gated ? (passed() ? "pass" : "fail") : "report"; }

  // The level with the least slack (min_margin + allowed), among gated levels
  // when the root is gated.
  const MarginReport& tightest() const {
    const MarginReport* best = this;
    auto visit = [&](auto&& self, const MarginReport& r) -> void {
      if ((r.gated || !gated) && !r.samples.empty() &&
          (best->samples.empty() || r.min_margin + r.allowed() < best->min_margin + best->allowed()))
        best = &r;
      for (const auto& p : r.parts) self(self, p);
    };
    visit(visit, *this);
    return *best;
  }

  const MarginReport* part(const std::string& id) const {
    for (const auto& p : parts)
      if (p.check_id == id) return &p;
    return nullptr;
  }

  const Sample* worst() const {
    const Sample* w = nullptr;
    for (const auto& s : samples)
      if (!w || s.margin < w->margin) w = &s;
    return w;
  }
};

inline Json to_json(const MarginReport& r) {
  Json j;
  j["schema_version"] = kReportSchemaVersion;
  j["check_id"] = r.check_id;
  j["model"] = r.model_id;
  j["min_margin"] = json_number(r.min_margin);
  j["tolerance"] = {{"abs", json_number(r.tol_abs)}, {"rel", json_number(r.tol_rel)}, {"scale", json_number(r.scale)}};
  j["verdict"] = r.verdict();
  j["gated"] = r.gated;
  j["holds"] = r.holds();
  j["metadata"] = r.metadata;
  Json samples = Json::array();
  for (const auto& s : r.samples) {
    Json p = Json::object();
    for (const auto& [k, v] : s.params) p[k] = json_number(v);
    samples.push_back({{"params", p}, {"lhs", json_number(s.lhs)}, {"rhs", json_number(s.rhs)},
                       {"margin", json_number(s.margin)}});
  }
  j["samples"] = samples;
  if (!r.parts.empty()) {
    Json parts = Json::array();
    for (const auto& p : r.parts) parts.push_back(to_json(p));
    j["parts"] = parts;
  }
  return j;
}

inline MarginReport report_from_json(const Json& j) {
  require(j.value("schema_version", 0) == kReportSchemaVersion, ErrorKind::io, "report schema version mismatch");
  MarginReport r(j.at("check_id").get<std::string>(), j.at("model").get<std::string>());
  r.min_margin = number_from_json(j.at("min_margin"));
  r.tol_abs = number_from_json(j.at("tolerance").at("abs"));
  r.tol_rel = number_from_json(j.at("tolerance").at("rel"));
  r.scale = number_from_json(j.at("tolerance").at("scale"));
  r.gated = j.value("gated", true);
  r.metadata = j.value("metadata", Json::object());
  for (const auto& s : j.at("samples")) {
    Sample smp;
    for (auto it = s.at("params").begin(); it != s.at("params").end(); ++it)
      smp.params.emplace_back(it.key(), number_from_json(it.value()));
    smp.lhs = number_from_json(s.at("lhs"));
    smp.rhs = number_from_json(s.at("rhs"));
    smp.margin = number_from_json(s.at("margin"));
    r.samples.push_back(std::move(smp));
  }
  if (j.contains("parts"))
    for (const auto& p : j.at("parts")) r.parts.push_back(report_from_json(p));
  // Stored verdict covers the parts; recompute this level's own flag.
  r.pass = !r.samples.empty() && r.min_margin >= -r.allowed();
  return r;
}

inline std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

// Flat CSV: one row per sample, parameter columns in first-seen order.
inline std::string to_csv(const MarginReport& r) {
  std::vector<std::string> cols;
  for (const auto& s : r.samples)
    for (const auto& [k, v] : s.params)
      if (std::find(cols.begin(), cols.end(), k) == cols.end()) cols.push_back(k);
  std::ostringstream os;
  for (const auto& c : cols) os << c << ',';
  os << "lhs,rhs,margin\n";
  for (const auto& s : r.samples) {
    for (const auto& c : cols) os << format_double(s.param(c)) << ',';
    os << format_double(s.lhs) << ',' << format_double(s.rhs) << ',' << format_double(s.margin) << '\n';
  }
  return os.str();
}

}  // namespace heatlab
