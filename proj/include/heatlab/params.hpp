#pragma once

#include "heatlab/report.hpp"

#include <set>

namespace heatlab {

// Typed view of a JSON object from a config file. Every error names the full
// field path; finish() rejects keys nobody asked for.
class Params {
 public:
  Params(const Json& j, std::string path) : path_(std::move(path)) {
    if (j.is_null()) {
      j_ = Json::object();
    } else {
      require(j.is_object(), ErrorKind::config, path_ + ": expected a mapping");
      j_ = j;
    }
  }

  const std::string& path() const { return path_; }
  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  bool has(const std::string& key) const { return j_.contains(key); }

  const Json* raw(const std::string& key) {
    used_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() || it->is_null() ? nullptr : &*it;
  }

  double num(const std::string& key, double def) {
    auto* v = raw(key);
    return v ? as_number(*v, field(key)) : def;
  }
  std::optional<double> opt_num(const std::string& key) {
    auto* v = raw(key);
    if (!v) return std::nullopt;
    return as_number(*v, field(key));
  }
  double positive(const std::string& key, double def) {
    double v = num(key, def);
    require(v > 0, ErrorKind::config, field(key) + ": must be positive");
    return v;
  }
  double nonnegative(const std::string& key, double def) {
    double v = num(key, def);
    require(v >= 0, ErrorKind::config, field(key) + ": must be nonnegative");
    return v;
  }
  long long integer(const std::string& key, long long def) {
    auto* v = raw(key);
    if (!v) return def;
    require(v->is_number_integer(), ErrorKind::config, field(key) + ": expected an integer");
    return v->get<long long>();
  }
  int count(const std::string& key, int def, int min = 1) {
    long long v = integer(key, def);
    require(v >= min && v <= 1000000000, ErrorKind::config,
            field(key) + ": must be an integer >= " + std::to_string(min));
    return static_cast<int>(v);
  }
  bool flag(const std::string& key, bool def) {
    auto* v = raw(key);
    if (!v) return def;
    require(v->is_boolean(), ErrorKind::config, field(key) + ": expected true or false");
    return v->get<bool>();
  }
  std::string str(const std::string& key, const std::string& def) {
    auto* v = raw(key);
    if (!v) return def;
    require(v->is_string(), ErrorKind::config, field(key) + ": expected a string");
    return v->get<std::string>();
  }
  std::string choice(const std::string& key, const std::string& def, const std::vector<std::string>& allowed) {
    std::string s = str(key, def);
    if (std::find(allowed.begin(), allowed.end(), s) == allowed.end()) {
      std::string list;
      for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
      throw Error(ErrorKind::config, field(key) + ": '" + s + "' is not one of " + list);
    }
    return s;
  }
  std::vector<double> nums(const std::string& key, std::vector<double> def) {
    auto* v = raw(key);
    if (!v) return def;
    require(v->is_array() && !v->empty(), ErrorKind::config, field(key) + ": expected a non-empty list of numbers");
    std::vector<double> out;
    for (size_t i = 0; i < v->size(); ++i) out.push_back(as_number((*v)[i], field(key) + "[" + std::to_string(i) + "]"));
    return out;
  }
  std::vector<double> positives(const std::string& key, std::vector<double> def) {
    auto out = nums(key, std::move(def));
    for (size_t i = 0; i < out.size(); ++i)
      require(out[i] > 0, ErrorKind::config, field(key) + "[" + std::to_string(i) + "]: must be positive");
    return out;
  }
  std::vector<std::string> strs(const std::string& key, std::vector<std::string> def) {
    auto* v = raw(key);
    if (!v) return def;
    if (v->is_string()) return {v->get<std::string>()};
    require(v->is_array(), ErrorKind::config, field(key) + ": expected a list of strings");
    std::vector<std::string> out;
    for (size_t i = 0; i < v->size(); ++i) {
      require((*v)[i].is_string(), ErrorKind::config, field(key) + "[" + std::to_string(i) + "]: expected a string");
      out.push_back((*v)[i].get<std::string>());
    }
    return out;
  }
  Params child(const std::string& key) {
    auto* v = raw(key);
    return Params(v ? *v : Json(), field(key));
  }

  // {abs, rel, mesh_order}; all nonnegative.
  Tolerance tolerance(const std::string& key, Tolerance def) {
    if (!raw(key)) return def;
    Params t = child(key);
    Tolerance out;
    out.abs = t.nonnegative("abs", def.abs);
    out.rel = t.nonnegative("rel", def.rel);
    out.mesh_order = t.count("mesh_order", def.mesh_order, 0);
    t.finish();
    return out;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!used_.count(k)) throw Error(ErrorKind::config, field(k) + ": unknown field");
  }

 private:
  static double as_number(const Json& v, const std::string& where) {
    require(v.is_number(), ErrorKind::config, where + ": expected a number");
    double d = v.get<double>();
    require(std::isfinite(d), ErrorKind::config, where + ": must be finite");
    return d;
  }

  Json j_;
  std::string path_;
  std::set<std::string> used_;
};

}  // namespace heatlab
