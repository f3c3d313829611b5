#pragma once

#include "heatlab/report.hpp"

#include <yaml-cpp/yaml.h>

namespace heatlab {

// YAML node -> JSON value. Quoted scalars stay strings; plain scalars are
// tried as integer, float, bool and null in that order.
inline Json yaml_to_json(const YAML::Node& n) {
  switch (n.Type()) {
    case YAML::NodeType::Null:
    case YAML::NodeType::Undefined:
      return nullptr;
    case YAML::NodeType::Sequence: {
      Json a = Json::array();
      for (const auto& e : n) a.push_back(yaml_to_json(e));
      return a;
    }
    case YAML::NodeType::Map: {
      Json o = Json::object();
      for (const auto& kv : n) o[kv.first.as<std::string>()] = yaml_to_json(kv.second);
      return o;
    }
    case YAML::NodeType::Scalar: {
      const std::string& s = n.Scalar();
      if (n.Tag() == "!") return s;  // quoted
      long long i;
      if (YAML::convert<long long>::decode(n, i) && s.find_first_of(".eE") == std::string::npos) return i;
      double d;
      if (YAML::convert<double>::decode(n, d)) return d;
      bool b;
      if (YAML::convert<bool>::decode(n, b)) return b;
      if (s == "~" || s == "null" || s == "Null" || s == "NULL") return nullptr;
      return s;
    }
  }
  return nullptr;
}

inline Json parse_yaml_text(const std::string& text, const std::string& where) {
  try {
    return yaml_to_json(YAML::Load(text));
  } catch (const YAML::Exception& e) {
    throw Error(ErrorKind::config, where + ": " + e.what());
  }
}

// .json files are parsed as JSON, anything else as YAML (a superset anyway).
inline Json load_config_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  require(static_cast<bool>(is), ErrorKind::config, path.string() + ": cannot open");
  std::stringstream ss;
  ss << is.rdbuf();
  if (path.extension() == ".json") {
    try {
      return Json::parse(ss.str());
    } catch (const Json::exception& e) {
      throw Error(ErrorKind::config, path.string() + ": " + e.what());
    }
  }
  return parse_yaml_text(ss.str(), path.string());
}

}  // namespace heatlab
