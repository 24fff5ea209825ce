/**
 * @file config.hpp
 * @brief Run configuration: a flat `key = value` document.
 *
 * One entry per line, `#` starts a comment. A value is parsed as JSON when
 * it is valid JSON (numbers, lists, quoted strings) and taken as a bare
 * word otherwise (`section = disk`). Keys outside the schema are rejected.
 * See docs/config_schema.md.
 */
#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "wgb/cross_section.hpp"
#include "wgb/effective1d.hpp"
#include "wgb/errors.hpp"
#include "wgb/geometry.hpp"

namespace wgb {

using json = nlohmann::json;

inline const std::set<std::string>& config_keys() {
  static const std::set<std::string> keys{
      "period", "epsilon", "c", "gamma",
      "k.samples", "k.modes", "tau.samples", "tau.modes", "alpha.samples", "alpha.modes",
      "section", "radius", "width", "height", "vertices", "h", "origin", "C_S",
      "N", "M", "theta_count", "n_max", "Ns", "tol", "gap_tol",
      "epsilons", "thetas", "mu_list", "gap_index", "gamma_list", "W.samples", "W.modes"};
  return keys;
}

/// Parsed key/value document with typed accessors.
class RunConfig {
 public:
  static RunConfig parse(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const std::string body = trim(line);
      if (body.empty()) continue;
      const auto eq = body.find('=');
      if (eq == std::string::npos) {
        throw ValidationError("config line " + std::to_string(lineno) + ": expected `key = value`");
      }
      const std::string key = trim(body.substr(0, eq));
      const std::string raw = trim(body.substr(eq + 1));
      if (!config_keys().count(key)) {
        throw ValidationError("config line " + std::to_string(lineno) + ": unknown key `" + key + "`");
      }
      if (raw.empty()) {
        throw ValidationError("config line " + std::to_string(lineno) + ": empty value for `" + key + "`");
      }
      if (cfg.values_.count(key)) {
        throw ValidationError("config line " + std::to_string(lineno) + ": duplicate key `" + key + "`");
      }
      json value = json::parse(raw, nullptr, false);
      if (value.is_discarded()) value = raw;
      cfg.values_[key] = std::move(value);
    }
    return cfg;
  }

  static RunConfig load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ValidationError("cannot read config file `" + path + "`");
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse(ss.str());
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  const json& at(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ValidationError("config: missing required key `" + key + "`");
    return it->second;
  }

  double number(const std::string& key) const {
    const auto& v = at(key);
    if (!v.is_number()) throw ValidationError("config: `" + key + "` must be a number");
    return v.get<double>();
  }

  double number(const std::string& key, double fallback) const {
    return has(key) ? number(key) : fallback;
  }

  int integer(const std::string& key, int fallback) const {
    if (!has(key)) return fallback;
    const auto& v = at(key);
    if (!v.is_number_integer()) throw ValidationError("config: `" + key + "` must be an integer");
    return v.get<int>();
  }

  std::string word(const std::string& key) const {
    const auto& v = at(key);
    if (!v.is_string()) throw ValidationError("config: `" + key + "` must be a word");
    return v.get<std::string>();
  }

  std::vector<double> numbers(const std::string& key) const {
    const auto& v = at(key);
    if (!v.is_array()) throw ValidationError("config: `" + key + "` must be a list of numbers");
    std::vector<double> out;
    for (const auto& x : v) {
      if (!x.is_number()) throw ValidationError("config: `" + key + "` must be a list of numbers");
      out.push_back(x.get<double>());
    }
    return out;
  }

  /// Canonical text (sorted keys, compact JSON values); input to the config hash.
  std::string canonical() const {
    std::string s;
    for (const auto& [k, v] : values_) s += k + "=" + v.dump() + "\n";
    return s;
  }

  const std::map<std::string, json>& values() const noexcept { return values_; }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  std::map<std::string, json> values_;
};

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Profile `name` from `name.samples` or `name.modes`; zero profile if neither is given.
inline PeriodicProfile profile_from_config(const RunConfig& cfg, const std::string& name,
                                           double period) {
  const bool s = cfg.has(name + ".samples");
  const bool m = cfg.has(name + ".modes");
  if (s && m) throw ValidationError("config: give either `" + name + ".samples` or `" + name + ".modes`");
  if (s) return PeriodicProfile::from_samples(period, cfg.numbers(name + ".samples"));
  if (!m) return PeriodicProfile::constant(period, 0.0);
  const auto& v = cfg.at(name + ".modes");
  if (!v.is_array()) throw ValidationError("config: `" + name + ".modes` must be a list of [m, re, im]");
  std::vector<FourierMode> modes;
  for (const auto& e : v) {
    if (!e.is_array() || e.size() < 2 || e.size() > 3 || !e[0].is_number_integer() ||
        !e[1].is_number() || (e.size() == 3 && !e[2].is_number())) {
      throw ValidationError("config: each entry of `" + name + ".modes` must be [m, re, im]");
    }
    modes.push_back({e[0].get<int>(), {e[1].get<double>(), e.size() == 3 ? e[2].get<double>() : 0.0}});
  }
  return PeriodicProfile::from_modes(period, modes);
}

inline WaveguideGeometry geometry_from_config(const RunConfig& cfg) {
  const double L = cfg.number("period");
  if (!(L > 0.0)) throw ValidationError("config: `period` must be > 0");
  GeometrySpec spec{profile_from_config(cfg, "k", L), profile_from_config(cfg, "tau", L),
                    profile_from_config(cfg, "alpha", L), cfg.number("epsilon", 0.1),
                    cfg.number("c"), cfg.number("gamma", 1.0)};
  return build_geometry(spec);
}

inline SectionMask section_from_config(const RunConfig& cfg, double h_override = 0.0) {
  const std::string kind = cfg.word("section");
  const double h = h_override > 0.0 ? h_override : cfg.number("h");
  std::optional<Eigen::Vector2d> origin;
  if (cfg.has("origin")) {
    const auto o = cfg.numbers("origin");
    if (o.size() != 2) throw ValidationError("config: `origin` must be [y1, y2]");
    origin = Eigen::Vector2d(o[0], o[1]);
  }
  if (kind == "disk") return rasterize_section(Disk{cfg.number("radius")}, h, origin);
  if (kind == "rectangle") {
    return rasterize_section(Rectangle{cfg.number("width"), cfg.number("height")}, h, origin);
  }
  if (kind == "polygon") {
    const auto& v = cfg.at("vertices");
    if (!v.is_array()) throw ValidationError("config: `vertices` must be a list of [y1, y2]");
    Polygon poly;
    for (const auto& p : v) {
      if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number()) {
        throw ValidationError("config: each vertex must be [y1, y2]");
      }
      poly.vertices.emplace_back(p[0].get<double>(), p[1].get<double>());
    }
    return rasterize_section(poly, h, origin);
  }
  throw ValidationError("config: `section` must be disk, rectangle or polygon, got `" + kind + "`");
}

/// Potential W for gap asymptotics from `W.samples` / `W.modes`, sampled on M points.
inline EffectivePotential test_potential_from_config(const RunConfig& cfg, std::size_t m) {
  const double L = cfg.number("period");
  const auto w = profile_from_config(cfg, "W", L);
  return EffectivePotential::from_samples(L, w.sample(m));
}

/// Uniform grid of `count` points on [0, pi/L], endpoints included.
inline std::vector<double> theta_grid(double period, int count) {
  if (count < 2) throw ValidationError("theta grid needs at least 2 points");
  std::vector<double> t(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) t[static_cast<std::size_t>(i)] = std::numbers::pi / period * i / (count - 1);
  t.back() = std::numbers::pi / period;
  return t;
}

}  // namespace wgb
