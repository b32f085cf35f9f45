#ifndef SHELAB_CONFIG_HPP
#define SHELAB_CONFIG_HPP

// Key-value configuration files for SimConfig.
//
//   # comment
//   kappa = 1
//   sigma.kind = linear
//   snapshot_times = 0.5, 1
//
// Keys are the SimConfig field names, nested fields use dotted paths.
// Unknown keys are an error. Lines of the form "# config: key = value" (as
// written into CSV metadata headers) are read as ordinary entries, so every
// output file can be fed back as a configuration.

#include <array>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "shelab/model.hpp"

namespace shelab {

inline constexpr std::array<std::string_view, 19> kConfigKeys = {
    "kappa",       "sigma.kind",  "sigma.lambda", "sigma.c1",       "sigma.c2",
    "sigma.lip",   "sigma.low",   "init.kind",    "init.K",         "init.height",
    "x_max",       "nx",          "dt",           "t_end",          "snapshot_times",
    "boundary",    "seed",        "clip_negative", "m_guard"};

using ConfigEntries = std::map<std::string, std::string>;

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline bool known_key(std::string_view k) {
  for (auto key : kConfigKeys)
    if (key == k) return true;
  return false;
}

inline double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw ConfigError("key '" + key + "': cannot parse number '" + v + "'");
  return out;
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw ConfigError("key '" + key + "': cannot parse integer '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("key '" + key + "': expected true/false, got '" + v + "'");
}

inline std::vector<double> parse_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_double(key, item));
  }
  return out;
}

}  // namespace detail

/// Shortest round-trip decimal representation.
inline std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [p, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), p);
}

/// Parses "key = value" lines. Duplicate keys: last one wins.
inline ConfigEntries parse_config_text(std::string_view text) {
  ConfigEntries entries;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  constexpr std::string_view embedded = "# config:";
  while (std::getline(in, line)) {
    ++lineno;
    std::string body = detail::trim(line);
    if (body.rfind(embedded, 0) == 0) {
      body = detail::trim(std::string_view(body).substr(embedded.size()));
    } else if (body.empty() || body.front() == '#') {
      continue;
    } else if (body.find('=') == std::string::npos && body.find(',') != std::string::npos) {
      continue;  // CSV data row of an output file
    }
    const auto eq = body.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    std::string key = detail::trim(std::string_view(body).substr(0, eq));
    std::string value = detail::trim(std::string_view(body).substr(eq + 1));
    if (!detail::known_key(key)) throw ConfigError("unknown config key '" + key + "'");
    entries[key] = value;
  }
  return entries;
}

/// Applies "key=value" overrides (dotted key paths).
inline void apply_overrides(ConfigEntries& entries, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + o + "' is not key=value");
    std::string key = detail::trim(std::string_view(o).substr(0, eq));
    if (!detail::known_key(key)) throw ConfigError("unknown config key '" + key + "'");
    entries[key] = detail::trim(std::string_view(o).substr(eq + 1));
  }
}

/// Builds and validates a SimConfig. Missing keys keep their defaults; for
/// sigma the declared lip/low default to the family's envelope constants.
inline SimConfig config_from_entries(const ConfigEntries& e) {
  using namespace detail;
  SimConfig c;
  auto get = [&](std::string_view k) -> const std::string* {
    auto it = e.find(std::string(k));
    return it == e.end() ? nullptr : &it->second;
  };
  auto num = [&](std::string_view k, double& out) {
    if (auto* v = get(k)) out = parse_double(std::string(k), *v);
  };

  num("kappa", c.kappa);
  if (auto* v = get("sigma.kind")) c.sigma.kind = sigma_kind_from_string(*v);
  if (c.sigma.kind == SigmaKind::linear) {
    double lambda = 1.0;
    num("sigma.lambda", lambda);
    c.sigma = SigmaSpec::linear(lambda);
  } else {
    double c1 = 1.0, c2 = 0.0;
    num("sigma.c1", c1);
    num("sigma.c2", c2);
    c.sigma = SigmaSpec::modulated(c1, c2);
  }
  num("sigma.lip", c.sigma.lip);
  num("sigma.low", c.sigma.low);

  if (auto* v = get("init.kind")) c.init.kind = init_kind_from_string(*v);
  num("init.K", c.init.K);
  num("init.height", c.init.height);
  num("x_max", c.x_max);
  if (auto* v = get("nx")) c.nx = static_cast<std::size_t>(parse_u64("nx", *v));
  num("dt", c.dt);
  num("t_end", c.t_end);
  if (auto* v = get("snapshot_times")) c.snapshot_times = parse_list("snapshot_times", *v);
  else c.snapshot_times = {c.t_end};
  if (auto* v = get("boundary")) c.boundary = *v;
  if (auto* v = get("seed")) c.seed = parse_u64("seed", *v);
  if (auto* v = get("clip_negative")) c.clip_negative = parse_bool("clip_negative", *v);
  num("m_guard", c.m_guard);

  c.validate();
  return c;
}

inline SimConfig parse_config(std::string_view text,
                              const std::vector<std::string>& overrides = {}) {
  auto entries = parse_config_text(text);
  apply_overrides(entries, overrides);
  return config_from_entries(entries);
}

inline SimConfig load_config(const std::string& path,
                             const std::vector<std::string>& overrides = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), overrides);
}

/// Canonical (key, value) list in kConfigKeys order.
inline std::vector<std::pair<std::string, std::string>> config_entries(const SimConfig& c) {
  std::string times;
  for (std::size_t i = 0; i < c.snapshot_times.size(); ++i) {
    if (i) times += ", ";
    times += format_double(c.snapshot_times[i]);
  }
  return {
      {"kappa", format_double(c.kappa)},
      {"sigma.kind", std::string(to_string(c.sigma.kind))},
      {"sigma.lambda", format_double(c.sigma.lambda)},
      {"sigma.c1", format_double(c.sigma.c1)},
      {"sigma.c2", format_double(c.sigma.c2)},
      {"sigma.lip", format_double(c.sigma.lip)},
      {"sigma.low", format_double(c.sigma.low)},
      {"init.kind", std::string(to_string(c.init.kind))},
      {"init.K", format_double(c.init.K)},
      {"init.height", format_double(c.init.height)},
      {"x_max", format_double(c.x_max)},
      {"nx", std::to_string(c.nx)},
      {"dt", format_double(c.dt)},
      {"t_end", format_double(c.t_end)},
      {"snapshot_times", times},
      {"boundary", c.boundary},
      {"seed", std::to_string(c.seed)},
      {"clip_negative", c.clip_negative ? "true" : "false"},
      {"m_guard", format_double(c.m_guard)},
  };
}

inline std::string serialize_config(const SimConfig& c) {
  std::string out;
  for (const auto& [k, v] : config_entries(c)) out += k + " = " + v + "\n";
  return out;
}

}  // namespace shelab

#endif  // SHELAB_CONFIG_HPP
