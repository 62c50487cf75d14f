#pragma once

// `scenario v1` files: a version line, then INI-style sections of
// `key = value` lines. Keys are addressed as `section.key`; repeated vehicle
// sections are written `[vehicle.0]`, `[vehicle.1]`, ... with vehicle 0 the
// platoon leader.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "platoon/comms.hpp"
#include "platoon/controller.hpp"
#include "platoon/core_types.hpp"
#include "platoon/gap_approximation.hpp"
#include "platoon/lane_map.hpp"
#include "platoon/lateral_control.hpp"
#include "platoon/sensors.hpp"

namespace platoon {

class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Flat `section.key -> value` view of a scenario file, in file order.
class KeyValues {
 public:
  void set(const std::string& key, std::string value) {
    if (!values_.contains(key)) order_.push_back(key);
    values_[key] = std::move(value);
  }
  bool contains(const std::string& key) const { return values_.contains(key); }
  const std::string* find(const std::string& key) const {
    auto it = values_.find(key);
    return it == values_.end() ? nullptr : &it->second;
  }
  const std::vector<std::string>& keys() const { return order_; }

 private:
  std::map<std::string, std::string> values_;
  std::vector<std::string> order_;
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline double parse_double(const std::string& key, const std::string& text) {
  double v = 0.0;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc{} || ptr != end || !std::isfinite(v)) {
    throw ScenarioError(key + ": expected a number, got '" + text + "'");
  }
  return v;
}

inline std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(text);
  while (std::getline(in, cur, sep)) {
    cur = trim(cur);
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

}  // namespace detail

inline KeyValues parse_key_values(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  bool have_header = false;
  std::string section;
  KeyValues kv;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(line_no) + ": ";
    if (!have_header) {
      if (line != "scenario v1") {
        throw ScenarioError(where + "expected header 'scenario v1'");
      }
      have_header = true;
      continue;
    }
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) {
        throw ScenarioError(where + "malformed section header");
      }
      section = detail::trim(std::string_view(line).substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ScenarioError(where + "expected 'key = value'");
    }
    const std::string key = detail::trim(std::string_view(line).substr(0, eq));
    if (key.empty()) throw ScenarioError(where + "empty key");
    if (section.empty()) throw ScenarioError(where + "key outside a section");
    const std::string full = section + "." + key;
    if (kv.contains(full)) throw ScenarioError(where + "duplicate key " + full);
    kv.set(full, detail::trim(std::string_view(line).substr(eq + 1)));
  }
  if (!have_header) throw ScenarioError("empty scenario file");
  return kv;
}

struct SpeedProfile {
  std::vector<std::pair<double, double>> points;  // (t [s], v [m/s])

  double speed_at(double t) const {
    if (points.empty()) return 0.0;
    if (t <= points.front().first) return points.front().second;
    for (std::size_t i = 1; i < points.size(); ++i) {
      const auto [t0, v0] = points[i - 1];
      const auto [t1, v1] = points[i];
      if (t < t1) return v0 + (v1 - v0) * (t - t0) / (t1 - t0);
    }
    return points.back().second;
  }

  /// Slope of the segment covering [t, t + dt).
  double accel_at(double t) const {
    for (std::size_t i = 1; i < points.size(); ++i) {
      const auto [t0, v0] = points[i - 1];
      const auto [t1, v1] = points[i];
      if (t >= t0 - 1e-12 && t < t1 - 1e-12) return (v1 - v0) / (t1 - t0);
    }
    return 0.0;
  }
};

struct VehicleSpec {
  VehicleParams params;
  double antenna_offset = 0.0;  // antenna to front bumper, forward [m]
  double initial_speed = 0.0;
  double start_arc = 0.0;       // resolved arc position of the antenna
};

struct Scenario {
  std::string name = "unnamed";
  double duration = 0.0;
  double dt = kBaseStep;
  std::uint64_t seed = 1;
  double steady_start = 10.0;

  LaneMap map = make_oval(4.0, 2.0, 0.15);
  std::string map_source = "oval";

  std::vector<VehicleSpec> vehicles;
  SpeedProfile leader_profile;

  ControllerConfig controller;
  GapConfig gap;
  bool leader_prediction = false;  // advance stale leader poses by v * age
  SwitchingConfig switching;
  RangeSensorConfig range;
  double gps_noise = 0.0;
  ImuNoise imu;
  ChannelConfig channel;
  PursuitConfig lateral;
};

namespace detail {

class Reader {
 public:
  explicit Reader(const KeyValues& kv) : kv_(kv) {}

  double number(const std::string& key, double fallback) {
    const std::string* v = take(key);
    return v ? parse_double(key, *v) : fallback;
  }
  std::optional<double> optional_number(const std::string& key) {
    const std::string* v = take(key);
    if (!v) return std::nullopt;
    return parse_double(key, *v);
  }
  std::uint64_t integer(const std::string& key, std::uint64_t fallback) {
    const std::string* v = take(key);
    if (!v) return fallback;
    std::uint64_t out = 0;
    const char* end = v->data() + v->size();
    auto [ptr, ec] = std::from_chars(v->data(), end, out);
    if (ec != std::errc{} || ptr != end) {
      throw ScenarioError(key + ": expected a non-negative integer");
    }
    return out;
  }
  bool boolean(const std::string& key, bool fallback) {
    const std::string* v = take(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "on" || *v == "1") return true;
    if (*v == "false" || *v == "off" || *v == "0") return false;
    throw ScenarioError(key + ": expected true/false");
  }
  std::string text(const std::string& key, const std::string& fallback) {
    const std::string* v = take(key);
    return v ? *v : fallback;
  }
  bool has(const std::string& key) const { return kv_.contains(key); }

  void reject_unknown() const {
    for (const auto& k : kv_.keys()) {
      if (std::find(used_.begin(), used_.end(), k) == used_.end()) {
        throw ScenarioError("unknown key " + k);
      }
    }
  }

 private:
  const std::string* take(const std::string& key) {
    used_.push_back(key);
    return kv_.find(key);
  }

  const KeyValues& kv_;
  std::vector<std::string> used_;
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ScenarioError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace detail

/// Builds and validates a scenario. Relative map paths resolve against
/// `base_dir`.
inline Scenario build_scenario(const KeyValues& kv,
                               const std::filesystem::path& base_dir = {}) {
  detail::Reader r(kv);
  Scenario sc;
  sc.name = r.text("simulation.name", sc.name);
  sc.duration = r.number("simulation.duration", 0.0);
  sc.dt = r.number("simulation.dt", kBaseStep);
  sc.seed = r.integer("simulation.seed", 1);
  sc.steady_start = r.number("simulation.steady_window_start", 10.0);
  if (!(sc.duration >= 0.0)) throw ScenarioError("duration must be >= 0");
  if (!(sc.dt > 0.0)) throw ScenarioError("dt must be > 0");

  if (r.has("map.file")) {
    const std::filesystem::path p = base_dir / r.text("map.file", "");
    try {
      sc.map = load_map(detail::read_file(p));
    } catch (const MapError& e) {
      throw ScenarioError(p.string() + ": " + e.what());
    }
    sc.map_source = p.string();
  } else {
    const double straight = r.number("map.oval_straight", 4.0);
    const double radius = r.number("map.oval_radius", 2.0);
    const double spacing = r.number("map.oval_spacing", 0.15);
    sc.map = make_oval(straight, radius, spacing);
    sc.map_source = "oval";
  }

  ControllerConfig& c = sc.controller;
  c.kp = r.number("controller.kp", c.kp);
  c.kd = r.number("controller.kd", c.kd);
  c.h = r.number("controller.h", c.h);
  c.l0 = r.number("controller.l0", c.l0);
  c.u_min = r.number("controller.u_min", c.u_min);
  c.u_max = r.number("controller.u_max", c.u_max);
  c.ff_enabled = r.boolean("controller.ff_enabled", c.ff_enabled);
  c.derivative_filter = r.number("controller.derivative_filter",
                                 c.derivative_filter);
  c.ff_hold = r.number("controller.ff_hold", c.ff_hold);

  // Constant leader speed, also the default initial speed of every vehicle.
  const std::optional<double> cruise = r.optional_number("leader.speed");
  if (cruise && !(*cruise >= 0.0)) {
    throw ScenarioError("leader.speed must be >= 0");
  }
  if (cruise && r.has("leader.profile")) {
    throw ScenarioError("give leader.speed or leader.profile, not both");
  }

  for (int i = 0;; ++i) {
    const std::string sec = "vehicle." + std::to_string(i) + ".";
    if (!r.has(sec + "start_arc") && !r.has(sec + "start_gap") &&
        !r.has(sec + "initial_speed") && !r.has(sec + "body_length")) {
      break;
    }
    VehicleSpec v;
    v.params.tau = r.number(sec + "tau", v.params.tau);
    v.params.tau_d = r.number(sec + "tau_d", v.params.tau_d);
    v.params.body_length = r.number(sec + "body_length", v.params.body_length);
    v.antenna_offset = r.number(sec + "antenna_offset", 0.0);
    v.initial_speed = r.number(sec + "initial_speed", cruise.value_or(0.0));
    if (!(v.initial_speed >= 0.0)) {
      throw ScenarioError(sec + "initial_speed must be >= 0");
    }
    if (i == 0) {
      v.start_arc = r.number(sec + "start_arc", 0.0);
    } else {
      const VehicleSpec& pred = sc.vehicles.back();
      const std::optional<double> arc = r.optional_number(sec + "start_arc");
      const std::optional<double> gap = r.optional_number(sec + "start_gap");
      if (arc && gap) {
        throw ScenarioError(sec + "give start_arc or start_gap, not both");
      }
      if (arc) {
        v.start_arc = *arc;
      } else {
        // Bumper gap: from our front bumper to the predecessor's rear one.
        const double g = gap.value_or(sc.controller.h * v.initial_speed +
                                      sc.controller.l0);
        v.start_arc = pred.start_arc + pred.antenna_offset -
                      pred.params.body_length - g - v.antenna_offset;
      }
      const double lead =
          (pred.start_arc + pred.antenna_offset - pred.params.body_length) -
          (v.start_arc + v.antenna_offset);
      if (!(lead > 0.0)) {
        throw ScenarioError(sec + "must start behind its predecessor");
      }
    }
    sc.vehicles.push_back(v);
  }
  if (sc.vehicles.empty()) throw ScenarioError("scenario has no vehicles");

  const std::string profile = r.text("leader.profile", "");
  for (const std::string& item : detail::split(profile, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) {
      throw ScenarioError("leader.profile: expected t:v pairs");
    }
    const double t = detail::parse_double("leader.profile",
                                          detail::trim(item.substr(0, colon)));
    const double v = detail::parse_double("leader.profile",
                                          detail::trim(item.substr(colon + 1)));
    if (v < 0.0) throw ScenarioError("leader.profile: negative speed");
    if (!sc.leader_profile.points.empty() &&
        !(t > sc.leader_profile.points.back().first)) {
      throw ScenarioError("leader.profile: times must increase");
    }
    sc.leader_profile.points.emplace_back(t, v);
  }
  if (sc.leader_profile.points.empty()) {
    sc.leader_profile.points.emplace_back(
        0.0, cruise.value_or(sc.vehicles.front().initial_speed));
  }

  GapConfig& g = sc.gap;
  g.margin = r.number("gap.margin", g.margin);
  g.min_fit_points = static_cast<std::size_t>(
      r.integer("gap.min_fit_points", g.min_fit_points));
  g.margin_growth = r.number("gap.margin_growth", g.margin_growth);
  g.max_margin_growths = static_cast<int>(
      r.integer("gap.max_margin_growths",
                static_cast<std::uint64_t>(g.max_margin_growths)));
  g.max_staleness = r.number("gap.max_staleness", g.max_staleness);
  sc.leader_prediction = r.boolean("gap.leader_prediction", false);
  if (!(g.margin > 0.0) || !(g.margin_growth >= 1.0)) {
    throw ScenarioError("gap.margin must be > 0 and margin_growth >= 1");
  }

  SwitchingConfig& sw = sc.switching;
  sw.use_range = r.boolean("switching.use_range", sw.use_range);
  sw.use_approximation =
      r.boolean("switching.use_approximation", sw.use_approximation);
  sw.hold_timeout = r.number("switching.hold_timeout", sw.hold_timeout);
  if (const std::string band = r.text("switching.band", ""); !band.empty()) {
    const auto parts = detail::split(band, ' ');
    if (parts.size() != 2) {
      throw ScenarioError("switching.band: expected 'lo hi'");
    }
    const double lo = detail::parse_double("switching.band", parts[0]);
    const double hi = detail::parse_double("switching.band", parts[1]);
    if (!(lo < hi)) throw ScenarioError("switching.band: need lo < hi");
    sw.validity_band = std::make_pair(lo, hi);
  }

  sc.range.fov_half_angle =
      r.number("range_sensor.fov_deg", 15.0) * kPi / 180.0;
  sc.range.max_range = r.number("range_sensor.max_range", sc.range.max_range);
  sc.range.noise_std = r.number("range_sensor.noise_std", sc.range.noise_std);
  sc.gps_noise = r.number("gps.noise_std", 0.0);
  sc.imu.yaw_rate_std = r.number("imu.yaw_rate_std", sc.imu.yaw_rate_std);
  sc.imu.speed_std = r.number("imu.speed_std", sc.imu.speed_std);

  sc.channel.rate = r.number("channel.rate", sc.channel.rate);
  sc.channel.loss_prob = r.number("channel.loss_prob", sc.channel.loss_prob);
  sc.channel.latency = r.number("channel.latency", sc.channel.latency);
  sc.channel.rng_seed = r.integer("channel.seed", 0);

  sc.lateral.lookahead = r.number("lateral.lookahead", sc.lateral.lookahead);
  sc.lateral.understeer_bias =
      r.number("lateral.understeer_bias", sc.lateral.understeer_bias);

  r.reject_unknown();

  try {
    for (const auto& v : sc.vehicles) v.params.validate(sc.dt);
    sc.controller.validate();
    sc.lateral.validate();
    if (!(sc.channel.loss_prob >= 0.0 && sc.channel.loss_prob <= 1.0)) {
      throw InvalidArgument("channel.loss_prob must lie in [0, 1]");
    }
    ticks_for(1.0 / sc.channel.rate, sc.dt);
    ticks_for(sc.channel.latency, sc.dt);
  } catch (const InvalidArgument& e) {
    throw ScenarioError(e.what());
  }
  return sc;
}

inline KeyValues load_key_values(const std::filesystem::path& path) {
  return parse_key_values(detail::read_file(path));
}

inline Scenario load_scenario(const std::filesystem::path& path) {
  return build_scenario(load_key_values(path), path.parent_path());
}

}  // namespace platoon
