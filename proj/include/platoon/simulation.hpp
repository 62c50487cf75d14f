#pragma once

// Deterministic platoon simulation. Each tick runs in phases:
// sense -> communicate -> control -> integrate.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "platoon/comms.hpp"
#include "platoon/controller.hpp"
#include "platoon/dynamics.hpp"
#include "platoon/gap_approximation.hpp"
#include "platoon/lane_map.hpp"
#include "platoon/lateral_control.hpp"
#include "platoon/localization.hpp"
#include "platoon/scenario.hpp"
#include "platoon/sensors.hpp"

namespace platoon {

struct VehicleTrace {
  Pose2D true_pose;
  Pose2D ekf_pose;
  double v = 0.0;
  double u_cmd = 0.0;
};

/// Gap bookkeeping for a following vehicle (every vehicle but the leader).
struct FollowerTrace {
  std::optional<double> gap_range;   // valid range reading
  std::optional<double> gap_approx;  // background approximation
  std::optional<double> gap_used;
  GapSource source = GapSource::none;
  std::optional<double> e;
  std::optional<double> time_gap;  // (gap_used - l0) / v when v > 0.01
};

struct TraceRecord {
  std::int64_t tick = 0;
  double t = 0.0;
  std::vector<VehicleTrace> vehicles;
  std::vector<FollowerTrace> followers;  // followers[i] is vehicle i + 1
};

using Trace = std::vector<TraceRecord>;

struct FollowerSummary {
  std::size_t steady_samples = 0;
  double time_gap_mean = 0.0;
  double time_gap_std = 0.0;
  double max_abs_e = 0.0;  // steady window
  std::vector<SwitchEvent> switches;
  std::size_t approx_failures = 0;
  std::size_t cc_fallback_ticks = 0;
  std::size_t both_available = 0;
  double max_approx_range_diff = 0.0;  // over ticks with both available
  // Approximation against the true along-lane bumper gap, every tick it exists.
  std::size_t approx_samples = 0;
  double approx_error_max = 0.0;
  double approx_error_rms = 0.0;
};

struct Summary {
  std::string name;
  std::int64_t ticks = 0;
  double duration = 0.0;
  double steady_start = 0.0;
  std::vector<double> ekf_rms_error;  // per vehicle [m]
  std::vector<FollowerSummary> followers;
  std::uint64_t messages_sent = 0;
  std::uint64_t messages_dropped = 0;
};

struct RunResult {
  Trace trace;
  Summary summary;
  std::vector<V2VMessage> delivered;  // in delivery order
};

namespace detail {

/// Lane points whose polyline turns by more than `min_turn` [rad].
inline std::vector<bool> curved_points(const LaneMap& map,
                                       double min_turn = 1e-3) {
  const std::size_t n = map.size();
  std::vector<bool> out(n, false);
  for (std::size_t k = 0; k < n; ++k) {
    if (!map.closed() && (k == 0 || k + 1 == n)) continue;
    const Vec2 prev = map[(k + n - 1) % n];
    const Vec2 next = map[(k + 1) % n];
    const Vec2 a = map[k] - prev;
    const Vec2 b = next - map[k];
    out[k] = std::abs(std::atan2(a.cross(b), a.dot(b))) > min_turn;
  }
  return out;
}

inline Rng make_rng(std::uint64_t seed, std::uint64_t vehicle,
                    std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(vehicle),
                    static_cast<std::uint32_t>(stream)};
  return Rng(seq);
}

}  // namespace detail

/// True if `p` lies within `reach` of a curved part of the lane.
inline bool near_curve(const LaneMap& map, Vec2 p, double reach = 1.0) {
  const std::vector<bool> curved = detail::curved_points(map);
  for (std::size_t k = 0; k < map.size(); ++k) {
    if (curved[k] && distance(map[k], p) <= reach) return true;
  }
  return false;
}

class Simulation {
 public:
  explicit Simulation(const Scenario& sc)
      : sc_(sc),
        channel_(channel_config(sc), sc.dt),
        gps_period_(ticks_for(kGpsPeriodTicks * kBaseStep, sc.dt)),
        comms_period_(channel_.period_ticks()) {
    const std::size_t n = sc_.vehicles.size();
    for (std::size_t i = 0; i < n; ++i) {
      const VehicleSpec& spec = sc_.vehicles[i];
      Vehicle v{LongitudinalModel(spec.params, sc_.dt)};
      v.lon = v.model.initial_state(spec.initial_speed, 0.0);
      v.speed = spec.initial_speed;
      v.pose = sc_.map.pose_at(spec.start_arc);
      v.path_arc = sc_.map.project_arc(v.pose.position());
      v.ekf = make_ekf(v.pose);
      v.rng_gps = detail::make_rng(sc_.seed, i, 1);
      v.rng_imu = detail::make_rng(sc_.seed, i, 2);
      v.rng_range = detail::make_rng(sc_.seed, i, 3);
      if (i > 0) {
        v.controller.emplace(sc_.controller, sc_.dt);
        v.supervisor.emplace(sc_.switching);
      }
      vehicles_.push_back(std::move(v));
    }
    summary_.name = sc_.name;
    summary_.steady_start = sc_.steady_start;
    summary_.followers.resize(n > 0 ? n - 1 : 0);
    err_sq_.assign(n, 0.0);
  }

  RunResult run() {
    RunResult result;
    const auto ticks =
        static_cast<std::int64_t>(std::llround(sc_.duration / sc_.dt));
    result.trace.reserve(static_cast<std::size_t>(ticks));
    for (std::int64_t k = 0; k < ticks; ++k) {
      result.trace.push_back(step(k, result.delivered));
    }
    finish(ticks, result);
    return result;
  }

 private:
  struct Vehicle {
    explicit Vehicle(const LongitudinalModel& m) : model(m) {}
    LongitudinalModel model;
    LongitudinalState lon;
    Pose2D pose;
    double path_arc = 0.0;  // pure-pursuit projection hint
    double yaw_rate = 0.0;  // over the last integration step
    double speed = 0.0;     // mean speed over the last integration step
    EkfState ekf;
    std::optional<Vec2> last_fix;
    Rng rng_gps, rng_imu, rng_range;
    double u_cmd = 0.0;
    double curvature = 0.0;
    std::optional<CaccController> controller;
    std::optional<GapSupervisor> supervisor;
    std::optional<V2VMessage> leader_msg;  // newest from the predecessor
  };

  static ChannelConfig channel_config(const Scenario& sc) {
    ChannelConfig c = sc.channel;
    if (c.rng_seed == 0) c.rng_seed = sc.seed * 0x9E3779B97F4A7C15ull + 7;
    return c;
  }

  TraceRecord step(std::int64_t k, std::vector<V2VMessage>& delivered) {
    const SimTime now{k, sc_.dt};
    const std::size_t n = vehicles_.size();
    TraceRecord rec;
    rec.tick = k;
    rec.t = now.seconds();
    rec.vehicles.resize(n);
    rec.followers.resize(n - 1);

    // Sense.
    std::vector<ImuInput> imu(n);
    std::vector<RangeReading> range(n);
    for (std::size_t i = 0; i < n; ++i) {
      Vehicle& v = vehicles_[i];
      imu[i] = read_imu(v.speed, v.yaw_rate, sc_.imu, v.rng_imu);
      if (k > 0) {
        v.ekf = predict(v.ekf, imu[i], sc_.dt);
      }
      if (is_rate_tick(k, gps_period_)) {
        const GpsFix fix =
            emulated_gps(v.pose, v.last_fix, sc_.gps_noise, v.rng_gps, now);
        v.last_fix = Vec2{fix.x, fix.y};
        if (k > 0) v.ekf = correct(v.ekf, fix);
      }
      if (i > 0 && sc_.switching.use_range) {
        const Vec2 front = front_bumper(i, v.pose);
        range[i] = range_sensor({front.x, front.y, v.pose.theta},
                                rear_bumper(i - 1), sc_.range, v.rng_range);
      }
    }

    // Communicate.
    if (is_rate_tick(k, comms_period_)) {
      for (std::size_t i = 0; i + 1 < n; ++i) {
        const Vehicle& v = vehicles_[i];
        V2VMessage m;
        m.sender_id = static_cast<VehicleId>(i);
        m.receiver_id = static_cast<VehicleId>(i + 1);
        m.pose = v.ekf.pose();
        m.target_accel = v.u_cmd;
        m.velocity = imu[i].v;
        m.sent_at = now;
        channel_.send(m);
      }
    }
    std::vector<bool> fresh(n, false);
    for (std::size_t i = 1; i < n; ++i) {
      for (const V2VMessage& m :
           channel_.poll(static_cast<VehicleId>(i), now)) {
        vehicles_[i].leader_msg = m;
        fresh[i] = true;
        delivered.push_back(m);
      }
    }

    // Control.
    for (std::size_t i = 0; i < n; ++i) {
      Vehicle& v = vehicles_[i];
      if (i == 0) {
        v.u_cmd = sc_.leader_profile.accel_at(now.seconds());
      } else {
        v.u_cmd = follow(i, now, range[i], imu[i].v, fresh[i], rec);
      }
      try {
        const PursuitResult pr =
            pursuit_curvature(v.pose, sc_.map, sc_.lateral, v.path_arc);
        v.curvature = pr.curvature;
        v.path_arc = pr.arc;
      } catch (const PathLostError&) {
        v.curvature = 0.0;
      }
      rec.vehicles[i] = {v.pose, v.ekf.pose(), v.lon.v, v.u_cmd};
      const double dx = v.ekf.x_hat(0) - v.pose.x;
      const double dy = v.ekf.x_hat(1) - v.pose.y;
      err_sq_[i] += dx * dx + dy * dy;
    }

    // Integrate.
    for (Vehicle& v : vehicles_) {
      const double s_before = v.lon.s;
      v.lon = v.model.step_accel_mode(std::move(v.lon), v.u_cmd);
      const double ds = v.lon.s - s_before;
      v.speed = ds / sc_.dt;
      v.yaw_rate = v.speed * v.curvature;
      if (ds > 0.0) {
        v.pose = kinematic_step(v.pose, v.speed, v.curvature, sc_.dt);
      }
    }
    return rec;
  }

  double follow(std::size_t i, SimTime now, const RangeReading& range,
                double v_meas, bool fresh, TraceRecord& rec) {
    Vehicle& v = vehicles_[i];
    FollowerTrace& ft = rec.followers[i - 1];
    FollowerSummary& fs = summary_.followers[i - 1];

    std::optional<double> approx;
    if (v.leader_msg && sc_.switching.use_approximation) {
      const double age = now.seconds() - v.leader_msg->sent_at.seconds();
      try {
        const GapEstimate est =
            approximate_gap(v.ekf.pose().position(),
                            v.leader_msg->pose.position(), sc_.map, sc_.gap,
                            age);
        double d = est.distance;
        if (sc_.leader_prediction) d += v.leader_msg->velocity * age;
        approx = d + bumper_correction(i);
        const double truth =
            sc_.map.arc_separation(
                sc_.map.project_arc(v.pose.position()),
                sc_.map.project_arc(vehicles_[i - 1].pose.position())) +
            bumper_correction(i);
        const double err = std::abs(*approx - truth);
        ++fs.approx_samples;
        fs.approx_error_max = std::max(fs.approx_error_max, err);
        fs.approx_error_rms += err * err;  // sum until finish()
      } catch (const GapApproximationError&) {
        ++fs.approx_failures;
      }
    }
    const GapSelection sel = v.supervisor->select(range, approx, now);
    const std::optional<double> leader_accel =
        fresh ? std::optional<double>(v.leader_msg->target_accel)
              : std::nullopt;
    const CaccOutput out = v.controller->step(sel, v_meas, leader_accel, now);

    ft.gap_range = range.distance;
    ft.gap_approx = approx;
    ft.gap_used = sel.gap;
    ft.source = sel.source;
    if (sel.gap) ft.e = out.e;
    if (sel.gap && v.lon.v > 0.01) {
      ft.time_gap = (*sel.gap - sc_.controller.l0) / v.lon.v;
    }
    if (sel.cc_fallback) ++fs.cc_fallback_ticks;
    if (range.valid() && approx) {
      ++fs.both_available;
      fs.max_approx_range_diff =
          std::max(fs.max_approx_range_diff, std::abs(*range.distance - *approx));
    }
    return out.u;
  }

  /// Antenna-to-antenna distance minus this, for follower i, is the bumper gap.
  double bumper_correction(std::size_t i) const {
    return sc_.vehicles[i - 1].antenna_offset -
           sc_.vehicles[i - 1].params.body_length -
           sc_.vehicles[i].antenna_offset;
  }

  Vec2 front_bumper(std::size_t i, const Pose2D& p) const {
    const double off = sc_.vehicles[i].antenna_offset;
    return {p.x + off * std::cos(p.theta), p.y + off * std::sin(p.theta)};
  }
  Vec2 rear_bumper(std::size_t i) const {
    const Pose2D& p = vehicles_[i].pose;
    const double back =
        sc_.vehicles[i].antenna_offset - sc_.vehicles[i].params.body_length;
    return {p.x + back * std::cos(p.theta), p.y + back * std::sin(p.theta)};
  }

  void finish(std::int64_t ticks, RunResult& result) {
    summary_.ticks = ticks;
    summary_.duration = static_cast<double>(ticks) * sc_.dt;
    for (std::size_t i = 0; i < vehicles_.size(); ++i) {
      summary_.ekf_rms_error.push_back(
          ticks > 0 ? std::sqrt(err_sq_[i] / static_cast<double>(ticks)) : 0.0);
    }
    for (std::size_t f = 0; f < summary_.followers.size(); ++f) {
      FollowerSummary& fs = summary_.followers[f];
      double sum = 0.0;
      double sum_sq = 0.0;
      std::size_t count = 0;
      for (const TraceRecord& r : result.trace) {
        if (r.t < sc_.steady_start) continue;
        const FollowerTrace& ft = r.followers[f];
        if (ft.e) fs.max_abs_e = std::max(fs.max_abs_e, std::abs(*ft.e));
        if (!ft.time_gap) continue;
        sum += *ft.time_gap;
        sum_sq += *ft.time_gap * *ft.time_gap;
        ++count;
      }
      fs.steady_samples = count;
      if (count > 0) {
        fs.time_gap_mean = sum / static_cast<double>(count);
        const double var =
            sum_sq / static_cast<double>(count) - fs.time_gap_mean * fs.time_gap_mean;
        fs.time_gap_std = std::sqrt(std::max(0.0, var));
      }
      fs.switches = vehicles_[f + 1].supervisor->events();
      if (fs.approx_samples > 0) {
        fs.approx_error_rms = std::sqrt(
            fs.approx_error_rms / static_cast<double>(fs.approx_samples));
      }
    }
    summary_.messages_sent = channel_.sent_count();
    summary_.messages_dropped = channel_.dropped_count();
    result.summary = summary_;
  }

  const Scenario& sc_;
  Channel channel_;
  int gps_period_;
  int comms_period_;
  std::vector<Vehicle> vehicles_;
  Summary summary_;
  std::vector<double> err_sq_;
};

inline RunResult run_scenario(const Scenario& sc) {
  return Simulation(sc).run();
}

// ---------------------------------------------------------------------------
// Trace and summary output

namespace detail {

inline void put_number(std::string& out, double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

inline void put_optional(std::string& out, const std::optional<double>& v) {
  if (v) put_number(out, *v);
}

inline std::optional<double> get_optional(const std::string& field) {
  if (field.empty()) return std::nullopt;
  double v = 0.0;
  const char* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, v);
  if (ec != std::errc{} || ptr != end) {
    throw std::runtime_error("trace: bad number '" + field + "'");
  }
  return v;
}

inline GapSource source_from_string(const std::string& s) {
  if (s == "range_sensor") return GapSource::range_sensor;
  if (s == "approximation") return GapSource::approximation;
  if (s == "none") return GapSource::none;
  throw std::runtime_error("trace: bad source '" + s + "'");
}

}  // namespace detail

inline std::string csv_header(std::size_t n_vehicles) {
  std::string h = "tick,t";
  for (std::size_t i = 0; i < n_vehicles; ++i) {
    const std::string p = ",v" + std::to_string(i) + "_";
    for (const char* f : {"x", "y", "theta", "x_ekf", "y_ekf", "theta_ekf",
                          "v", "u_cmd"}) {
      h += p + f;
    }
  }
  for (std::size_t i = 1; i < n_vehicles; ++i) {
    const std::string p = ",v" + std::to_string(i) + "_";
    for (const char* f : {"gap_range", "gap_approx", "gap_used", "source",
                          "e", "time_gap"}) {
      h += p + f;
    }
  }
  return h + "\n";
}

/// CSV text of a trace, numbers in shortest round-trip form, absent values
/// as empty fields.
inline std::string trace_to_csv(const Trace& trace, std::size_t n_vehicles) {
  std::string out = csv_header(n_vehicles);
  for (const TraceRecord& r : trace) {
    out += std::to_string(r.tick);
    out += ',';
    detail::put_number(out, r.t);
    for (const VehicleTrace& v : r.vehicles) {
      for (double x : {v.true_pose.x, v.true_pose.y, v.true_pose.theta,
                       v.ekf_pose.x, v.ekf_pose.y, v.ekf_pose.theta, v.v,
                       v.u_cmd}) {
        out += ',';
        detail::put_number(out, x);
      }
    }
    for (const FollowerTrace& f : r.followers) {
      out += ',';
      detail::put_optional(out, f.gap_range);
      out += ',';
      detail::put_optional(out, f.gap_approx);
      out += ',';
      detail::put_optional(out, f.gap_used);
      out += ',';
      out += to_string(f.source);
      out += ',';
      detail::put_optional(out, f.e);
      out += ',';
      detail::put_optional(out, f.time_gap);
    }
    out += '\n';
  }
  return out;
}

inline Trace trace_from_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("trace: empty CSV");
  std::size_t n_vehicles = 0;
  while (line.find(",v" + std::to_string(n_vehicles) + "_x,") !=
         std::string::npos) {
    ++n_vehicles;
  }
  if (line + "\n" != csv_header(n_vehicles)) {
    throw std::runtime_error("trace: unexpected CSV header");
  }
  Trace trace;
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::string cell;
    std::istringstream cells(line);
    while (std::getline(cells, cell, ',')) f.push_back(cell);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    const std::size_t expected =
        2 + 8 * n_vehicles + 6 * (n_vehicles > 0 ? n_vehicles - 1 : 0);
    if (f.size() != expected) {
      throw std::runtime_error("trace: wrong field count");
    }
    TraceRecord r;
    r.tick = std::stoll(f[0]);
    r.t = *detail::get_optional(f[1]);
    std::size_t c = 2;
    auto num = [&] { return *detail::get_optional(f[c++]); };
    for (std::size_t i = 0; i < n_vehicles; ++i) {
      VehicleTrace v;
      v.true_pose = {num(), num(), num()};
      v.ekf_pose = {num(), num(), num()};
      v.v = num();
      v.u_cmd = num();
      r.vehicles.push_back(v);
    }
    for (std::size_t i = 1; i < n_vehicles; ++i) {
      FollowerTrace ft;
      ft.gap_range = detail::get_optional(f[c++]);
      ft.gap_approx = detail::get_optional(f[c++]);
      ft.gap_used = detail::get_optional(f[c++]);
      ft.source = detail::source_from_string(f[c++]);
      ft.e = detail::get_optional(f[c++]);
      ft.time_gap = detail::get_optional(f[c++]);
      r.followers.push_back(ft);
    }
    trace.push_back(std::move(r));
  }
  return trace;
}

inline nlohmann::json summary_to_json(const Summary& s) {
  nlohmann::json j;
  j["name"] = s.name;
  j["ticks"] = s.ticks;
  j["duration"] = s.duration;
  j["steady_window_start"] = s.steady_start;
  j["ekf_rms_error"] = s.ekf_rms_error;
  j["messages_sent"] = s.messages_sent;
  j["messages_dropped"] = s.messages_dropped;
  j["followers"] = nlohmann::json::array();
  for (std::size_t i = 0; i < s.followers.size(); ++i) {
    const FollowerSummary& f = s.followers[i];
    nlohmann::json fj;
    fj["vehicle"] = i + 1;
    fj["steady_samples"] = f.steady_samples;
    fj["time_gap_mean"] = f.time_gap_mean;
    fj["time_gap_std"] = f.time_gap_std;
    fj["max_abs_e"] = f.max_abs_e;
    fj["approx_failures"] = f.approx_failures;
    fj["cc_fallback_ticks"] = f.cc_fallback_ticks;
    fj["both_available_ticks"] = f.both_available;
    fj["max_approx_range_diff"] = f.max_approx_range_diff;
    fj["approx_error_max"] = f.approx_error_max;
    fj["approx_error_rms"] = f.approx_error_rms;
    fj["switches"] = nlohmann::json::array();
    for (const SwitchEvent& e : f.switches) {
      fj["switches"].push_back(
          {{"t", e.at.seconds()}, {"from", to_string(e.from)},
           {"to", to_string(e.to)}});
    }
    j["followers"].push_back(fj);
  }
  return j;
}

/// `key: value` lines for terminal output.
inline std::string summary_to_text(const Summary& s) {
  std::ostringstream out;
  out << "scenario: " << s.name << '\n'
      << "duration: " << s.duration << " s (" << s.ticks << " ticks)\n"
      << "steady_window_start: " << s.steady_start << " s\n"
      << "messages: " << s.messages_sent << " sent, " << s.messages_dropped
      << " dropped\n";
  for (std::size_t i = 0; i < s.ekf_rms_error.size(); ++i) {
    out << "vehicle " << i << " ekf_rms_error: " << s.ekf_rms_error[i]
        << " m\n";
  }
  for (std::size_t i = 0; i < s.followers.size(); ++i) {
    const FollowerSummary& f = s.followers[i];
    const std::string p = "vehicle " + std::to_string(i + 1) + " ";
    out << p << "time_gap_mean: " << f.time_gap_mean << " s\n"
        << p << "time_gap_std: " << f.time_gap_std << " s\n"
        << p << "max_abs_e: " << f.max_abs_e << " m\n"
        << p << "switches: " << f.switches.size() << '\n'
        << p << "approx_failures: " << f.approx_failures << '\n'
        << p << "cc_fallback_ticks: " << f.cc_fallback_ticks << '\n'
        << p << "max_approx_range_diff: " << f.max_approx_range_diff
        << " m\n"
        << p << "approx_error_max: " << f.approx_error_max << " m\n"
        << p << "approx_error_rms: " << f.approx_error_rms << " m\n";
  }
  return out.str();
}

inline void write_text_file(const std::filesystem::path& path,
                            std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline void emit_csv(const Trace& trace, std::size_t n_vehicles,
                     const std::filesystem::path& path) {
  write_text_file(path, trace_to_csv(trace, n_vehicles));
}

}  // namespace platoon
