#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "platoon/core_types.hpp"
#include "platoon/sensors.hpp"

namespace platoon {

struct ControllerConfig {
  double kp = 2.0;   // [1/s^2]
  double kd = 2.8;   // [1/s]
  double h = 0.8;    // time gap [s]
  double l0 = 0.2;   // standstill distance [m]
  double u_min = -2.0;
  double u_max = 2.0;
  bool ff_enabled = true;
  double plant_tau = 0.0661;        // lag of the controlled vehicle [s]
  double derivative_filter = 0.05;  // [s]
  double ff_hold = 0.25;  // keep the last leader acceleration this long [s]

  void validate() const {
    if (!(kp > 0.0) || !(kd > 0.0)) throw InvalidArgument("kp, kd must be > 0");
    if (!(u_min < 0.0 && 0.0 < u_max)) {
      throw InvalidArgument("need u_min < 0 < u_max");
    }
    if (!(h > 0.0)) throw InvalidArgument("h must be > 0");
    if (!(l0 >= 0.0)) throw InvalidArgument("l0 must be >= 0");
    if (!(plant_tau > 0.0)) throw InvalidArgument("plant_tau must be > 0");
    if (!(derivative_filter > 0.0)) {
      throw InvalidArgument("derivative_filter must be > 0");
    }
    if (!(ff_hold >= 0.0)) throw InvalidArgument("ff_hold must be >= 0");
  }
};

/// Measured gap minus the constant-time-gap spacing h v + l0.
inline double gap_error(double gap, double v_follower,
                        const ControllerConfig& cfg) {
  return gap - (cfg.h * v_follower + cfg.l0);
}

inline double saturate(double u, const ControllerConfig& cfg) {
  return std::clamp(u, cfg.u_min, cfg.u_max);
}

/// PD feedback on the gap-keeping error.
inline double feedback_accel(double e, double e_dot,
                             const ControllerConfig& cfg) {
  return saturate(cfg.kp * e + cfg.kd * e_dot, cfg);
}

/// s / (T s + 1): derivative of a first-order filtered copy of the input.
class FilteredDifferentiator {
 public:
  // The input is treated as piecewise linear between samples, so the filter
  // state is exact for ramps and a ramp reads its true slope.
  FilteredDifferentiator(double time_constant, double dt)
      : T_(time_constant), dt_(dt), alpha_(std::exp(-dt / time_constant)) {
    c_new_ = 1.0 - T_ * (1.0 - alpha_) / dt_;
    c_old_ = 1.0 - alpha_ - c_new_;
  }

  double step(double x) {
    if (!seeded_) {
      filtered_ = x;
      previous_ = x;
      seeded_ = true;
    }
    filtered_ = alpha_ * filtered_ + c_old_ * previous_ + c_new_ * x;
    previous_ = x;
    output_ = (x - filtered_) / T_;
    return output_;
  }

  /// Restart so that the next sample `x` continues the last derivative, so a
  /// step in the input level produces no derivative kick.
  void reseed(double x) {
    previous_ = x - output_ * dt_;
    filtered_ = previous_ - T_ * output_;
    seeded_ = true;
  }

  void reset() {
    seeded_ = false;
    output_ = 0.0;
  }
  double output() const { return output_; }

 private:
  double T_;
  double dt_;
  double alpha_;
  double c_new_ = 0.0;
  double c_old_ = 0.0;
  double filtered_ = 0.0;
  double previous_ = 0.0;
  double output_ = 0.0;
  bool seeded_ = false;
};

/// Feedforward filter (tau s + 1) / (h s + 1) applied to the leader's target
/// acceleration. Split as tau/h + (1 - tau/h) / (h s + 1) with the lag
/// discretized exactly under zero-order hold, so a held input reproduces the
/// continuous response at every sample. The actuation-delay advance of the
/// ideal inverse is not realizable and is left out.
class FeedforwardFilter {
 public:
  FeedforwardFilter(double plant_tau, double h, double dt)
      : ratio_(plant_tau / h), beta_(1.0 - std::exp(-dt / h)) {}

  double step(double u_leader) {
    const double out = ratio_ * u_leader + (1.0 - ratio_) * lag_;
    lag_ += beta_ * (u_leader - lag_);
    return out;
  }

  void reset() { lag_ = 0.0; }

 private:
  double ratio_;
  double beta_;
  double lag_ = 0.0;
};

/// Convenience for a fresh filter over one input sample.
inline double feedforward_accel(FeedforwardFilter& ff, double u_leader) {
  return ff.step(u_leader);
}

enum class GapSource { range_sensor, approximation, none };

inline const char* to_string(GapSource s) {
  switch (s) {
    case GapSource::range_sensor: return "range_sensor";
    case GapSource::approximation: return "approximation";
    case GapSource::none: return "none";
  }
  return "unknown";
}

struct SwitchingConfig {
  bool use_range = true;
  bool use_approximation = true;
  /// Range readings outside [lo, hi] are treated as target loss.
  std::optional<std::pair<double, double>> validity_band;
  /// How long the last valid gap is held once both sources fail [s].
  double hold_timeout = 1.0;
};

struct GapSelection {
  std::optional<double> gap;  // empty only in cruise-control fallback
  GapSource source = GapSource::none;
  bool holding = false;      // reusing the last valid gap
  bool cc_fallback = false;  // no gap: keep current speed
  bool switched = false;     // source differs from the previous tick
};

struct SwitchEvent {
  SimTime at;
  GapSource from;
  GapSource to;
};

/// Chooses the gap source each tick: the range sensor while it reports a
/// plausible value, else the map-based approximation (computed every tick in
/// the background), else hold the last gap, then give up to cruise control.
class GapSupervisor {
 public:
  explicit GapSupervisor(SwitchingConfig cfg) : cfg_(std::move(cfg)) {}

  GapSelection select(const RangeReading& range,
                      const std::optional<double>& approx, SimTime now) {
    GapSelection sel;
    if (cfg_.use_range && range.valid() && in_band(*range.distance)) {
      sel.gap = range.distance;
      sel.source = GapSource::range_sensor;
    } else if (cfg_.use_approximation && approx) {
      sel.gap = approx;
      sel.source = GapSource::approximation;
    }

    if (sel.gap) {
      last_valid_gap_ = sel.gap;
      last_valid_time_ = now.seconds();
    } else if (last_valid_gap_ &&
               now.seconds() - last_valid_time_ <= cfg_.hold_timeout) {
      sel.gap = last_valid_gap_;
      sel.holding = true;
    } else {
      sel.cc_fallback = true;
    }

    sel.switched = initialized_ && sel.source != active_;
    if (sel.switched) {
      events_.push_back({now, active_, sel.source});
    }
    active_ = sel.source;
    initialized_ = true;
    return sel;
  }

  GapSource active_source() const { return active_; }
  const std::optional<double>& last_valid_gap() const {
    return last_valid_gap_;
  }
  const std::vector<SwitchEvent>& events() const { return events_; }
  const SwitchingConfig& config() const { return cfg_; }

 private:
  bool in_band(double d) const {
    return !cfg_.validity_band ||
           (d >= cfg_.validity_band->first && d <= cfg_.validity_band->second);
  }

  SwitchingConfig cfg_;
  GapSource active_ = GapSource::none;
  bool initialized_ = false;
  std::optional<double> last_valid_gap_;
  double last_valid_time_ = 0.0;
  std::vector<SwitchEvent> events_;
};

/// One-shot form of the selection rule.
inline GapSelection select_gap(const RangeReading& range,
                               const std::optional<double>& approx,
                               GapSupervisor& supervisor, SimTime now) {
  return supervisor.select(range, approx, now);
}

struct CaccOutput {
  double u = 0.0;
  double u_fb = 0.0;
  double u_ff = 0.0;
  double e = 0.0;
  double e_dot = 0.0;
};

/// Longitudinal CACC: PD on the gap error plus the feedforward-filtered
/// leader acceleration. With feedforward disabled this is plain ACC.
///
/// The error derivative comes from one filtered differentiator on e itself,
/// which is d(gap)/dt - h dv/dt through the same filter.
class CaccController {
 public:
  CaccController(ControllerConfig cfg, double dt)
      : cfg_(cfg),
        diff_(cfg.derivative_filter, dt),
        ff_(cfg.plant_tau, cfg.h, dt) {
    cfg_.validate();
  }

  const ControllerConfig& config() const { return cfg_; }

  /// `leader_accel` is set on ticks where a leader message arrived.
  CaccOutput step(const GapSelection& sel, double v_self,
                  const std::optional<double>& leader_accel, SimTime now) {
    if (leader_accel) {
      last_leader_accel_ = *leader_accel;
      last_leader_time_ = now.seconds();
      have_leader_ = true;
    }
    CaccOutput out;
    if (sel.cc_fallback || !sel.gap) {
      diff_.reset();
      ff_.reset();
      return out;  // hold speed
    }
    out.e = gap_error(*sel.gap, v_self, cfg_);
    if (sel.switched) {
      diff_.reseed(out.e);
    }
    out.e_dot = diff_.step(out.e);
    out.u_fb = cfg_.kp * out.e + cfg_.kd * out.e_dot;
    if (cfg_.ff_enabled) {
      const bool fresh =
          have_leader_ && now.seconds() - last_leader_time_ <= cfg_.ff_hold + 1e-9;
      out.u_ff = ff_.step(fresh ? last_leader_accel_ : 0.0);
    }
    out.u = saturate(out.u_fb + out.u_ff, cfg_);
    return out;
  }

 private:
  ControllerConfig cfg_;
  FilteredDifferentiator diff_;
  FeedforwardFilter ff_;
  double last_leader_accel_ = 0.0;
  double last_leader_time_ = 0.0;
  bool have_leader_ = false;
};

/// Stateless single-step form: u = sat(kp e + kd e_dot + u_ff).
inline double cacc_command(double e, double e_dot, double u_ff,
                           const ControllerConfig& cfg) {
  return saturate(cfg.kp * e + cfg.kd * e_dot + (cfg.ff_enabled ? u_ff : 0.0),
                  cfg);
}

}  // namespace platoon
