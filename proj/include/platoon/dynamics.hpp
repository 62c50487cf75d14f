#pragma once

#include <algorithm>
#include <cmath>
#include <deque>

#include "platoon/core_types.hpp"

namespace platoon {

/// Longitudinal state of one vehicle. `v_cmd_buffer` is the actuation delay
/// line: its front is the command that reaches the lag this step.
struct LongitudinalState {
  double v = 0.0;      // actual velocity [m/s]
  double s = 0.0;      // traversed distance along the path [m]
  double v_des = 0.0;  // integrated desired velocity (acceleration mode)
  std::deque<double> v_cmd_buffer;
};

/// Discrete realization of the identified robot model: a first-order lag
/// 1/(tau s + 1) behind a pure delay of tau_d, from desired velocity to
/// velocity. The lag is discretized exactly under zero-order hold, so for a
/// piecewise-constant command the sampled response equals the continuous one.
class LongitudinalModel {
 public:
  LongitudinalModel(const VehicleParams& params, double dt)
      : dt_(dt),
        delay_steps_(ticks_for(params.tau_d, dt)),
        alpha_(1.0 - std::exp(-dt / params.tau)) {
    params.validate(dt);
  }

  double dt() const { return dt_; }
  int delay_steps() const { return delay_steps_; }

  /// State at rest or cruising at `v0` with the delay line primed to `v0`.
  LongitudinalState initial_state(double v0 = 0.0, double s0 = 0.0) const {
    LongitudinalState st;
    st.v = v0;
    st.s = s0;
    st.v_des = v0;
    st.v_cmd_buffer.assign(static_cast<std::size_t>(delay_steps_), v0);
    return st;
  }

  LongitudinalState step_velocity_mode(LongitudinalState state,
                                       double v_des) const {
    if (!std::isfinite(v_des)) {
      throw InvalidArgument("step_velocity_mode: non-finite command");
    }
    double applied = v_des;
    if (delay_steps_ > 0) {
      state.v_cmd_buffer.push_back(v_des);
      applied = state.v_cmd_buffer.front();
      state.v_cmd_buffer.pop_front();
    }
    const double v_next = std::max(0.0, state.v + alpha_ * (applied - state.v));
    state.s += dt_ * (state.v + v_next) / 2.0;
    state.v = v_next;
    return state;
  }

  /// Integrates `u` into the desired velocity, then runs the velocity loop.
  /// The held desired velocity is the mid-step value of that integral, so a
  /// constant acceleration produces a staircase centred on the true ramp.
  LongitudinalState step_accel_mode(LongitudinalState state, double u) const {
    const double held = std::max(0.0, state.v_des + 0.5 * u * dt_);
    state.v_des = std::max(0.0, state.v_des + u * dt_);
    return step_velocity_mode(std::move(state), held);
  }

 private:
  double dt_;
  int delay_steps_;
  double alpha_;
};

}  // namespace platoon
