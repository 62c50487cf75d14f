#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "platoon/core_types.hpp"
#include "platoon/sensors.hpp"

namespace platoon {

using VehicleId = int;

/// State a vehicle broadcasts to its follower.
struct V2VMessage {
  VehicleId sender_id = 0;
  VehicleId receiver_id = 0;
  Pose2D pose;               // sender's localized pose at send time
  double target_accel = 0.0; // sender's commanded acceleration [m/s^2]
  double velocity = 0.0;     // [m/s]
  SimTime sent_at;

  friend bool operator==(const V2VMessage&, const V2VMessage&) = default;
};

inline nlohmann::json to_json(const V2VMessage& m) {
  return {{"sender_id", m.sender_id},
          {"receiver_id", m.receiver_id},
          {"x", m.pose.x},
          {"y", m.pose.y},
          {"theta", m.pose.theta},
          {"target_accel", m.target_accel},
          {"velocity", m.velocity},
          {"sent_tick", m.sent_at.tick}};
}

inline V2VMessage message_from_json(const nlohmann::json& j,
                                    double dt_base = kBaseStep) {
  V2VMessage m;
  m.sender_id = j.at("sender_id").get<VehicleId>();
  m.receiver_id = j.at("receiver_id").get<VehicleId>();
  m.pose = {j.at("x").get<double>(), j.at("y").get<double>(),
            j.at("theta").get<double>()};
  m.target_accel = j.at("target_accel").get<double>();
  m.velocity = j.at("velocity").get<double>();
  m.sent_at = {j.at("sent_tick").get<std::int64_t>(), dt_base};
  return m;
}

/// One JSON object per line.
inline std::string to_json_line(const V2VMessage& m) {
  return to_json(m).dump() + "\n";
}

struct ChannelConfig {
  double rate = 20.0;       // per-sender send rate [Hz]
  double loss_prob = 0.05;  // independent per message
  double latency = 0.0;     // [s]
  std::uint64_t rng_seed = 1;
};

/// UDP-like point-to-point channel between vehicles. Sends faster than the
/// configured rate are refused; accepted messages are dropped independently
/// with `loss_prob` and otherwise delivered once, `latency` after sending,
/// in send order.
class Channel {
 public:
  explicit Channel(const ChannelConfig& cfg, double dt_base = kBaseStep)
      : cfg_(cfg),
        period_ticks_(ticks_for(1.0 / cfg.rate, dt_base)),
        latency_ticks_(ticks_for(cfg.latency, dt_base)),
        rng_(cfg.rng_seed) {
    if (!(cfg.loss_prob >= 0.0 && cfg.loss_prob <= 1.0)) {
      throw InvalidArgument("loss_prob must lie in [0, 1]");
    }
  }

  int period_ticks() const { return period_ticks_; }

  /// Returns false if the sender is over its rate budget (nothing sent).
  bool send(const V2VMessage& msg) {
    auto last = last_send_.find(msg.sender_id);
    if (last != last_send_.end() &&
        msg.sent_at.tick - last->second < period_ticks_) {
      return false;
    }
    last_send_[msg.sender_id] = msg.sent_at.tick;
    ++sent_;
    // One uniform draw per accepted message keeps replay bit-exact.
    const double draw = std::uniform_real_distribution<double>(0.0, 1.0)(rng_);
    if (draw < cfg_.loss_prob) {
      ++dropped_;
      return true;
    }
    in_flight_.push_back({msg.sent_at.tick + latency_ticks_, msg});
    return true;
  }

  /// Messages for `receiver` whose delivery time has come, in send order.
  std::vector<V2VMessage> poll(VehicleId receiver, SimTime now) {
    std::vector<V2VMessage> out;
    for (auto it = in_flight_.begin(); it != in_flight_.end();) {
      if (it->msg.receiver_id == receiver && it->deliver_tick <= now.tick) {
        out.push_back(it->msg);
        it = in_flight_.erase(it);
      } else {
        ++it;
      }
    }
    delivered_ += out.size();
    return out;
  }

  std::uint64_t sent_count() const { return sent_; }
  std::uint64_t dropped_count() const { return dropped_; }
  std::uint64_t delivered_count() const { return delivered_; }

 private:
  struct InFlight {
    std::int64_t deliver_tick;
    V2VMessage msg;
  };

  ChannelConfig cfg_;
  int period_ticks_;
  int latency_ticks_;
  Rng rng_;
  std::map<VehicleId, std::int64_t> last_send_;
  std::deque<InFlight> in_flight_;
  std::uint64_t sent_ = 0;
  std::uint64_t dropped_ = 0;
  std::uint64_t delivered_ = 0;
};

}  // namespace platoon
