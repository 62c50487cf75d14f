#include <gtest/gtest.h>

#include <cmath>
#include <string>

#include "platoon/simulation.hpp"

using namespace platoon;

namespace {

std::string base_text(double duration) {
  return "scenario v1\n[simulation]\nduration = " + std::to_string(duration) +
         "\nseed = 5\n[vehicle.0]\nstart_arc = 2.0\ninitial_speed = 0.5\n"
         "[vehicle.1]\ninitial_speed = 0.5\n[gps]\nnoise_std = 0.002\n";
}

Scenario build(const std::string& text) {
  return build_scenario(parse_key_values(text));
}

}  // namespace

TEST(Simulation, ZeroDuration) {
  const RunResult r = run_scenario(build(base_text(0.0)));
  EXPECT_TRUE(r.trace.empty());
  EXPECT_EQ(r.summary.ticks, 0);
  ASSERT_EQ(r.summary.followers.size(), 1u);
  EXPECT_EQ(r.summary.followers[0].steady_samples, 0u);
  EXPECT_EQ(r.summary.followers[0].time_gap_mean, 0.0);
  EXPECT_EQ(trace_to_csv(r.trace, 2), csv_header(2));
}

TEST(Simulation, CsvHeaderOnlyForEmptyTrace) {
  const std::string csv = trace_to_csv({}, 3);
  EXPECT_EQ(csv, csv_header(3));
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1);
  EXPECT_TRUE(trace_from_csv(csv).empty());
}

TEST(Simulation, CsvRoundTrip) {
  const RunResult r = run_scenario(build(base_text(3.0)));
  const std::string csv = trace_to_csv(r.trace, 2);
  const Trace back = trace_from_csv(csv);
  ASSERT_EQ(back.size(), r.trace.size());
  EXPECT_EQ(trace_to_csv(back, 2), csv);
  EXPECT_EQ(back[123].vehicles[1].true_pose, r.trace[123].vehicles[1].true_pose);
  EXPECT_EQ(back[123].followers[0].gap_used, r.trace[123].followers[0].gap_used);
}

TEST(Simulation, ByteIdenticalReplay) {
  const Scenario sc = build(base_text(5.0));
  const std::string a = trace_to_csv(run_scenario(sc).trace, 2);
  const std::string b = trace_to_csv(run_scenario(sc).trace, 2);
  EXPECT_EQ(a, b);
  const Scenario other = build(base_text(5.0) + "[channel]\nseed = 99\n");
  EXPECT_NE(trace_to_csv(run_scenario(other).trace, 2), a);
}

TEST(Simulation, TickPhasesAreCausal) {
  // Approximation only, so the follower learns about the leader solely
  // through the channel. A leader acceleration starting at tick 200 cannot
  // reach the follower's command before tick 200 + latency.
  const std::string common =
      base_text(4.0) +
      "[switching]\nuse_range = false\n[channel]\nlatency = 0.1\nloss_prob = 0\n";
  const Scenario flat = build(common + "[leader]\nprofile = 0:0.5\n");
  const Scenario step = build(common + "[leader]\nprofile = 0:0.5, 2:0.5, 3:0.8\n");
  const RunResult a = run_scenario(flat);
  const RunResult b = run_scenario(step);
  std::int64_t first_diff = -1;
  for (std::size_t k = 0; k < a.trace.size(); ++k) {
    if (a.trace[k].vehicles[1].u_cmd != b.trace[k].vehicles[1].u_cmd) {
      first_diff = a.trace[k].tick;
      break;
    }
  }
  ASSERT_GE(first_diff, 0);
  EXPECT_GE(first_diff, 200 + 10);
  EXPECT_NEAR(b.trace[200].vehicles[0].u_cmd, 0.3, 1e-12);
}

TEST(Simulation, FollowerKeepsTheTimeGapOnAStraight) {
  // Noise-free straight-line case: e settles below a millimetre.
  const std::string text =
      "scenario v1\n[simulation]\nduration = 20\n[map]\noval_straight = 30\n"
      "[leader]\nspeed = 0.5\n[vehicle.0]\nstart_arc = 3\n"
      "[vehicle.1]\nstart_gap = 0.8\n[gap]\nleader_prediction = true\n"
      "[imu]\nyaw_rate_std = 0\nspeed_std = 0\n[range_sensor]\nnoise_std = 0\n"
      "[channel]\nloss_prob = 0\n";
  const RunResult r = run_scenario(build(text));
  const auto& last = r.trace.back().followers[0];
  ASSERT_TRUE(last.e.has_value());
  EXPECT_LT(std::abs(*last.e), 1e-3);
  EXPECT_TRUE(r.summary.followers[0].switches.empty());
}

TEST(Simulation, SummaryJsonAndText) {
  const RunResult r = run_scenario(build(base_text(12.0)));
  const nlohmann::json j = summary_to_json(r.summary);
  EXPECT_EQ(j["ticks"], 1200);
  EXPECT_EQ(j["followers"].size(), 1u);
  EXPECT_GT(j["followers"][0]["steady_samples"].get<int>(), 0);
  const std::string text = summary_to_text(r.summary);
  EXPECT_NE(text.find("vehicle 1 time_gap_mean"), std::string::npos);
}

TEST(Simulation, NearCurveHelper) {
  const LaneMap m = make_oval(4.0, 2.0, 0.15);
  EXPECT_FALSE(near_curve(m, {0.0, -2.0}));
  EXPECT_TRUE(near_curve(m, {2.0 + 2.0, 0.0}));
}
