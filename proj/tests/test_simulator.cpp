/******************************************************************************
 * Copyright 2026 The quatfuse Authors. All Rights Reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 *****************************************************************************/
#include "quatfuse/simulator.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

namespace quatfuse::sim {
namespace {

std::string stream_text(const SimOutput& o) {
  std::string s;
  for (const SensorEvent& e : o.events) s += format_event(e) + '\n';
  return s;
}

SimScenario stationary(double duration) {
  SimScenario sc;
  sc.trajectory = "stationary";
  sc.duration = duration;
  return sc;
}

TEST(CounterRng, PureFunctionOfCounter) {
  const CounterRng a(5), b(5), c(6);
  EXPECT_EQ(a.bits(1, 2), b.bits(1, 2));
  EXPECT_NE(a.bits(1, 2), c.bits(1, 2));
  EXPECT_NE(a.bits(1, 2), a.bits(2, 1));
  double sum = 0.0, sq = 0.0;
  constexpr int kN = 200000;
  for (int i = 0; i < kN; ++i) {
    const double u = a.uniform(3, i);
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
    const double n = a.normal(4, i);
    sum += n;
    sq += n * n;
  }
  EXPECT_NEAR(sum / kN, 0.0, 0.01);
  EXPECT_NEAR(sq / kN, 1.0, 0.01);
}

TEST(Simulator, DeterministicForSeed) {
  SimScenario sc;
  sc.duration = 10.0;
  sc.radar = true;
  sc.vslam = true;
  const std::string a = stream_text(generate(sc)), b = stream_text(generate(sc));
  EXPECT_EQ(a, b);
  sc.seed = 2;
  EXPECT_NE(a, stream_text(generate(sc)));
}

TEST(Simulator, EventsInArrivalOrder) {
  SimScenario sc;
  sc.duration = 10.0;
  sc.gps_delay = 0.3;
  const SimOutput o = generate(sc);
  std::size_t late = 0;
  for (const SensorEvent& e : o.events) {
    if (const auto* g = std::get_if<GpsFixSample>(&e)) {
      (void)g;
      ++late;
    }
  }
  EXPECT_NEAR(static_cast<double>(late), 10.0 * sc.gps_rate, 2.0);
  for (std::size_t i = 1; i < o.truth.size(); ++i) EXPECT_GT(o.truth[i].stamp, o.truth[i - 1].stamp);
}

TEST(Simulator, StationaryAccelMean) {
  SimScenario sc = stationary(60.0);
  sc.accel_bias = {0.1, -0.05, 0.02};
  const SimOutput o = generate(sc);
  Vec3 sum = Vec3::Zero();
  int n = 0;
  for (const SensorEvent& e : o.events) {
    if (const auto* s = std::get_if<ImuSample>(&e)) {
      sum += s->accel;
      ++n;
    }
  }
  const Vec3 mean = sum / n;
  const double tol = 4.0 * sc.accel_noise / std::sqrt(n);
  EXPECT_LT((mean - (Constants::gravity() + sc.accel_bias)).cwiseAbs().maxCoeff(), tol);
}

TEST(Simulator, TruthFiniteDifferences) {
  SimScenario sc;
  sc.duration = 40.0;
  const SimOutput o = generate(sc);
  const auto& T = o.truth;
  for (std::size_t k = 1; k + 1 < T.size(); ++k) {
    const double dt = T[k + 1].stamp - T[k - 1].stamp;
    const Vec3 v = (T[k + 1].p - T[k - 1].p) / dt;
    ASSERT_LT((v - T[k].v_world).norm(), 5e-3) << T[k].stamp;
    ASSERT_LT((rotate(T[k].q, T[k].v_body) - T[k].v_world).norm(), 1e-12);
    const double yaw_rate = wrap_angle(T[k + 1].q.to_euler().z() - T[k - 1].q.to_euler().z()) / dt;
    ASSERT_NEAR(yaw_rate, T[k].omega.z(), 5e-3) << T[k].stamp;
  }
}

TEST(Simulator, GpsNoiseCalibrated) {
  SimScenario sc = stationary(1000.0);
  sc.gps_rate = 10.0;
  const SimOutput o = generate(sc);
  const geodesy::EnuOrigin origin(sc.origin);
  const Trajectory traj(sc);
  Vec3 sq = Vec3::Zero(), sum = Vec3::Zero();
  int n = 0;
  for (const SensorEvent& e : o.events) {
    if (const auto* g = std::get_if<GpsFixSample>(&e)) {
      const Vec3 err = geodesy::geodetic_to_enu(g->coord, origin) - traj.at(g->stamp).p;
      sum += err;
      sq += err.cwiseProduct(err);
      ++n;
    }
  }
  ASSERT_GE(n, 10000);
  const Vec3 mean = sum / n;
  const Vec3 sd = (sq / n - mean.cwiseProduct(mean)).cwiseSqrt();
  EXPECT_NEAR(sd.x() / sc.gps_sigma, 1.0, 0.03);
  EXPECT_NEAR(sd.y() / sc.gps_sigma, 1.0, 0.03);
  EXPECT_NEAR(sd.z() / sc.gps_sigma_z, 1.0, 0.03);
}

TEST(Simulator, DropoutsAndClusters) {
  SimScenario sc;
  sc.duration = 60.0;
  sc.dropouts.push_back({10.0, 30.0, 0.0});
  sc.clusters.push_back({25.0, 17, 5.0, 100.0, 120.0, 0.5});
  const SimOutput o = generate(sc);
  const geodesy::EnuOrigin origin(sc.origin);
  const Trajectory traj(sc);
  int in_dropout = 0, in_cluster = 0;
  for (const SensorEvent& e : o.events) {
    const auto* g = std::get_if<GpsFixSample>(&e);
    if (!g) continue;
    const double off = (geodesy::geodetic_to_enu(g->coord, origin) - traj.at(g->stamp).p).head<2>().norm();
    if (g->stamp >= 25.0 && g->stamp < 30.0) {
      ++in_cluster;
      EXPECT_GT(off, 95.0);
      EXPECT_LT(off, 125.0);
    } else if (g->stamp >= 10.0 && g->stamp < 30.0) {
      ++in_dropout;
    }
  }
  EXPECT_EQ(in_dropout, 0);
  EXPECT_EQ(in_cluster, 17);
}

TEST(Simulator, SpikeOffsetsOneFix) {
  SimScenario sc;
  sc.duration = 20.0;
  sc.spikes.push_back({10.0, Vec3(50.0, 0.0, 0.0)});
  const SimOutput o = generate(sc);
  const geodesy::EnuOrigin origin(sc.origin);
  const Trajectory traj(sc);
  int spikes = 0;
  for (const SensorEvent& e : o.events) {
    if (const auto* g = std::get_if<GpsFixSample>(&e)) {
      if ((geodesy::geodetic_to_enu(g->coord, origin) - traj.at(g->stamp).p).norm() > 40.0) ++spikes;
    }
  }
  EXPECT_EQ(spikes, 1);
}

TEST(Simulator, MapJumpShiftsLaterPoses) {
  SimScenario sc;
  sc.duration = 20.0;
  sc.vslam = true;
  sc.vslam_noise_pos = 0.0;
  sc.map_jumps.push_back({12.0, Vec3(3.0, 0.0, 0.0), 0.0});
  const SimOutput o = generate(sc);
  const Trajectory traj(sc);
  for (const SensorEvent& e : o.events) {
    if (const auto* v = std::get_if<VslamPoseSample>(&e)) {
      const Vec3 d = v->position - traj.at(v->stamp).p;
      EXPECT_NEAR(d.x(), v->stamp >= 12.0 ? 3.0 : 0.0, 1e-9) << v->stamp;
    }
  }
}

TEST(Scenario, ParseErrors) {
  EXPECT_THROW(SimScenario::from_doc(KeyValueDoc::parse("duraton = 5\n")), ScenarioError);
  EXPECT_THROW(SimScenario::from_doc(KeyValueDoc::parse("duration = -5\n")), ScenarioError);
  EXPECT_THROW(SimScenario::from_doc(KeyValueDoc::parse("gps.clusters = 1:2:3\n")), ScenarioError);
  EXPECT_THROW(SimScenario::load("/nonexistent.scn"), ScenarioError);
  const SimScenario s = SimScenario::from_doc(KeyValueDoc::parse("duration = 60\ngps.dropouts = 1:2, 3:4\n"));
  EXPECT_EQ(s.dropouts.size(), 2u);
}

TEST(Paths, ArcLengthParametrisation) {
  const Path2d c = Path2d::circle(10.0);
  EXPECT_NEAR(c.length(), 20.0 * std::numbers::pi, 1e-12);
  EXPECT_LT((c.at(c.length()).p - c.at(0.0).p).norm(), 1e-9);
  const Path2d w = Path2d::waypoints({{0, 0}, {10, 0}, {10, 10}}, 2.0, false);
  for (double s = 0.01; s < w.length(); s += 0.05) {
    EXPECT_NEAR((w.at(s + 0.01).p - w.at(s - 0.01).p).norm(), 0.02, 1e-4) << s;
  }
  EXPECT_THROW(Path2d::waypoints({{0, 0}}, 1.0, false), ScenarioError);
}

TEST(SpeedProfile, ContinuousVelocity) {
  SpeedProfile sp;
  sp.decel_start = 20.0;
  for (double t = 0.0; t < 30.0; t += 0.001) {
    EXPECT_NEAR(sp.speed(t + 1e-4) - sp.speed(t), 1e-4 * sp.acceleration(t), 1e-4 * 0.5 + 1e-12);
    EXPECT_GE(sp.speed(t), 0.0);
  }
  EXPECT_NEAR(sp.distance(10.0), 1.5 * 5.0 + 0.5 * 0.5 * 9.0, 1e-9);
}

}  // namespace
}  // namespace quatfuse::sim
