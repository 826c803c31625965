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
#pragma once

#include "quatfuse/core_types.hpp"
#include "quatfuse/geodesy.hpp"
#include "quatfuse/sensor_events.hpp"
#include "quatfuse/text_io.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace quatfuse::sim {

class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Counter-based generator: every draw is a pure function of
/// (seed, stream, index), so sensors never share or shift draws.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed = 0) : seed_(seed) {}
  std::uint64_t bits(std::uint64_t stream, std::uint64_t index) const;
  /// Uniform in (0, 1).
  double uniform(std::uint64_t stream, std::uint64_t index) const;
  /// Standard normal (Box-Muller on two counter draws).
  double normal(std::uint64_t stream, std::uint64_t index) const;

 private:
  std::uint64_t seed_;
};

/// Planar path piece: a line (curvature 0) or a circular arc.
struct Segment {
  Eigen::Vector2d start = Eigen::Vector2d::Zero();
  double heading = 0.0;
  double length = 0.0;
  double curvature = 0.0;

  Eigen::Vector2d position(double u) const;
  double heading_at(double u) const { return heading + curvature * u; }
};

/// Arc-length parametrised path made of segments. Closed paths wrap.
class Path2d {
 public:
  Path2d() = default;
  Path2d(std::vector<Segment> segments, bool closed);

  static Path2d circle(double radius, double heading = 0.0);
  static Path2d figure_eight(double radius, double heading = 0.0);
  /// Polyline with corners rounded to `corner_radius`.
  static Path2d waypoints(const std::vector<Eigen::Vector2d>& points, double corner_radius, bool closed);
  static Path2d stationary(double heading = 0.0);

  double length() const { return length_; }
  bool closed() const { return closed_; }
  const std::vector<Segment>& segments() const { return segments_; }

  struct Sample {
    Eigen::Vector2d p;
    double heading;
    double curvature;
  };
  Sample at(double s) const;

 private:
  std::vector<Segment> segments_;
  std::vector<double> offsets_;
  double length_ = 0.0;
  bool closed_ = false;
};

/// Rest, accelerate, cruise, decelerate, rest. Acceleration is piecewise
/// constant so velocity is continuous.
struct SpeedProfile {
  double start_time = 2.0;
  double cruise = 1.5;
  double accel = 0.5;
  /// Time at which deceleration begins.
  double decel_start = 1e300;

  double distance(double t) const;
  double speed(double t) const;
  double acceleration(double t) const;
  double ramp_time() const { return accel > 0.0 ? cruise / accel : 0.0; }
};

struct Window {
  double t0 = 0.0;
  double t1 = 0.0;
  double value = 0.0;
  bool contains(double t) const { return t >= t0 && t < t1; }
};

struct SpikeSpec {
  double t = 0.0;
  Vec3 offset = Vec3::Zero();
};

struct ClusterSpec {
  double t_start = 0.0;
  int count = 0;
  double duration = 0.0;
  double offset_min = 0.0;
  double offset_max = 0.0;
  double bearing = 0.0;  // rad, ENU
};

struct MapJump {
  double t = 0.0;
  Vec3 offset = Vec3::Zero();
  double yaw = 0.0;
};

struct CurbEvent {
  double t = 0.0;
  double duration = 0.2;
  double magnitude = 5.0;  // peak vertical acceleration, m/s^2
};

struct SimScenario {
  std::uint64_t seed = 1;
  double duration = 60.0;
  geodesy::GeodeticCoord origin{0.7382, -1.4611, 270.0};

  // Trajectory.
  std::string trajectory = "circle";
  double radius = 20.0;
  double corner_radius = 5.0;
  std::vector<Eigen::Vector2d> waypoints;
  bool loop = true;
  double initial_heading = 0.0;
  SpeedProfile speed;
  double end_hold = 2.0;
  std::vector<CurbEvent> curbs;

  // IMU.
  double imu_rate = 100.0;
  double gyro_noise = 0.002;
  double accel_noise = 0.05;
  Vec3 gyro_bias = Vec3::Zero();
  Vec3 accel_bias = Vec3::Zero();
  double gyro_bias_walk = 0.0;   // rad/s per sqrt(s)
  double accel_bias_walk = 0.0;  // m/s^2 per sqrt(s)
  int imu_orientation_dof = 2;
  double orientation_noise = 0.005;
  bool imu_centripetal = false;
  bool imu2 = false;

  // Wheel encoder.
  bool encoder = true;
  double encoder_rate = 100.0;
  double encoder_noise_v = 0.02;
  double encoder_noise_wz = 0.01;
  double b_ewz = 0.0;
  std::vector<Window> slips;  // value: speed scale factor

  // GPS.
  bool gps = true;
  double gps_rate = 5.0;
  double gps_delay = 0.0;
  double gps_sigma = 0.8;
  double gps_sigma_z = 1.5;
  double hdop = 1.0;
  double vdop = 1.0;
  std::vector<Window> hdop_schedule;
  int gps_fix = 1;
  int gps_satellites = 10;
  std::string gps_report = "dop";  // dop | bounds | full
  Vec3 lever_arm = Vec3::Zero();
  std::vector<Window> dropouts;
  std::vector<SpikeSpec> spikes;
  std::vector<ClusterSpec> clusters;
  bool gps_velocity = false;
  double gps_velocity_noise = 0.05;

  // Radar.
  bool radar = false;
  double radar_rate = 20.0;
  double radar_noise = 0.05;

  // VSLAM.
  bool vslam = false;
  double vslam_rate = 10.0;
  double vslam_delay = 0.05;
  double vslam_noise_pos = 0.02;
  double vslam_noise_orient = 0.005;
  bool vslam_variances = true;
  std::vector<MapJump> map_jumps;

  static SimScenario from_doc(const KeyValueDoc& doc);
  static SimScenario load(const std::string& path);
  void validate() const;
  Path2d build_path() const;
  /// The speed profile with deceleration placed so the vehicle stops at
  /// the end of an open path or `end_hold` seconds before the end.
  SpeedProfile resolved_speed(const Path2d& path) const;
};

struct TruthSample {
  double stamp = 0.0;
  Vec3 p = Vec3::Zero();
  Quaternion q;
  Vec3 v_body = Vec3::Zero();
  Vec3 v_world = Vec3::Zero();
  Vec3 omega = Vec3::Zero();
  Vec3 a_body = Vec3::Zero();
  Vec3 b_g = Vec3::Zero();
  Vec3 b_a = Vec3::Zero();
  double b_ewz = 0.0;
};

using GroundTruth = std::vector<TruthSample>;

/// Noise-free kinematic truth at time t (biases not included).
class Trajectory {
 public:
  explicit Trajectory(const SimScenario& scenario);
  TruthSample at(double t) const;
  const Path2d& path() const { return path_; }
  const SpeedProfile& speed() const { return speed_; }

 private:
  Path2d path_;
  SpeedProfile speed_;
  std::vector<CurbEvent> curbs_;
};

struct SimOutput {
  GroundTruth truth;
  std::vector<SensorEvent> events;
};

/**
 * Streams events in arrival order. Each sensor runs its own lazy
 * generator; the streams are merged by arrival time with a fixed
 * sensor order on ties. Memory stays constant in the scenario length.
 */
class Simulator {
 public:
  explicit Simulator(SimScenario scenario);
  ~Simulator();

  /// Calls `on_event` for every event and `on_truth` for every IMU-rate
  /// truth sample, both in time order.
  void run(const std::function<void(const SensorEvent&)>& on_event,
           const std::function<void(const TruthSample&)>& on_truth);

  const SimScenario& scenario() const { return scenario_; }
  const geodesy::EnuOrigin& origin() const { return origin_; }
  const Trajectory& trajectory() const { return trajectory_; }

 private:
  SimScenario scenario_;
  geodesy::EnuOrigin origin_;
  Trajectory trajectory_;
};

SimOutput generate(const SimScenario& scenario);

/// Offsets the GPS fix closest to spec.t by spec.offset (ENU metres).
void inject_spike(std::vector<SensorEvent>& events, const SpikeSpec& spec, const geodesy::EnuOrigin& origin);

/// Adds `spec.count` fixes evenly over the cluster window, each displaced
/// from the truth by a distance in [offset_min, offset_max] along the
/// cluster bearing. Legitimate fixes inside the window are removed and
/// new fixes are inserted in stamp order.
void inject_cluster(std::vector<SensorEvent>& events, const ClusterSpec& spec, const Trajectory& truth,
                    const geodesy::EnuOrigin& origin, std::uint64_t seed);

/// Applies a map jump to every VSLAM pose stamped at or after jump.t.
void inject_reinit(std::vector<SensorEvent>& events, const MapJump& jump);

/// `stamp tx ty tz qx qy qz qw`.
void write_truth_tum(std::ostream& out, const TruthSample& s);
/// `stamp px py pz yaw vx vy vz wx wy wz bgx bgy bgz bax bay baz b_ewz`.
void write_truth_state(std::ostream& out, const TruthSample& s);

}  // namespace quatfuse::sim
