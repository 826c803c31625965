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

#include "quatfuse/adaptive_noise.hpp"
#include "quatfuse/geodesy.hpp"
#include "quatfuse/measurement_models.hpp"
#include "quatfuse/retrodiction.hpp"
#include "quatfuse/sensor_events.hpp"
#include "quatfuse/text_io.hpp"
#include "quatfuse/ukf_engine.hpp"

#include <array>
#include <cstdint>
#include <deque>
#include <iosfwd>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace quatfuse {

enum class Path : int {
  kImu = 0,
  kImuOrientation,
  kImu2,
  kImu2Orientation,
  kEncoder,
  kVz,
  kAz,
  kGps,
  kGpsHeading,
  kGpsVelocity,
  kRadar,
  kVslam,
  kZupt,
  kCount
};
const char* path_name(Path p);

struct PipelineConfig {
  UkfParams ukf;
  ProcessNoiseConfig noise;
  double epsilon_omega = 1e-8;

  // Initial state and covariance.
  Vec3 init_position = Vec3::Zero();
  double init_yaw = 0.0;
  double init_var_pos = 1.0;
  double init_var_quat = 0.1;
  double init_var_vel = 0.25;
  double init_var_omega = 0.1;
  double init_var_accel = 1.0;
  double init_var_bias = 1e-4;
  double init_var_ewz = 1e-4;

  ImuNoise imu;
  bool imu_raw_enabled = true;
  bool imu_orientation_enabled = true;
  bool imu_has_magnetometer = false;
  bool imu2_enabled = false;

  bool encoder_enabled = true;
  EncoderNoise encoder;
  bool constraints_enabled = true;

  bool gnss_enabled = true;
  GpsConfig gnss;
  Vec3 lever_arm = Vec3::Zero();
  double lever_yaw_variance = 0.05;  // rad^2
  double lever_hold_s = 5.0;
  bool heading_enabled = true;
  HeadingConfig heading;
  bool gps_velocity_enabled = true;
  double gps_velocity_sigma = 0.1;

  bool radar_enabled = true;
  double radar_sigma = 0.1;

  bool vslam_enabled = true;
  VslamNoise vslam;
  int vslam_reinit_n = 10;

  bool adaptive_gnss = false;
  double adaptive_gnss_init_xy = 2.5;
  double adaptive_gnss_init_z = 5.0;
  double adaptive_gnss_floor_xy = 2.5;
  double adaptive_gnss_floor_z = 5.0;
  bool adaptive_constraints = true;
  int adaptive_window = 50;
  double adaptive_alpha = 0.01;

  bool zupt_enabled = true;
  double zupt_speed = 0.05;
  double zupt_rate = 0.05;
  double zupt_hysteresis = 1.5;
  double zupt_sigma = 0.01;

  double coast_enter_s = 5.0;
  double coast_relax = 2.0;
  double coast_encoder_wz_scale = 0.5;
  bool coast_freeze_ewz = true;

  GateThresholds gates;
  bool precheck_enabled = false;
  double precheck_max_speed = 20.0;

  bool retrodiction_enabled = true;
  int retrodiction_capacity = 100;

  bool bias_enabled = true;
  bool b_ewz_enabled = true;

  /// Reads every key; throws ConfigError on unknown keys or bad values.
  static PipelineConfig from_doc(const KeyValueDoc& doc);
  static PipelineConfig load(const std::string& path);
  /// Full resolved configuration, one `key = value` per line.
  std::string to_text() const;
  std::uint64_t hash() const;
  /// Turns one feature off for an ablation run: bias, adaptive,
  /// retrodiction, zupt, b_ewz, pregate, gps, encoder, vslam, radar,
  /// heading, gpsvel, imu-orientation, coast.
  void apply_toggle(const std::string& name);
  void validate() const;
};

/// One measurement attempt.
struct PathResult {
  Path path = Path::kImu;
  double stamp = 0.0;
  bool accepted = false;
  bool singular = false;
  double d2 = 0.0;
  double threshold = 0.0;
  int dim = 0;
  /// Empty, or why the engine was not consulted / how the result arose.
  std::string note;
  std::size_t steps_replayed = 0;
};

struct StepReport {
  double stamp = 0.0;
  std::string kind;
  /// True exactly once per primary IMU event.
  bool state_report = false;
  FilterState x;
  Vec3 position_sigma = Vec3::Zero();
  bool coast_active = false;
  bool zupt_active = false;
  std::vector<PathResult> results;
  std::vector<std::string> diagnostics;
};

/// One line per path result, plus a state line for IMU reports.
std::string format_report(const StepReport& r);

struct CoastState {
  double last_accept = 0.0;
  bool active = false;
};

/// Map frame to filter frame: p_f = R p_m + t, q_f = q_R * q_m.
struct VslamAnchor {
  bool initialized = false;
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();
  int consecutive_rejections = 0;
  int reanchors = 0;
};

class ZuptTrigger {
 public:
  ZuptTrigger(double speed_threshold = 0.05, double rate_threshold = 0.05, double hysteresis = 1.5)
      : speed_(speed_threshold), rate_(rate_threshold), hysteresis_(hysteresis) {}

  /// Engages when both signals are below threshold; once engaged, holds
  /// until either exceeds hysteresis * threshold.
  bool evaluate(double encoder_speed, double imu_rate);
  bool active() const { return active_; }
  void set_active(bool a) { active_ = a; }

 private:
  double speed_;
  double rate_;
  double hysteresis_;
  bool active_ = false;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/**
 * Event-driven filter node. Events are processed strictly in the order
 * they are ingested; delayed measurements go through the snapshot ring.
 *
 * `ingest` may be called from several threads; calls are serialised.
 */
class FusionPipeline {
 public:
  explicit FusionPipeline(PipelineConfig config);

  StepReport ingest(const SensorEvent& event);

  /// Back to the configured initial state. The next accepted fix sets a
  /// new origin.
  void reset();

  void save_checkpoint(std::ostream& out) const;
  /// Throws CheckpointError on format problems or a config hash mismatch.
  void load_checkpoint(std::istream& in);

  const PipelineConfig& config() const { return config_; }
  const FilterState& state() const { return x_; }
  const Covariance23& covariance() const { return P_; }
  const geodesy::EnuOrigin& origin() const { return origin_; }
  const CoastState& coast() const { return coast_; }
  const VslamAnchor& anchor() const { return anchor_; }
  const StateSnapshotRing& ring() const { return ring_; }
  const AdaptiveEstimator& gps_noise() const { return gps_adaptive_; }
  const AdaptiveEstimator& vz_noise() const { return vz_adaptive_; }
  const AdaptiveEstimator& az_noise() const { return az_adaptive_; }
  bool lever_validated() const { return lever_validated_; }
  bool zupt_active() const { return zupt_.active(); }
  /// Number of predict and update calls made into the engine.
  std::uint64_t engine_calls() const { return engine_calls_; }
  const std::map<std::string, std::uint64_t>& counters() const { return counters_; }
  std::uint64_t counter(const std::string& name) const;

 private:
  StepReport handle(const ImuSample& s);
  StepReport handle(const EncoderSample& s);
  StepReport handle(const GpsFixSample& s);
  StepReport handle(const GpsVelocitySample& s);
  StepReport handle(const RadarVelocitySample& s);
  StepReport handle(const VslamPoseSample& s);

  void initialize_state();
  void update_coast(double now);
  UkfParams current_params() const;
  PropagationStep current_propagation(double dt) const;
  std::shared_ptr<const MeasurementModel> build_model(Path path, const MeasMat& R, const Eigen::Vector4d& aux) const;
  PreparedMeasurement prepare(Path path, double stamp, const MeasVec& z, const MeasMat& R, double threshold,
                              const Eigen::Vector4d& aux = Eigen::Vector4d::Zero()) const;
  PathResult route(const PreparedMeasurement& m, UpdateOutcome* outcome = nullptr);
  void imu_measurements(const ImuSample& s, double stamp, bool secondary, std::vector<PreparedMeasurement>& out) const;
  void update_lever(double now);
  FilterState state_at(double stamp) const;
  void bump(const std::string& name) { ++counters_[name]; }
  void finish(StepReport& r) const;

  PipelineConfig config_;
  std::uint64_t config_hash_ = 0;
  mutable std::mutex mutex_;

  bool clock_started_ = false;
  double last_imu_stamp_ = 0.0;
  FilterState x_;
  Covariance23 P_ = Covariance23::Zero();
  geodesy::EnuOrigin origin_;
  StateSnapshotRing ring_;
  AdaptiveEstimator gps_adaptive_;
  AdaptiveEstimator vz_adaptive_;
  AdaptiveEstimator az_adaptive_;
  CoastState coast_;
  ZuptTrigger zupt_;
  std::optional<double> last_encoder_speed_;
  bool lever_validated_ = false;
  std::optional<double> lever_low_since_;
  struct FixRecord {
    double stamp;
    Vec3 enu;
    double sigma;
  };
  std::deque<FixRecord> fix_history_;
  std::optional<double> last_gps_accept_;
  VslamAnchor anchor_;
  std::uint64_t engine_calls_ = 0;
  std::map<std::string, std::uint64_t> counters_;
};

}  // namespace quatfuse
