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
#include "quatfuse/measurement_model.hpp"
#include "quatfuse/sensor_events.hpp"

#include <optional>
#include <string>
#include <variant>

namespace quatfuse {

/// Chi-squared gate thresholds per path.
struct GateThresholds {
  double gps_pos = 16.27;       // 3 DOF, 0.999
  double vslam = 22.46;         // 6 DOF, 0.999
  double heading = 10.83;       // 1 DOF, 0.999
  double encoder = 11.34;       // 3 DOF, 0.99
  double imu = 15.09;           // 6 DOF, 0.98
  double gps_velocity = 13.82;  // 2 DOF, 0.999
  double radar = 9.21;          // 2 DOF, 0.99
  double zupt = 16.27;

  void validate() const;
};

struct ImuNoise {
  double gyro_sigma = 0.01;         // rad/s
  double accel_sigma = 0.1;         // m/s^2
  double orientation_sigma = 0.02;  // rad
};

struct EncoderNoise {
  double sigma_v = 0.05;   // m/s
  double sigma_wz = 0.02;  // rad/s
  double sigma_vz = 0.05;  // m/s, VZ constraint floor
  double sigma_az = 0.5;   // m/s^2, AZ constraint floor
};

/// Raw gyro + accelerometer: h = (omega + b_g, a + b_a + R(q)^T g).
/// With `bias_enabled` false the bias terms are left out.
MeasurementModel imu_raw_model(const ImuNoise& noise, double gate, bool bias_enabled = true);

/// (roll, pitch, yaw) with a magnetometer, (roll, pitch) without.
MeasurementModel imu_orientation_model(bool has_magnetometer, const ImuNoise& noise, double gate);

struct EncoderModels {
  MeasurementModel velocity;  // (v_x, v_y, omega_z - b_ewz)
  MeasurementModel vz;        // v_z = 0
  MeasurementModel az;        // a_z = 0
};

/// `wz_scale` multiplies the omega_z noise variance (coast weighting).
EncoderModels encoder_model(bool b_ewz_enabled, const EncoderNoise& noise, double gate, double wz_scale = 1.0);

struct GpsConfig {
  FixType min_fix = FixType::kGps;
  double max_hdop = 5.0;
  int min_satellites = 4;
  double sigma_xy = 2.5;  // m, at HDOP 1
  double sigma_z = 5.0;   // m, at VDOP 1
  /// When false, receiver covariance and error bounds are ignored and the
  /// DOP model is always used.
  bool use_gps_fix = true;
  double gate = 16.27;
};

/// Body-frame antenna offset, applied only once heading is validated.
struct LeverArm {
  Vec3 offset = Vec3::Zero();
  bool heading_validated = false;
};

struct GpsPositionMeasurement {
  MeasVec z;
  MeasurementModel model;
  /// Which covariance source was used: "full", "bounds" or "dop".
  std::string covariance_source;
};

struct QualityRejected {
  std::string reason;
};

/// Measurement noise for a fix. Priority: full covariance, then 95% error
/// bounds, then diag(sxy^2 hdop^2, sxy^2 hdop^2, sz^2 vdop^2).
Mat3 gps_covariance(const GpsFixSample& fix, const GpsConfig& config, std::string* source = nullptr);

/// Empty string when the fix passes the quality gate.
std::string gps_quality_check(const GpsFixSample& fix, const GpsConfig& config);

/// h = p, or p + R(q) lever once the lever arm is validated.
MeasurementModel gps_position_measurement_model(const Mat3& R, const LeverArm& lever, double gate);

std::variant<GpsPositionMeasurement, QualityRejected> gps_position_model(const GpsFixSample& fix,
                                                                         const geodesy::EnuOrigin& origin,
                                                                         const LeverArm& lever,
                                                                         const GpsConfig& config);

struct HeadingConfig {
  double min_speed = 0.5;     // m/s
  double baseline_s = 1.0;    // time between the two fixes
  double max_sigma = 0.5;     // rad, weaker headings are not emitted
  double gate = 10.83;
};

struct HeadingMeasurement {
  double stamp = 0.0;  // midpoint of the baseline
  MeasVec z;
  MeasurementModel model;
  double speed = 0.0;
};

/// Course over ground from two ENU fixes. `sigma_pos` is the horizontal
/// standard deviation of each fix. Yaw is 0 due east, counterclockwise
/// positive. Returns nullopt below the speed threshold or when the
/// resulting heading is too uncertain.
std::optional<HeadingMeasurement> gps_heading_model(double t0, const Vec3& p0, double t1, const Vec3& p1,
                                                    double sigma_pos, const HeadingConfig& config);

/// 1-DOF yaw with an angle-wrapped residual.
MeasurementModel gps_heading_measurement_model(double sigma_psi, double gate);

/// World-frame (east, north) velocity, R(q) v projected.
MeasurementModel gps_velocity_model(double sigma, double gate);

/// Body-frame (v_x, v_y).
MeasurementModel radar_velocity_model(double sigma, double gate);

struct VslamNoise {
  double sigma_pos = 0.05;
  double sigma_orient = 0.01;
  double floor_pos = 0.01;
  double floor_orient = 0.001;
};

/// Position plus (roll, pitch, yaw). Per-message variances are used when
/// present, with diagonals floored.
MeasurementModel vslam_model(const VslamNoise& noise, double gate,
                             const std::optional<Eigen::Matrix<double, 6, 1>>& variances = std::nullopt);

/// Pitch within this distance of +-90 deg makes Euler angles unusable.
inline constexpr double kEulerSingularityMargin = 0.017453292519943295;  // 1 deg
bool near_euler_singularity(double pitch);

/// h = v, z = 0.
MeasurementModel zupt_model(double sigma, double gate);

/// False when |z - p_hat| / dt exceeds max_speed. Always true when disabled.
bool implied_speed_precheck(const Vec3& z_pos, const Vec3& predicted_pos, double dt_since_last_accept,
                            double max_speed, bool enabled = true);

/// d(yaw)/dq at q, used to project the quaternion covariance onto yaw.
Eigen::Matrix<double, 1, 4> yaw_jacobian(const Quaternion& q);
double yaw_variance(const Quaternion& q, const Covariance23& P);

}  // namespace quatfuse
