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

#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>

namespace quatfuse {

enum class FixType : int { kNone = 0, kGps = 1, kDgps = 2, kRtkFloat = 3, kRtkFixed = 4 };

struct ImuSample {
  double stamp = 0.0;
  Vec3 gyro = Vec3::Zero();
  Vec3 accel = Vec3::Zero();
  /// 0 (no orientation), 2 (roll, pitch) or 3 (roll, pitch, yaw).
  int orientation_dof = 0;
  Vec3 rpy = Vec3::Zero();
  /// Second IMU: fused as a measurement only, never drives propagation.
  bool secondary = false;
};

struct EncoderSample {
  double stamp = 0.0;
  double vx = 0.0;
  double vy = 0.0;
  double wz = 0.0;
};

struct GpsFixSample {
  double stamp = 0.0;
  geodesy::GeodeticCoord coord;
  FixType fix = FixType::kGps;
  double hdop = 1.0;
  double vdop = 1.0;
  int satellites = 10;
  std::optional<Mat3> covariance;
  /// 95% confidence bounds, metres.
  std::optional<double> err_horz;
  std::optional<double> err_vert;
};

/// ENU ground velocity from receiver Doppler.
struct GpsVelocitySample {
  double stamp = 0.0;
  double ve = 0.0;
  double vn = 0.0;
};

/// Body-frame ego velocity (forward, lateral).
struct RadarVelocitySample {
  double stamp = 0.0;
  double vx = 0.0;
  double vy = 0.0;
};

/// Pose in the VSLAM map frame.
struct VslamPoseSample {
  double stamp = 0.0;
  Vec3 position = Vec3::Zero();
  Vec3 rpy = Vec3::Zero();
  /// Variances (x, y, z, roll, pitch, yaw) reported with the pose.
  std::optional<Eigen::Matrix<double, 6, 1>> variances;
};

using SensorEvent =
    std::variant<ImuSample, EncoderSample, GpsFixSample, GpsVelocitySample, RadarVelocitySample, VslamPoseSample>;

double stamp_of(const SensorEvent& e);
const char* kind_of(const SensorEvent& e);
bool is_finite(const SensorEvent& e);

class StreamParseError : public std::runtime_error {
 public:
  StreamParseError(const std::string& what, std::size_t line) : std::runtime_error(what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Event stream text format, one record per line:
///
///   <stamp> imu    gx gy gz ax ay az [roll pitch [yaw]]
///   <stamp> imu2   (same columns as imu)
///   <stamp> enc    vx vy wz
///   <stamp> gps    lat_deg lon_deg alt fix hdop vdop sats [err_h err_v | c00 .. c22]
///   <stamp> gpsvel ve vn
///   <stamp> radar  vx vy
///   <stamp> vslam  x y z roll pitch yaw [var_x var_y var_z var_roll var_pitch var_yaw]
///
/// Line order is arrival order; the stamp is the measurement epoch. Blank
/// lines and lines starting with '#' are skipped. Numbers are written in
/// shortest round-trip form so files reproduce bit-exactly.
std::string format_event(const SensorEvent& e);
SensorEvent parse_event(std::string_view line, std::size_t line_no = 0);

/// Streams records from a text source, tracking line numbers.
class EventReader {
 public:
  explicit EventReader(std::istream& in) : in_(in) {}
  /// Next event, or nullopt at end of input. Throws StreamParseError.
  std::optional<SensorEvent> next();
  std::size_t line() const { return line_; }

 private:
  std::istream& in_;
  std::size_t line_ = 0;
};

}  // namespace quatfuse
