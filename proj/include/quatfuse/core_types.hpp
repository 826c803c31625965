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

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <stdexcept>
#include <string>

namespace quatfuse {

/// Thrown when a filter quantity becomes NaN/Inf or a factorization fails.
/// Never swallowed inside the library.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kStateDim = 23;
inline constexpr int kSigmaCount = 2 * kStateDim + 1;

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using StateVector = Eigen::Matrix<double, kStateDim, 1>;
using Covariance23 = Eigen::Matrix<double, kStateDim, kStateDim>;

/// Offsets of each block inside the flattened state.
namespace idx {
inline constexpr int kPos = 0;
inline constexpr int kQuat = 3;  // w, x, y, z
inline constexpr int kVel = 7;
inline constexpr int kOmega = 10;
inline constexpr int kAccel = 13;
inline constexpr int kGyroBias = 16;
inline constexpr int kAccelBias = 19;
inline constexpr int kEncoderYawBias = 22;
}  // namespace idx

struct Constants {
  static constexpr double kGravity = 9.80665;
  double epsilon_omega = 1e-8;
  double epsilon_pd = 1e-9;

  static Vec3 gravity() { return {0.0, 0.0, kGravity}; }
};

/// Unit quaternion, Hamilton convention. `a * b` rotates by b first, then a.
struct Quaternion {
  double w = 1.0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  static Quaternion identity() { return {}; }
  /// Canonical (w >= 0) rotation by `angle` about `axis`.
  static Quaternion from_axis_angle(const Vec3& axis, double angle);
  /// ZYX convention: yaw about z, then pitch about y, then roll about x.
  static Quaternion from_euler(double roll, double pitch, double yaw);

  double norm() const;
  Quaternion normalized() const;
  Quaternion conjugate() const { return {w, -x, -y, -z}; }
  Quaternion operator-() const { return {-w, -x, -y, -z}; }
  double dot(const Quaternion& o) const { return w * o.w + x * o.x + y * o.y + z * o.z; }
  bool is_finite() const;

  Mat3 to_rotation_matrix() const;
  /// Returns (roll, pitch, yaw), ZYX. Pitch is clamped to [-pi/2, pi/2].
  Vec3 to_euler() const;

  Eigen::Vector4d coeffs() const { return {w, x, y, z}; }
  static Quaternion from_coeffs(const Eigen::Vector4d& c) { return {c[0], c[1], c[2], c[3]}; }
};

Quaternion quat_mul(const Quaternion& a, const Quaternion& b);
inline Quaternion operator*(const Quaternion& a, const Quaternion& b) { return quat_mul(a, b); }

/// Rotation by |omega|*dt about omega's axis. Throws NumericalError on
/// non-finite input.
Quaternion quat_exp(const Vec3& omega, double dt, double epsilon_omega = 1e-8);

namespace detail {
// Both branches of the exponential map, exposed for threshold testing.
Quaternion quat_exp_exact(const Vec3& omega, double dt);
Quaternion quat_exp_small_angle(const Vec3& omega, double dt);
}  // namespace detail

/// R(q) v.
Vec3 rotate(const Quaternion& q, const Vec3& v);

/// Angular distance in SO(3) between two rotations (radians, in [0, pi]).
double rotation_distance(const Quaternion& a, const Quaternion& b);

/// Wraps an angle into (-pi, pi].
double wrap_angle(double a);

struct FilterState {
  Vec3 p = Vec3::Zero();
  Quaternion q;
  Vec3 v = Vec3::Zero();
  Vec3 omega = Vec3::Zero();
  Vec3 a = Vec3::Zero();
  Vec3 b_g = Vec3::Zero();
  Vec3 b_a = Vec3::Zero();
  double b_ewz = 0.0;
  double stamp = 0.0;

  StateVector flatten() const;
  static FilterState unflatten(const StateVector& s, double stamp = 0.0);

  bool is_finite() const;
  /// Throws NumericalError naming the first non-finite component.
  void check_finite(const char* where) const;
};

/// Random-walk intensities, per axis, per second.
struct ProcessNoiseConfig {
  double q_position = 1e-2;
  double q_orientation = 1e-6;
  double q_velocity = 1e-1;
  double q_omega = 1.0;
  double q_accel = 5.0;
  double q_gyro_bias = 1e-8;
  double q_accel_bias = 1e-6;
  double q_ewz = 1e-8;
  double coast_position_inflation = 10.0;

  /// Throws std::invalid_argument when any entry is negative or the
  /// inflation is below 1.
  void validate() const;
};

/// Symmetric part, (P + P^T) / 2.
Covariance23 symmetrize(const Covariance23& P);

}  // namespace quatfuse
