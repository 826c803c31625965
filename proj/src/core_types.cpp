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
#include "quatfuse/core_types.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace quatfuse {

namespace {

Quaternion canonical(Quaternion q) { return q.w < 0.0 ? -q : q; }

}  // namespace

Quaternion Quaternion::from_axis_angle(const Vec3& axis, double angle) {
  const double n = axis.norm();
  if (!(n > 0.0) || !std::isfinite(angle)) {
    if (n == 0.0 && std::isfinite(angle)) return identity();
    throw NumericalError("from_axis_angle: invalid axis or angle");
  }
  const Vec3 u = axis / n;
  const double s = std::sin(0.5 * angle);
  return canonical(Quaternion{std::cos(0.5 * angle), s * u.x(), s * u.y(), s * u.z()}.normalized());
}

Quaternion Quaternion::from_euler(double roll, double pitch, double yaw) {
  const double cr = std::cos(0.5 * roll), sr = std::sin(0.5 * roll);
  const double cp = std::cos(0.5 * pitch), sp = std::sin(0.5 * pitch);
  const double cy = std::cos(0.5 * yaw), sy = std::sin(0.5 * yaw);
  Quaternion q{cr * cp * cy + sr * sp * sy, sr * cp * cy - cr * sp * sy,
               cr * sp * cy + sr * cp * sy, cr * cp * sy - sr * sp * cy};
  return canonical(q.normalized());
}

double Quaternion::norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

Quaternion Quaternion::normalized() const {
  const double n = norm();
  if (!(n > 0.0) || !std::isfinite(n)) throw NumericalError("quaternion with zero or non-finite norm");
  return {w / n, x / n, y / n, z / n};
}

bool Quaternion::is_finite() const {
  return std::isfinite(w) && std::isfinite(x) && std::isfinite(y) && std::isfinite(z);
}

Mat3 Quaternion::to_rotation_matrix() const {
  Mat3 R;
  const double ww = w * w, xx = x * x, yy = y * y, zz = z * z;
  R << ww + xx - yy - zz, 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), ww - xx + yy - zz, 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), ww - xx - yy + zz;
  return R;
}

Vec3 Quaternion::to_euler() const {
  const double roll = std::atan2(2.0 * (w * x + y * z), 1.0 - 2.0 * (x * x + y * y));
  const double sp = std::clamp(2.0 * (w * y - z * x), -1.0, 1.0);
  const double pitch = std::asin(sp);
  const double yaw = std::atan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z));
  return {roll, pitch, yaw};
}

Quaternion quat_mul(const Quaternion& a, const Quaternion& b) {
  Quaternion r{a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
               a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
               a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
               a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w};
  if (!r.is_finite()) throw NumericalError("quat_mul: non-finite input");
  return r.normalized();
}

namespace detail {

Quaternion quat_exp_exact(const Vec3& omega, double dt) {
  const double rate = omega.norm();
  const double theta = 0.5 * rate * dt;
  const double k = std::sin(theta) / rate;
  return Quaternion{std::cos(theta), k * omega.x(), k * omega.y(), k * omega.z()}.normalized();
}

Quaternion quat_exp_small_angle(const Vec3& omega, double dt) {
  const Vec3 h = 0.5 * dt * omega;
  return Quaternion{1.0, h.x(), h.y(), h.z()}.normalized();
}

}  // namespace detail

Quaternion quat_exp(const Vec3& omega, double dt, double epsilon_omega) {
  if (!omega.allFinite() || !std::isfinite(dt)) throw NumericalError("quat_exp: non-finite input");
  if (omega.norm() > epsilon_omega) return detail::quat_exp_exact(omega, dt);
  return detail::quat_exp_small_angle(omega, dt);
}

Vec3 rotate(const Quaternion& q, const Vec3& v) {
  // v' = v + 2w (u x v) + 2 u x (u x v), u = vector part.
  const Vec3 u(q.x, q.y, q.z);
  const Vec3 t = 2.0 * u.cross(v);
  return v + q.w * t + u.cross(t);
}

double rotation_distance(const Quaternion& a, const Quaternion& b) {
  const double d = std::min(1.0, std::abs(a.normalized().dot(b.normalized())));
  return 2.0 * std::acos(d);
}

double wrap_angle(double a) {
  constexpr double kPi = std::numbers::pi;
  double r = std::remainder(a, 2.0 * kPi);  // [-pi, pi]
  if (r <= -kPi) r += 2.0 * kPi;
  return r;
}

StateVector FilterState::flatten() const {
  StateVector s;
  s.segment<3>(idx::kPos) = p;
  s.segment<4>(idx::kQuat) = q.coeffs();
  s.segment<3>(idx::kVel) = v;
  s.segment<3>(idx::kOmega) = omega;
  s.segment<3>(idx::kAccel) = a;
  s.segment<3>(idx::kGyroBias) = b_g;
  s.segment<3>(idx::kAccelBias) = b_a;
  s[idx::kEncoderYawBias] = b_ewz;
  return s;
}

FilterState FilterState::unflatten(const StateVector& s, double stamp) {
  FilterState x;
  x.p = s.segment<3>(idx::kPos);
  x.q = Quaternion::from_coeffs(s.segment<4>(idx::kQuat));
  x.v = s.segment<3>(idx::kVel);
  x.omega = s.segment<3>(idx::kOmega);
  x.a = s.segment<3>(idx::kAccel);
  x.b_g = s.segment<3>(idx::kGyroBias);
  x.b_a = s.segment<3>(idx::kAccelBias);
  x.b_ewz = s[idx::kEncoderYawBias];
  x.stamp = stamp;
  return x;
}

bool FilterState::is_finite() const { return flatten().allFinite() && std::isfinite(stamp); }

void FilterState::check_finite(const char* where) const {
  struct Block {
    const char* name;
    int offset;
    int size;
  };
  static constexpr Block kBlocks[] = {{"p", idx::kPos, 3},           {"q", idx::kQuat, 4},
                                      {"v", idx::kVel, 3},           {"omega", idx::kOmega, 3},
                                      {"a", idx::kAccel, 3},         {"b_g", idx::kGyroBias, 3},
                                      {"b_a", idx::kAccelBias, 3},   {"b_ewz", idx::kEncoderYawBias, 1}};
  const StateVector s = flatten();
  for (const auto& b : kBlocks) {
    if (!s.segment(b.offset, b.size).allFinite()) {
      throw NumericalError(std::string(where) + ": non-finite state component '" + b.name + "'");
    }
  }
  if (!std::isfinite(stamp)) throw NumericalError(std::string(where) + ": non-finite stamp");
}

void ProcessNoiseConfig::validate() const {
  for (double v : {q_position, q_orientation, q_velocity, q_omega, q_accel, q_gyro_bias, q_accel_bias, q_ewz}) {
    if (!(v >= 0.0)) throw std::invalid_argument("process noise intensities must be >= 0");
  }
  if (!(coast_position_inflation >= 1.0)) throw std::invalid_argument("coast_position_inflation must be >= 1");
}

Covariance23 symmetrize(const Covariance23& P) { return 0.5 * (P + P.transpose()); }

}  // namespace quatfuse
