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
#include "quatfuse/measurement_models.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace quatfuse {

namespace {

constexpr double kCi95 = 1.96;

MeasMat diag_of(std::initializer_list<double> sigmas) {
  const int n = static_cast<int>(sigmas.size());
  MeasMat R = MeasMat::Zero(n, n);
  int i = 0;
  for (double s : sigmas) {
    R(i, i) = s * s;
    ++i;
  }
  return R;
}

MeasurementModel make(std::string name, int dim, std::function<MeasVec(const FilterState&)> h, MeasMat R,
                      double gate) {
  MeasurementModel m;
  m.name = std::move(name);
  m.dim = dim;
  m.h = std::move(h);
  m.residual.fill(Residual::kLinear);
  m.R = std::move(R);
  m.R_floor = m.R;
  m.gate_threshold = gate;
  return m;
}

}  // namespace

void GateThresholds::validate() const {
  for (double t : {gps_pos, vslam, heading, encoder, imu, gps_velocity, radar, zupt}) {
    if (!(t > 0.0) || !std::isfinite(t)) throw std::invalid_argument("gate thresholds must be positive");
  }
}

MeasurementModel imu_raw_model(const ImuNoise& noise, double gate, bool bias_enabled) {
  const double sg = noise.gyro_sigma, sa = noise.accel_sigma;
  auto h = [bias_enabled](const FilterState& x) {
    MeasVec z(6);
    const Vec3 g_body = rotate(x.q.conjugate(), Constants::gravity());
    Vec3 w = x.omega, a = x.a + g_body;
    if (bias_enabled) {
      w += x.b_g;
      a += x.b_a;
    }
    z << w, a;
    return z;
  };
  return make("imu", 6, h, diag_of({sg, sg, sg, sa, sa, sa}), gate);
}

MeasurementModel imu_orientation_model(bool has_magnetometer, const ImuNoise& noise, double gate) {
  const int dim = has_magnetometer ? 3 : 2;
  auto h = [dim](const FilterState& x) {
    const Vec3 e = x.q.to_euler();
    MeasVec z = e.head(dim);
    return z;
  };
  const double s = noise.orientation_sigma;
  MeasurementModel m = make(has_magnetometer ? "imu_orientation" : "imu_tilt", dim, h,
                            has_magnetometer ? diag_of({s, s, s}) : diag_of({s, s}), gate);
  for (int j = 0; j < dim; ++j) m.residual[j] = Residual::kAngle;
  return m;
}

EncoderModels encoder_model(bool b_ewz_enabled, const EncoderNoise& noise, double gate, double wz_scale) {
  auto hv = [b_ewz_enabled](const FilterState& x) {
    MeasVec z(3);
    z << x.v.x(), x.v.y(), x.omega.z() - (b_ewz_enabled ? x.b_ewz : 0.0);
    return z;
  };
  EncoderModels out;
  out.velocity =
      make("encoder", 3, hv, diag_of({noise.sigma_v, noise.sigma_v, noise.sigma_wz * std::sqrt(wz_scale)}), gate);
  out.velocity.R_floor = out.velocity.R;

  out.vz = make("encoder_vz", 1, [](const FilterState& x) { return MeasVec::Constant(1, x.v.z()); },
                diag_of({noise.sigma_vz}), gate);
  out.vz.adaptive = true;
  out.az = make("encoder_az", 1, [](const FilterState& x) { return MeasVec::Constant(1, x.a.z()); },
                diag_of({noise.sigma_az}), gate);
  out.az.adaptive = true;
  return out;
}

Mat3 gps_covariance(const GpsFixSample& fix, const GpsConfig& config, std::string* source) {
  if (config.use_gps_fix && fix.covariance && fix.covariance->allFinite()) {
    if (source) *source = "full";
    return 0.5 * (*fix.covariance + fix.covariance->transpose());
  }
  if (config.use_gps_fix && fix.err_horz && fix.err_vert) {
    if (source) *source = "bounds";
    const double sh = *fix.err_horz / kCi95, sv = *fix.err_vert / kCi95;
    return Vec3(sh * sh, sh * sh, sv * sv).asDiagonal();
  }
  if (source) *source = "dop";
  const double vh = config.sigma_xy * config.sigma_xy * fix.hdop * fix.hdop;
  const double vv = config.sigma_z * config.sigma_z * fix.vdop * fix.vdop;
  return Vec3(vh, vh, vv).asDiagonal();
}

std::string gps_quality_check(const GpsFixSample& fix, const GpsConfig& config) {
  if (static_cast<int>(fix.fix) < static_cast<int>(config.min_fix)) return "fix type below minimum";
  if (!(fix.hdop > 0.0) || !(fix.vdop > 0.0)) return "non-positive DOP";
  if (fix.hdop > config.max_hdop) return "HDOP above maximum";
  if (fix.satellites < config.min_satellites) return "too few satellites";
  return {};
}

std::variant<GpsPositionMeasurement, QualityRejected> gps_position_model(const GpsFixSample& fix,
                                                                         const geodesy::EnuOrigin& origin,
                                                                         const LeverArm& lever,
                                                                         const GpsConfig& config) {
  if (!origin.is_set()) throw geodesy::GeodesyError("gps_position_model: origin not set");
  std::string reason = gps_quality_check(fix, config);
  if (!reason.empty()) return QualityRejected{std::move(reason)};

  GpsPositionMeasurement out;
  const Vec3 enu = geodesy::geodetic_to_enu(fix.coord, origin);
  out.z = enu;
  const Mat3 R = gps_covariance(fix, config, &out.covariance_source);
  out.model = gps_position_measurement_model(R, lever, config.gate);
  return out;
}

MeasurementModel gps_position_measurement_model(const Mat3& R, const LeverArm& lever, double gate) {
  const bool use_lever = lever.heading_validated && lever.offset.squaredNorm() > 0.0;
  const Vec3 ell = lever.offset;
  auto h = [use_lever, ell](const FilterState& x) {
    MeasVec z = use_lever ? Vec3(x.p + rotate(x.q, ell)) : x.p;
    return z;
  };
  return make("gps", 3, h, R, gate);
}

MeasurementModel gps_heading_measurement_model(double sigma_psi, double gate) {
  MeasurementModel m = make("gps_heading", 1,
                            [](const FilterState& x) { return MeasVec::Constant(1, x.q.to_euler().z()); },
                            diag_of({sigma_psi}), gate);
  m.residual[0] = Residual::kAngle;
  return m;
}

std::optional<HeadingMeasurement> gps_heading_model(double t0, const Vec3& p0, double t1, const Vec3& p1,
                                                    double sigma_pos, const HeadingConfig& config) {
  const double dt = t1 - t0;
  if (!(dt > 0.0)) return std::nullopt;
  const Eigen::Vector2d d = (p1 - p0).head<2>();
  const double speed = d.norm() / dt;
  if (!(speed >= config.min_speed)) return std::nullopt;
  // Difference of two independent fixes.
  const double sigma_v = std::sqrt(2.0) * sigma_pos / dt;
  const double sigma_psi = sigma_v / speed;
  if (!(sigma_psi <= config.max_sigma)) return std::nullopt;

  HeadingMeasurement m;
  m.stamp = 0.5 * (t0 + t1);
  m.speed = speed;
  m.z = MeasVec::Constant(1, std::atan2(d.y(), d.x()));
  m.model = gps_heading_measurement_model(sigma_psi, config.gate);
  return m;
}

MeasurementModel gps_velocity_model(double sigma, double gate) {
  auto h = [](const FilterState& x) {
    MeasVec z = rotate(x.q, x.v).head<2>();
    return z;
  };
  return make("gps_velocity", 2, h, diag_of({sigma, sigma}), gate);
}

MeasurementModel radar_velocity_model(double sigma, double gate) {
  auto h = [](const FilterState& x) {
    MeasVec z = x.v.head<2>();
    return z;
  };
  return make("radar", 2, h, diag_of({sigma, sigma}), gate);
}

MeasurementModel vslam_model(const VslamNoise& noise, double gate,
                             const std::optional<Eigen::Matrix<double, 6, 1>>& variances) {
  auto h = [](const FilterState& x) {
    MeasVec z(6);
    z << x.p, x.q.to_euler();
    return z;
  };
  const double fp = noise.floor_pos * noise.floor_pos, fo = noise.floor_orient * noise.floor_orient;
  MeasMat R = diag_of({noise.sigma_pos, noise.sigma_pos, noise.sigma_pos, noise.sigma_orient, noise.sigma_orient,
                       noise.sigma_orient});
  if (variances && variances->allFinite()) {
    for (int i = 0; i < 6; ++i) R(i, i) = (*variances)[i];
  }
  MeasMat floor = MeasMat::Zero(6, 6);
  for (int i = 0; i < 6; ++i) {
    floor(i, i) = i < 3 ? fp : fo;
    R(i, i) = std::max(R(i, i), floor(i, i));
  }
  MeasurementModel m = make("vslam", 6, h, R, gate);
  m.R_floor = floor;
  for (int j = 3; j < 6; ++j) m.residual[j] = Residual::kAngle;
  return m;
}

bool near_euler_singularity(double pitch) {
  return std::abs(std::abs(pitch) - 0.5 * std::numbers::pi) < kEulerSingularityMargin;
}

MeasurementModel zupt_model(double sigma, double gate) {
  auto h = [](const FilterState& x) {
    MeasVec z = x.v;
    return z;
  };
  return make("zupt", 3, h, diag_of({sigma, sigma, sigma}), gate);
}

bool implied_speed_precheck(const Vec3& z_pos, const Vec3& predicted_pos, double dt_since_last_accept,
                            double max_speed, bool enabled) {
  if (!enabled) return true;
  const double dist = (z_pos - predicted_pos).norm();
  if (!(dt_since_last_accept > 0.0)) return dist == 0.0;
  return dist / dt_since_last_accept <= max_speed;
}

Eigen::Matrix<double, 1, 4> yaw_jacobian(const Quaternion& q) {
  const double num = 2.0 * (q.w * q.z + q.x * q.y);
  const double den = 1.0 - 2.0 * (q.y * q.y + q.z * q.z);
  const double r2 = num * num + den * den;
  Eigen::Matrix<double, 1, 4> dnum, dden;
  dnum << 2.0 * q.z, 2.0 * q.y, 2.0 * q.x, 2.0 * q.w;
  dden << 0.0, 0.0, -4.0 * q.y, -4.0 * q.z;
  if (r2 <= 0.0) return Eigen::Matrix<double, 1, 4>::Zero();
  return (den * dnum - num * dden) / r2;
}

double yaw_variance(const Quaternion& q, const Covariance23& P) {
  const Eigen::Matrix<double, 1, 4> J = yaw_jacobian(q);
  return (J * P.block<4, 4>(idx::kQuat, idx::kQuat) * J.transpose())(0, 0);
}

}  // namespace quatfuse
