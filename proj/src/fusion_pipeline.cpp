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
#include "quatfuse/fusion_pipeline.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>

namespace quatfuse {

namespace {

MeasMat diag3(double a, double b, double c) {
  MeasMat R = MeasMat::Zero(3, 3);
  R(0, 0) = a;
  R(1, 1) = b;
  R(2, 2) = c;
  return R;
}

MeasMat scalar_R(double var) { return MeasMat::Constant(1, 1, var); }

Mat3 rotation_of(const Quaternion& q) { return q.to_rotation_matrix(); }

Quaternion quaternion_of(const Mat3& R) {
  Eigen::Quaterniond e(R);
  e.normalize();
  Quaternion q{e.w(), e.x(), e.y(), e.z()};
  return q.w < 0.0 ? -q : q;
}

}  // namespace

const char* path_name(Path p) {
  switch (p) {
    case Path::kImu: return "imu";
    case Path::kImuOrientation: return "imu_orientation";
    case Path::kImu2: return "imu2";
    case Path::kImu2Orientation: return "imu2_orientation";
    case Path::kEncoder: return "encoder";
    case Path::kVz: return "vz";
    case Path::kAz: return "az";
    case Path::kGps: return "gps";
    case Path::kGpsHeading: return "gps_heading";
    case Path::kGpsVelocity: return "gps_velocity";
    case Path::kRadar: return "radar";
    case Path::kVslam: return "vslam";
    case Path::kZupt: return "zupt";
    case Path::kCount: break;
  }
  return "unknown";
}

std::string format_report(const StepReport& r) {
  std::string out;
  if (r.state_report) {
    out += "state " + format_double(r.stamp);
    const StateVector s = r.x.flatten();
    for (int i = 0; i < kStateDim; ++i) out += ' ' + format_double(s[i]);
    for (int i = 0; i < 3; ++i) out += ' ' + format_double(r.position_sigma[i]);
    out += r.coast_active ? " coast" : " nominal";
    out += r.zupt_active ? " zupt\n" : " moving\n";
  }
  for (const PathResult& p : r.results) {
    out += "meas " + format_double(p.stamp) + ' ' + path_name(p.path) + (p.accepted ? " accept " : " reject ") +
           format_double(p.d2) + ' ' + std::to_string(p.dim) + ' ' + format_double(p.threshold) + ' ' +
           std::to_string(p.steps_replayed) + ' ' + (p.note.empty() ? "-" : p.note) + '\n';
  }
  for (const std::string& d : r.diagnostics) out += "diag " + format_double(r.stamp) + ' ' + d + '\n';
  return out;
}

bool ZuptTrigger::evaluate(double encoder_speed, double imu_rate) {
  if (active_) {
    if (encoder_speed > hysteresis_ * speed_ || imu_rate > hysteresis_ * rate_) active_ = false;
  } else {
    active_ = encoder_speed < speed_ && imu_rate < rate_;
  }
  return active_;
}

FusionPipeline::FusionPipeline(PipelineConfig config)
    : config_(std::move(config)),
      ring_(static_cast<std::size_t>(std::max(config_.retrodiction_capacity, 1))),
      zupt_(config_.zupt_speed, config_.zupt_rate, config_.zupt_hysteresis) {
  config_.validate();
  config_hash_ = config_.hash();
  const auto window = static_cast<std::size_t>(config_.adaptive_window);
  const double ixy = config_.adaptive_gnss_init_xy, iz = config_.adaptive_gnss_init_z;
  const double fxy = config_.adaptive_gnss_floor_xy, fz = config_.adaptive_gnss_floor_z;
  gps_adaptive_ = AdaptiveEstimator(diag3(ixy * ixy, ixy * ixy, iz * iz), diag3(fxy * fxy, fxy * fxy, fz * fz),
                                    window, config_.adaptive_alpha, config_.adaptive_gnss);
  const double svz = config_.encoder.sigma_vz, saz = config_.encoder.sigma_az;
  vz_adaptive_ = AdaptiveEstimator(scalar_R(svz * svz), scalar_R(svz * svz), window, config_.adaptive_alpha,
                                   config_.adaptive_constraints);
  az_adaptive_ = AdaptiveEstimator(scalar_R(saz * saz), scalar_R(saz * saz), window, config_.adaptive_alpha,
                                   config_.adaptive_constraints);
  initialize_state();
}

void FusionPipeline::initialize_state() {
  x_ = FilterState{};
  x_.p = config_.init_position;
  x_.q = Quaternion::from_euler(0.0, 0.0, config_.init_yaw);
  StateVector d;
  d.segment<3>(idx::kPos).setConstant(config_.init_var_pos);
  d.segment<4>(idx::kQuat).setConstant(config_.init_var_quat);
  d.segment<3>(idx::kVel).setConstant(config_.init_var_vel);
  d.segment<3>(idx::kOmega).setConstant(config_.init_var_omega);
  d.segment<3>(idx::kAccel).setConstant(config_.init_var_accel);
  d.segment<3>(idx::kGyroBias).setConstant(config_.init_var_bias);
  d.segment<3>(idx::kAccelBias).setConstant(config_.init_var_bias);
  d[idx::kEncoderYawBias] = config_.init_var_ewz;
  P_ = condition_covariance(Covariance23(d.asDiagonal()), x_.q, current_params());
}

void FusionPipeline::reset() {
  std::lock_guard<std::mutex> lock(mutex_);
  clock_started_ = false;
  last_imu_stamp_ = 0.0;
  coast_ = CoastState{};
  origin_ = geodesy::EnuOrigin{};
  ring_.clear();
  gps_adaptive_.reset();
  vz_adaptive_.reset();
  az_adaptive_.reset();
  zupt_.set_active(false);
  last_encoder_speed_.reset();
  lever_validated_ = false;
  lever_low_since_.reset();
  fix_history_.clear();
  last_gps_accept_.reset();
  anchor_ = VslamAnchor{};
  counters_.clear();
  initialize_state();
}

std::uint64_t FusionPipeline::counter(const std::string& name) const {
  const auto it = counters_.find(name);
  return it == counters_.end() ? 0 : it->second;
}

PropagationStep FusionPipeline::current_propagation(double dt) const {
  PropagationStep step;
  step.dt = dt;
  step.noise = config_.noise;
  step.coast_active = coast_.active;
  step.epsilon_omega = config_.epsilon_omega;
  step.frozen.gyro_bias = !config_.bias_enabled;
  step.frozen.accel_bias = !config_.bias_enabled;
  step.frozen.encoder_yaw_bias = !config_.b_ewz_enabled || (coast_.active && config_.coast_freeze_ewz);
  return step;
}

UkfParams FusionPipeline::current_params() const {
  UkfParams p = config_.ukf;
  p.frozen = current_propagation(0.01).frozen.mask();
  return p;
}

void FusionPipeline::update_coast(double now) {
  coast_.active = config_.gnss_enabled && (now - coast_.last_accept > config_.coast_enter_s);
}

std::shared_ptr<const MeasurementModel> FusionPipeline::build_model(Path path, const MeasMat& R,
                                                                    const Eigen::Vector4d& aux) const {
  const GateThresholds& g = config_.gates;
  MeasurementModel m;
  switch (path) {
    case Path::kImu:
    case Path::kImu2:
      m = imu_raw_model(config_.imu, g.imu, aux[0] != 0.0);
      break;
    case Path::kImuOrientation:
    case Path::kImu2Orientation:
      m = imu_orientation_model(R.rows() == 3, config_.imu, g.imu);
      break;
    case Path::kEncoder:
      m = encoder_model(aux[0] != 0.0, config_.encoder, g.encoder).velocity;
      break;
    case Path::kVz:
      m = encoder_model(false, config_.encoder, g.encoder).vz;
      break;
    case Path::kAz:
      m = encoder_model(false, config_.encoder, g.encoder).az;
      break;
    case Path::kGps:
      m = gps_position_measurement_model(Mat3::Identity(), LeverArm{aux.tail<3>(), aux[0] != 0.0}, g.gps_pos);
      break;
    case Path::kGpsHeading:
      m = gps_heading_measurement_model(1.0, g.heading);
      break;
    case Path::kGpsVelocity:
      m = gps_velocity_model(1.0, g.gps_velocity);
      break;
    case Path::kRadar:
      m = radar_velocity_model(1.0, g.radar);
      break;
    case Path::kVslam:
      m = vslam_model(config_.vslam, g.vslam);
      break;
    case Path::kZupt:
      m = zupt_model(config_.zupt_sigma, g.zupt);
      break;
    case Path::kCount:
      throw std::invalid_argument("build_model: bad path");
  }
  if (R.rows() != m.dim || R.cols() != m.dim) throw std::invalid_argument("build_model: R has wrong size");
  m.R = R;
  m.R_floor = MeasMat::Zero(m.dim, m.dim);
  return std::make_shared<const MeasurementModel>(std::move(m));
}

PreparedMeasurement FusionPipeline::prepare(Path path, double stamp, const MeasVec& z, const MeasMat& R,
                                            double threshold, const Eigen::Vector4d& aux) const {
  PreparedMeasurement m;
  m.stamp = stamp;
  m.z = z;
  m.model = build_model(path, R, aux);
  m.threshold = threshold;
  m.tag = static_cast<int>(path);
  m.aux = aux;
  return m;
}

PathResult FusionPipeline::route(const PreparedMeasurement& m, UpdateOutcome* outcome) {
  PathResult r;
  r.path = static_cast<Path>(m.tag);
  r.stamp = m.stamp;
  r.dim = m.model->dim;
  r.threshold = m.threshold;
  UpdateOutcome o;
  if (config_.retrodiction_enabled) {
    const ReplayOutcome ro = ring_.apply_delayed(m, x_, P_, current_params());
    switch (ro.status) {
      case ReplayStatus::kDropped:
        bump("dropped_stale");
        r.note = "stale";
        return r;
      case ReplayStatus::kEmptyBuffer:
        bump("applied_without_history");
        r.note = "no_history";
        break;
      case ReplayStatus::kReplayed:
        bump("replays");
        r.note = "replayed";
        break;
      case ReplayStatus::kDirect:
        break;
    }
    engine_calls_ += 1 + 2 * ro.steps_replayed;
    r.steps_replayed = ro.steps_replayed;
    o = ro.update;
  } else {
    ++engine_calls_;
    o = update(x_, P_, m.z, *m.model, current_params(), m.threshold);
  }
  r.accepted = o.accepted;
  r.singular = o.singular;
  r.d2 = o.d2;
  if (o.singular && r.note.empty()) r.note = "singular";
  if (outcome) *outcome = std::move(o);
  return r;
}

FilterState FusionPipeline::state_at(double stamp) const {
  if (config_.retrodiction_enabled && !ring_.empty()) {
    const std::size_t k = ring_.at_or_before(stamp);
    if (k < ring_.size()) return ring_.at(k).x;
  }
  return x_;
}

void FusionPipeline::finish(StepReport& r) const {
  r.x = x_;
  r.position_sigma = P_.diagonal().segment<3>(idx::kPos).cwiseMax(0.0).cwiseSqrt();
  r.coast_active = coast_.active;
  r.zupt_active = zupt_.active();
}

StepReport FusionPipeline::ingest(const SensorEvent& event) {
  std::lock_guard<std::mutex> lock(mutex_);
  if (!is_finite(event)) {
    StepReport r;
    r.stamp = stamp_of(event);
    r.kind = kind_of(event);
    r.diagnostics.push_back(std::string("non-finite ") + r.kind + " sample rejected");
    bump("rejected_non_finite");
    finish(r);
    return r;
  }
  return std::visit([this](const auto& s) { return handle(s); }, event);
}

void FusionPipeline::imu_measurements(const ImuSample& s, double stamp, bool secondary,
                                      std::vector<PreparedMeasurement>& out) const {
  if (config_.imu_raw_enabled) {
    MeasVec z(6);
    z << s.gyro, s.accel;
    const double vg = config_.imu.gyro_sigma * config_.imu.gyro_sigma;
    const double va = config_.imu.accel_sigma * config_.imu.accel_sigma;
    MeasMat R = MeasMat::Zero(6, 6);
    R.diagonal() << vg, vg, vg, va, va, va;
    Eigen::Vector4d aux = Eigen::Vector4d::Zero();
    aux[0] = config_.bias_enabled ? 1.0 : 0.0;
    out.push_back(prepare(secondary ? Path::kImu2 : Path::kImu, stamp, z, R, config_.gates.imu, aux));
  }
  if (config_.imu_orientation_enabled && s.orientation_dof >= 2) {
    const int dim = (s.orientation_dof == 3 && config_.imu_has_magnetometer) ? 3 : 2;
    const double vo = config_.imu.orientation_sigma * config_.imu.orientation_sigma;
    MeasVec z = s.rpy.head(dim);
    MeasMat R = MeasMat::Identity(dim, dim) * vo;
    out.push_back(
        prepare(secondary ? Path::kImu2Orientation : Path::kImuOrientation, stamp, z, R, config_.gates.imu));
  }
}

StepReport FusionPipeline::handle(const ImuSample& s) {
  StepReport r;
  r.stamp = s.stamp;
  r.kind = kind_of(SensorEvent{s});
  if (s.secondary) {
    if (!config_.imu2_enabled) {
      bump("ignored_imu2");
    } else if (!clock_started_) {
      r.diagnostics.push_back("imu2 sample before first primary imu dropped");
      bump("dropped_before_start");
    } else {
      update_coast(s.stamp);
      std::vector<PreparedMeasurement> ms;
      imu_measurements(s, s.stamp, true, ms);
      for (const auto& m : ms) r.results.push_back(route(m));
    }
    finish(r);
    return r;
  }

  StepRecord step;
  step.imu = s;
  if (!clock_started_) {
    clock_started_ = true;
    x_.stamp = s.stamp;
    coast_.last_accept = s.stamp;
    step.predict = false;
    step.propagation = current_propagation(0.01);
  } else {
    const double dt = s.stamp - last_imu_stamp_;
    if (!(dt > 0.0)) {
      r.diagnostics.push_back("out-of-order imu sample dropped");
      bump("dropped_imu_order");
      finish(r);
      return r;
    }
    update_coast(s.stamp);
    step.propagation = current_propagation(dt);
  }
  step.params = current_params();

  bool zupt = false;
  if (config_.zupt_enabled && last_encoder_speed_) {
    zupt = zupt_.evaluate(*last_encoder_speed_, s.gyro.norm());
  } else {
    zupt_.set_active(false);
  }
  imu_measurements(s, s.stamp, false, step.updates);
  if (zupt) {
    const double v = config_.zupt_sigma * config_.zupt_sigma;
    step.updates.push_back(prepare(Path::kZupt, s.stamp, MeasVec::Zero(3), diag3(v, v, v), config_.gates.zupt));
  }

  std::vector<UpdateOutcome> outcomes;
  apply_step(step, x_, P_, &outcomes);
  if (!step.predict) x_.stamp = s.stamp;
  engine_calls_ += (step.predict ? 1 : 0) + step.updates.size();
  for (std::size_t i = 0; i < step.updates.size(); ++i) {
    PathResult pr;
    pr.path = static_cast<Path>(step.updates[i].tag);
    pr.stamp = s.stamp;
    pr.accepted = outcomes[i].accepted;
    pr.singular = outcomes[i].singular;
    pr.d2 = outcomes[i].d2;
    pr.dim = step.updates[i].model->dim;
    pr.threshold = step.updates[i].threshold;
    r.results.push_back(pr);
  }

  if (config_.retrodiction_enabled) {
    RingEntry e;
    e.stamp = s.stamp;
    e.step = std::move(step);
    e.x_step = x_;
    e.P_step = P_;
    e.x = x_;
    e.P = P_;
    ring_.record(std::move(e));
  }
  last_imu_stamp_ = s.stamp;
  update_lever(s.stamp);
  r.state_report = true;
  finish(r);
  return r;
}

void FusionPipeline::update_lever(double now) {
  if (config_.lever_arm.squaredNorm() == 0.0) {
    lever_validated_ = false;
    return;
  }
  if (yaw_variance(x_.q, P_) < config_.lever_yaw_variance) {
    if (!lever_low_since_) lever_low_since_ = now;
    lever_validated_ = now - *lever_low_since_ >= config_.lever_hold_s;
  } else {
    lever_low_since_.reset();
    lever_validated_ = false;
  }
}

StepReport FusionPipeline::handle(const EncoderSample& s) {
  StepReport r;
  r.stamp = s.stamp;
  r.kind = "enc";
  if (!config_.encoder_enabled) {
    bump("ignored_encoder");
    finish(r);
    return r;
  }
  last_encoder_speed_ = std::abs(s.vx);
  if (!clock_started_) {
    r.diagnostics.push_back("encoder sample before first imu dropped");
    bump("dropped_before_start");
    finish(r);
    return r;
  }
  update_coast(s.stamp);
  const double sv = config_.encoder.sigma_v * config_.encoder.sigma_v;
  const double sw = config_.encoder.sigma_wz * config_.encoder.sigma_wz *
                    (coast_.active ? config_.coast_encoder_wz_scale : 1.0);
  MeasVec z(3);
  z << s.vx, s.vy, s.wz;
  Eigen::Vector4d aux = Eigen::Vector4d::Zero();
  aux[0] = config_.b_ewz_enabled ? 1.0 : 0.0;
  r.results.push_back(route(prepare(Path::kEncoder, s.stamp, z, diag3(sv, sv, sw), config_.gates.encoder, aux)));

  if (config_.constraints_enabled) {
    UpdateOutcome o;
    PathResult pr = route(prepare(Path::kVz, s.stamp, MeasVec::Zero(1), vz_adaptive_.R(), config_.gates.encoder), &o);
    if (pr.accepted) vz_adaptive_.observe(o.innovation);
    r.results.push_back(pr);
    pr = route(prepare(Path::kAz, s.stamp, MeasVec::Zero(1), az_adaptive_.R(), config_.gates.encoder), &o);
    if (pr.accepted) az_adaptive_.observe(o.innovation);
    r.results.push_back(pr);
  }
  finish(r);
  return r;
}

StepReport FusionPipeline::handle(const GpsFixSample& s) {
  StepReport r;
  r.stamp = s.stamp;
  r.kind = "gps";
  if (!config_.gnss_enabled) {
    bump("ignored_gps");
    finish(r);
    return r;
  }
  const std::string quality = gps_quality_check(s, config_.gnss);
  if (!quality.empty()) {
    PathResult pr;
    pr.path = Path::kGps;
    pr.stamp = s.stamp;
    pr.dim = 3;
    pr.note = "quality";
    r.results.push_back(pr);
    r.diagnostics.push_back("gps fix rejected by quality gate: " + quality);
    bump("gps_quality_rejected");
    finish(r);
    return r;
  }
  if (!origin_.is_set()) {
    origin_ = geodesy::EnuOrigin(s.coord);
    r.diagnostics.push_back("enu origin set");
    bump("origin_set");
  }
  if (!clock_started_) {
    bump("dropped_before_start");
    finish(r);
    return r;
  }
  update_coast(s.stamp);

  const Vec3 enu = geodesy::geodetic_to_enu(s.coord, origin_);
  std::string source;
  Mat3 R3 = gps_covariance(s, config_.gnss, &source);
  const bool adaptive = config_.adaptive_gnss && source == "dop";
  const Vec3 dop(s.hdop, s.hdop, s.vdop);
  if (adaptive) R3 = dop.asDiagonal() * Mat3(gps_adaptive_.R()) * dop.asDiagonal();

  const double threshold = config_.gates.gps_pos * (coast_.active ? config_.coast_relax : 1.0);
  Eigen::Vector4d aux;
  aux << (lever_validated_ ? 1.0 : 0.0), config_.lever_arm;

  if (config_.precheck_enabled && last_gps_accept_) {
    const FilterState prior = state_at(s.stamp);
    if (!implied_speed_precheck(enu, prior.p, s.stamp - *last_gps_accept_, config_.precheck_max_speed)) {
      PathResult pr;
      pr.path = Path::kGps;
      pr.stamp = s.stamp;
      pr.dim = 3;
      pr.threshold = threshold;
      pr.note = "implied_speed";
      r.results.push_back(pr);
      bump("gps_precheck_rejected");
      finish(r);
      return r;
    }
  }

  UpdateOutcome o;
  const PathResult pr = route(prepare(Path::kGps, s.stamp, enu, R3, threshold, aux), &o);
  r.results.push_back(pr);
  if (pr.accepted) {
    if (coast_.active) {
      r.diagnostics.push_back("coast recovery fix accepted");
      bump("coast_recoveries");
    }
    last_gps_accept_ = std::max(last_gps_accept_.value_or(s.stamp), s.stamp);
    coast_.last_accept = std::max(coast_.last_accept, s.stamp);
    update_coast(s.stamp);
    if (adaptive) gps_adaptive_.observe(dop.cwiseInverse().asDiagonal() * Vec3(o.innovation));

    if (config_.heading_enabled) {
      const double sigma = std::sqrt(0.5 * (R3(0, 0) + R3(1, 1)));
      const double base = config_.heading.baseline_s;
      while (!fix_history_.empty() && fix_history_.front().stamp < s.stamp - 3.0 * base) fix_history_.pop_front();
      const FixRecord* older = nullptr;
      for (auto it = fix_history_.rbegin(); it != fix_history_.rend(); ++it) {
        if (s.stamp - it->stamp >= base) {
          older = &*it;
          break;
        }
      }
      if (older && s.stamp - older->stamp <= 2.0 * base) {
        HeadingConfig hc = config_.heading;
        hc.gate = config_.gates.heading;
        const auto hm =
            gps_heading_model(older->stamp, older->enu, s.stamp, enu, std::max(sigma, older->sigma), hc);
        if (hm) {
          r.results.push_back(route(prepare(Path::kGpsHeading, hm->stamp, hm->z, hm->model.R, hc.gate)));
        }
      }
      if (fix_history_.empty() || s.stamp > fix_history_.back().stamp) fix_history_.push_back({s.stamp, enu, sigma});
    }
  }
  finish(r);
  return r;
}

StepReport FusionPipeline::handle(const GpsVelocitySample& s) {
  StepReport r;
  r.stamp = s.stamp;
  r.kind = "gpsvel";
  if (!config_.gnss_enabled || !config_.gps_velocity_enabled) {
    bump("ignored_gps_velocity");
  } else if (!clock_started_) {
    bump("dropped_before_start");
  } else {
    update_coast(s.stamp);
    MeasVec z(2);
    z << s.ve, s.vn;
    const double v = config_.gps_velocity_sigma * config_.gps_velocity_sigma;
    r.results.push_back(
        route(prepare(Path::kGpsVelocity, s.stamp, z, MeasMat::Identity(2, 2) * v, config_.gates.gps_velocity)));
  }
  finish(r);
  return r;
}

StepReport FusionPipeline::handle(const RadarVelocitySample& s) {
  StepReport r;
  r.stamp = s.stamp;
  r.kind = "radar";
  if (!config_.radar_enabled) {
    bump("ignored_radar");
  } else if (!clock_started_) {
    bump("dropped_before_start");
  } else {
    update_coast(s.stamp);
    MeasVec z(2);
    z << s.vx, s.vy;
    const double v = config_.radar_sigma * config_.radar_sigma;
    r.results.push_back(route(prepare(Path::kRadar, s.stamp, z, MeasMat::Identity(2, 2) * v, config_.gates.radar)));
  }
  finish(r);
  return r;
}

StepReport FusionPipeline::handle(const VslamPoseSample& s) {
  StepReport r;
  r.stamp = s.stamp;
  r.kind = "vslam";
  if (!config_.vslam_enabled) {
    bump("ignored_vslam");
    finish(r);
    return r;
  }
  if (!clock_started_) {
    bump("dropped_before_start");
    finish(r);
    return r;
  }
  const Quaternion q_map = Quaternion::from_euler(s.rpy.x(), s.rpy.y(), s.rpy.z());
  const Mat3 R_map = rotation_of(q_map);
  auto reanchor = [&](const FilterState& f) {
    anchor_.R = rotation_of(f.q) * R_map.transpose();
    anchor_.t = f.p - anchor_.R * s.position;
    anchor_.consecutive_rejections = 0;
  };
  if (!anchor_.initialized) {
    reanchor(state_at(s.stamp));
    anchor_.initialized = true;
    r.diagnostics.push_back("vslam anchor initialised");
    finish(r);
    return r;
  }
  update_coast(s.stamp);
  const Vec3 p = anchor_.R * s.position + anchor_.t;
  const Vec3 rpy = quaternion_of(anchor_.R * R_map).to_euler();
  if (near_euler_singularity(rpy.y())) {
    r.diagnostics.push_back("vslam pose skipped near pitch singularity");
    bump("vslam_singular_pitch");
    finish(r);
    return r;
  }
  MeasVec z(6);
  z << p, rpy;
  const MeasMat R = vslam_model(config_.vslam, config_.gates.vslam, s.variances).R;
  const PathResult pr = route(prepare(Path::kVslam, s.stamp, z, R, config_.gates.vslam));
  r.results.push_back(pr);
  if (pr.note != "stale") {
    if (pr.accepted) {
      anchor_.consecutive_rejections = 0;
    } else if (++anchor_.consecutive_rejections >= config_.vslam_reinit_n) {
      reanchor(state_at(s.stamp));
      ++anchor_.reanchors;
      r.diagnostics.push_back("vslam map re-anchored");
      bump("vslam_reanchors");
    }
  }
  finish(r);
  return r;
}

}  // namespace quatfuse
