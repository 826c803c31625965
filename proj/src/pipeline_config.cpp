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

#include <cmath>
#include <stdexcept>

namespace quatfuse {

namespace {

const char* const kFixNames[] = {"none", "gps", "dgps", "rtk_float", "rtk_fixed"};

// Every configuration key, in one place. `b` is called with (key, field).
template <class Binder>
void bind_fields(PipelineConfig& c, Binder& b) {
  b("ukf.alpha", c.ukf.alpha);
  b("ukf.beta", c.ukf.beta);
  b("ukf.kappa", c.ukf.kappa);
  b("ukf.epsilon_pd", c.ukf.epsilon_pd);
  b("ukf.epsilon_omega", c.epsilon_omega);
  b("ukf.omega_variance_cap", c.ukf.omega_variance_cap);
  b("ukf.quat_radial_variance", c.ukf.quat_radial_variance);
  b("ukf.q_position", c.noise.q_position);
  b("ukf.q_orientation", c.noise.q_orientation);
  b("ukf.q_velocity", c.noise.q_velocity);
  b("ukf.q_omega", c.noise.q_omega);
  b("ukf.q_accel", c.noise.q_accel);
  b("ukf.q_gyro_bias", c.noise.q_gyro_bias);
  b("ukf.q_accel_bias", c.noise.q_accel_bias);
  b("ukf.q_ewz", c.noise.q_ewz);

  b("init.position", c.init_position);
  b("init.yaw", c.init_yaw);
  b("init.var_position", c.init_var_pos);
  b("init.var_orientation", c.init_var_quat);
  b("init.var_velocity", c.init_var_vel);
  b("init.var_omega", c.init_var_omega);
  b("init.var_accel", c.init_var_accel);
  b("init.var_bias", c.init_var_bias);
  b("init.var_ewz", c.init_var_ewz);

  b("imu.gyro_sigma", c.imu.gyro_sigma);
  b("imu.accel_sigma", c.imu.accel_sigma);
  b("imu.orientation_sigma", c.imu.orientation_sigma);
  b("imu.raw_enabled", c.imu_raw_enabled);
  b("imu.orientation_enabled", c.imu_orientation_enabled);
  b("imu.has_magnetometer", c.imu_has_magnetometer);
  b("imu2.enabled", c.imu2_enabled);

  b("encoder.enabled", c.encoder_enabled);
  b("encoder.sigma_v", c.encoder.sigma_v);
  b("encoder.sigma_wz", c.encoder.sigma_wz);
  b("encoder.sigma_vz", c.encoder.sigma_vz);
  b("encoder.sigma_az", c.encoder.sigma_az);
  b("encoder.constraints", c.constraints_enabled);

  b("gnss.enabled", c.gnss_enabled);
  b("gnss.min_fix_type", c.gnss.min_fix);
  b("gnss.max_hdop", c.gnss.max_hdop);
  b("gnss.min_satellites", c.gnss.min_satellites);
  b("gnss.sigma_xy", c.gnss.sigma_xy);
  b("gnss.sigma_z", c.gnss.sigma_z);
  b("gnss.use_gps_fix", c.gnss.use_gps_fix);
  b("gnss.lever_arm", c.lever_arm);
  b("gnss.lever_yaw_variance", c.lever_yaw_variance);
  b("gnss.lever_hold_s", c.lever_hold_s);
  b("gnss.heading_enabled", c.heading_enabled);
  b("gnss.heading_min_speed", c.heading.min_speed);
  b("gnss.heading_baseline_s", c.heading.baseline_s);
  b("gnss.heading_max_sigma", c.heading.max_sigma);
  b("gnss.velocity_enabled", c.gps_velocity_enabled);
  b("gnss.velocity_sigma", c.gps_velocity_sigma);

  b("radar.enabled", c.radar_enabled);
  b("radar.sigma", c.radar_sigma);

  b("vslam.enabled", c.vslam_enabled);
  b("vslam.sigma_pos", c.vslam.sigma_pos);
  b("vslam.sigma_orient", c.vslam.sigma_orient);
  b("vslam.floor_pos", c.vslam.floor_pos);
  b("vslam.floor_orient", c.vslam.floor_orient);
  b("vslam.reinit_n", c.vslam_reinit_n);

  b("adaptive.gnss", c.adaptive_gnss);
  b("adaptive.gnss_init_xy", c.adaptive_gnss_init_xy);
  b("adaptive.gnss_init_z", c.adaptive_gnss_init_z);
  b("adaptive.gnss_floor_xy", c.adaptive_gnss_floor_xy);
  b("adaptive.gnss_floor_z", c.adaptive_gnss_floor_z);
  b("adaptive.constraints", c.adaptive_constraints);
  b("adaptive.window", c.adaptive_window);
  b("adaptive.alpha", c.adaptive_alpha);

  b("zupt.enabled", c.zupt_enabled);
  b("zupt.speed_threshold", c.zupt_speed);
  b("zupt.rate_threshold", c.zupt_rate);
  b("zupt.hysteresis", c.zupt_hysteresis);
  b("zupt.sigma", c.zupt_sigma);

  b("coast.enter_s", c.coast_enter_s);
  b("coast.relax", c.coast_relax);
  b("coast.encoder_wz_scale", c.coast_encoder_wz_scale);
  b("coast.freeze_ewz", c.coast_freeze_ewz);
  b("coast.position_inflation", c.noise.coast_position_inflation);

  b("gate.gps_pos", c.gates.gps_pos);
  b("gate.vslam", c.gates.vslam);
  b("gate.heading", c.gates.heading);
  b("gate.encoder", c.gates.encoder);
  b("gate.imu", c.gates.imu);
  b("gate.gps_velocity", c.gates.gps_velocity);
  b("gate.radar", c.gates.radar);
  b("gate.zupt", c.gates.zupt);
  b("gate.precheck_enabled", c.precheck_enabled);
  b("gate.max_implied_speed", c.precheck_max_speed);

  b("retrodiction.enabled", c.retrodiction_enabled);
  b("retrodiction.capacity", c.retrodiction_capacity);

  b("states.bias_enabled", c.bias_enabled);
  b("states.b_ewz_enabled", c.b_ewz_enabled);
}

struct Reader {
  const KeyValueDoc& doc;
  void operator()(const char* k, double& v) { v = doc.get_double(k, v); }
  void operator()(const char* k, bool& v) { v = doc.get_bool(k, v); }
  void operator()(const char* k, int& v) {
    const long long r = doc.get_int(k, v);
    if (r < -2147483647LL || r > 2147483647LL) throw ConfigError(std::string("key '") + k + "' out of range");
    v = static_cast<int>(r);
  }
  void operator()(const char* k, Vec3& v) { v = doc.get_vec3(k, v); }
  void operator()(const char* k, FixType& v) {
    if (!doc.has(k)) return;
    const std::string s = doc.get_string(k, "");
    for (int i = 0; i < 5; ++i) {
      if (s == kFixNames[i] || s == std::to_string(i)) {
        v = static_cast<FixType>(i);
        return;
      }
    }
    throw ConfigError(std::string("key '") + k + "' expects none|gps|dgps|rtk_float|rtk_fixed");
  }
};

struct Writer {
  std::string out;
  void emit(const char* k, const std::string& v) {
    out += k;
    out += " = ";
    out += v;
    out += '\n';
  }
  void operator()(const char* k, const double& v) { emit(k, format_double(v)); }
  void operator()(const char* k, const bool& v) { emit(k, v ? "true" : "false"); }
  void operator()(const char* k, const int& v) { emit(k, std::to_string(v)); }
  void operator()(const char* k, const Vec3& v) {
    emit(k, format_double(v.x()) + " " + format_double(v.y()) + " " + format_double(v.z()));
  }
  void operator()(const char* k, const FixType& v) { emit(k, kFixNames[static_cast<int>(v)]); }
};

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("invalid configuration: " + what);
}

}  // namespace

PipelineConfig PipelineConfig::from_doc(const KeyValueDoc& doc) {
  PipelineConfig c;
  // Without explicit adaptive keys, the adaptive GNSS noise starts and
  // floors at the configured receiver sigmas.
  const bool has_init_xy = doc.has("adaptive.gnss_init_xy"), has_init_z = doc.has("adaptive.gnss_init_z");
  const bool has_floor_xy = doc.has("adaptive.gnss_floor_xy"), has_floor_z = doc.has("adaptive.gnss_floor_z");
  Reader r{doc};
  bind_fields(c, r);
  if (!has_init_xy) c.adaptive_gnss_init_xy = c.gnss.sigma_xy;
  if (!has_init_z) c.adaptive_gnss_init_z = c.gnss.sigma_z;
  if (!has_floor_xy) c.adaptive_gnss_floor_xy = std::min(c.gnss.sigma_xy, c.adaptive_gnss_init_xy);
  if (!has_floor_z) c.adaptive_gnss_floor_z = std::min(c.gnss.sigma_z, c.adaptive_gnss_init_z);
  doc.require_all_consumed();
  c.validate();
  return c;
}

PipelineConfig PipelineConfig::load(const std::string& path) { return from_doc(KeyValueDoc::load(path)); }

std::string PipelineConfig::to_text() const {
  Writer w;
  bind_fields(const_cast<PipelineConfig&>(*this), w);
  return w.out;
}

std::uint64_t PipelineConfig::hash() const { return fnv1a64(to_text()); }

void PipelineConfig::apply_toggle(const std::string& name) {
  if (name == "bias") {
    bias_enabled = false;
  } else if (name == "adaptive") {
    adaptive_gnss = false;
    adaptive_constraints = false;
  } else if (name == "retrodiction") {
    retrodiction_enabled = false;
  } else if (name == "zupt") {
    zupt_enabled = false;
  } else if (name == "b_ewz") {
    b_ewz_enabled = false;
  } else if (name == "pregate") {
    precheck_enabled = false;
  } else if (name == "gps") {
    gnss_enabled = false;
  } else if (name == "encoder") {
    encoder_enabled = false;
  } else if (name == "vslam") {
    vslam_enabled = false;
  } else if (name == "radar") {
    radar_enabled = false;
  } else if (name == "heading") {
    heading_enabled = false;
  } else if (name == "gpsvel") {
    gps_velocity_enabled = false;
  } else if (name == "imu-orientation") {
    imu_orientation_enabled = false;
  } else if (name == "coast") {
    coast_enter_s = 1e300;
  } else {
    throw ConfigError("unknown ablation switch '" + name + "'");
  }
}

void PipelineConfig::validate() const {
  try {
    ukf.validate();
    noise.validate();
    gates.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("invalid configuration: ") + e.what());
  }
  require(epsilon_omega > 0.0, "ukf.epsilon_omega must be positive");
  require(init_position.allFinite(), "init.position must be finite");
  require(std::isfinite(init_yaw), "init.yaw must be finite");
  for (double v : {init_var_pos, init_var_quat, init_var_vel, init_var_omega, init_var_accel, init_var_bias,
                   init_var_ewz}) {
    require(v > 0.0 && std::isfinite(v), "initial variances must be positive");
  }
  for (double s : {imu.gyro_sigma, imu.accel_sigma, imu.orientation_sigma, encoder.sigma_v, encoder.sigma_wz,
                   encoder.sigma_vz, encoder.sigma_az, gnss.sigma_xy, gnss.sigma_z, gps_velocity_sigma, radar_sigma,
                   vslam.sigma_pos, vslam.sigma_orient, vslam.floor_pos, vslam.floor_orient, zupt_sigma}) {
    require(s > 0.0 && std::isfinite(s), "noise sigmas must be positive");
  }
  require(gnss.max_hdop > 0.0, "gnss.max_hdop must be positive");
  require(gnss.min_satellites >= 0, "gnss.min_satellites must be non-negative");
  require(lever_arm.allFinite(), "gnss.lever_arm must be finite");
  require(lever_yaw_variance > 0.0 && lever_hold_s >= 0.0, "lever arm validation parameters");
  require(heading.min_speed > 0.0 && heading.baseline_s > 0.0 && heading.max_sigma > 0.0, "heading parameters");
  require(vslam_reinit_n >= 1, "vslam.reinit_n must be at least 1");
  require(adaptive_gnss_init_xy > 0.0 && adaptive_gnss_init_z > 0.0, "adaptive initial sigmas must be positive");
  require(adaptive_gnss_floor_xy > 0.0 && adaptive_gnss_floor_z > 0.0, "adaptive floors must be positive");
  require(adaptive_gnss_floor_xy <= adaptive_gnss_init_xy && adaptive_gnss_floor_z <= adaptive_gnss_init_z,
          "adaptive floors must not exceed the initial sigmas");
  require(adaptive_window >= 1, "adaptive.window must be at least 1");
  require(adaptive_alpha > 0.0 && adaptive_alpha <= 1.0, "adaptive.alpha must be in (0, 1]");
  require(zupt_speed > 0.0 && zupt_rate > 0.0 && zupt_hysteresis >= 1.0, "zupt thresholds");
  require(coast_enter_s > 0.0, "coast.enter_s must be positive");
  require(coast_relax >= 1.0, "coast.relax must be at least 1");
  require(coast_encoder_wz_scale > 0.0, "coast.encoder_wz_scale must be positive");
  require(precheck_max_speed > 0.0, "gate.max_implied_speed must be positive");
  require(retrodiction_capacity >= 1, "retrodiction.capacity must be at least 1");
}

}  // namespace quatfuse
