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

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <utility>

namespace quatfuse::sim {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kTimeSlack = 1e-9;

// Draw streams. Each sensor owns its own so enabling one never perturbs
// another.
enum Stream : std::uint64_t {
  kImuGyro = 1,
  kImuAccel,
  kImuOrient,
  kImuBiasG,
  kImuBiasA,
  kImu2Gyro,
  kImu2Accel,
  kImu2Orient,
  kEncoder,
  kGpsPos,
  kGpsVel,
  kCluster,
  kRadar,
  kVslam,
};

std::uint64_t splitmix(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Vec3 normal3(const CounterRng& rng, std::uint64_t stream, std::uint64_t k) {
  return {rng.normal(stream, 3 * k), rng.normal(stream, 3 * k + 1), rng.normal(stream, 3 * k + 2)};
}

double cross2(const Eigen::Vector2d& a, const Eigen::Vector2d& b) { return a.x() * b.y() - a.y() * b.x(); }

double heading_of(const Eigen::Vector2d& d) { return std::atan2(d.y(), d.x()); }

Window window_from(const std::vector<double>& g, const std::string& key, bool with_value) {
  const std::size_t need = with_value ? 3 : 2;
  if (g.size() != need) throw ScenarioError(key + ": expected " + std::to_string(need) + " numbers per group");
  Window w;
  w.t0 = g[0];
  w.t1 = g[1];
  if (with_value) w.value = g[2];
  if (!(w.t1 > w.t0)) throw ScenarioError(key + ": window end must follow its start");
  return w;
}

}  // namespace

// ---------------------------------------------------------------------------

std::uint64_t CounterRng::bits(std::uint64_t stream, std::uint64_t index) const {
  std::uint64_t x = splitmix(seed_);
  x = splitmix(x ^ (stream * 0xD1B54A32D192ED03ULL));
  return splitmix(x ^ index);
}

double CounterRng::uniform(std::uint64_t stream, std::uint64_t index) const {
  return (static_cast<double>(bits(stream, index) >> 11) + 0.5) * 0x1.0p-53;
}

double CounterRng::normal(std::uint64_t stream, std::uint64_t index) const {
  const double u1 = uniform(stream, 2 * index);
  const double u2 = uniform(stream, 2 * index + 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
}

// ---------------------------------------------------------------------------

Eigen::Vector2d Segment::position(double u) const {
  if (std::abs(curvature) < 1e-12) return start + u * Eigen::Vector2d(std::cos(heading), std::sin(heading));
  const double h1 = heading + curvature * u;
  return start + Eigen::Vector2d(std::sin(h1) - std::sin(heading), std::cos(heading) - std::cos(h1)) / curvature;
}

Path2d::Path2d(std::vector<Segment> segments, bool closed) : segments_(std::move(segments)), closed_(closed) {
  offsets_.reserve(segments_.size());
  for (const auto& s : segments_) {
    if (!(s.length >= 0.0)) throw ScenarioError("path segment with negative length");
    offsets_.push_back(length_);
    length_ += s.length;
  }
}

Path2d Path2d::circle(double radius, double heading) {
  if (!(radius > 0.0)) throw ScenarioError("circle radius must be positive");
  return Path2d({Segment{Eigen::Vector2d::Zero(), heading, 2.0 * kPi * radius, 1.0 / radius}}, true);
}

Path2d Path2d::figure_eight(double radius, double heading) {
  if (!(radius > 0.0)) throw ScenarioError("figure-eight radius must be positive");
  const double len = 2.0 * kPi * radius;
  return Path2d({Segment{Eigen::Vector2d::Zero(), heading, len, 1.0 / radius},
                 Segment{Eigen::Vector2d::Zero(), heading, len, -1.0 / radius}},
                true);
}

Path2d Path2d::stationary(double heading) {
  return Path2d({Segment{Eigen::Vector2d::Zero(), heading, 0.0, 0.0}}, false);
}

Path2d Path2d::waypoints(const std::vector<Eigen::Vector2d>& points, double corner_radius, bool closed) {
  const std::size_t n = points.size();
  if (n < 2) throw ScenarioError("waypoint path needs at least two points");
  if (closed && n < 3) throw ScenarioError("closed waypoint path needs at least three points");
  if (!(corner_radius >= 0.0)) throw ScenarioError("corner radius must be non-negative");

  struct Corner {
    Eigen::Vector2d a, b;  // tangent points in and out
    double heading_in = 0.0;
    double turn = 0.0;
  };
  auto dir = [&](std::size_t from, std::size_t to) {
    const Eigen::Vector2d d = points[to] - points[from];
    if (d.norm() < 1e-9) throw ScenarioError("repeated waypoint");
    return Eigen::Vector2d(d.normalized());
  };
  std::vector<Corner> corners(n);
  for (std::size_t i = 0; i < n; ++i) {
    Corner& c = corners[i];
    const bool interior = closed || (i > 0 && i + 1 < n);
    if (!interior) {
      c.a = c.b = points[i];
      continue;
    }
    const Eigen::Vector2d din = dir((i + n - 1) % n, i);
    const Eigen::Vector2d dout = dir(i, (i + 1) % n);
    c.heading_in = heading_of(din);
    c.turn = std::atan2(cross2(din, dout), din.dot(dout));
    const double t = corner_radius * std::tan(std::abs(c.turn) / 2.0);
    c.a = points[i] - t * din;
    c.b = points[i] + t * dout;
  }

  std::vector<Segment> segs;
  auto line = [&](const Eigen::Vector2d& from, const Eigen::Vector2d& to, const Eigen::Vector2d& nominal) {
    const Eigen::Vector2d d = to - from;
    // The fillets must not overlap: the remaining straight has to point
    // the same way as the original leg.
    if (d.dot(nominal) < -1e-9) throw ScenarioError("corner radius too large for waypoint spacing");
    segs.push_back(Segment{from, heading_of(nominal), std::max(0.0, d.dot(nominal)), 0.0});
  };
  auto arc = [&](const Corner& c) {
    if (std::abs(c.turn) < 1e-9 || corner_radius == 0.0) return;
    segs.push_back(Segment{c.a, c.heading_in, corner_radius * std::abs(c.turn), (c.turn > 0 ? 1.0 : -1.0) / corner_radius});
  };

  if (closed) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = (i + 1) % n;
      line(corners[i].b, corners[j].a, dir(i, j));
      arc(corners[j]);
    }
  } else {
    for (std::size_t i = 0; i + 1 < n; ++i) {
      line(corners[i].b, corners[i + 1].a, dir(i, i + 1));
      if (i + 2 < n) arc(corners[i + 1]);
    }
  }
  return Path2d(std::move(segs), closed);
}

Path2d::Sample Path2d::at(double s) const {
  if (segments_.empty()) return {Eigen::Vector2d::Zero(), 0.0, 0.0};
  if (length_ <= 0.0) return {segments_.front().start, segments_.front().heading, 0.0};
  if (closed_) {
    s = std::fmod(s, length_);
    if (s < 0.0) s += length_;
  } else {
    s = std::clamp(s, 0.0, length_);
  }
  auto it = std::upper_bound(offsets_.begin(), offsets_.end(), s);
  std::size_t i = it == offsets_.begin() ? 0 : static_cast<std::size_t>(it - offsets_.begin()) - 1;
  // Skip zero-length pieces so the curvature reported is the one being driven.
  while (i + 1 < segments_.size() && segments_[i].length == 0.0) ++i;
  const Segment& seg = segments_[i];
  const double u = std::clamp(s - offsets_[i], 0.0, seg.length);
  const bool at_open_end = !closed_ && s >= length_;
  return {seg.position(u), seg.heading_at(u), at_open_end ? 0.0 : seg.curvature};
}

// ---------------------------------------------------------------------------

double SpeedProfile::distance(double t) const {
  if (cruise <= 0.0 || t <= start_time) return 0.0;
  const double ta = ramp_time();
  const double da = 0.5 * accel * ta * ta;
  const double tau = t - start_time;
  if (tau < ta) return 0.5 * accel * tau * tau;
  if (t < decel_start) return da + cruise * (tau - ta);
  const double sc = da + cruise * (decel_start - start_time - ta);
  const double td = t - decel_start;
  if (td < ta) return sc + cruise * td - 0.5 * accel * td * td;
  return sc + da;
}

double SpeedProfile::speed(double t) const {
  if (cruise <= 0.0 || t <= start_time) return 0.0;
  const double ta = ramp_time();
  const double tau = t - start_time;
  if (tau < ta) return accel * tau;
  if (t < decel_start) return cruise;
  const double td = t - decel_start;
  if (td < ta) return cruise - accel * td;
  return 0.0;
}

double SpeedProfile::acceleration(double t) const {
  if (cruise <= 0.0 || t <= start_time) return 0.0;
  const double ta = ramp_time();
  const double tau = t - start_time;
  if (tau < ta) return accel;
  if (t < decel_start) return 0.0;
  const double td = t - decel_start;
  if (td < ta) return -accel;
  return 0.0;
}

// ---------------------------------------------------------------------------

SimScenario SimScenario::from_doc(const KeyValueDoc& doc) {
  SimScenario s;
  auto groups = [&](const std::string& key) {
    try {
      return doc.get_groups(key);
    } catch (const ConfigError& e) {
      throw ScenarioError(e.what());
    } catch (const std::invalid_argument& e) {
      throw ScenarioError(key + ": " + e.what());
    }
  };
  try {
    s.seed = static_cast<std::uint64_t>(doc.get_int("seed", static_cast<long long>(s.seed)));
    s.duration = doc.get_double("duration", s.duration);
    s.origin.lat = geodesy::deg2rad(doc.get_double("origin.lat", geodesy::rad2deg(s.origin.lat)));
    s.origin.lon = geodesy::deg2rad(doc.get_double("origin.lon", geodesy::rad2deg(s.origin.lon)));
    s.origin.alt = doc.get_double("origin.alt", s.origin.alt);

    s.trajectory = doc.get_string("trajectory.type", s.trajectory);
    s.radius = doc.get_double("trajectory.radius", s.radius);
    s.corner_radius = doc.get_double("trajectory.corner_radius", s.corner_radius);
    for (const auto& g : groups("trajectory.waypoints")) {
      if (g.size() != 2) throw ScenarioError("trajectory.waypoints: expected x:y pairs");
      s.waypoints.emplace_back(g[0], g[1]);
    }
    s.loop = doc.get_bool("trajectory.loop", s.loop);
    s.initial_heading = geodesy::deg2rad(doc.get_double("trajectory.heading", geodesy::rad2deg(s.initial_heading)));
    s.speed.start_time = doc.get_double("trajectory.start_time", s.speed.start_time);
    s.speed.cruise = doc.get_double("trajectory.speed", s.speed.cruise);
    s.speed.accel = doc.get_double("trajectory.accel", s.speed.accel);
    s.end_hold = doc.get_double("trajectory.end_hold", s.end_hold);
    for (const auto& g : groups("trajectory.curbs")) {
      if (g.size() != 3) throw ScenarioError("trajectory.curbs: expected t:duration:magnitude");
      s.curbs.push_back(CurbEvent{g[0], g[1], g[2]});
    }

    s.imu_rate = doc.get_double("imu.rate", s.imu_rate);
    s.gyro_noise = doc.get_double("imu.gyro_noise", s.gyro_noise);
    s.accel_noise = doc.get_double("imu.accel_noise", s.accel_noise);
    s.gyro_bias = doc.get_vec3("imu.gyro_bias", s.gyro_bias);
    s.accel_bias = doc.get_vec3("imu.accel_bias", s.accel_bias);
    s.gyro_bias_walk = doc.get_double("imu.gyro_bias_walk", s.gyro_bias_walk);
    s.accel_bias_walk = doc.get_double("imu.accel_bias_walk", s.accel_bias_walk);
    s.imu_orientation_dof = static_cast<int>(doc.get_int("imu.orientation_dof", s.imu_orientation_dof));
    s.orientation_noise = doc.get_double("imu.orientation_noise", s.orientation_noise);
    s.imu_centripetal = doc.get_bool("imu.centripetal", s.imu_centripetal);
    s.imu2 = doc.get_bool("imu2.enabled", s.imu2);

    s.encoder = doc.get_bool("encoder.enabled", s.encoder);
    s.encoder_rate = doc.get_double("encoder.rate", s.encoder_rate);
    s.encoder_noise_v = doc.get_double("encoder.noise_v", s.encoder_noise_v);
    s.encoder_noise_wz = doc.get_double("encoder.noise_wz", s.encoder_noise_wz);
    s.b_ewz = doc.get_double("encoder.b_ewz", s.b_ewz);
    for (const auto& g : groups("encoder.slips")) s.slips.push_back(window_from(g, "encoder.slips", true));

    s.gps = doc.get_bool("gps.enabled", s.gps);
    s.gps_rate = doc.get_double("gps.rate", s.gps_rate);
    s.gps_delay = doc.get_double("gps.delay", s.gps_delay);
    s.gps_sigma = doc.get_double("gps.sigma", s.gps_sigma);
    s.gps_sigma_z = doc.get_double("gps.sigma_z", s.gps_sigma_z);
    s.hdop = doc.get_double("gps.hdop", s.hdop);
    s.vdop = doc.get_double("gps.vdop", s.vdop);
    for (const auto& g : groups("gps.hdop_schedule")) s.hdop_schedule.push_back(window_from(g, "gps.hdop_schedule", true));
    s.gps_fix = static_cast<int>(doc.get_int("gps.fix_type", s.gps_fix));
    s.gps_satellites = static_cast<int>(doc.get_int("gps.satellites", s.gps_satellites));
    s.gps_report = doc.get_string("gps.report", s.gps_report);
    s.lever_arm = doc.get_vec3("gps.lever_arm", s.lever_arm);
    for (const auto& g : groups("gps.dropouts")) s.dropouts.push_back(window_from(g, "gps.dropouts", false));
    for (const auto& g : groups("gps.spikes")) {
      if (g.size() != 4) throw ScenarioError("gps.spikes: expected t:dx:dy:dz");
      s.spikes.push_back(SpikeSpec{g[0], Vec3(g[1], g[2], g[3])});
    }
    for (const auto& g : groups("gps.clusters")) {
      if (g.size() != 6) throw ScenarioError("gps.clusters: expected t:count:duration:min:max:bearing_deg");
      ClusterSpec c;
      c.t_start = g[0];
      c.count = static_cast<int>(g[1]);
      c.duration = g[2];
      c.offset_min = g[3];
      c.offset_max = g[4];
      c.bearing = geodesy::deg2rad(g[5]);
      s.clusters.push_back(c);
    }
    s.gps_velocity = doc.get_bool("gps.velocity", s.gps_velocity);
    s.gps_velocity_noise = doc.get_double("gps.velocity_noise", s.gps_velocity_noise);

    s.radar = doc.get_bool("radar.enabled", s.radar);
    s.radar_rate = doc.get_double("radar.rate", s.radar_rate);
    s.radar_noise = doc.get_double("radar.noise", s.radar_noise);

    s.vslam = doc.get_bool("vslam.enabled", s.vslam);
    s.vslam_rate = doc.get_double("vslam.rate", s.vslam_rate);
    s.vslam_delay = doc.get_double("vslam.delay", s.vslam_delay);
    s.vslam_noise_pos = doc.get_double("vslam.noise_pos", s.vslam_noise_pos);
    s.vslam_noise_orient = doc.get_double("vslam.noise_orient", s.vslam_noise_orient);
    s.vslam_variances = doc.get_bool("vslam.variances", s.vslam_variances);
    for (const auto& g : groups("vslam.jumps")) {
      if (g.size() != 5) throw ScenarioError("vslam.jumps: expected t:dx:dy:dz:dyaw_deg");
      s.map_jumps.push_back(MapJump{g[0], Vec3(g[1], g[2], g[3]), geodesy::deg2rad(g[4])});
    }
    doc.require_all_consumed();
  } catch (const ConfigError& e) {
    throw ScenarioError(e.what());
  }
  s.validate();
  return s;
}

SimScenario SimScenario::load(const std::string& path) {
  try {
    return from_doc(KeyValueDoc::load(path));
  } catch (const ConfigError& e) {
    throw ScenarioError(e.what());
  }
}

void SimScenario::validate() const {
  auto positive = [](double v, const char* what) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ScenarioError(std::string(what) + " must be positive");
  };
  auto non_negative = [](double v, const char* what) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ScenarioError(std::string(what) + " must be non-negative");
  };
  positive(duration, "duration");
  positive(imu_rate, "imu.rate");
  if (encoder) positive(encoder_rate, "encoder.rate");
  if (gps) positive(gps_rate, "gps.rate");
  if (radar) positive(radar_rate, "radar.rate");
  if (vslam) positive(vslam_rate, "vslam.rate");
  non_negative(gps_delay, "gps.delay");
  non_negative(vslam_delay, "vslam.delay");
  non_negative(gyro_noise, "imu.gyro_noise");
  non_negative(accel_noise, "imu.accel_noise");
  non_negative(orientation_noise, "imu.orientation_noise");
  non_negative(gyro_bias_walk, "imu.gyro_bias_walk");
  non_negative(accel_bias_walk, "imu.accel_bias_walk");
  non_negative(encoder_noise_v, "encoder.noise_v");
  non_negative(encoder_noise_wz, "encoder.noise_wz");
  non_negative(gps_sigma, "gps.sigma");
  non_negative(gps_sigma_z, "gps.sigma_z");
  positive(hdop, "gps.hdop");
  positive(vdop, "gps.vdop");
  non_negative(speed.cruise, "trajectory.speed");
  non_negative(speed.start_time, "trajectory.start_time");
  non_negative(end_hold, "trajectory.end_hold");
  if (speed.cruise > 0.0) positive(speed.accel, "trajectory.accel");
  if (imu_orientation_dof != 0 && imu_orientation_dof != 2 && imu_orientation_dof != 3)
    throw ScenarioError("imu.orientation_dof must be 0, 2 or 3");
  if (gps_fix < 0 || gps_fix > 4) throw ScenarioError("gps.fix_type must be in 0..4");
  if (gps_report != "dop" && gps_report != "bounds" && gps_report != "full")
    throw ScenarioError("gps.report must be dop, bounds or full");
  for (const auto& w : hdop_schedule) positive(w.value, "gps.hdop_schedule value");
  for (const auto& c : clusters) {
    if (c.count < 1) throw ScenarioError("gps.clusters: count must be at least 1");
    positive(c.duration, "gps.clusters duration");
    if (!(c.offset_max >= c.offset_min) || c.offset_min < 0.0) throw ScenarioError("gps.clusters: bad offset range");
  }
  for (const auto& c : curbs) positive(c.duration, "trajectory.curbs duration");
  if (trajectory != "circle" && trajectory != "figure8" && trajectory != "waypoints" && trajectory != "stationary")
    throw ScenarioError("unknown trajectory.type '" + trajectory + "'");
  // Building the path and profile surfaces geometry errors early.
  resolved_speed(build_path());
}

Path2d SimScenario::build_path() const {
  if (trajectory == "circle") return Path2d::circle(radius, initial_heading);
  if (trajectory == "figure8") return Path2d::figure_eight(radius, initial_heading);
  if (trajectory == "stationary") return Path2d::stationary(initial_heading);
  if (trajectory == "waypoints") return Path2d::waypoints(waypoints, corner_radius, loop);
  throw ScenarioError("unknown trajectory.type '" + trajectory + "'");
}

SpeedProfile SimScenario::resolved_speed(const Path2d& path) const {
  SpeedProfile sp = speed;
  if (path.length() <= 0.0) {
    sp.cruise = 0.0;
    return sp;
  }
  if (sp.cruise <= 0.0) return sp;
  if (path.closed()) {
    sp.decel_start = duration - end_hold - sp.ramp_time();
    if (sp.decel_start < sp.start_time + sp.ramp_time())
      throw ScenarioError("duration too short for the acceleration ramps");
    return sp;
  }
  const double L = path.length();
  double da = 0.5 * sp.accel * sp.ramp_time() * sp.ramp_time();
  if (2.0 * da > L) {
    // Too short to reach cruise: triangular profile.
    sp.cruise = std::sqrt(sp.accel * L);
    da = L / 2.0;
  }
  sp.decel_start = sp.start_time + sp.ramp_time() + (L - 2.0 * da) / sp.cruise;
  return sp;
}

// ---------------------------------------------------------------------------

Trajectory::Trajectory(const SimScenario& scenario)
    : path_(scenario.build_path()), speed_(scenario.resolved_speed(path_)), curbs_(scenario.curbs) {}

TruthSample Trajectory::at(double t) const {
  TruthSample s;
  s.stamp = t;
  const double dist = speed_.distance(t);
  const double v = speed_.speed(t);
  const double a = speed_.acceleration(t);
  const Path2d::Sample ps = path_.at(dist);

  double z = 0.0, vz = 0.0, az = 0.0;
  for (const auto& c : curbs_) {
    // a_z = A sin(2 pi tau / T): one up-down pulse that leaves the vehicle
    // raised by A T^2 / (2 pi) after each curb.
    const double w = 2.0 * kPi / c.duration;
    const double tau = std::clamp(t - c.t, 0.0, c.duration);
    if (t > c.t) {
      z += c.magnitude / w * tau - c.magnitude / (w * w) * std::sin(w * tau);
      if (t < c.t + c.duration) {
        vz += c.magnitude / w * (1.0 - std::cos(w * tau));
        az += c.magnitude * std::sin(w * tau);
      }
    }
  }

  s.p = Vec3(ps.p.x(), ps.p.y(), z);
  s.q = Quaternion::from_euler(0.0, 0.0, wrap_angle(ps.heading));
  s.v_body = Vec3(v, 0.0, vz);
  s.v_world = rotate(s.q, s.v_body);
  s.omega = Vec3(0.0, 0.0, ps.curvature * v);
  s.a_body = Vec3(a, 0.0, az);
  return s;
}

// ---------------------------------------------------------------------------

namespace {

double hdop_at(const SimScenario& sc, double t) {
  for (const auto& w : sc.hdop_schedule)
    if (w.contains(t)) return w.value;
  return sc.hdop;
}

bool in_any(const std::vector<Window>& ws, double t) {
  return std::any_of(ws.begin(), ws.end(), [&](const Window& w) { return w.contains(t); });
}

bool in_cluster_window(const SimScenario& sc, double t) {
  return std::any_of(sc.clusters.begin(), sc.clusters.end(),
                     [&](const ClusterSpec& c) { return t >= c.t_start && t < c.t_start + c.duration; });
}

GpsFixSample make_fix(const SimScenario& sc, double t, const Vec3& enu, double hdop, const geodesy::EnuOrigin& origin) {
  GpsFixSample f;
  f.stamp = t;
  f.coord = geodesy::enu_to_geodetic(enu, origin);
  f.fix = static_cast<FixType>(sc.gps_fix);
  f.hdop = hdop;
  f.vdop = sc.vdop;
  f.satellites = sc.gps_satellites;
  const double sh = sc.gps_sigma * hdop;
  const double sv = sc.gps_sigma_z * sc.vdop;
  if (sc.gps_report == "bounds") {
    f.err_horz = 1.96 * sh;
    f.err_vert = 1.96 * sv;
  } else if (sc.gps_report == "full") {
    f.covariance = Vec3(sh * sh, sh * sh, sv * sv).asDiagonal();
  }
  return f;
}

// Planned cluster fixes, in stamp order.
struct ClusterFix {
  double t;
  Vec3 offset;
};

std::vector<ClusterFix> plan_cluster(const ClusterSpec& c, const CounterRng& rng, std::uint64_t base) {
  std::vector<ClusterFix> out;
  const Vec3 dir(std::cos(c.bearing), std::sin(c.bearing), 0.0);
  for (int j = 0; j < c.count; ++j) {
    const double t = c.t_start + c.duration * j / c.count;
    const double d = c.offset_min + (c.offset_max - c.offset_min) * rng.uniform(kCluster, base + 4 * j);
    // A little scatter so the fixes are not collinear.
    const Vec3 jitter(rng.normal(kCluster, base + 4 * j + 1), rng.normal(kCluster, base + 4 * j + 2), 0.0);
    out.push_back({t, d * dir + 0.5 * jitter});
  }
  return out;
}

Vec3 apply_jump(const MapJump& j, const Vec3& p) {
  return Quaternion::from_euler(0.0, 0.0, j.yaw).to_rotation_matrix() * p + j.offset;
}

// One pending event per sensor; `next` refills it.
struct Source {
  int order = 0;
  std::optional<std::pair<double, SensorEvent>> head;
  std::function<std::optional<std::pair<double, SensorEvent>>()> next;
};

}  // namespace

Simulator::Simulator(SimScenario scenario)
    : scenario_(std::move(scenario)), origin_(scenario_.origin), trajectory_(scenario_) {
  scenario_.validate();
}

Simulator::~Simulator() = default;

void Simulator::run(const std::function<void(const SensorEvent&)>& on_event,
                    const std::function<void(const TruthSample&)>& on_truth) {
  const SimScenario& sc = scenario_;
  const CounterRng rng(sc.seed);
  const double T = sc.duration + kTimeSlack;
  const Trajectory& traj = trajectory_;

  // Bias random walks advance at the IMU rate; other sensors read the
  // latest value through this shared state.
  struct BiasState {
    Vec3 b_g, b_a;
  };
  auto bias = std::make_shared<BiasState>(BiasState{sc.gyro_bias, sc.accel_bias});

  std::vector<Source> sources;

  auto imu_sample = [&sc, &rng](const TruthSample& tr, bool secondary, std::uint64_t k) {
    const std::uint64_t sg = secondary ? kImu2Gyro : kImuGyro;
    const std::uint64_t sa = secondary ? kImu2Accel : kImuAccel;
    const std::uint64_t so = secondary ? kImu2Orient : kImuOrient;
    ImuSample m;
    m.stamp = tr.stamp;
    m.secondary = secondary;
    m.gyro = tr.omega + tr.b_g + sc.gyro_noise * normal3(rng, sg, k);
    Vec3 f = tr.a_body + tr.q.to_rotation_matrix().transpose() * Constants::gravity();
    if (sc.imu_centripetal) f += tr.omega.cross(tr.v_body);
    m.accel = f + tr.b_a + sc.accel_noise * normal3(rng, sa, k);
    m.orientation_dof = sc.imu_orientation_dof;
    if (m.orientation_dof > 0) {
      const Vec3 rpy = tr.q.to_euler();
      const Vec3 n = sc.orientation_noise * normal3(rng, so, k);
      m.rpy = Vec3(rpy.x() + n.x(), rpy.y() + n.y(), m.orientation_dof == 3 ? wrap_angle(rpy.z() + n.z()) : 0.0);
    }
    return m;
  };

  // Primary IMU: also emits truth.
  {
    auto k = std::make_shared<std::uint64_t>(0);
    Source s;
    s.order = 0;
    s.next = [&, k, bias]() -> std::optional<std::pair<double, SensorEvent>> {
      const double t = static_cast<double>(*k) / sc.imu_rate;
      if (t > T) return std::nullopt;
      if (*k > 0) {
        const double dt = 1.0 / sc.imu_rate;
        bias->b_g += sc.gyro_bias_walk * std::sqrt(dt) * normal3(rng, kImuBiasG, *k);
        bias->b_a += sc.accel_bias_walk * std::sqrt(dt) * normal3(rng, kImuBiasA, *k);
      }
      TruthSample tr = traj.at(t);
      tr.b_g = bias->b_g;
      tr.b_a = bias->b_a;
      tr.b_ewz = sc.b_ewz;
      if (on_truth) on_truth(tr);
      const ImuSample m = imu_sample(tr, false, *k);
      ++*k;
      return std::make_pair(t, SensorEvent(m));
    };
    sources.push_back(std::move(s));
  }

  if (sc.imu2) {
    auto k = std::make_shared<std::uint64_t>(0);
    Source s;
    s.order = 1;
    s.next = [&, k, bias]() -> std::optional<std::pair<double, SensorEvent>> {
      const double t = static_cast<double>(*k) / sc.imu_rate;
      if (t > T) return std::nullopt;
      // The primary source is always one sample ahead or level, so the bias
      // it holds is the one for this epoch.
      TruthSample tr = traj.at(t);
      tr.b_g = bias->b_g;
      tr.b_a = bias->b_a;
      const ImuSample m = imu_sample(tr, true, *k);
      ++*k;
      return std::make_pair(t, SensorEvent(m));
    };
    sources.push_back(std::move(s));
  }

  if (sc.encoder) {
    auto k = std::make_shared<std::uint64_t>(0);
    Source s;
    s.order = 2;
    s.next = [&, k]() -> std::optional<std::pair<double, SensorEvent>> {
      const double t = static_cast<double>(*k) / sc.encoder_rate;
      if (t > T) return std::nullopt;
      const TruthSample tr = traj.at(t);
      double slip = 1.0;
      for (const auto& w : sc.slips)
        if (w.contains(t)) slip = w.value;
      const Vec3 n = normal3(rng, kEncoder, *k);
      EncoderSample m;
      m.stamp = t;
      m.vx = tr.v_body.x() * slip + sc.encoder_noise_v * n.x();
      m.vy = tr.v_body.y() + sc.encoder_noise_v * n.y();
      // The encoder model is omega_z - b_ewz, so the bias enters negatively.
      m.wz = tr.omega.z() - sc.b_ewz + sc.encoder_noise_wz * n.z();
      ++*k;
      return std::make_pair(t, SensorEvent(m));
    };
    sources.push_back(std::move(s));
  }

  if (sc.gps) {
    auto cluster = std::make_shared<std::vector<ClusterFix>>();
    for (std::size_t i = 0; i < sc.clusters.size(); ++i) {
      auto planned = plan_cluster(sc.clusters[i], rng, static_cast<std::uint64_t>(i) << 32);
      cluster->insert(cluster->end(), planned.begin(), planned.end());
    }
    std::stable_sort(cluster->begin(), cluster->end(), [](const ClusterFix& a, const ClusterFix& b) { return a.t < b.t; });
    auto k = std::make_shared<std::uint64_t>(0);
    auto ci = std::make_shared<std::size_t>(0);
    const double half = 0.5 / sc.gps_rate;
    Source s;
    s.order = 3;
    s.next = [&, k, ci, cluster, half]() -> std::optional<std::pair<double, SensorEvent>> {
      while (true) {
        const double t_legit = static_cast<double>(*k) / sc.gps_rate;
        const bool legit_left = t_legit <= T;
        const bool cluster_left = *ci < cluster->size() && (*cluster)[*ci].t <= T;
        if (!legit_left && !cluster_left) return std::nullopt;
        if (cluster_left && (!legit_left || (*cluster)[*ci].t <= t_legit)) {
          const ClusterFix& c = (*cluster)[*ci];
          const TruthSample tr = traj.at(c.t);
          const Vec3 enu = tr.p + rotate(tr.q, sc.lever_arm) + c.offset;
          ++*ci;
          return std::make_pair(c.t + sc.gps_delay, SensorEvent(make_fix(sc, c.t, enu, sc.hdop, origin_)));
        }
        const std::uint64_t kk = (*k)++;
        if (in_any(sc.dropouts, t_legit) || in_cluster_window(sc, t_legit)) continue;
        const TruthSample tr = traj.at(t_legit);
        const double h = hdop_at(sc, t_legit);
        const Vec3 n = normal3(rng, kGpsPos, kk);
        Vec3 enu = tr.p + rotate(tr.q, sc.lever_arm) +
                   Vec3(sc.gps_sigma * h * n.x(), sc.gps_sigma * h * n.y(), sc.gps_sigma_z * sc.vdop * n.z());
        for (const auto& sp : sc.spikes)
          if (std::abs(sp.t - t_legit) < half) enu += sp.offset;
        return std::make_pair(t_legit + sc.gps_delay, SensorEvent(make_fix(sc, t_legit, enu, h, origin_)));
      }
    };
    sources.push_back(std::move(s));

    if (sc.gps_velocity) {
      auto kv = std::make_shared<std::uint64_t>(0);
      Source v;
      v.order = 4;
      v.next = [&, kv]() -> std::optional<std::pair<double, SensorEvent>> {
        while (true) {
          const double t = static_cast<double>(*kv) / sc.gps_rate;
          if (t > T) return std::nullopt;
          const std::uint64_t kk = (*kv)++;
          if (in_any(sc.dropouts, t) || in_cluster_window(sc, t)) continue;
          const TruthSample tr = traj.at(t);
          GpsVelocitySample m;
          m.stamp = t;
          m.ve = tr.v_world.x() + sc.gps_velocity_noise * rng.normal(kGpsVel, 2 * kk);
          m.vn = tr.v_world.y() + sc.gps_velocity_noise * rng.normal(kGpsVel, 2 * kk + 1);
          return std::make_pair(t + sc.gps_delay, SensorEvent(m));
        }
      };
      sources.push_back(std::move(v));
    }
  }

  if (sc.radar) {
    auto k = std::make_shared<std::uint64_t>(0);
    Source s;
    s.order = 5;
    s.next = [&, k]() -> std::optional<std::pair<double, SensorEvent>> {
      const double t = static_cast<double>(*k) / sc.radar_rate;
      if (t > T) return std::nullopt;
      const TruthSample tr = traj.at(t);
      RadarVelocitySample m;
      m.stamp = t;
      m.vx = tr.v_body.x() + sc.radar_noise * rng.normal(kRadar, 2 * *k);
      m.vy = tr.v_body.y() + sc.radar_noise * rng.normal(kRadar, 2 * *k + 1);
      ++*k;
      return std::make_pair(t, SensorEvent(m));
    };
    sources.push_back(std::move(s));
  }

  if (sc.vslam) {
    auto k = std::make_shared<std::uint64_t>(0);
    Source s;
    s.order = 6;
    s.next = [&, k]() -> std::optional<std::pair<double, SensorEvent>> {
      const double t = static_cast<double>(*k) / sc.vslam_rate;
      if (t > T) return std::nullopt;
      const TruthSample tr = traj.at(t);
      Vec3 p = tr.p;
      double yaw = tr.q.to_euler().z();
      for (const auto& j : sc.map_jumps) {
        if (t >= j.t) {
          p = apply_jump(j, p);
          yaw += j.yaw;
        }
      }
      const std::uint64_t kk = *k;
      VslamPoseSample m;
      m.stamp = t;
      m.position = p + sc.vslam_noise_pos * normal3(rng, kVslam, 2 * kk);
      const Vec3 rpy = tr.q.to_euler();
      const Vec3 n = sc.vslam_noise_orient * normal3(rng, kVslam, 2 * kk + 1);
      m.rpy = Vec3(rpy.x() + n.x(), rpy.y() + n.y(), wrap_angle(yaw + n.z()));
      if (sc.vslam_variances) {
        const double vp = std::max(sc.vslam_noise_pos * sc.vslam_noise_pos, 1e-8);
        const double vo = std::max(sc.vslam_noise_orient * sc.vslam_noise_orient, 1e-10);
        Eigen::Matrix<double, 6, 1> var;
        var << vp, vp, vp, vo, vo, vo;
        m.variances = var;
      }
      ++*k;
      return std::make_pair(t + sc.vslam_delay, SensorEvent(m));
    };
    sources.push_back(std::move(s));
  }

  for (auto& s : sources) s.head = s.next();
  while (true) {
    Source* best = nullptr;
    for (auto& s : sources) {
      if (!s.head) continue;
      if (!best || s.head->first < best->head->first ||
          (s.head->first == best->head->first && s.order < best->order))
        best = &s;
    }
    if (!best) break;
    SensorEvent e = std::move(best->head->second);
    best->head = best->next();
    if (on_event) on_event(e);
  }
}

SimOutput generate(const SimScenario& scenario) {
  SimOutput out;
  Simulator sim(scenario);
  sim.run([&](const SensorEvent& e) { out.events.push_back(e); },
          [&](const TruthSample& s) { out.truth.push_back(s); });
  return out;
}

// ---------------------------------------------------------------------------

void inject_spike(std::vector<SensorEvent>& events, const SpikeSpec& spec, const geodesy::EnuOrigin& origin) {
  GpsFixSample* best = nullptr;
  double best_dt = std::numeric_limits<double>::infinity();
  for (auto& e : events) {
    if (auto* f = std::get_if<GpsFixSample>(&e)) {
      const double dt = std::abs(f->stamp - spec.t);
      if (dt < best_dt) {
        best_dt = dt;
        best = f;
      }
    }
  }
  if (!best) throw ScenarioError("inject_spike: no GPS fix in the stream");
  const Vec3 enu = geodesy::geodetic_to_enu(best->coord, origin) + spec.offset;
  best->coord = geodesy::enu_to_geodetic(enu, origin);
}

void inject_cluster(std::vector<SensorEvent>& events, const ClusterSpec& spec, const Trajectory& truth,
                    const geodesy::EnuOrigin& origin, std::uint64_t seed) {
  const double t1 = spec.t_start + spec.duration;
  std::optional<GpsFixSample> model;
  std::vector<SensorEvent> kept;
  kept.reserve(events.size());
  for (auto& e : events) {
    if (const auto* f = std::get_if<GpsFixSample>(&e)) {
      if (!model) model = *f;
      if (f->stamp >= spec.t_start && f->stamp < t1) continue;
    }
    kept.push_back(std::move(e));
  }
  GpsFixSample tmpl = model.value_or(GpsFixSample{});
  tmpl.covariance.reset();
  tmpl.err_horz.reset();
  tmpl.err_vert.reset();

  const CounterRng rng(seed);
  for (const auto& c : plan_cluster(spec, rng, 0)) {
    const TruthSample tr = truth.at(c.t);
    GpsFixSample f = tmpl;
    f.stamp = c.t;
    f.coord = geodesy::enu_to_geodetic(tr.p + c.offset, origin);
    auto pos = std::upper_bound(kept.begin(), kept.end(), c.t,
                                [](double t, const SensorEvent& e) { return t < stamp_of(e); });
    kept.insert(pos, SensorEvent(f));
  }
  events = std::move(kept);
}

void inject_reinit(std::vector<SensorEvent>& events, const MapJump& jump) {
  for (auto& e : events) {
    if (auto* v = std::get_if<VslamPoseSample>(&e)) {
      if (v->stamp < jump.t) continue;
      v->position = apply_jump(jump, v->position);
      v->rpy.z() = wrap_angle(v->rpy.z() + jump.yaw);
    }
  }
}

void write_truth_tum(std::ostream& out, const TruthSample& s) {
  out << format_double(s.stamp) << ' ' << format_double(s.p.x()) << ' ' << format_double(s.p.y()) << ' '
      << format_double(s.p.z()) << ' ' << format_double(s.q.x) << ' ' << format_double(s.q.y) << ' '
      << format_double(s.q.z) << ' ' << format_double(s.q.w) << '\n';
}

void write_truth_state(std::ostream& out, const TruthSample& s) {
  std::ostringstream line;
  line << format_double(s.stamp);
  auto put = [&](double v) { line << ' ' << format_double(v); };
  for (int i = 0; i < 3; ++i) put(s.p[i]);
  put(s.q.to_euler().z());
  for (int i = 0; i < 3; ++i) put(s.v_body[i]);
  for (int i = 0; i < 3; ++i) put(s.omega[i]);
  for (int i = 0; i < 3; ++i) put(s.b_g[i]);
  for (int i = 0; i < 3; ++i) put(s.b_a[i]);
  put(s.b_ewz);
  out << line.str() << '\n';
}

}  // namespace quatfuse::sim
