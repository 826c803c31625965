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
// Checkpoint text format, version 1. Whitespace-separated tokens; every
// record starts with a label so a truncated or reordered file fails loudly.
// Doubles are written in shortest round-trip form, so a load restores the
// exact bits that were saved.
//
//   quatfuse-checkpoint 1
//   config_hash <hex>
//   clock <started> <last_imu_stamp>
//   state <stamp> <23 values>
//   cov <529 values, row-major>
//   origin <set> <lat> <lon> <alt>
//   adaptive <name> <dim> <R dim*dim> <count> <count * dim values>   (gps, vz, az)
//   coast <last_accept> <active>
//   zupt <active> <has_speed> <speed>
//   lever <validated> <has_low_since> <low_since>
//   fixes <count> { <stamp> <e> <n> <u> <sigma> }
//   gps_accept <has> <stamp>
//   anchor <initialized> <R 9> <t 3> <rejections> <reanchors>
//   engine_calls <n>
//   counters <count> { <name> <value> }
//   ring <dropped> <count> { entry ... }
//   end
//
// A ring entry holds the IMU sample, the propagation settings, the step's
// own measurements, both snapshots and the attached measurements.
#include "quatfuse/fusion_pipeline.hpp"

#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

namespace quatfuse {

namespace {

constexpr int kCheckpointVersion = 1;

class TokenWriter {
 public:
  explicit TokenWriter(std::ostream& out) : out_(out) {}
  TokenWriter& label(const char* s) {
    if (!first_) out_ << '\n';
    first_ = false;
    out_ << s;
    return *this;
  }
  TokenWriter& num(double v) {
    out_ << ' ' << format_double(v);
    return *this;
  }
  TokenWriter& integer(long long v) {
    out_ << ' ' << v;
    return *this;
  }
  TokenWriter& word(const std::string& s) {
    out_ << ' ' << s;
    return *this;
  }
  template <class Derived>
  TokenWriter& matrix(const Eigen::MatrixBase<Derived>& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) num(m(r, c));
    }
    return *this;
  }
  void finish() { out_ << '\n'; }

 private:
  std::ostream& out_;
  bool first_ = true;
};

class TokenReader {
 public:
  explicit TokenReader(std::istream& in) : in_(in) {}
  std::string word() {
    std::string s;
    if (!(in_ >> s)) throw CheckpointError("checkpoint truncated");
    return s;
  }
  void expect(const char* label) {
    const std::string s = word();
    if (s != label) throw CheckpointError("checkpoint: expected '" + std::string(label) + "', found '" + s + "'");
  }
  double num() {
    const std::string s = word();
    try {
      return parse_double(s);
    } catch (const std::invalid_argument&) {
      throw CheckpointError("checkpoint: bad number '" + s + "'");
    }
  }
  long long integer() {
    const std::string s = word();
    try {
      return parse_int(s);
    } catch (const std::invalid_argument&) {
      throw CheckpointError("checkpoint: bad integer '" + s + "'");
    }
  }
  bool flag() { return integer() != 0; }
  template <class M>
  void matrix(M& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = num();
    }
  }
  std::size_t count(std::size_t limit) {
    const long long n = integer();
    if (n < 0 || static_cast<unsigned long long>(n) > limit) throw CheckpointError("checkpoint: bad count");
    return static_cast<std::size_t>(n);
  }

 private:
  std::istream& in_;
};

void write_state(TokenWriter& w, const char* label, const FilterState& x) {
  w.label(label).num(x.stamp).matrix(x.flatten());
}

FilterState read_state(TokenReader& r, const char* label) {
  r.expect(label);
  const double stamp = r.num();
  StateVector s;
  r.matrix(s);
  return FilterState::unflatten(s, stamp);
}

void write_cov(TokenWriter& w, const char* label, const Covariance23& P) { w.label(label).matrix(P); }

Covariance23 read_cov(TokenReader& r, const char* label) {
  r.expect(label);
  Covariance23 P;
  r.matrix(P);
  return P;
}

void write_adaptive(TokenWriter& w, const char* name, const AdaptiveEstimator& a) {
  w.label("adaptive").word(name).integer(a.R().rows()).matrix(a.R()).integer(static_cast<long long>(a.window_size()));
  for (const MeasVec& v : a.window()) w.matrix(v);
}

void read_adaptive(TokenReader& r, const char* name, AdaptiveEstimator& a) {
  r.expect("adaptive");
  r.expect(name);
  const std::size_t dim = r.count(kMaxMeasDim);
  if (static_cast<Eigen::Index>(dim) != a.initial().rows()) throw CheckpointError("checkpoint: adaptive size");
  MeasMat R(dim, dim);
  r.matrix(R);
  const std::size_t n = r.count(1u << 20);
  std::deque<MeasVec> window;
  for (std::size_t i = 0; i < n; ++i) {
    MeasVec v(dim);
    r.matrix(v);
    window.push_back(v);
  }
  a.restore(R, window);
}

void write_measurement(TokenWriter& w, const PreparedMeasurement& m) {
  w.label("meas").integer(m.tag).num(m.stamp).num(m.threshold).matrix(m.aux).integer(m.z.size()).matrix(m.z);
  w.matrix(m.model->R);
}

}  // namespace

void FusionPipeline::save_checkpoint(std::ostream& out) const {
  std::lock_guard<std::mutex> lock(mutex_);
  TokenWriter w(out);
  std::ostringstream hash;
  hash << std::hex << std::setw(16) << std::setfill('0') << config_hash_;
  w.label("quatfuse-checkpoint").integer(kCheckpointVersion);
  w.label("config_hash").word(hash.str());
  w.label("clock").integer(clock_started_).num(last_imu_stamp_);
  write_state(w, "state", x_);
  write_cov(w, "cov", P_);
  w.label("origin").integer(origin_.is_set());
  if (origin_.is_set()) {
    w.num(origin_.reference().lat).num(origin_.reference().lon).num(origin_.reference().alt);
  } else {
    w.num(0).num(0).num(0);
  }
  write_adaptive(w, "gps", gps_adaptive_);
  write_adaptive(w, "vz", vz_adaptive_);
  write_adaptive(w, "az", az_adaptive_);
  w.label("coast").num(coast_.last_accept).integer(coast_.active);
  w.label("zupt").integer(zupt_.active()).integer(last_encoder_speed_.has_value()).num(
      last_encoder_speed_.value_or(0.0));
  w.label("lever").integer(lever_validated_).integer(lever_low_since_.has_value()).num(lever_low_since_.value_or(0.0));
  w.label("fixes").integer(static_cast<long long>(fix_history_.size()));
  for (const FixRecord& f : fix_history_) w.num(f.stamp).matrix(f.enu).num(f.sigma);
  w.label("gps_accept").integer(last_gps_accept_.has_value()).num(last_gps_accept_.value_or(0.0));
  w.label("anchor").integer(anchor_.initialized).matrix(anchor_.R).matrix(anchor_.t);
  w.integer(anchor_.consecutive_rejections).integer(anchor_.reanchors);
  w.label("engine_calls").integer(static_cast<long long>(engine_calls_));
  w.label("counters").integer(static_cast<long long>(counters_.size()));
  for (const auto& [name, value] : counters_) w.word(name).integer(static_cast<long long>(value));

  w.label("ring").integer(static_cast<long long>(ring_.dropped())).integer(static_cast<long long>(ring_.size()));
  for (const RingEntry& e : ring_.entries()) {
    const StepRecord& st = e.step;
    w.label("entry").num(e.stamp);
    w.label("imu").num(st.imu.stamp).matrix(st.imu.gyro).matrix(st.imu.accel).integer(st.imu.orientation_dof);
    w.matrix(st.imu.rpy);
    w.label("step").integer(st.predict).num(st.propagation.dt).integer(st.propagation.coast_active);
    w.integer(st.propagation.frozen.gyro_bias).integer(st.propagation.frozen.accel_bias);
    w.integer(st.propagation.frozen.encoder_yaw_bias);
    w.label("updates").integer(static_cast<long long>(st.updates.size()));
    for (const PreparedMeasurement& m : st.updates) write_measurement(w, m);
    write_state(w, "x_step", e.x_step);
    write_cov(w, "P_step", e.P_step);
    w.label("attached").integer(static_cast<long long>(e.attached.size()));
    for (const PreparedMeasurement& m : e.attached) write_measurement(w, m);
    write_state(w, "x", e.x);
    write_cov(w, "P", e.P);
  }
  w.label("end");
  w.finish();
  if (!out) throw CheckpointError("checkpoint: write failed");
}

void FusionPipeline::load_checkpoint(std::istream& in) {
  std::lock_guard<std::mutex> lock(mutex_);
  TokenReader r(in);
  r.expect("quatfuse-checkpoint");
  if (r.integer() != kCheckpointVersion) throw CheckpointError("checkpoint: unsupported version");
  r.expect("config_hash");
  std::ostringstream hash;
  hash << std::hex << std::setw(16) << std::setfill('0') << config_hash_;
  if (r.word() != hash.str()) throw CheckpointError("checkpoint: configuration hash mismatch");

  // Parse into a scratch copy so a failed load leaves this pipeline intact.
  FusionPipeline t(config_);
  r.expect("clock");
  t.clock_started_ = r.flag();
  t.last_imu_stamp_ = r.num();
  t.x_ = read_state(r, "state");
  t.P_ = read_cov(r, "cov");
  r.expect("origin");
  const bool origin_set = r.flag();
  geodesy::GeodeticCoord ref;
  ref.lat = r.num();
  ref.lon = r.num();
  ref.alt = r.num();
  t.origin_ = origin_set ? geodesy::EnuOrigin(ref) : geodesy::EnuOrigin{};
  read_adaptive(r, "gps", t.gps_adaptive_);
  read_adaptive(r, "vz", t.vz_adaptive_);
  read_adaptive(r, "az", t.az_adaptive_);
  r.expect("coast");
  t.coast_.last_accept = r.num();
  t.coast_.active = r.flag();
  r.expect("zupt");
  t.zupt_.set_active(r.flag());
  const bool has_speed = r.flag();
  const double speed = r.num();
  if (has_speed) t.last_encoder_speed_ = speed;
  r.expect("lever");
  t.lever_validated_ = r.flag();
  const bool has_low = r.flag();
  const double low = r.num();
  if (has_low) t.lever_low_since_ = low;
  r.expect("fixes");
  const std::size_t nf = r.count(1u << 20);
  for (std::size_t i = 0; i < nf; ++i) {
    FixRecord f{};
    f.stamp = r.num();
    r.matrix(f.enu);
    f.sigma = r.num();
    t.fix_history_.push_back(f);
  }
  r.expect("gps_accept");
  const bool has_accept = r.flag();
  const double accept = r.num();
  if (has_accept) t.last_gps_accept_ = accept;
  r.expect("anchor");
  t.anchor_.initialized = r.flag();
  r.matrix(t.anchor_.R);
  r.matrix(t.anchor_.t);
  t.anchor_.consecutive_rejections = static_cast<int>(r.integer());
  t.anchor_.reanchors = static_cast<int>(r.integer());
  r.expect("engine_calls");
  t.engine_calls_ = static_cast<std::uint64_t>(r.integer());
  r.expect("counters");
  const std::size_t nc = r.count(1u << 16);
  for (std::size_t i = 0; i < nc; ++i) {
    const std::string name = r.word();
    t.counters_[name] = static_cast<std::uint64_t>(r.integer());
  }

  auto read_measurement = [&]() {
    r.expect("meas");
    const long long tag = r.integer();
    if (tag < 0 || tag >= static_cast<long long>(Path::kCount)) throw CheckpointError("checkpoint: bad path tag");
    PreparedMeasurement m;
    m.tag = static_cast<int>(tag);
    m.stamp = r.num();
    m.threshold = r.num();
    r.matrix(m.aux);
    const std::size_t dim = r.count(kMaxMeasDim);
    m.z.resize(dim);
    r.matrix(m.z);
    MeasMat R(dim, dim);
    r.matrix(R);
    try {
      m.model = t.build_model(static_cast<Path>(tag), R, m.aux);
    } catch (const std::invalid_argument& e) {
      throw CheckpointError(std::string("checkpoint: ") + e.what());
    }
    return m;
  };

  r.expect("ring");
  const auto dropped = static_cast<std::size_t>(r.integer());
  const std::size_t ne = r.count(t.ring_.capacity());
  for (std::size_t i = 0; i < ne; ++i) {
    RingEntry e;
    r.expect("entry");
    e.stamp = r.num();
    StepRecord& st = e.step;
    r.expect("imu");
    st.imu.stamp = r.num();
    r.matrix(st.imu.gyro);
    r.matrix(st.imu.accel);
    st.imu.orientation_dof = static_cast<int>(r.integer());
    r.matrix(st.imu.rpy);
    r.expect("step");
    st.predict = r.flag();
    st.propagation.noise = config_.noise;
    st.propagation.epsilon_omega = config_.epsilon_omega;
    st.propagation.dt = r.num();
    st.propagation.coast_active = r.flag();
    st.propagation.frozen.gyro_bias = r.flag();
    st.propagation.frozen.accel_bias = r.flag();
    st.propagation.frozen.encoder_yaw_bias = r.flag();
    st.params = config_.ukf;
    st.params.frozen = st.propagation.frozen.mask();
    r.expect("updates");
    const std::size_t nu = r.count(16);
    for (std::size_t k = 0; k < nu; ++k) st.updates.push_back(read_measurement());
    e.x_step = read_state(r, "x_step");
    e.P_step = read_cov(r, "P_step");
    r.expect("attached");
    const std::size_t na = r.count(1u << 16);
    for (std::size_t k = 0; k < na; ++k) e.attached.push_back(read_measurement());
    e.x = read_state(r, "x");
    e.P = read_cov(r, "P");
    try {
      t.ring_.record(std::move(e));
    } catch (const std::invalid_argument& ex) {
      throw CheckpointError(std::string("checkpoint: ") + ex.what());
    }
  }
  t.ring_.set_dropped(dropped);
  r.expect("end");

  clock_started_ = t.clock_started_;
  last_imu_stamp_ = t.last_imu_stamp_;
  x_ = t.x_;
  P_ = t.P_;
  origin_ = t.origin_;
  ring_ = std::move(t.ring_);
  gps_adaptive_ = std::move(t.gps_adaptive_);
  vz_adaptive_ = std::move(t.vz_adaptive_);
  az_adaptive_ = std::move(t.az_adaptive_);
  coast_ = t.coast_;
  zupt_ = t.zupt_;
  last_encoder_speed_ = t.last_encoder_speed_;
  lever_validated_ = t.lever_validated_;
  lever_low_since_ = t.lever_low_since_;
  fix_history_ = std::move(t.fix_history_);
  last_gps_accept_ = t.last_gps_accept_;
  anchor_ = t.anchor_;
  engine_calls_ = t.engine_calls_;
  counters_ = std::move(t.counters_);
}

}  // namespace quatfuse
