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
#include "quatfuse/retrodiction.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace quatfuse {

UpdateOutcome apply_measurement(const PreparedMeasurement& m, FilterState& x, Covariance23& P,
                                const UkfParams& params) {
  if (!m.model) throw std::invalid_argument("apply_measurement: missing model");
  return update(x, P, m.z, *m.model, params, m.threshold);
}

void apply_step(const StepRecord& step, FilterState& x, Covariance23& P, std::vector<UpdateOutcome>* outcomes) {
  if (step.predict) {
    const double dt = step.propagation.dt;
    const int n = static_cast<int>(std::ceil(dt / kMaxStepDt - 1e-12));
    PropagationStep sub = step.propagation;
    sub.dt = dt / std::max(n, 1);
    for (int i = 0; i < std::max(n, 1); ++i) {
      Prediction pred = predict(x, P, sub, step.params);
      x = pred.x;
      P = pred.P;
    }
    x.stamp = step.imu.stamp;
  }
  for (const PreparedMeasurement& m : step.updates) {
    UpdateOutcome o = apply_measurement(m, x, P, step.params);
    if (outcomes) outcomes->push_back(std::move(o));
  }
}

StateSnapshotRing::StateSnapshotRing(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) throw std::invalid_argument("StateSnapshotRing: capacity must be positive");
}

void StateSnapshotRing::record(RingEntry entry) {
  if (!entries_.empty() && !(entry.stamp > entries_.back().stamp)) {
    throw std::invalid_argument("StateSnapshotRing: stamps must strictly increase");
  }
  entries_.push_back(std::move(entry));
  while (entries_.size() > capacity_) entries_.pop_front();
}

std::size_t StateSnapshotRing::nearest(double stamp) const {
  if (entries_.empty()) return 0;
  auto it = std::lower_bound(entries_.begin(), entries_.end(), stamp,
                             [](const RingEntry& e, double t) { return e.stamp < t; });
  if (it == entries_.end()) return entries_.size() - 1;
  const std::size_t hi = static_cast<std::size_t>(it - entries_.begin());
  if (hi == 0) return 0;
  const double d_hi = entries_[hi].stamp - stamp;
  const double d_lo = stamp - entries_[hi - 1].stamp;
  return d_lo <= d_hi ? hi - 1 : hi;
}

std::size_t StateSnapshotRing::at_or_before(double stamp) const {
  auto it = std::upper_bound(entries_.begin(), entries_.end(), stamp,
                             [](double t, const RingEntry& e) { return t < e.stamp; });
  if (it == entries_.begin()) return entries_.size();
  return static_cast<std::size_t>(it - entries_.begin()) - 1;
}

ReplayOutcome StateSnapshotRing::apply_delayed(const PreparedMeasurement& m, FilterState& x, Covariance23& P,
                                               const UkfParams& params) {
  ReplayOutcome out;
  if (entries_.empty()) {
    out.status = ReplayStatus::kEmptyBuffer;
    out.update = apply_measurement(m, x, P, params);
    return out;
  }
  const std::size_t k = at_or_before(m.stamp);
  if (k == entries_.size()) {
    ++dropped_;
    out.status = ReplayStatus::kDropped;
    return out;
  }

  RingEntry& entry = entries_[k];
  auto pos = std::upper_bound(entry.attached.begin(), entry.attached.end(), m.stamp,
                              [](double t, const PreparedMeasurement& a) { return t < a.stamp; });
  const bool newest = k + 1 == entries_.size() && pos == entry.attached.end();
  if (newest) {
    out.status = ReplayStatus::kDirect;
    out.update = apply_measurement(m, x, P, entry.step.params);
    entry.attached.push_back(m);
    entry.x = x;
    entry.P = P;
    return out;
  }

  out.status = ReplayStatus::kReplayed;
  const std::size_t insert_at = static_cast<std::size_t>(pos - entry.attached.begin());
  entry.attached.insert(pos, m);
  FilterState xs = entry.x_step;
  Covariance23 Ps = entry.P_step;
  for (std::size_t i = 0; i < entry.attached.size(); ++i) {
    UpdateOutcome o = apply_measurement(entry.attached[i], xs, Ps, entry.step.params);
    if (i == insert_at) out.update = std::move(o);
  }
  entry.x = xs;
  entry.P = Ps;
  for (std::size_t j = k + 1; j < entries_.size(); ++j) {
    RingEntry& e = entries_[j];
    apply_step(e.step, xs, Ps);
    e.x_step = xs;
    e.P_step = Ps;
    for (const PreparedMeasurement& a : e.attached) apply_measurement(a, xs, Ps, e.step.params);
    e.x = xs;
    e.P = Ps;
    ++out.steps_replayed;
  }
  x = xs;
  P = Ps;
  return out;
}

void StateSnapshotRing::clear() {
  entries_.clear();
  dropped_ = 0;
}

}  // namespace quatfuse
