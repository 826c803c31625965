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

#include "quatfuse/measurement_model.hpp"
#include "quatfuse/process_model.hpp"
#include "quatfuse/sensor_events.hpp"
#include "quatfuse/ukf_engine.hpp"

#include <cstddef>
#include <deque>
#include <memory>
#include <vector>

namespace quatfuse {

/// A measurement bound to its model and gate, ready to be applied (or
/// re-applied) at any state.
struct PreparedMeasurement {
  double stamp = 0.0;
  MeasVec z;
  std::shared_ptr<const MeasurementModel> model;
  double threshold = 0.0;
  /// Caller-defined path id, carried through replays untouched.
  int tag = 0;
  /// Opaque parameters the owner needs to rebuild `model` (for example
  /// after loading a checkpoint).
  Eigen::Vector4d aux = Eigen::Vector4d::Zero();
};

UpdateOutcome apply_measurement(const PreparedMeasurement& m, FilterState& x, Covariance23& P,
                                const UkfParams& params);

/// Everything needed to redo one IMU step: the prediction and the updates
/// that immediately follow it (raw IMU, orientation, ZUPT).
struct StepRecord {
  ImuSample imu;
  /// False for the very first step, which only anchors the clock.
  bool predict = true;
  PropagationStep propagation;
  UkfParams params;
  std::vector<PreparedMeasurement> updates;
};

/// Predict, then apply the step's own updates. Gaps longer than
/// kMaxStepDt are split into equal substeps. `outcomes`, when given,
/// receives one entry per update.
void apply_step(const StepRecord& step, FilterState& x, Covariance23& P,
                std::vector<UpdateOutcome>* outcomes = nullptr);

struct RingEntry {
  double stamp = 0.0;
  StepRecord step;
  /// State right after the step's own updates.
  FilterState x_step;
  Covariance23 P_step = Covariance23::Zero();
  /// Other measurements applied at this step, ordered by stamp.
  std::vector<PreparedMeasurement> attached;
  /// State after the attached measurements.
  FilterState x;
  Covariance23 P = Covariance23::Zero();
};

enum class ReplayStatus { kDirect, kReplayed, kDropped, kEmptyBuffer };

struct ReplayOutcome {
  ReplayStatus status = ReplayStatus::kDirect;
  std::size_t steps_replayed = 0;
  UpdateOutcome update;
};

/**
 * Fixed-capacity history of IMU steps for delayed measurements.
 *
 * A late measurement is inserted into the newest entry whose stamp is at
 * or before its own. That entry is restored, its measurements re-applied
 * with the newcomer in stamp order, and every later step re-run,
 * including the measurements attached to those steps. The result equals
 * what an in-order run would have produced.
 */
class StateSnapshotRing {
 public:
  explicit StateSnapshotRing(std::size_t capacity = 100);

  /// Appends a step; evicts the oldest entry at capacity. Throws
  /// std::invalid_argument unless stamps strictly increase.
  void record(RingEntry entry);

  /// Applies `m` at its own epoch and brings (x, P) up to date. `x`, `P`
  /// must be the current filter state, which is expected to match the
  /// newest entry. Buffered measurements use the parameters stored with
  /// their step; `params` only serves an empty buffer.
  ReplayOutcome apply_delayed(const PreparedMeasurement& m, FilterState& x, Covariance23& P,
                              const UkfParams& params);

  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return entries_.empty(); }
  const RingEntry& at(std::size_t i) const { return entries_.at(i); }
  const RingEntry& back() const { return entries_.back(); }
  const std::deque<RingEntry>& entries() const { return entries_; }

  /// Entry with the stamp closest to `stamp`; ties go to the earlier one.
  std::size_t nearest(double stamp) const;
  /// Newest entry at or before `stamp`, or size() when none.
  std::size_t at_or_before(double stamp) const;

  std::size_t dropped() const { return dropped_; }
  void set_dropped(std::size_t n) { dropped_ = n; }
  void clear();

 private:
  std::size_t capacity_;
  std::deque<RingEntry> entries_;
  std::size_t dropped_ = 0;
};

}  // namespace quatfuse
