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
#include "quatfuse/fusion_pipeline.hpp"

#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace quatfuse::eval {

class EvaluationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PoseSample {
  double stamp = 0.0;
  Vec3 p = Vec3::Zero();
  Quaternion q;
  std::optional<Mat3> position_covariance;
};

/// Timestamped pose sequence. Stamps must strictly increase.
class TrajectoryEstimate {
 public:
  TrajectoryEstimate() = default;
  explicit TrajectoryEstimate(std::vector<PoseSample> poses);

  /// Throws EvaluationError unless the stamp is after the last one.
  void push_back(const PoseSample& s);
  const std::vector<PoseSample>& poses() const { return poses_; }
  std::size_t size() const { return poses_.size(); }
  bool empty() const { return poses_.empty(); }
  const PoseSample& operator[](std::size_t i) const { return poses_[i]; }

  /// Linear position interpolation; stamps outside the range clamp.
  Vec3 position_at(double stamp) const;
  /// Path length between two stamps.
  double distance(double t0, double t1) const;

 private:
  std::vector<PoseSample> poses_;
};

/// `stamp tx ty tz qx qy qz qw` per line; '#' lines are comments.
TrajectoryEstimate read_tum(std::istream& in);
TrajectoryEstimate load_tum(const std::string& path);
void write_tum(std::ostream& out, const PoseSample& s);
void write_tum(std::ostream& out, const TrajectoryEstimate& t);

inline constexpr double kDefaultMaxDt = 0.02;

struct Association {
  /// (est index, ref index), in est order.
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::size_t unmatched_est = 0;
  std::size_t unmatched_ref = 0;
};

/// Pairs each estimate with the nearest reference stamp within max_dt.
/// Ties go to the earlier reference sample.
Association associate(const TrajectoryEstimate& est, const TrajectoryEstimate& ref, double max_dt = kDefaultMaxDt);

struct RigidTransform {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();
  Vec3 apply(const Vec3& p) const { return R * p + t; }
};

/// Closed-form least-squares rotation and translation (no scale) taking
/// est onto ref.
RigidTransform align_se3(const std::vector<Vec3>& est, const std::vector<Vec3>& ref);

struct AteOptions {
  double max_dt = kDefaultMaxDt;
  bool align = true;
};

struct AteResult {
  double rmse = 0.0;
  double mean = 0.0;
  double median = 0.0;
  double max = 0.0;
  std::size_t count = 0;
  std::size_t unmatched_est = 0;
  std::size_t unmatched_ref = 0;
  RigidTransform transform;
  /// Per pair: (est stamp, residual norm).
  std::vector<std::pair<double, double>> residuals;
};

AteResult ate(const TrajectoryEstimate& est, const TrajectoryEstimate& ref, const AteOptions& options = {});
double ate_rmse(const TrajectoryEstimate& est, const TrajectoryEstimate& ref, const AteOptions& options = {});

/// Applies a rigid transform to every pose.
TrajectoryEstimate transformed(const TrajectoryEstimate& t, const RigidTransform& T);

struct NisSample {
  double stamp = 0.0;
  double d2 = 0.0;
  int dim = 0;
  double threshold = 0.0;
  bool accepted = false;
};

struct NisSummary {
  std::size_t count = 0;
  /// Mean of d2 / dim.
  double mean = 0.0;
  /// Fraction of d2 inside the two-sided 95% chi-squared band.
  double in_band = 0.0;
};

struct NisSeries {
  std::vector<NisSample> samples;
  NisSummary summary;
};

/// Lower and upper bounds of the central 95% chi-squared interval.
std::pair<double, double> chi2_band95(int dof);

/// NIS over the updates of one path. Only accepted, non-singular results
/// enter the summary unless `include_rejected` is set.
NisSeries nis_series(const std::vector<PathResult>& results, Path path, bool include_rejected = false,
                     double t_from = -1e300);
NisSeries nis_series(const std::vector<StepReport>& reports, Path path, bool include_rejected = false,
                     double t_from = -1e300);

/// Parses `meas` lines from a report log.
std::vector<PathResult> read_report_log(std::istream& in);

struct Segment {
  double t0 = 0.0;
  double t1 = 0.0;
  double duration() const { return t1 - t0; }
};

/// Gaps between consecutive fix stamps longer than `threshold_s`. The
/// segment runs from the last fix before the gap to the first after it.
std::vector<Segment> blackout_segments(const std::vector<double>& fix_stamps, double threshold_s);

struct DriftSegment {
  Segment segment;
  double distance = 0.0;        // m, along the reference
  double terminal_error = 0.0;  // m, error growth over the segment
  double drift_m_per_km = 0.0;
};

struct DriftResult {
  std::vector<DriftSegment> segments;
  /// Total error growth over total distance, m/km.
  double overall_m_per_km = 0.0;
};

/// Error growth across each segment: |e(t1) - e(t0)| where e = est - ref,
/// divided by the reference distance travelled. Segments shorter than
/// 1 m of travel are skipped.
DriftResult drift_rate(const TrajectoryEstimate& est, const TrajectoryEstimate& ref,
                       const std::vector<Segment>& segments);

/// Linear-interpolated percentile, p in [0, 100].
double percentile(std::vector<double> values, double p);

/// Ordered `key = value` report.
class Report {
 public:
  void add(const std::string& key, double value);
  void add(const std::string& key, const std::string& value);
  void write(std::ostream& out) const;
  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

}  // namespace quatfuse::eval
