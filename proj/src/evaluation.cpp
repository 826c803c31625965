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
#include "quatfuse/evaluation.hpp"

#include "quatfuse/text_io.hpp"

#include <Eigen/Geometry>
#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

namespace quatfuse::eval {

TrajectoryEstimate::TrajectoryEstimate(std::vector<PoseSample> poses) {
  poses_.reserve(poses.size());
  for (const auto& p : poses) push_back(p);
}

void TrajectoryEstimate::push_back(const PoseSample& s) {
  if (!std::isfinite(s.stamp)) throw EvaluationError("non-finite stamp");
  if (!poses_.empty() && !(s.stamp > poses_.back().stamp))
    throw EvaluationError("trajectory stamps must strictly increase (" + format_double(s.stamp) + " after " +
                          format_double(poses_.back().stamp) + ")");
  poses_.push_back(s);
}

Vec3 TrajectoryEstimate::position_at(double stamp) const {
  if (poses_.empty()) throw EvaluationError("empty trajectory");
  if (stamp <= poses_.front().stamp) return poses_.front().p;
  if (stamp >= poses_.back().stamp) return poses_.back().p;
  auto it = std::upper_bound(poses_.begin(), poses_.end(), stamp,
                             [](double t, const PoseSample& s) { return t < s.stamp; });
  const PoseSample& b = *it;
  const PoseSample& a = *(it - 1);
  const double w = (stamp - a.stamp) / (b.stamp - a.stamp);
  return (1.0 - w) * a.p + w * b.p;
}

double TrajectoryEstimate::distance(double t0, double t1) const {
  if (poses_.empty() || !(t1 > t0)) return 0.0;
  double d = 0.0;
  Vec3 prev = position_at(t0);
  for (const auto& s : poses_) {
    if (s.stamp <= t0) continue;
    if (s.stamp >= t1) break;
    d += (s.p - prev).norm();
    prev = s.p;
  }
  return d + (position_at(t1) - prev).norm();
}

// ---------------------------------------------------------------------------

TrajectoryEstimate read_tum(std::istream& in) {
  TrajectoryEstimate t;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto tok = split_ws(line);
    if (tok.empty() || tok[0].front() == '#') continue;
    if (tok.size() != 8) throw EvaluationError("line " + std::to_string(line_no) + ": expected 8 columns");
    double v[8];
    try {
      for (int i = 0; i < 8; ++i) v[i] = parse_double(tok[i]);
    } catch (const std::invalid_argument&) {
      throw EvaluationError("line " + std::to_string(line_no) + ": bad number");
    }
    PoseSample s;
    s.stamp = v[0];
    s.p = Vec3(v[1], v[2], v[3]);
    s.q = Quaternion{v[7], v[4], v[5], v[6]};
    try {
      t.push_back(s);
    } catch (const EvaluationError& e) {
      throw EvaluationError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return t;
}

TrajectoryEstimate load_tum(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw EvaluationError("cannot open " + path);
  return read_tum(in);
}

void write_tum(std::ostream& out, const PoseSample& s) {
  out << format_double(s.stamp) << ' ' << format_double(s.p.x()) << ' ' << format_double(s.p.y()) << ' '
      << format_double(s.p.z()) << ' ' << format_double(s.q.x) << ' ' << format_double(s.q.y) << ' '
      << format_double(s.q.z) << ' ' << format_double(s.q.w) << '\n';
}

void write_tum(std::ostream& out, const TrajectoryEstimate& t) {
  for (const auto& s : t.poses()) write_tum(out, s);
}

// ---------------------------------------------------------------------------

Association associate(const TrajectoryEstimate& est, const TrajectoryEstimate& ref, double max_dt) {
  Association a;
  std::vector<bool> used(ref.size(), false);
  const auto& r = ref.poses();
  for (std::size_t i = 0; i < est.size(); ++i) {
    const double t = est[i].stamp;
    auto it = std::lower_bound(r.begin(), r.end(), t, [](const PoseSample& s, double v) { return s.stamp < v; });
    std::size_t best = r.size();
    double best_dt = max_dt;
    // Candidates: the neighbour before (checked first so it wins ties) and
    // the one at or after.
    if (it != r.begin()) {
      const auto j = static_cast<std::size_t>(it - r.begin()) - 1;
      const double dt = std::abs(r[j].stamp - t);
      if (dt <= best_dt) {
        best = j;
        best_dt = dt;
      }
    }
    if (it != r.end()) {
      const auto j = static_cast<std::size_t>(it - r.begin());
      const double dt = std::abs(r[j].stamp - t);
      if (dt < best_dt || (best == r.size() && dt <= best_dt)) {
        best = j;
        best_dt = dt;
      }
    }
    if (best == r.size()) {
      ++a.unmatched_est;
      continue;
    }
    a.pairs.emplace_back(i, best);
    used[best] = true;
  }
  a.unmatched_ref = static_cast<std::size_t>(std::count(used.begin(), used.end(), false));
  return a;
}

RigidTransform align_se3(const std::vector<Vec3>& est, const std::vector<Vec3>& ref) {
  if (est.size() != ref.size()) throw EvaluationError("align_se3: size mismatch");
  if (est.empty()) throw EvaluationError("align_se3: no points");
  const auto n = static_cast<Eigen::Index>(est.size());
  Eigen::Matrix3Xd src(3, n), dst(3, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    src.col(i) = est[static_cast<std::size_t>(i)];
    dst.col(i) = ref[static_cast<std::size_t>(i)];
  }
  const Eigen::Matrix4d T = Eigen::umeyama(src, dst, false);
  RigidTransform out;
  out.R = T.topLeftCorner<3, 3>();
  out.t = T.topRightCorner<3, 1>();
  if (!out.R.allFinite() || !out.t.allFinite()) throw EvaluationError("align_se3: degenerate point set");
  return out;
}

AteResult ate(const TrajectoryEstimate& est, const TrajectoryEstimate& ref, const AteOptions& options) {
  const Association a = associate(est, ref, options.max_dt);
  AteResult res;
  res.unmatched_est = a.unmatched_est;
  res.unmatched_ref = a.unmatched_ref;
  res.count = a.pairs.size();
  if (a.pairs.empty()) throw EvaluationError("ate: no associated samples");
  std::vector<Vec3> e, r;
  e.reserve(a.pairs.size());
  r.reserve(a.pairs.size());
  for (const auto& [i, j] : a.pairs) {
    e.push_back(est[i].p);
    r.push_back(ref[j].p);
  }
  if (options.align) res.transform = align_se3(e, r);
  std::vector<double> norms;
  norms.reserve(e.size());
  double sq = 0.0;
  for (std::size_t k = 0; k < e.size(); ++k) {
    const double d = (res.transform.apply(e[k]) - r[k]).norm();
    sq += d * d;
    norms.push_back(d);
    res.residuals.emplace_back(est[a.pairs[k].first].stamp, d);
  }
  const double n = static_cast<double>(norms.size());
  res.rmse = std::sqrt(sq / n);
  double sum = 0.0;
  for (double d : norms) sum += d;
  res.mean = sum / n;
  res.max = *std::max_element(norms.begin(), norms.end());
  res.median = percentile(norms, 50.0);
  return res;
}

double ate_rmse(const TrajectoryEstimate& est, const TrajectoryEstimate& ref, const AteOptions& options) {
  return ate(est, ref, options).rmse;
}

TrajectoryEstimate transformed(const TrajectoryEstimate& t, const RigidTransform& T) {
  Eigen::Quaterniond qr(T.R);
  const Quaternion qt{qr.w(), qr.x(), qr.y(), qr.z()};
  std::vector<PoseSample> out;
  out.reserve(t.size());
  for (PoseSample s : t.poses()) {
    s.p = T.apply(s.p);
    s.q = (qt * s.q).normalized();
    if (s.position_covariance) s.position_covariance = T.R * *s.position_covariance * T.R.transpose();
    out.push_back(s);
  }
  return TrajectoryEstimate(std::move(out));
}

// ---------------------------------------------------------------------------

std::pair<double, double> chi2_band95(int dof) {
  if (dof < 1) throw EvaluationError("chi2_band95: dof must be positive");
  const boost::math::chi_squared dist(dof);
  return {boost::math::quantile(dist, 0.025), boost::math::quantile(dist, 0.975)};
}

NisSeries nis_series(const std::vector<PathResult>& results, Path path, bool include_rejected, double t_from) {
  NisSeries out;
  double sum = 0.0;
  std::size_t inside = 0;
  for (const auto& r : results) {
    if (r.path != path || r.dim < 1 || r.singular) continue;
    // Quality rejections and similar never reached the gate.
    if (!r.accepted && (r.note == "quality" || r.note == "implied_speed" || r.note == "stale")) continue;
    NisSample s{r.stamp, r.d2, r.dim, r.threshold, r.accepted};
    out.samples.push_back(s);
    if (r.stamp < t_from || (!r.accepted && !include_rejected)) continue;
    const auto [lo, hi] = chi2_band95(r.dim);
    sum += r.d2 / r.dim;
    if (r.d2 >= lo && r.d2 <= hi) ++inside;
    ++out.summary.count;
  }
  if (out.summary.count > 0) {
    out.summary.mean = sum / static_cast<double>(out.summary.count);
    out.summary.in_band = static_cast<double>(inside) / static_cast<double>(out.summary.count);
  }
  return out;
}

NisSeries nis_series(const std::vector<StepReport>& reports, Path path, bool include_rejected, double t_from) {
  std::vector<PathResult> all;
  for (const auto& r : reports) all.insert(all.end(), r.results.begin(), r.results.end());
  return nis_series(all, path, include_rejected, t_from);
}

std::vector<PathResult> read_report_log(std::istream& in) {
  std::vector<PathResult> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto tok = split_ws(line);
    if (tok.empty() || tok[0] != "meas") continue;
    if (tok.size() != 9) throw EvaluationError("report line " + std::to_string(line_no) + ": expected 9 fields");
    PathResult r;
    bool found = false;
    for (int p = 0; p < static_cast<int>(Path::kCount); ++p) {
      if (tok[2] == path_name(static_cast<Path>(p))) {
        r.path = static_cast<Path>(p);
        found = true;
      }
    }
    if (!found) throw EvaluationError("report line " + std::to_string(line_no) + ": unknown path");
    try {
      r.stamp = parse_double(tok[1]);
      r.accepted = tok[3] == "accept";
      r.d2 = parse_double(tok[4]);
      r.dim = static_cast<int>(parse_int(tok[5]));
      r.threshold = parse_double(tok[6]);
      r.steps_replayed = static_cast<std::size_t>(parse_int(tok[7]));
    } catch (const std::invalid_argument&) {
      throw EvaluationError("report line " + std::to_string(line_no) + ": bad number");
    }
    r.note = tok[8] == "-" ? "" : std::string(tok[8]);
    r.singular = r.note == "singular";
    out.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<Segment> blackout_segments(const std::vector<double>& fix_stamps, double threshold_s) {
  std::vector<Segment> out;
  for (std::size_t i = 1; i < fix_stamps.size(); ++i) {
    if (fix_stamps[i] < fix_stamps[i - 1]) throw EvaluationError("blackout_segments: stamps must be sorted");
    if (fix_stamps[i] - fix_stamps[i - 1] > threshold_s) out.push_back({fix_stamps[i - 1], fix_stamps[i]});
  }
  return out;
}

DriftResult drift_rate(const TrajectoryEstimate& est, const TrajectoryEstimate& ref,
                       const std::vector<Segment>& segments) {
  DriftResult out;
  if (est.empty() || ref.empty()) throw EvaluationError("drift_rate: empty trajectory");
  double total_err = 0.0, total_dist = 0.0;
  for (const auto& seg : segments) {
    DriftSegment d;
    d.segment = seg;
    d.distance = ref.distance(seg.t0, seg.t1);
    if (d.distance < 1.0) continue;
    const Vec3 e0 = est.position_at(seg.t0) - ref.position_at(seg.t0);
    const Vec3 e1 = est.position_at(seg.t1) - ref.position_at(seg.t1);
    d.terminal_error = (e1 - e0).norm();
    d.drift_m_per_km = 1000.0 * d.terminal_error / d.distance;
    total_err += d.terminal_error;
    total_dist += d.distance;
    out.segments.push_back(d);
  }
  if (total_dist > 0.0) out.overall_m_per_km = 1000.0 * total_err / total_dist;
  return out;
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw EvaluationError("percentile of an empty set");
  if (!(p >= 0.0 && p <= 100.0)) throw EvaluationError("percentile outside [0, 100]");
  std::sort(values.begin(), values.end());
  const double pos = p / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double w = pos - static_cast<double>(lo);
  return (1.0 - w) * values[lo] + w * values[hi];
}

void Report::add(const std::string& key, double value) { entries_.emplace_back(key, format_double(value)); }

void Report::add(const std::string& key, const std::string& value) { entries_.emplace_back(key, value); }

void Report::write(std::ostream& out) const {
  for (const auto& [k, v] : entries_) out << k << " = " << v << '\n';
}

}  // namespace quatfuse::eval
