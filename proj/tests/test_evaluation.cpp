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

#include <gtest/gtest.h>

#include <random>
#include <sstream>

namespace quatfuse::eval {
namespace {

PoseSample pose(double t, const Vec3& p = Vec3::Zero()) {
  PoseSample s;
  s.stamp = t;
  s.p = p;
  return s;
}

TrajectoryEstimate random_walk(std::mt19937_64& rng, std::size_t n, double t0, double rate) {
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> u(0.5, 1.5);
  std::vector<PoseSample> poses;
  double t = t0;
  Vec3 p = Vec3::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    PoseSample s;
    s.stamp = t;
    s.p = p;
    s.q = Quaternion::from_euler(0, 0, 0.01 * i);
    poses.push_back(s);
    t += u(rng) / rate;
    p += Vec3(nd(rng), nd(rng), 0.1 * nd(rng));
  }
  return TrajectoryEstimate(poses);
}

TEST(Associate, MatchesLinearScan) {
  std::mt19937_64 rng(61);
  for (int trial = 0; trial < 20; ++trial) {
    const TrajectoryEstimate est = random_walk(rng, 300, 0.0, 100.0);
    const TrajectoryEstimate ref = random_walk(rng, 400, 0.003 * trial, 120.0);
    const double max_dt = 0.004;
    const Association a = associate(est, ref, max_dt);
    std::vector<std::pair<std::size_t, std::size_t>> oracle;
    for (std::size_t i = 0; i < est.size(); ++i) {
      std::size_t best = ref.size();
      double best_dt = max_dt;
      for (std::size_t j = 0; j < ref.size(); ++j) {
        const double dt = std::abs(ref[j].stamp - est[i].stamp);
        if (dt < best_dt || (best == ref.size() && dt <= best_dt)) {
          best = j;
          best_dt = dt;
        }
      }
      if (best != ref.size()) oracle.emplace_back(i, best);
    }
    EXPECT_EQ(a.pairs, oracle);
    EXPECT_EQ(a.unmatched_est, est.size() - oracle.size());
  }
}

TEST(Associate, TieGoesToEarlier) {
  const TrajectoryEstimate ref({pose(1.0), pose(1.02)});
  const TrajectoryEstimate est({pose(1.01)});
  const Association a = associate(est, ref, 0.02);
  ASSERT_EQ(a.pairs.size(), 1u);
  EXPECT_EQ(a.pairs[0].second, 0u);
  EXPECT_EQ(a.unmatched_ref, 1u);
}

TEST(Align, RecoversRigidTransform) {
  std::mt19937_64 rng(62);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 20; ++trial) {
    RigidTransform T;
    T.R = Quaternion{n(rng), n(rng), n(rng), n(rng)}.normalized().to_rotation_matrix();
    T.t = Vec3(n(rng), n(rng), n(rng)) * 100.0;
    std::vector<Vec3> est, ref;
    for (int i = 0; i < 50; ++i) {
      est.push_back(Vec3(n(rng), n(rng), n(rng)) * 10.0);
      ref.push_back(T.apply(est.back()));
    }
    const RigidTransform A = align_se3(est, ref);
    EXPECT_LT((A.R - T.R).norm(), 1e-9);
    EXPECT_LT((A.t - T.t).norm(), 1e-7);
    EXPECT_NEAR(A.R.determinant(), 1.0, 1e-12);
  }
  EXPECT_THROW(align_se3({Vec3::Zero()}, {}), EvaluationError);
}

TEST(Ate, Invariants) {
  std::mt19937_64 rng(63);
  const TrajectoryEstimate ref = random_walk(rng, 500, 0.0, 10.0);
  EXPECT_NEAR(ate_rmse(ref, ref), 0.0, 1e-9);
  RigidTransform T;
  T.R = Quaternion::from_euler(0.1, -0.2, 1.0).to_rotation_matrix();
  T.t = {5.0, -3.0, 1.0};
  const TrajectoryEstimate moved = transformed(ref, T);
  EXPECT_NEAR(ate_rmse(moved, ref), 0.0, 1e-8);
  EXPECT_GT(ate_rmse(moved, ref, {kDefaultMaxDt, false}), 1.0);

  // A constant 0.5 m offset along x, unaligned: every residual is 0.5.
  RigidTransform shift;
  shift.t = {0.5, 0.0, 0.0};
  const AteResult r = ate(transformed(ref, shift), ref, {kDefaultMaxDt, false});
  EXPECT_NEAR(r.rmse, 0.5, 1e-12);
  EXPECT_NEAR(r.max, 0.5, 1e-12);
  EXPECT_NEAR(r.median, 0.5, 1e-12);
  EXPECT_EQ(r.count, ref.size());
  // Aligned ATE never exceeds unaligned ATE.
  std::normal_distribution<double> n;
  std::vector<PoseSample> noisy = ref.poses();
  for (auto& s : noisy) s.p += Vec3(n(rng), n(rng), n(rng)) + Vec3(2.0, 0.0, 0.0);
  const TrajectoryEstimate est(noisy);
  EXPECT_LE(ate_rmse(est, ref), ate_rmse(est, ref, {kDefaultMaxDt, false}));
}

TEST(Nis, MeanAndBand) {
  std::vector<PathResult> results;
  for (int i = 0; i < 100; ++i) {
    PathResult r;
    r.path = Path::kGps;
    r.stamp = i;
    r.dim = 3;
    r.d2 = 3.0 * (i % 2 == 0 ? 0.5 : 1.5);
    r.accepted = true;
    results.push_back(r);
  }
  PathResult rej = results.back();
  rej.stamp = 200.0;
  rej.accepted = false;
  rej.d2 = 1e6;
  results.push_back(rej);
  PathResult other = results.front();
  other.path = Path::kEncoder;
  results.push_back(other);

  NisSeries s = nis_series(results, Path::kGps);
  EXPECT_EQ(s.summary.count, 100u);
  EXPECT_NEAR(s.summary.mean, 1.0, 1e-12);
  EXPECT_NEAR(s.summary.in_band, 1.0, 1e-12);
  EXPECT_EQ(nis_series(results, Path::kGps, true).summary.count, 101u);
  EXPECT_EQ(nis_series(results, Path::kGps, false, 50.0).summary.count, 50u);

  const auto b1 = chi2_band95(1), b3 = chi2_band95(3);
  EXPECT_NEAR(b1.first, 9.82069e-4, 1e-8);
  EXPECT_NEAR(b1.second, 5.023886, 1e-6);
  EXPECT_NEAR(b3.first, 0.2157953, 1e-6);
  EXPECT_NEAR(b3.second, 9.348404, 1e-6);
}

TEST(Blackout, Segments) {
  const std::vector<Segment> s = blackout_segments({0.0, 0.2, 0.4, 10.0, 10.2, 20.0}, 5.0);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_DOUBLE_EQ(s[0].t0, 0.4);
  EXPECT_DOUBLE_EQ(s[0].t1, 10.0);
  EXPECT_NEAR(s[1].duration(), 9.8, 1e-12);
  EXPECT_THROW(blackout_segments({1.0, 0.5}, 5.0), EvaluationError);
}

TEST(Drift, ErrorGrowthPerKilometre) {
  std::vector<PoseSample> ref, est;
  for (int i = 0; i <= 1000; ++i) {
    const double t = i;
    ref.push_back(pose(t, Vec3(2.0 * t, 0.0, 0.0)));
    // Error grows by 1 cm per metre travelled after t = 100.
    est.push_back(pose(t, Vec3(2.0 * t, t > 100.0 ? 0.02 * (t - 100.0) : 0.0, 0.0)));
  }
  const DriftResult d = drift_rate(TrajectoryEstimate(est), TrajectoryEstimate(ref), {{100.0, 600.0}, {0.0, 0.4}});
  ASSERT_EQ(d.segments.size(), 1u);
  EXPECT_NEAR(d.segments[0].distance, 1000.0, 1e-9);
  EXPECT_NEAR(d.segments[0].terminal_error, 10.0, 1e-9);
  EXPECT_NEAR(d.overall_m_per_km, 10.0, 1e-9);
}

TEST(Percentile, Interpolates) {
  EXPECT_DOUBLE_EQ(percentile({3, 1, 2, 4}, 50.0), 2.5);
  EXPECT_DOUBLE_EQ(percentile({5}, 95.0), 5.0);
  EXPECT_DOUBLE_EQ(percentile({1, 2, 3}, 100.0), 3.0);
  EXPECT_THROW(percentile({}, 50.0), EvaluationError);
}

TEST(Tum, RoundTripAndErrors) {
  std::mt19937_64 rng(64);
  const TrajectoryEstimate t = random_walk(rng, 50, 1.0, 10.0);
  std::stringstream ss;
  write_tum(ss, t);
  const TrajectoryEstimate back = read_tum(ss);
  ASSERT_EQ(back.size(), t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    EXPECT_EQ(back[i].stamp, t[i].stamp);
    EXPECT_EQ(back[i].p, t[i].p);
  }
  std::istringstream bad("# c\n1 0 0 0 0 0 0 1\n0.5 0 0 0 0 0 0 1\n");
  EXPECT_THROW(read_tum(bad), EvaluationError);
  std::istringstream short_line("1 0 0 0 0 0 1\n");
  EXPECT_THROW(read_tum(short_line), EvaluationError);
}

TEST(Trajectory, InterpolationAndDistance) {
  const TrajectoryEstimate t({pose(0.0), pose(1.0, Vec3(3, 4, 0)), pose(2.0, Vec3(3, 4, 0))});
  EXPECT_LT((t.position_at(0.5) - Vec3(1.5, 2, 0)).norm(), 1e-12);
  EXPECT_LT((t.position_at(-1.0) - Vec3::Zero()).norm(), 1e-12);
  EXPECT_NEAR(t.distance(0.0, 2.0), 5.0, 1e-12);
  EXPECT_NEAR(t.distance(0.5, 1.0), 2.5, 1e-12);
}

TEST(ReportLog, ParsesMeasLines) {
  StepReport r;
  r.stamp = 1.5;
  r.results.push_back({Path::kGps, 1.5, true, false, 2.25, 16.27, 3, "", 4});
  r.results.push_back({Path::kZupt, 1.5, false, false, 40.0, 16.27, 3, "gate", 0});
  std::istringstream in(format_report(r));
  const std::vector<PathResult> back = read_report_log(in);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].path, Path::kGps);
  EXPECT_TRUE(back[0].accepted);
  EXPECT_EQ(back[0].d2, 2.25);
  EXPECT_EQ(back[0].steps_replayed, 4u);
  EXPECT_EQ(back[1].path, Path::kZupt);
  EXPECT_FALSE(back[1].accepted);
}

}  // namespace
}  // namespace quatfuse::eval
