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
#include "quatfuse/core_types.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

namespace quatfuse {
namespace {

Quaternion random_quat(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  return Quaternion{n(rng), n(rng), n(rng), n(rng)}.normalized();
}

TEST(Quaternion, RotationMatchesEigen) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n;
  for (int i = 0; i < 1000; ++i) {
    const Quaternion q = random_quat(rng);
    const Eigen::Quaterniond e(q.w, q.x, q.y, q.z);
    const Vec3 v(n(rng), n(rng), n(rng));
    EXPECT_LT((rotate(q, v) - e * v).norm(), 1e-12);
    EXPECT_LT((q.to_rotation_matrix() - e.toRotationMatrix()).norm(), 1e-12);
  }
}

TEST(Quaternion, ProductComposesRotations) {
  std::mt19937_64 rng(8);
  const Vec3 v(0.3, -1.2, 2.0);
  for (int i = 0; i < 200; ++i) {
    const Quaternion a = random_quat(rng), b = random_quat(rng);
    EXPECT_LT((rotate(a * b, v) - rotate(a, rotate(b, v))).norm(), 1e-12);
  }
}

TEST(Quaternion, ExpMatchesAngleAxis) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n;
  for (int i = 0; i < 500; ++i) {
    const Vec3 w(n(rng), n(rng), n(rng));
    const double dt = 0.01 + 0.49 * std::abs(n(rng)) / 3.0;
    const Quaternion q = quat_exp(w, dt);
    const Eigen::Quaterniond e(Eigen::AngleAxisd(w.norm() * dt, w.normalized()));
    EXPECT_NEAR(std::abs(q.dot(Quaternion{e.w(), e.x(), e.y(), e.z()})), 1.0, 1e-12);
    EXPECT_NEAR(q.norm(), 1.0, 1e-15);
  }
}

TEST(Quaternion, ExpBranchesAgreeAtThreshold) {
  // Both branches are evaluated just above and below epsilon_omega.
  const Vec3 axis = Vec3(1.0, -2.0, 0.5).normalized();
  for (double mag : {0.5e-8, 1e-8, 2e-8, 1e-6}) {
    const Quaternion a = detail::quat_exp_exact(axis * mag, 0.5);
    const Quaternion b = detail::quat_exp_small_angle(axis * mag, 0.5);
    EXPECT_LT(rotation_distance(a, b), 1e-15) << mag;
  }
  EXPECT_EQ(quat_exp(Vec3::Zero(), 0.01).w, 1.0);
}

TEST(Quaternion, ExpRejectsNonFinite) {
  EXPECT_THROW(quat_exp(Vec3(NAN, 0, 0), 0.01), NumericalError);
  EXPECT_THROW(quat_exp(Vec3::Zero(), INFINITY), NumericalError);
}

TEST(Quaternion, EulerRoundTrip) {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const double r = std::numbers::pi * u(rng), p = 1.5 * u(rng), y = std::numbers::pi * u(rng);
    const Vec3 e = Quaternion::from_euler(r, p, y).to_euler();
    EXPECT_NEAR(wrap_angle(e.x() - r), 0.0, 1e-10);
    EXPECT_NEAR(e.y(), p, 1e-10);
    EXPECT_NEAR(wrap_angle(e.z() - y), 0.0, 1e-10);
  }
}

TEST(Quaternion, AxisAngleIsCanonical) {
  const Quaternion q = Quaternion::from_axis_angle(Vec3::UnitZ(), 1.5 * std::numbers::pi);
  EXPECT_GE(q.w, 0.0);
  EXPECT_NEAR(q.to_euler().z(), -0.5 * std::numbers::pi, 1e-12);
}

TEST(Quaternion, RotationDistance) {
  const Quaternion a = Quaternion::from_axis_angle(Vec3::UnitX(), 0.3);
  EXPECT_NEAR(rotation_distance(Quaternion::identity(), a), 0.3, 1e-12);
  // q and -q are the same rotation.
  EXPECT_NEAR(rotation_distance(a, -a), 0.0, 1e-7);
}

TEST(WrapAngle, Range) {
  EXPECT_DOUBLE_EQ(wrap_angle(std::numbers::pi), std::numbers::pi);
  EXPECT_DOUBLE_EQ(wrap_angle(-std::numbers::pi), std::numbers::pi);
  EXPECT_NEAR(wrap_angle(3.0 * std::numbers::pi + 0.1), -std::numbers::pi + 0.1, 1e-12);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-100.0, 100.0);
  for (int i = 0; i < 1000; ++i) {
    const double a = u(rng), w = wrap_angle(a);
    EXPECT_GT(w, -std::numbers::pi);
    EXPECT_LE(w, std::numbers::pi);
    EXPECT_NEAR(std::remainder(a - w, 2.0 * std::numbers::pi), 0.0, 1e-10);
  }
}

TEST(FilterState, FlattenRoundTrip) {
  FilterState x;
  x.p = {1, 2, 3};
  x.q = Quaternion::from_euler(0.1, 0.2, 0.3);
  x.v = {4, 5, 6};
  x.omega = {7, 8, 9};
  x.a = {10, 11, 12};
  x.b_g = {13, 14, 15};
  x.b_a = {16, 17, 18};
  x.b_ewz = 19;
  const StateVector s = x.flatten();
  EXPECT_EQ(s[idx::kQuat], x.q.w);
  EXPECT_EQ(s[idx::kEncoderYawBias], 19.0);
  const FilterState y = FilterState::unflatten(s, 4.5);
  EXPECT_EQ(y.flatten(), s);
  EXPECT_EQ(y.stamp, 4.5);
}

TEST(FilterState, CheckFiniteNamesComponent) {
  FilterState x;
  EXPECT_NO_THROW(x.check_finite("t"));
  x.v.y() = NAN;
  EXPECT_FALSE(x.is_finite());
  try {
    x.check_finite("t");
    FAIL();
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find('v'), std::string::npos);
  }
}

TEST(ProcessNoiseConfig, Validate) {
  ProcessNoiseConfig c;
  EXPECT_NO_THROW(c.validate());
  c.q_omega = -1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.coast_position_inflation = 0.5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Symmetrize, IsExactlySymmetric) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> n;
  Covariance23 P;
  for (int i = 0; i < P.size(); ++i) P.data()[i] = n(rng);
  const Covariance23 S = symmetrize(P);
  EXPECT_TRUE(S == S.transpose());
}

}  // namespace
}  // namespace quatfuse
