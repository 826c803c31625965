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
#include "quatfuse/process_model.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

namespace quatfuse {
namespace {

TEST(Propagate, ConstantVelocityInBodyFrame) {
  FilterState x;
  x.q = Quaternion::from_euler(0, 0, 0.5 * std::numbers::pi);
  x.v = {2.0, 0.0, 0.0};
  PropagationStep step;
  step.dt = 0.1;
  const FilterState y = propagate(x, step);
  // Heading north: body x maps to world y.
  EXPECT_NEAR(y.p.x(), 0.0, 1e-15);
  EXPECT_NEAR(y.p.y(), 0.2, 1e-15);
  EXPECT_DOUBLE_EQ(y.stamp, 0.1);
}

TEST(Propagate, ConstantYawRateIntegratesExactly) {
  FilterState x;
  x.omega = {0.0, 0.0, 0.3};
  PropagationStep step;
  step.dt = 0.01;
  for (int i = 0; i < 1000; ++i) x = propagate(x, step);
  EXPECT_NEAR(x.q.to_euler().z(), wrap_angle(3.0), 1e-10);
  EXPECT_NEAR(x.q.norm(), 1.0, 1e-12);
}

TEST(Propagate, HeldStatesUnchanged) {
  FilterState x;
  x.a = {0.5, -0.2, 0.1};
  x.omega = {0.01, 0.02, 0.03};
  x.b_g = {1e-3, 2e-3, 3e-3};
  x.b_a = {0.1, 0.2, 0.3};
  x.b_ewz = 0.004;
  PropagationStep step;
  step.dt = 0.05;
  const FilterState y = propagate(x, step);
  EXPECT_EQ(y.a, x.a);
  EXPECT_EQ(y.omega, x.omega);
  EXPECT_EQ(y.b_g, x.b_g);
  EXPECT_EQ(y.b_a, x.b_a);
  EXPECT_EQ(y.b_ewz, x.b_ewz);
  EXPECT_LT((y.v - (x.v + 0.05 * x.a)).norm(), 1e-15);
}

TEST(Propagate, NonFiniteThrows) {
  FilterState x;
  x.v.x() = INFINITY;
  EXPECT_THROW(propagate(x, PropagationStep{}), NumericalError);
}

TEST(PropagationStep, ValidateDt) {
  PropagationStep s;
  s.dt = 0.0;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s.dt = kMaxStepDt;
  EXPECT_NO_THROW(s.validate());
  s.dt = std::nextafter(kMaxStepDt, 1.0);
  EXPECT_THROW(s.validate(), std::invalid_argument);
}

TEST(ProcessNoise, ScalesWithDtAndCoast) {
  PropagationStep s;
  s.dt = 0.02;
  const Covariance23 Q = process_noise_matrix(s);
  EXPECT_TRUE(Q.isDiagonal());
  EXPECT_DOUBLE_EQ(Q(idx::kPos, idx::kPos), s.noise.q_position * 0.02);
  EXPECT_DOUBLE_EQ(Q(idx::kOmega + 2, idx::kOmega + 2), s.noise.q_omega * 0.02);
  s.coast_active = true;
  const Covariance23 Qc = process_noise_matrix(s);
  EXPECT_DOUBLE_EQ(Qc(idx::kPos, idx::kPos), s.noise.q_position * s.noise.coast_position_inflation * 0.02);
  EXPECT_EQ(Qc(idx::kVel, idx::kVel), Q(idx::kVel, idx::kVel));
}

TEST(ProcessNoise, FrozenStatesGetZero) {
  PropagationStep s;
  s.frozen.gyro_bias = true;
  s.frozen.encoder_yaw_bias = true;
  const Covariance23 Q = process_noise_matrix(s);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(Q(idx::kGyroBias + i, idx::kGyroBias + i), 0.0);
  EXPECT_EQ(Q(idx::kEncoderYawBias, idx::kEncoderYawBias), 0.0);
  EXPECT_GT(Q(idx::kAccelBias, idx::kAccelBias), 0.0);
  EXPECT_EQ(s.frozen.mask().count(), 4u);
}

}  // namespace
}  // namespace quatfuse
