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
#include "quatfuse/ukf_engine.hpp"

#include <gtest/gtest.h>

#include <cstring>
#include <random>

namespace quatfuse {
namespace {

Covariance23 random_spd(std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> n;
  Covariance23 A;
  for (int i = 0; i < A.size(); ++i) A.data()[i] = n(rng);
  return scale * (A * A.transpose() / kStateDim + 0.1 * Covariance23::Identity());
}

FilterState some_state() {
  FilterState x;
  x.p = {1.0, -2.0, 0.5};
  x.q = Quaternion::from_euler(0.05, -0.02, 1.1);
  x.v = {1.5, 0.1, 0.0};
  x.omega = {0.0, 0.0, 0.2};
  x.stamp = 3.0;
  return x;
}

Covariance23 modest_P() {
  Covariance23 P = 0.01 * Covariance23::Identity();
  P.block<4, 4>(idx::kQuat, idx::kQuat) = 1e-4 * Eigen::Matrix4d::Identity();
  return P;
}

TEST(UkfParams, DefaultWeights) {
  const UkfParams p;
  EXPECT_NEAR(p.lambda(), -22.77, 1e-12);
  EXPECT_NEAR(p.wm0(), -22.77 / 0.23, 1e-9);
  EXPECT_NEAR(p.wm0() + 2 * kStateDim * p.wi(), 1.0, 1e-12);
  EXPECT_NEAR(p.wc0(), p.wm0() + 1.0 - 0.01 + 2.0, 1e-12);
}

TEST(SigmaPoints, RecoverMeanAndCovariance) {
  const FilterState x = some_state();
  const Covariance23 P = modest_P();
  const UkfParams params;
  const SigmaSet s = generate_sigma_points(x, P, params);
  EXPECT_NEAR(s.wm.sum(), 1.0, 1e-12);
  const StateVector mean = s.points * s.wm;
  const StateVector x0 = x.flatten();
  Covariance23 C = Covariance23::Zero();
  for (int i = 0; i < kSigmaCount; ++i) {
    const StateVector d = s.points.col(i) - x0;
    C += s.wc[i] * d * d.transpose();
  }
  // Quaternion slots are renormalised, every other block is exact.
  for (int i = 0; i < kStateDim; ++i) {
    if (i >= idx::kQuat && i < idx::kQuat + 4) continue;
    EXPECT_NEAR(mean[i], x0[i], 1e-9);
    for (int j = 0; j < kStateDim; ++j) {
      if (j >= idx::kQuat && j < idx::kQuat + 4) continue;
      EXPECT_NEAR(C(i, j), P(i, j), 1e-9);
    }
  }
  for (int i = 0; i < kSigmaCount; ++i) EXPECT_NEAR(s.point(i).q.norm(), 1.0, 1e-15);
  const FilterState m = mean_of_sigmas(s);
  EXPECT_LT(rotation_distance(m.q, x.q), 1e-6);
}

TEST(SigmaPoints, MeanHandlesHemisphereFlip) {
  SigmaSet s = generate_sigma_points(some_state(), modest_P(), UkfParams{});
  for (int i = 1; i < kSigmaCount; i += 2) s.points.col(i).segment<4>(idx::kQuat) *= -1.0;
  EXPECT_LT(rotation_distance(mean_of_sigmas(s).q, some_state().q), 1e-6);
}

TEST(RepairPd, LiftsSmallestEigenvalue) {
  Covariance23 P = Covariance23::Identity();
  P(5, 5) = -0.3;
  const Covariance23 R = repair_pd(P, 1e-9);
  EXPECT_NEAR(min_eigenvalue(R), 1e-9, 1e-12);
  const Covariance23 Q = 2.0 * Covariance23::Identity();
  EXPECT_TRUE(repair_pd(Q, 1e-9) == Q);
}

TEST(CapOmega, KeepsCorrelationCoefficients) {
  std::mt19937_64 rng(3);
  Covariance23 P = random_spd(rng, 5.0);
  const Covariance23 C = cap_omega_variance(P, 1.0);
  for (int i = 0; i < 3; ++i) EXPECT_LE(C(idx::kOmega + i, idx::kOmega + i), 1.0 + 1e-12);
  auto corr = [](const Covariance23& M, int i, int j) { return M(i, j) / std::sqrt(M(i, i) * M(j, j)); };
  for (int i = 0; i < kStateDim; ++i) {
    for (int j = 0; j < kStateDim; ++j) {
      if (i == j) continue;
      EXPECT_NEAR(corr(C, i, j), corr(P, i, j), 1e-12);
    }
  }
  EXPECT_GT(min_eigenvalue(C), 0.0);
}

TEST(CapOmega, InvalidFloorThrows) {
  const Covariance23 P = Covariance23::Identity();
  EXPECT_THROW(cap_omega_variance(P, 1.0, 1.0), std::invalid_argument);
  EXPECT_THROW(cap_omega_variance(P, 1.0, 2.0), std::invalid_argument);
  EXPECT_NO_THROW(cap_omega_variance(P, 1.0, 0.5));
}

TEST(ConditionCovariance, Invariants) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n;
  const UkfParams params;
  for (int trial = 0; trial < 50; ++trial) {
    Covariance23 P = random_spd(rng, std::pow(10.0, trial % 7 - 3));
    // Asymmetric noise and an indefinite direction.
    for (int k = 0; k < 20; ++k) P(rng() % kStateDim, rng() % kStateDim) += 1e-3 * n(rng);
    P(0, 0) -= 10.0;
    const Quaternion q = Quaternion{n(rng), n(rng), n(rng), n(rng)}.normalized();
    const Covariance23 C = condition_covariance(P, q, params);
    EXPECT_TRUE(C == C.transpose());
    EXPECT_GE(min_eigenvalue(C), params.epsilon_pd);
    for (int i = 0; i < 3; ++i) EXPECT_LE(C(idx::kOmega + i, idx::kOmega + i), params.omega_variance_cap);
    StateVector u = StateVector::Zero();
    u.segment<4>(idx::kQuat) = q.coeffs();
    EXPECT_GE(u.dot(C * u), params.quat_radial_variance * (1.0 - 1e-9));
  }
}

TEST(ConditionCovariance, NonFiniteThrows) {
  Covariance23 P = Covariance23::Identity();
  P(2, 2) = NAN;
  EXPECT_THROW(condition_covariance(P, Quaternion{}, UkfParams{}), std::exception);
}

TEST(Gate, Threshold) {
  MeasVec nu = MeasVec::Constant(1, 4.0);
  MeasMat S = MeasMat::Identity(1, 1);
  GateResult g = gate(nu, S, 16.0);
  EXPECT_DOUBLE_EQ(g.d2, 16.0);
  EXPECT_TRUE(g.accepted);
  EXPECT_FALSE(gate(nu, S, 15.99).accepted);
  EXPECT_TRUE(gate(MeasVec::Zero(3), MeasMat::Identity(3, 3), 1e-12).accepted);
}

TEST(Gate, ScaleInvariant) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 200; ++trial) {
    const int m = 1 + trial % 6;
    MeasMat A(m, m);
    for (int i = 0; i < A.size(); ++i) A.data()[i] = n(rng);
    const MeasMat S = A * A.transpose() + MeasMat::Identity(m, m);
    MeasVec nu(m);
    for (int i = 0; i < m; ++i) nu[i] = n(rng);
    const double k = std::pow(10.0, trial % 9 - 4);
    const double d1 = gate(nu, S, 1e9).d2, d2 = gate(k * nu, k * k * S, 1e9).d2;
    EXPECT_NEAR(d2, d1, 1e-9 * d1);
  }
}

TEST(Gate, NonPdIsSingular) {
  MeasMat S = MeasMat::Identity(2, 2);
  S(1, 1) = -1.0;
  const GateResult g = gate(MeasVec::Zero(2), S, 100.0);
  EXPECT_TRUE(g.singular);
  EXPECT_FALSE(g.accepted);
}

MeasurementModel position_model(double sigma, double gate_threshold) {
  MeasurementModel m;
  m.name = "pos";
  m.dim = 3;
  m.h = [](const FilterState& x) {
    MeasVec z = x.p;
    return z;
  };
  m.R = sigma * sigma * MeasMat::Identity(3, 3);
  m.R_floor = m.R;
  m.gate_threshold = gate_threshold;
  return m;
}

TEST(Update, RejectionLeavesStateBitIdentical) {
  FilterState x = some_state();
  Covariance23 P = modest_P();
  const StateVector x0 = x.flatten();
  const Covariance23 P0 = P;
  MeasVec z = x.p + Vec3(100.0, 0.0, 0.0);
  const UpdateOutcome o = update(x, P, z, position_model(0.5, 16.27), UkfParams{});
  EXPECT_FALSE(o.accepted);
  EXPECT_GT(o.d2, 16.27);
  const StateVector x1 = x.flatten();
  EXPECT_EQ(std::memcmp(x0.data(), x1.data(), sizeof(double) * kStateDim), 0);
  EXPECT_EQ(std::memcmp(P0.data(), P.data(), sizeof(double) * P.size()), 0);
}

TEST(Update, NonFiniteMeasurementIsSingular) {
  FilterState x = some_state();
  Covariance23 P = modest_P();
  MeasVec z = x.p;
  z[1] = NAN;
  const UpdateOutcome o = update(x, P, z, position_model(0.5, 16.27), UkfParams{});
  EXPECT_TRUE(o.singular);
  EXPECT_FALSE(o.accepted);
}

// Linear position measurement with a near-linear state: the unscented
// update must agree with the Kalman update on the untouched blocks.
TEST(Update, MatchesKalmanForLinearMeasurement) {
  std::mt19937_64 rng(6);
  FilterState x = some_state();
  Covariance23 P = modest_P();
  P.block<3, 3>(idx::kVel, idx::kPos) = 0.004 * Mat3::Identity();
  P.block<3, 3>(idx::kPos, idx::kVel) = 0.004 * Mat3::Identity();
  const StateVector x0 = x.flatten();
  const Covariance23 P0 = P;
  const Vec3 z(1.2, -2.1, 0.4);
  const MeasurementModel model = position_model(0.2, 1e12);
  ASSERT_TRUE(update(x, P, MeasVec(z), model, UkfParams{}).accepted);

  Eigen::Matrix<double, 3, kStateDim> H = Eigen::Matrix<double, 3, kStateDim>::Zero();
  H.block<3, 3>(0, idx::kPos) = Mat3::Identity();
  const Mat3 S = H * P0 * H.transpose() + 0.04 * Mat3::Identity();
  const Eigen::Matrix<double, kStateDim, 3> K = P0 * H.transpose() * S.inverse();
  const StateVector xk = x0 + K * (z - x0.head<3>());
  const Covariance23 Pk = P0 - K * S * K.transpose();
  const StateVector x1 = x.flatten();
  for (int i : {0, 1, 2, 7, 8, 9, 10, 15, 22}) {
    EXPECT_NEAR(x1[i], xk[i], 1e-9) << i;
    EXPECT_NEAR(P(i, i), Pk(i, i), 1e-9) << i;
  }
  EXPECT_NEAR(P(0, 7), Pk(0, 7), 1e-9);
}

TEST(Predict, ConditionsResult) {
  FilterState x = some_state();
  Covariance23 P = modest_P();
  PropagationStep step;
  step.dt = 0.01;
  const UkfParams params;
  for (int i = 0; i < 200; ++i) {
    const Prediction pr = predict(x, P, step, params);
    x = pr.x;
    P = pr.P;
  }
  EXPECT_NEAR(x.stamp, 5.0, 1e-9);
  EXPECT_TRUE(P == P.transpose());
  EXPECT_GE(min_eigenvalue(P), params.epsilon_pd);
  EXPECT_NEAR(x.q.norm(), 1.0, 1e-12);
}

TEST(Update, FrozenStatesAreUntouched) {
  FilterState x = some_state();
  x.b_g = {1e-3, 2e-3, 3e-3};
  Covariance23 P = modest_P();
  P.block<3, 3>(idx::kGyroBias, idx::kPos) = 0.001 * Mat3::Identity();
  P.block<3, 3>(idx::kPos, idx::kGyroBias) = 0.001 * Mat3::Identity();
  UkfParams params;
  for (int i = 0; i < 3; ++i) params.frozen.set(idx::kGyroBias + i);
  const Vec3 bg = x.b_g;
  ASSERT_TRUE(update(x, P, MeasVec(Vec3(x.p + Vec3(0.1, 0.1, 0.1))), position_model(0.2, 1e12), params).accepted);
  EXPECT_EQ(x.b_g, bg);
}

}  // namespace
}  // namespace quatfuse
