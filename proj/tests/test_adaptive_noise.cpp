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
#include "quatfuse/adaptive_noise.hpp"

#include <gtest/gtest.h>

#include <random>

namespace quatfuse {
namespace {

MeasMat diag2(double a, double b) {
  MeasMat m = MeasMat::Zero(2, 2);
  m(0, 0) = a;
  m(1, 1) = b;
  return m;
}

TEST(Adaptive, DisabledIsNoOp) {
  AdaptiveEstimator e(diag2(4.0, 4.0), diag2(0.1, 0.1), 5, 0.5, false);
  for (int i = 0; i < 20; ++i) e.observe(MeasVec::Constant(2, 10.0));
  EXPECT_EQ(e.R(), diag2(4.0, 4.0));
  EXPECT_EQ(e.window_size(), 0u);
}

TEST(Adaptive, WaitsForFullWindow) {
  AdaptiveEstimator e(diag2(4.0, 4.0), diag2(0.1, 0.1), 5, 0.5);
  for (int i = 0; i < 4; ++i) e.observe(MeasVec::Constant(2, 1.0));
  EXPECT_EQ(e.R(), diag2(4.0, 4.0));
  e.observe(MeasVec::Constant(2, 1.0));
  // 0.5 * 4 + 0.5 * 1 on the diagonal, 0.5 * 1 off it.
  EXPECT_DOUBLE_EQ(e.R()(0, 0), 2.5);
  EXPECT_DOUBLE_EQ(e.R()(0, 1), 0.5);
  EXPECT_EQ(e.window_size(), 5u);
  e.observe(MeasVec::Constant(2, 1.0));
  EXPECT_EQ(e.window_size(), 5u);
}

TEST(Adaptive, ConvergesToInnovationCovariance) {
  std::mt19937_64 rng(41);
  std::normal_distribution<double> n;
  AdaptiveEstimator e(diag2(6.25, 6.25), diag2(0.01, 0.01), 50, 0.01);
  for (int i = 0; i < 5000; ++i) {
    MeasVec nu(2);
    nu << 0.8 * n(rng), 1.2 * n(rng);
    e.observe(nu);
  }
  EXPECT_NEAR(std::sqrt(e.R()(0, 0)), 0.8, 0.08);
  EXPECT_NEAR(std::sqrt(e.R()(1, 1)), 1.2, 0.12);
  EXPECT_LT(std::abs(e.R()(0, 1)), 0.1);
}

TEST(Adaptive, FloorHoldsDiagonal) {
  AdaptiveEstimator e(diag2(4.0, 4.0), diag2(1.0, 2.0), 10, 0.5);
  for (int i = 0; i < 200; ++i) e.observe(MeasVec::Zero(2));
  EXPECT_DOUBLE_EQ(e.R()(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(e.R()(1, 1), 2.0);
}

TEST(Adaptive, ResetAndRestore) {
  AdaptiveEstimator e(diag2(4.0, 4.0), diag2(0.1, 0.1), 3, 0.5);
  for (int i = 0; i < 5; ++i) e.observe(MeasVec::Constant(2, 0.5));
  const MeasMat R = e.R();
  const std::deque<MeasVec> w = e.window();
  e.reset();
  EXPECT_EQ(e.R(), diag2(4.0, 4.0));
  EXPECT_EQ(e.window_size(), 0u);
  e.restore(R, w);
  EXPECT_EQ(e.R(), R);
  EXPECT_EQ(e.window_size(), 3u);
  EXPECT_THROW(e.restore(MeasMat::Identity(3, 3), w), std::invalid_argument);
}

TEST(Adaptive, RejectsBadArguments) {
  EXPECT_THROW(AdaptiveEstimator(diag2(1, 1), MeasMat::Identity(3, 3)), std::invalid_argument);
  EXPECT_THROW(AdaptiveEstimator(diag2(1, 1), diag2(1, 1), 0), std::invalid_argument);
  EXPECT_THROW(AdaptiveEstimator(diag2(1, 1), diag2(1, 1), 5, 0.0), std::invalid_argument);
  AdaptiveEstimator e(diag2(1, 1), diag2(1, 1));
  EXPECT_THROW(e.observe(MeasVec::Zero(3)), std::invalid_argument);
}

}  // namespace
}  // namespace quatfuse
