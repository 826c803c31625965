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

#include <bitset>

namespace quatfuse {

inline constexpr double kMaxStepDt = 0.5;

/// Groups of bias states that can be switched off (held at their current
/// value with zero process noise).
struct FrozenStates {
  bool gyro_bias = false;
  bool accel_bias = false;
  bool encoder_yaw_bias = false;

  std::bitset<kStateDim> mask() const;
};

struct PropagationStep {
  double dt = 0.01;
  ProcessNoiseConfig noise;
  bool coast_active = false;
  FrozenStates frozen;
  double epsilon_omega = 1e-8;

  /// Throws std::invalid_argument unless dt is in (0, kMaxStepDt].
  void validate() const;
};

/// First-order kinematics with exact quaternion integration:
///   p += dt R(q) v,  q <- q * exp(omega dt),  v += dt a.
/// omega, a and all biases are held; their random walks live in Q only.
FilterState propagate(const FilterState& x, const PropagationStep& step);

/// Block-diagonal Q = intensity * dt. In coast the position block is
/// multiplied by coast_position_inflation. Frozen states get zero noise.
Covariance23 process_noise_matrix(const PropagationStep& step);

}  // namespace quatfuse
