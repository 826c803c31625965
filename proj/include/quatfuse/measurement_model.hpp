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

#include <array>
#include <cstdint>
#include <functional>
#include <string>

namespace quatfuse {

inline constexpr int kMaxMeasDim = 6;

using MeasVec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxMeasDim, 1>;
using MeasMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxMeasDim, kMaxMeasDim>;

enum class Residual : std::uint8_t { kLinear, kAngle };

/// Measurement function, noise, gate and adaptation policy for one sensor
/// path. `h` must be pure.
struct MeasurementModel {
  std::string name;
  int dim = 0;
  std::function<MeasVec(const FilterState&)> h;
  std::array<Residual, kMaxMeasDim> residual{};
  MeasMat R;
  MeasMat R_floor;
  double gate_threshold = 0.0;
  bool adaptive = false;

  /// z - zhat, with angle components wrapped into (-pi, pi].
  MeasVec residual_of(const MeasVec& z, const MeasVec& zhat) const;

  /// Throws std::invalid_argument on inconsistent sizes, non-positive gate,
  /// a non-PD R or a floor above R.
  void validate() const;
};

struct GateResult {
  bool accepted = false;
  double d2 = 0.0;
  bool singular = false;
};

/// Mahalanobis gate: d2 = nu^T S^-1 nu (by solving, never inverting),
/// accepted iff d2 <= tau. A non-PD S is reported as singular and rejected.
GateResult gate(const MeasVec& nu, const MeasMat& S, double tau);

}  // namespace quatfuse
