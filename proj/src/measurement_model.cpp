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
#include "quatfuse/measurement_model.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <limits>
#include <stdexcept>

namespace quatfuse {

MeasVec MeasurementModel::residual_of(const MeasVec& z, const MeasVec& zhat) const {
  MeasVec r = z - zhat;
  for (int j = 0; j < dim; ++j) {
    if (residual[j] == Residual::kAngle) r[j] = wrap_angle(r[j]);
  }
  return r;
}

void MeasurementModel::validate() const {
  if (dim <= 0 || dim > kMaxMeasDim) throw std::invalid_argument(name + ": bad measurement dimension");
  if (!h) throw std::invalid_argument(name + ": missing measurement function");
  if (R.rows() != dim || R.cols() != dim) throw std::invalid_argument(name + ": R has wrong shape");
  if (!(gate_threshold > 0.0)) throw std::invalid_argument(name + ": gate threshold must be positive");
  Eigen::LLT<MeasMat> llt(R);
  if (llt.info() != Eigen::Success) throw std::invalid_argument(name + ": R is not positive definite");
  if (R_floor.size() > 0) {
    if (R_floor.rows() != dim || R_floor.cols() != dim) throw std::invalid_argument(name + ": R floor has wrong shape");
    for (int i = 0; i < dim; ++i) {
      if (R_floor(i, i) > R(i, i)) throw std::invalid_argument(name + ": R floor exceeds R");
    }
  }
}

GateResult gate(const MeasVec& nu, const MeasMat& S, double tau) {
  GateResult g;
  Eigen::LLT<MeasMat> llt(S);
  if (llt.info() != Eigen::Success || !S.allFinite()) {
    g.singular = true;
    g.d2 = std::numeric_limits<double>::infinity();
    return g;
  }
  const MeasVec w = llt.matrixL().solve(nu);
  g.d2 = w.squaredNorm();
  g.accepted = std::isfinite(g.d2) && g.d2 <= tau;
  return g;
}

}  // namespace quatfuse
