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
#include "quatfuse/measurement_model.hpp"
#include "quatfuse/process_model.hpp"

#include <bitset>
#include <optional>

namespace quatfuse {

/**
 * Scaled unscented transform parameters for the fixed 23-dim state.
 *
 * With the defaults (alpha = 0.1, beta = 2, kappa = 0) lambda = -22.77 and
 * the central mean weight is about -99. The large negative centre weight
 * makes the predicted covariance prone to losing definiteness, so every
 * public call ends with conditioning (see condition_covariance).
 */
struct UkfParams {
  double alpha = 0.1;
  double beta = 2.0;
  double kappa = 0.0;
  double epsilon_pd = 1e-9;
  double omega_variance_cap = 1.0;
  /// Variance pinned along the quaternion's norm direction. Renormalised
  /// sigma points carry no information in that direction.
  double quat_radial_variance = 1e-6;
  /// States whose Kalman gain rows are forced to zero.
  std::bitset<kStateDim> frozen;

  double lambda() const { return alpha * alpha * (kStateDim + kappa) - kStateDim; }
  double wm0() const { return lambda() / (kStateDim + lambda()); }
  double wc0() const { return wm0() + 1.0 - alpha * alpha + beta; }
  double wi() const { return 0.5 / (kStateDim + lambda()); }

  void validate() const;
};

struct SigmaSet {
  Eigen::Matrix<double, kStateDim, kSigmaCount> points;
  Eigen::Matrix<double, kSigmaCount, 1> wm;
  Eigen::Matrix<double, kSigmaCount, 1> wc;
  double stamp = 0.0;

  FilterState point(int i) const { return FilterState::unflatten(points.col(i), stamp); }
};

/// Scaled sigma points around x. Quaternion slots of every point are
/// renormalised. P is repaired first if the Cholesky factorisation fails;
/// a second failure throws NumericalError.
SigmaSet generate_sigma_points(const FilterState& x, const Covariance23& P, const UkfParams& params);

/// Weighted mean. Quaternions in the opposite hemisphere to sigma 0 are
/// negated before averaging, then the mean is renormalised.
FilterState mean_of_sigmas(const SigmaSet& s);

/// Returns P + (-lambda_min + epsilon_pd) I when lambda_min < epsilon_pd,
/// otherwise P unchanged.
Covariance23 repair_pd(const Covariance23& P, double epsilon_pd = 1e-9);

/// Smallest eigenvalue of a symmetric matrix.
double min_eigenvalue(const Covariance23& P);

/// Caps each angular-velocity variance at `cap`, scaling the matching row
/// and column so correlation coefficients are kept. Scaling acts on
/// P - floor*I so a floor on the spectrum survives the cap. Throws
/// std::invalid_argument unless floor < cap.
Covariance23 cap_omega_variance(const Covariance23& P, double cap = 1.0, double floor = 0.0);

/// Symmetrise, pin the quaternion radial variance, repair and cap.
Covariance23 condition_covariance(const Covariance23& P, const Quaternion& q, const UkfParams& params);

struct Prediction {
  FilterState x;
  Covariance23 P;
};

namespace detail {
/// Quaternion block of `v` hemisphere-aligned to `ref`.
inline void align_quaternion(Eigen::Ref<StateVector> v, const Eigen::Vector4d& ref) {
  if (v.segment<4>(idx::kQuat).dot(ref) < 0.0) v.segment<4>(idx::kQuat) *= -1.0;
}
}  // namespace detail

/// Unscented predict through an arbitrary state transition `f`
/// (FilterState -> FilterState).
template <class Process>
Prediction predict_with(const FilterState& x, const Covariance23& P, Process&& f, const Covariance23& Q,
                        const UkfParams& params) {
  const SigmaSet sigma = generate_sigma_points(x, P, params);
  SigmaSet propagated = sigma;
  double stamp = x.stamp;
  for (int i = 0; i < kSigmaCount; ++i) {
    const FilterState y = f(sigma.point(i));
    if (i == 0) stamp = y.stamp;
    propagated.points.col(i) = y.flatten();
  }
  propagated.stamp = stamp;
  Prediction out;
  out.x = mean_of_sigmas(propagated);
  const StateVector mean = out.x.flatten();
  const Eigen::Vector4d q_ref = mean.segment<4>(idx::kQuat);
  Covariance23 Pp = Covariance23::Zero();
  for (int i = 0; i < kSigmaCount; ++i) {
    StateVector d = propagated.points.col(i);
    detail::align_quaternion(d, q_ref);
    d -= mean;
    Pp.noalias() += propagated.wc[i] * d * d.transpose();
  }
  Pp += Q;
  if (!Pp.allFinite()) throw NumericalError("predict: non-finite covariance");
  out.P = condition_covariance(Pp, out.x.q, params);
  out.x.check_finite("predict");
  return out;
}

/// Predict through the kinematic process model plus its noise matrix.
Prediction predict(const FilterState& x, const Covariance23& P, const PropagationStep& step,
                   const UkfParams& params);

struct UpdateOutcome {
  bool accepted = false;
  bool singular = false;
  double d2 = 0.0;
  double threshold = 0.0;
  MeasVec innovation;
  MeasVec s_diag;
};

/// Unscented measurement update. On rejection (gate or singular S) x and P
/// are left untouched. `gate_threshold` overrides model.gate_threshold.
UpdateOutcome update(FilterState& x, Covariance23& P, const MeasVec& z, const MeasurementModel& model,
                     const UkfParams& params, std::optional<double> gate_threshold = std::nullopt);

}  // namespace quatfuse
