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

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace quatfuse {

void UkfParams::validate() const {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("ukf alpha must be in (0, 1]");
  if (!(kStateDim + lambda() > 0.0)) throw std::invalid_argument("ukf n + lambda must be positive");
  if (!(epsilon_pd > 0.0)) throw std::invalid_argument("epsilon_pd must be positive");
  if (!(omega_variance_cap > epsilon_pd)) throw std::invalid_argument("omega variance cap must exceed epsilon_pd");
  if (!(quat_radial_variance >= 0.0)) throw std::invalid_argument("quat_radial_variance must be >= 0");
}

SigmaSet generate_sigma_points(const FilterState& x, const Covariance23& P, const UkfParams& params) {
  const double scale = kStateDim + params.lambda();
  Eigen::LLT<Covariance23> llt(scale * P);
  if (llt.info() != Eigen::Success) {
    llt.compute(scale * repair_pd(symmetrize(P), params.epsilon_pd));
    if (llt.info() != Eigen::Success) {
      throw NumericalError("generate_sigma_points: covariance is not positive definite after repair");
    }
  }
  const Covariance23 L = llt.matrixL();
  const StateVector center = x.flatten();

  SigmaSet s;
  s.stamp = x.stamp;
  s.points.col(0) = center;
  for (int i = 0; i < kStateDim; ++i) {
    s.points.col(1 + i) = center + L.col(i);
    s.points.col(1 + kStateDim + i) = center - L.col(i);
  }
  for (int i = 0; i < kSigmaCount; ++i) {
    auto q = s.points.col(i).segment<4>(idx::kQuat);
    const double n = q.norm();
    if (!(n > 1e-12) || !std::isfinite(n)) {
      throw NumericalError("generate_sigma_points: degenerate sigma quaternion");
    }
    q /= n;
  }
  s.wm.setConstant(params.wi());
  s.wc.setConstant(params.wi());
  s.wm[0] = params.wm0();
  s.wc[0] = params.wc0();
  return s;
}

FilterState mean_of_sigmas(const SigmaSet& s) {
  const Eigen::Vector4d ref = s.points.col(0).segment<4>(idx::kQuat);
  StateVector mean = StateVector::Zero();
  for (int i = 0; i < kSigmaCount; ++i) {
    StateVector p = s.points.col(i);
    detail::align_quaternion(p, ref);
    mean += s.wm[i] * p;
  }
  auto q = mean.segment<4>(idx::kQuat);
  const double n = q.norm();
  if (!(n > 1e-6) || !std::isfinite(n)) throw NumericalError("mean_of_sigmas: degenerate quaternion mean");
  q /= n;
  return FilterState::unflatten(mean, s.stamp);
}

double min_eigenvalue(const Covariance23& P) {
  Eigen::SelfAdjointEigenSolver<Covariance23> es(P, Eigen::EigenvaluesOnly);
  return es.eigenvalues()[0];
}

Covariance23 repair_pd(const Covariance23& P, double epsilon_pd) {
  // Cheap test first: P - eps I positive definite implies lambda_min > eps.
  Eigen::LLT<Covariance23> llt(P - epsilon_pd * Covariance23::Identity());
  if (llt.info() == Eigen::Success) return P;
  const double lmin = min_eigenvalue(P);
  if (!std::isfinite(lmin)) throw NumericalError("repair_pd: non-finite eigenvalue");
  if (lmin >= epsilon_pd) return P;
  return P + (-lmin + epsilon_pd) * Covariance23::Identity();
}

Covariance23 cap_omega_variance(const Covariance23& P, double cap, double floor) {
  if (!(floor < cap)) throw std::invalid_argument("cap_omega_variance: floor must lie below the cap");
  Covariance23 out = P;
  for (int k = 0; k < 3; ++k) {
    const int i = idx::kOmega + k;
    const double var = out(i, i);
    if (!(var > cap)) continue;
    const double s = std::sqrt((cap - floor) / (var - floor));
    out.row(i) *= s;
    out.col(i) *= s;
    out(i, i) = cap;
  }
  return out;
}

Covariance23 condition_covariance(const Covariance23& P, const Quaternion& q, const UkfParams& params) {
  Covariance23 out = symmetrize(P);
  StateVector u = StateVector::Zero();
  u.segment<4>(idx::kQuat) = q.normalized().coeffs();
  const double radial = u.dot(out * u);
  if (radial < params.quat_radial_variance) {
    out.noalias() += (params.quat_radial_variance - radial) * u * u.transpose();
  }
  // Eigenvalues of P are only known to about n * eps * |P|, so the repair
  // aims that far above epsilon_pd. Otherwise a repaired matrix can read
  // back marginally below the floor.
  const double margin = 100.0 * kStateDim * std::numeric_limits<double>::epsilon() * out.norm();
  const double target = params.epsilon_pd + margin;
  out = repair_pd(out, target);
  // For very large |P| the margin can exceed the cap itself; the eigenvalue
  // floor is then unresolvable anyway, so the cap keeps half of itself.
  out = cap_omega_variance(out, params.omega_variance_cap, std::min(target, 0.5 * params.omega_variance_cap));
  out = symmetrize(out);
  if (!out.allFinite()) throw NumericalError("condition_covariance: non-finite result");
  return out;
}

Prediction predict(const FilterState& x, const Covariance23& P, const PropagationStep& step,
                   const UkfParams& params) {
  step.validate();
  return predict_with(
      x, P, [&step](const FilterState& s) { return propagate(s, step); }, process_noise_matrix(step), params);
}

UpdateOutcome update(FilterState& x, Covariance23& P, const MeasVec& z, const MeasurementModel& model,
                     const UkfParams& params, std::optional<double> gate_threshold) {
  const int m = model.dim;
  if (z.size() != m) throw std::invalid_argument("update: measurement size mismatch for " + model.name);
  UpdateOutcome out;
  out.threshold = gate_threshold.value_or(model.gate_threshold);
  if (!z.allFinite()) {
    out.singular = true;
    out.innovation = MeasVec::Zero(m);
    out.s_diag = MeasVec::Zero(m);
    return out;
  }

  const SigmaSet sigma = generate_sigma_points(x, P, params);
  Eigen::Matrix<double, kMaxMeasDim, kSigmaCount> Z;
  for (int i = 0; i < kSigmaCount; ++i) {
    const MeasVec zi = model.h(sigma.point(i));
    if (zi.size() != m) throw std::invalid_argument("update: h returned wrong size for " + model.name);
    Z.col(i).head(m) = zi;
  }

  // Predicted measurement: angle components are averaged as wrapped
  // offsets from sigma 0.
  const MeasVec z0 = Z.col(0).head(m);
  MeasVec zhat = MeasVec::Zero(m);
  for (int i = 0; i < kSigmaCount; ++i) {
    zhat += sigma.wm[i] * model.residual_of(Z.col(i).head(m), z0);
  }
  zhat += z0;
  for (int j = 0; j < m; ++j) {
    if (model.residual[j] == Residual::kAngle) zhat[j] = wrap_angle(zhat[j]);
  }

  const StateVector center = x.flatten();
  const Eigen::Vector4d q_ref = center.segment<4>(idx::kQuat);
  MeasMat S = MeasMat::Zero(m, m);
  Eigen::Matrix<double, kStateDim, Eigen::Dynamic, 0, kStateDim, kMaxMeasDim> Pxz =
      Eigen::Matrix<double, kStateDim, Eigen::Dynamic, 0, kStateDim, kMaxMeasDim>::Zero(kStateDim, m);
  for (int i = 0; i < kSigmaCount; ++i) {
    const MeasVec dz = model.residual_of(Z.col(i).head(m), zhat);
    StateVector dx = sigma.points.col(i);
    detail::align_quaternion(dx, q_ref);
    dx -= center;
    S.noalias() += sigma.wc[i] * dz * dz.transpose();
    Pxz.noalias() += sigma.wc[i] * dx * dz.transpose();
  }
  S += model.R;
  S = 0.5 * (S + S.transpose()).eval();

  out.innovation = model.residual_of(z, zhat);
  out.s_diag = S.diagonal();
  const GateResult g = gate(out.innovation, S, out.threshold);
  out.d2 = g.d2;
  out.singular = g.singular;
  out.accepted = g.accepted;
  if (!g.accepted) return out;

  // K = Pxz S^-1, computed as (S^-1 Pxz^T)^T with S symmetric.
  Eigen::LLT<MeasMat> llt(S);
  Eigen::Matrix<double, kStateDim, Eigen::Dynamic, 0, kStateDim, kMaxMeasDim> K =
      llt.solve(Pxz.transpose()).transpose();
  for (int i = 0; i < kStateDim; ++i) {
    if (params.frozen.test(i)) K.row(i).setZero();
  }

  StateVector updated = center + K * out.innovation;
  auto q = updated.segment<4>(idx::kQuat);
  const double qn = q.norm();
  if (!(qn > 1e-6) || !std::isfinite(qn)) throw NumericalError("update: degenerate quaternion after correction");
  q /= qn;
  FilterState x_new = FilterState::unflatten(updated, x.stamp);
  x_new.check_finite(("update " + model.name).c_str());

  Covariance23 P_new;
  if (params.frozen.any()) {
    // Suboptimal gain: general form P - K Pxz^T - Pxz K^T + K S K^T.
    P_new = P - K * Pxz.transpose() - Pxz * K.transpose() + K * S * K.transpose();
  } else {
    P_new = P - K * S * K.transpose();
  }
  if (!P_new.allFinite()) throw NumericalError("update " + model.name + ": non-finite covariance");
  P = condition_covariance(P_new, x_new.q, params);
  x = x_new;
  return out;
}

}  // namespace quatfuse
