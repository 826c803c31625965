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

#include <cmath>

namespace quatfuse {

std::bitset<kStateDim> FrozenStates::mask() const {
  std::bitset<kStateDim> m;
  if (gyro_bias) {
    for (int i = 0; i < 3; ++i) m.set(idx::kGyroBias + i);
  }
  if (accel_bias) {
    for (int i = 0; i < 3; ++i) m.set(idx::kAccelBias + i);
  }
  if (encoder_yaw_bias) m.set(idx::kEncoderYawBias);
  return m;
}

void PropagationStep::validate() const {
  if (!(dt > 0.0 && dt <= kMaxStepDt)) throw std::invalid_argument("propagation dt outside (0, 0.5]");
  noise.validate();
}

FilterState propagate(const FilterState& x, const PropagationStep& step) {
  FilterState out = x;
  const double dt = step.dt;
  out.p = x.p + dt * rotate(x.q, x.v);
  out.q = quat_mul(x.q, quat_exp(x.omega, dt, step.epsilon_omega));
  out.v = x.v + dt * x.a;
  out.stamp = x.stamp + dt;
  out.check_finite("propagate");
  return out;
}

Covariance23 process_noise_matrix(const PropagationStep& step) {
  const ProcessNoiseConfig& n = step.noise;
  const double dt = step.dt;
  Covariance23 Q = Covariance23::Zero();
  const double pos = n.q_position * (step.coast_active ? n.coast_position_inflation : 1.0);
  Q.diagonal().segment<3>(idx::kPos).setConstant(pos * dt);
  Q.diagonal().segment<4>(idx::kQuat).setConstant(n.q_orientation * dt);
  Q.diagonal().segment<3>(idx::kVel).setConstant(n.q_velocity * dt);
  Q.diagonal().segment<3>(idx::kOmega).setConstant(n.q_omega * dt);
  Q.diagonal().segment<3>(idx::kAccel).setConstant(n.q_accel * dt);
  Q.diagonal().segment<3>(idx::kGyroBias).setConstant(n.q_gyro_bias * dt);
  Q.diagonal().segment<3>(idx::kAccelBias).setConstant(n.q_accel_bias * dt);
  Q(idx::kEncoderYawBias, idx::kEncoderYawBias) = n.q_ewz * dt;
  const auto frozen = step.frozen.mask();
  for (int i = 0; i < kStateDim; ++i) {
    if (frozen.test(i)) Q(i, i) = 0.0;
  }
  return Q;
}

}  // namespace quatfuse
