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

#include <algorithm>
#include <stdexcept>

namespace quatfuse {

AdaptiveEstimator::AdaptiveEstimator(MeasMat initial_R, MeasMat floor, std::size_t window, double alpha,
                                     bool enabled)
    : initial_(std::move(initial_R)),
      R_(initial_),
      floor_(std::move(floor)),
      capacity_(window),
      alpha_(alpha),
      enabled_(enabled) {
  if (initial_.rows() != initial_.cols() || floor_.rows() != initial_.rows() || floor_.cols() != initial_.cols()) {
    throw std::invalid_argument("AdaptiveEstimator: R and floor shapes differ");
  }
  if (capacity_ == 0) throw std::invalid_argument("AdaptiveEstimator: window must be positive");
  if (!(alpha_ > 0.0 && alpha_ <= 1.0)) throw std::invalid_argument("AdaptiveEstimator: alpha must be in (0, 1]");
}

const MeasMat& AdaptiveEstimator::observe(const MeasVec& nu) {
  if (!enabled_) return R_;
  if (nu.size() != R_.rows()) throw std::invalid_argument("AdaptiveEstimator: innovation has wrong size");
  window_.push_back(nu);
  if (window_.size() > capacity_) window_.pop_front();
  if (window_.size() < capacity_) return R_;

  const auto m = R_.rows();
  MeasMat C = MeasMat::Zero(m, m);
  for (const MeasVec& v : window_) C.noalias() += v * v.transpose();
  C /= static_cast<double>(window_.size());
  R_ = (1.0 - alpha_) * R_ + alpha_ * C;
  R_ = 0.5 * (R_ + R_.transpose()).eval();
  for (Eigen::Index i = 0; i < m; ++i) R_(i, i) = std::max(R_(i, i), floor_(i, i));
  return R_;
}

void AdaptiveEstimator::reset() {
  R_ = initial_;
  window_.clear();
}

void AdaptiveEstimator::restore(const MeasMat& R, const std::deque<MeasVec>& window) {
  if (R.rows() != initial_.rows() || R.cols() != initial_.cols()) {
    throw std::invalid_argument("AdaptiveEstimator: restored R has wrong shape");
  }
  R_ = R;
  window_ = window;
  while (window_.size() > capacity_) window_.pop_front();
}

}  // namespace quatfuse
