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

#include "quatfuse/measurement_model.hpp"

#include <cstddef>
#include <deque>

namespace quatfuse {

/**
 * Innovation-driven measurement noise for one sensor path.
 *
 * Accepted innovations go into a sliding window. Once the window is full,
 * every observation blends the window's second moment into R:
 *
 *     R <- (1 - alpha) R + alpha * mean(nu nu^T)
 *
 * followed by R_ii >= floor_ii. Off-diagonals adapt, the floor only touches
 * the diagonal.
 */
class AdaptiveEstimator {
 public:
  AdaptiveEstimator() = default;
  AdaptiveEstimator(MeasMat initial_R, MeasMat floor, std::size_t window = 50, double alpha = 0.01,
                    bool enabled = true);

  /// Feeds one accepted innovation and returns the current R. A no-op when
  /// disabled.
  const MeasMat& observe(const MeasVec& nu);

  const MeasMat& R() const { return R_; }
  const MeasMat& floor() const { return floor_; }
  const MeasMat& initial() const { return initial_; }
  bool enabled() const { return enabled_; }
  std::size_t window_capacity() const { return capacity_; }
  std::size_t window_size() const { return window_.size(); }
  double alpha() const { return alpha_; }
  const std::deque<MeasVec>& window() const { return window_; }

  /// Back to the initial R with an empty window.
  void reset();
  /// Restores a saved R and window; used by checkpoints.
  void restore(const MeasMat& R, const std::deque<MeasVec>& window);

 private:
  MeasMat initial_;
  MeasMat R_;
  MeasMat floor_;
  std::deque<MeasVec> window_;
  std::size_t capacity_ = 50;
  double alpha_ = 0.01;
  bool enabled_ = false;
};

}  // namespace quatfuse
