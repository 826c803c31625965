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

#include <stdexcept>

namespace quatfuse::geodesy {

inline constexpr double kSemiMajor = 6378137.0;
inline constexpr double kFlattening = 1.0 / 298.257223563;
inline constexpr double kSemiMinor = kSemiMajor * (1.0 - kFlattening);
inline constexpr double kEccentricitySq = kFlattening * (2.0 - kFlattening);

class GeodesyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// WGS84 ellipsoidal coordinates. Angles in radians, altitude in metres.
struct GeodeticCoord {
  double lat = 0.0;
  double lon = 0.0;
  double alt = 0.0;
};

Vec3 geodetic_to_ecef(const GeodeticCoord& g);

/// Fixed-point inverse; stops when latitude moves less than 1e-12 rad.
/// Throws GeodesyError if that takes more than 20 iterations.
GeodeticCoord ecef_to_geodetic(const Vec3& ecef);

/// Local East-North-Up tangent frame. A default-constructed origin is unset
/// and every conversion through it throws.
class EnuOrigin {
 public:
  EnuOrigin() = default;
  explicit EnuOrigin(const GeodeticCoord& reference);

  bool is_set() const { return set_; }
  const GeodeticCoord& reference() const;
  const Vec3& ecef() const;
  /// Rotation taking ECEF offsets into ENU.
  const Mat3& rotation() const;

 private:
  bool set_ = false;
  GeodeticCoord reference_;
  Vec3 ecef_ = Vec3::Zero();
  Mat3 ecef_to_enu_ = Mat3::Identity();
};

Vec3 ecef_to_enu(const Vec3& ecef, const EnuOrigin& origin);
Vec3 enu_to_ecef(const Vec3& enu, const EnuOrigin& origin);
Vec3 geodetic_to_enu(const GeodeticCoord& g, const EnuOrigin& origin);
GeodeticCoord enu_to_geodetic(const Vec3& enu, const EnuOrigin& origin);

double deg2rad(double deg);
double rad2deg(double rad);

}  // namespace quatfuse::geodesy
