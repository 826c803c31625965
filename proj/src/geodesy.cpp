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
#include "quatfuse/geodesy.hpp"

#include <cmath>
#include <numbers>

namespace quatfuse::geodesy {

namespace {

double prime_vertical_radius(double sin_lat) {
  return kSemiMajor / std::sqrt(1.0 - kEccentricitySq * sin_lat * sin_lat);
}

void require_set(const EnuOrigin& o) {
  if (!o.is_set()) throw GeodesyError("ENU origin is not set");
}

}  // namespace

Vec3 geodetic_to_ecef(const GeodeticCoord& g) {
  const double sl = std::sin(g.lat), cl = std::cos(g.lat);
  const double n = prime_vertical_radius(sl);
  return {(n + g.alt) * cl * std::cos(g.lon), (n + g.alt) * cl * std::sin(g.lon),
          (n * (1.0 - kEccentricitySq) + g.alt) * sl};
}

GeodeticCoord ecef_to_geodetic(const Vec3& ecef) {
  if (!ecef.allFinite()) throw GeodesyError("ecef_to_geodetic: non-finite input");
  const double p = std::hypot(ecef.x(), ecef.y());
  GeodeticCoord g;
  g.lon = std::atan2(ecef.y(), ecef.x());
  double lat = std::atan2(ecef.z(), p * (1.0 - kEccentricitySq));
  for (int it = 0; it < 20; ++it) {
    const double sl = std::sin(lat), cl = std::cos(lat);
    const double n = prime_vertical_radius(sl);
    // Height along the normal; stable at the poles, unlike p / cos(lat) - N.
    const double h = p * cl + ecef.z() * sl - kSemiMajor * kSemiMajor / n;
    const double next = std::atan2(ecef.z(), p * (1.0 - kEccentricitySq * n / (n + h)));
    const bool converged = std::abs(next - lat) < 1e-12;
    lat = next;
    if (converged) {
      const double s = std::sin(lat);
      g.lat = lat;
      g.alt = p * std::cos(lat) + ecef.z() * s - kSemiMajor * kSemiMajor / prime_vertical_radius(s);
      return g;
    }
  }
  throw GeodesyError("ecef_to_geodetic: no convergence after 20 iterations");
}

EnuOrigin::EnuOrigin(const GeodeticCoord& reference)
    : set_(true), reference_(reference), ecef_(geodetic_to_ecef(reference)) {
  const double sl = std::sin(reference.lat), cl = std::cos(reference.lat);
  const double so = std::sin(reference.lon), co = std::cos(reference.lon);
  ecef_to_enu_ << -so, co, 0.0,
                  -sl * co, -sl * so, cl,
                  cl * co, cl * so, sl;
}

const GeodeticCoord& EnuOrigin::reference() const {
  require_set(*this);
  return reference_;
}

const Vec3& EnuOrigin::ecef() const {
  require_set(*this);
  return ecef_;
}

const Mat3& EnuOrigin::rotation() const {
  require_set(*this);
  return ecef_to_enu_;
}

Vec3 ecef_to_enu(const Vec3& ecef, const EnuOrigin& origin) {
  require_set(origin);
  return origin.rotation() * (ecef - origin.ecef());
}

Vec3 enu_to_ecef(const Vec3& enu, const EnuOrigin& origin) {
  require_set(origin);
  return origin.rotation().transpose() * enu + origin.ecef();
}

Vec3 geodetic_to_enu(const GeodeticCoord& g, const EnuOrigin& origin) {
  return ecef_to_enu(geodetic_to_ecef(g), origin);
}

GeodeticCoord enu_to_geodetic(const Vec3& enu, const EnuOrigin& origin) {
  return ecef_to_geodetic(enu_to_ecef(enu, origin));
}

double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }
double rad2deg(double rad) { return rad * 180.0 / std::numbers::pi; }

}  // namespace quatfuse::geodesy
