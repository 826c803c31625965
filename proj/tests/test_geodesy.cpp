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

#include <gtest/gtest.h>

#include <numbers>
#include <random>

namespace quatfuse::geodesy {
namespace {

TEST(Geodesy, Anchors) {
  EXPECT_LT((geodetic_to_ecef({0, 0, 0}) - Vec3(kSemiMajor, 0, 0)).norm(), 1e-9);
  EXPECT_LT((geodetic_to_ecef({0, 0.5 * std::numbers::pi, 0}) - Vec3(0, kSemiMajor, 0)).norm(), 1e-9);
  // cos(pi/2) is not exactly zero, so the pole sits a fraction of a nm off axis.
  EXPECT_LT((geodetic_to_ecef({0.5 * std::numbers::pi, 0, 0}) - Vec3(0, 0, kSemiMinor)).norm(), 1e-9);
  EXPECT_LT((geodetic_to_ecef({-0.5 * std::numbers::pi, 0, 100}) - Vec3(0, 0, -kSemiMinor - 100)).norm(), 1e-9);
}

TEST(Geodesy, RoundTrip) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> lat(deg2rad(-89.9), deg2rad(89.9)), lon(-std::numbers::pi, std::numbers::pi),
      alt(-500.0, 9000.0);
  for (int i = 0; i < 20000; ++i) {
    const GeodeticCoord g{lat(rng), lon(rng), alt(rng)};
    const Vec3 e = geodetic_to_ecef(g);
    const GeodeticCoord back = ecef_to_geodetic(e);
    EXPECT_LT((geodetic_to_ecef(back) - e).norm(), 1e-6);
    EXPECT_NEAR(back.lat, g.lat, 1e-12);
    EXPECT_NEAR(back.alt, g.alt, 1e-6);
  }
}

TEST(Geodesy, EnuIsometry) {
  std::mt19937_64 rng(22);
  std::uniform_real_distribution<double> lat(-1.5, 1.5), lon(-3.1, 3.1), off(-5000.0, 5000.0);
  for (int i = 0; i < 500; ++i) {
    const EnuOrigin o({lat(rng), lon(rng), 100.0});
    const Mat3& R = o.rotation();
    EXPECT_LT((R * R.transpose() - Mat3::Identity()).norm(), 1e-14);
    EXPECT_NEAR(R.determinant(), 1.0, 1e-14);
    const Vec3 a(off(rng), off(rng), off(rng)), b(off(rng), off(rng), off(rng));
    const Vec3 ea = enu_to_ecef(a, o), eb = enu_to_ecef(b, o);
    EXPECT_NEAR((ea - eb).norm(), (a - b).norm(), 1e-8);
    EXPECT_LT((ecef_to_enu(ea, o) - a).norm(), 1e-8);
  }
}

TEST(Geodesy, EnuAxes) {
  const EnuOrigin o({deg2rad(42.3), deg2rad(-83.7), 270.0});
  EXPECT_LT(geodetic_to_enu(o.reference(), o).norm(), 1e-9);
  // A small step north increases the north coordinate only.
  const Vec3 n = geodetic_to_enu({o.reference().lat + 1e-6, o.reference().lon, 270.0}, o);
  EXPECT_GT(n.y(), 6.0);
  EXPECT_LT(std::abs(n.x()), 1e-6);
  const Vec3 e = geodetic_to_enu({o.reference().lat, o.reference().lon + 1e-6, 270.0}, o);
  EXPECT_GT(e.x(), 4.0);
  EXPECT_LT(std::abs(e.y()), 1e-3);
  const Vec3 u = geodetic_to_enu({o.reference().lat, o.reference().lon, 280.0}, o);
  EXPECT_NEAR(u.z(), 10.0, 1e-8);
}

TEST(Geodesy, ContinuousAcrossAntimeridian) {
  const EnuOrigin o({0.3, std::numbers::pi - 1e-7, 0.0});
  const Vec3 a = geodetic_to_enu({0.3, -std::numbers::pi + 1e-7, 0.0}, o);
  EXPECT_LT(a.norm(), 2.0);
  EXPECT_GT(a.x(), 0.0);
}

TEST(Geodesy, UnsetOriginThrows) {
  const EnuOrigin o;
  EXPECT_FALSE(o.is_set());
  EXPECT_THROW(ecef_to_enu(Vec3::Zero(), o), GeodesyError);
  EXPECT_THROW(enu_to_geodetic(Vec3::Zero(), o), GeodesyError);
  EXPECT_THROW(o.reference(), GeodesyError);
}

TEST(Geodesy, EnuGeodeticRoundTrip) {
  const EnuOrigin o({0.7382, -1.4611, 270.0});
  const Vec3 p(123.4, -567.8, 9.1);
  EXPECT_LT((geodetic_to_enu(enu_to_geodetic(p, o), o) - p).norm(), 1e-7);
  EXPECT_NEAR(rad2deg(deg2rad(12.5)), 12.5, 1e-13);
}

}  // namespace
}  // namespace quatfuse::geodesy
