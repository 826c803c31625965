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
#include "quatfuse/text_io.hpp"

#include <gtest/gtest.h>

#include <cstring>
#include <limits>
#include <random>
#include <sstream>

#include "quatfuse/sensor_events.hpp"

namespace quatfuse {
namespace {

TEST(FormatDouble, RoundTripsBitExactly) {
  std::mt19937_64 rng(51);
  for (int i = 0; i < 100000; ++i) {
    std::uint64_t bits = rng();
    double v;
    std::memcpy(&v, &bits, sizeof v);
    if (!std::isfinite(v)) continue;
    const double back = parse_double(format_double(v));
    EXPECT_EQ(std::memcmp(&v, &back, sizeof v), 0) << format_double(v);
  }
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_TRUE(std::isnan(parse_double(format_double(std::nan("")))));
  EXPECT_EQ(parse_double("-inf"), -std::numeric_limits<double>::infinity());
}

TEST(ParseNumbers, Strict) {
  EXPECT_EQ(parse_double("+2.5"), 2.5);
  EXPECT_THROW(parse_double("2.5x"), std::invalid_argument);
  EXPECT_THROW(parse_double(""), std::invalid_argument);
  EXPECT_EQ(parse_int(" 42 "), 42);
  EXPECT_THROW(parse_int("4.2"), std::invalid_argument);
  EXPECT_EQ(split_ws("  a bb\tc  ").size(), 3u);
}

TEST(KeyValueDoc, ParseAndConsume) {
  const KeyValueDoc doc = KeyValueDoc::parse(
      "# comment\n"
      "a.x = 1.5   # trailing\n"
      "a.v = 1 2 3\n"
      "flag = true\n"
      "groups = 1 2, 3:4\n"
      "name = hello world\n");
  EXPECT_EQ(doc.get_double("a.x", 0.0), 1.5);
  EXPECT_EQ(doc.get_vec3("a.v", Vec3::Zero()), Vec3(1, 2, 3));
  EXPECT_TRUE(doc.get_bool("flag", false));
  const auto g = doc.get_groups("groups");
  ASSERT_EQ(g.size(), 2u);
  EXPECT_EQ(g[1], (std::vector<double>{3, 4}));
  EXPECT_THROW(doc.require_all_consumed(), ConfigError);
  EXPECT_EQ(doc.get_string("name", ""), "hello world");
  EXPECT_NO_THROW(doc.require_all_consumed());
  EXPECT_EQ(doc.get_double("missing", 7.0), 7.0);
  EXPECT_EQ(doc.keys_with_prefix("a.").size(), 2u);
}

TEST(KeyValueDoc, Errors) {
  EXPECT_THROW(KeyValueDoc::parse("novalue\n"), ConfigError);
  EXPECT_THROW(KeyValueDoc::parse("a = 1\na = 2\n"), ConfigError);
  EXPECT_THROW(KeyValueDoc::parse("= 1\n"), ConfigError);
  const KeyValueDoc doc = KeyValueDoc::parse("a = x\nb = maybe\nc = 1 2\n");
  EXPECT_THROW(doc.get_double("a", 0.0), ConfigError);
  EXPECT_THROW(doc.get_bool("b", false), ConfigError);
  EXPECT_THROW(doc.get_vec3("c", Vec3::Zero()), ConfigError);
  EXPECT_THROW(KeyValueDoc::load("/nonexistent/file.cfg"), ConfigError);
}

TEST(KeyValueDoc, CanonicalIsOrderIndependent) {
  const KeyValueDoc a = KeyValueDoc::parse("x = 1\ny = 2\n");
  const KeyValueDoc b = KeyValueDoc::parse("y = 2\n\n# c\nx = 1\n");
  EXPECT_EQ(a.canonical(), b.canonical());
  EXPECT_EQ(fnv1a64(a.canonical()), fnv1a64(b.canonical()));
  EXPECT_EQ(fnv1a64(""), 14695981039346656037ull);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cull);
}

std::vector<SensorEvent> sample_events() {
  std::vector<SensorEvent> ev;
  ImuSample imu;
  imu.stamp = 0.01;
  imu.gyro = {0.001, -0.002, 0.1};
  imu.accel = {0.1, 0.2, 9.81};
  ev.push_back(imu);
  imu.orientation_dof = 2;
  imu.rpy = {0.01, -0.02, 0.0};
  ev.push_back(imu);
  imu.orientation_dof = 3;
  imu.rpy.z() = 1.234;
  imu.secondary = true;
  ev.push_back(imu);
  ev.push_back(EncoderSample{0.02, 1.5, 0.01, 0.05});
  GpsFixSample g;
  g.stamp = 0.2;
  g.coord = {0.7382, -1.4611, 270.5};
  g.hdop = 1.2;
  g.vdop = 1.7;
  g.satellites = 9;
  g.fix = FixType::kRtkFixed;
  ev.push_back(g);
  g.err_horz = 1.5;
  g.err_vert = 2.5;
  ev.push_back(g);
  g.err_horz.reset();
  g.err_vert.reset();
  Mat3 C = Mat3::Identity();
  C(0, 1) = C(1, 0) = 0.1;
  g.covariance = C;
  ev.push_back(g);
  ev.push_back(GpsVelocitySample{0.3, 1.0, -0.5});
  ev.push_back(RadarVelocitySample{0.35, 1.4, 0.02});
  VslamPoseSample v;
  v.stamp = 0.4;
  v.position = {1, 2, 3};
  v.rpy = {0.0, 0.1, -3.0};
  ev.push_back(v);
  Eigen::Matrix<double, 6, 1> var;
  var << 1e-4, 1e-4, 2e-4, 1e-6, 1e-6, 3e-6;
  v.variances = var;
  ev.push_back(v);
  return ev;
}

TEST(SensorEvents, FormatParseRoundTrip) {
  for (const SensorEvent& e : sample_events()) {
    const std::string line = format_event(e);
    const SensorEvent back = parse_event(line);
    EXPECT_EQ(format_event(back), line);
    EXPECT_EQ(e.index(), back.index());
    EXPECT_EQ(stamp_of(back), stamp_of(e));
    EXPECT_STREQ(kind_of(back), kind_of(e));
  }
  const auto* imu = std::get_if<ImuSample>(&sample_events()[2]);
  ASSERT_NE(imu, nullptr);
  EXPECT_NE(format_event(*imu).find(" imu2 "), std::string::npos);
}

TEST(SensorEvents, ReaderReportsLineNumbers) {
  std::istringstream in("# header\n0.01 enc 1 0 0\n\n0.02 enc 1 0\n");
  EventReader r(in);
  ASSERT_TRUE(r.next());
  try {
    r.next();
    FAIL();
  } catch (const StreamParseError& e) {
    EXPECT_EQ(e.line(), 4u);
    EXPECT_NE(std::string(e.what()).find("line 4"), std::string::npos);
  }
}

TEST(SensorEvents, ParseErrors) {
  EXPECT_THROW(parse_event("0.1 sonar 1 2"), StreamParseError);
  EXPECT_THROW(parse_event("0.1"), StreamParseError);
  EXPECT_THROW(parse_event("x enc 1 2 3"), StreamParseError);
  EXPECT_THROW(parse_event("0.1 gps 42 -83 270 1.5 1 1 10"), StreamParseError);
  EXPECT_THROW(parse_event("0.1 gps 42 -83 270 1 1 1 -3"), StreamParseError);
  EXPECT_THROW(parse_event("0.1 imu 0 0 0 0 0 9.8 0.1"), StreamParseError);
}

TEST(SensorEvents, Finiteness) {
  EXPECT_TRUE(is_finite(parse_event("0.1 enc 1 0 0")));
  EXPECT_FALSE(is_finite(parse_event("0.1 enc nan 0 0")));
  EXPECT_FALSE(is_finite(parse_event("inf radar 0 0")));
}

}  // namespace
}  // namespace quatfuse
