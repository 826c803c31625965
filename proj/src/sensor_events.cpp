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
#include "quatfuse/sensor_events.hpp"

#include "quatfuse/text_io.hpp"

#include <cmath>
#include <istream>

namespace quatfuse {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void put(std::string& out, double v) {
  out += ' ';
  out += format_double(v);
}

void put(std::string& out, const Vec3& v) {
  for (int i = 0; i < 3; ++i) put(out, v[i]);
}

}  // namespace

double stamp_of(const SensorEvent& e) {
  return std::visit([](const auto& s) { return s.stamp; }, e);
}

const char* kind_of(const SensorEvent& e) {
  return std::visit(Overloaded{
                        [](const ImuSample& s) { return s.secondary ? "imu2" : "imu"; },
                        [](const EncoderSample&) { return "enc"; },
                        [](const GpsFixSample&) { return "gps"; },
                        [](const GpsVelocitySample&) { return "gpsvel"; },
                        [](const RadarVelocitySample&) { return "radar"; },
                        [](const VslamPoseSample&) { return "vslam"; },
                    },
                    e);
}

bool is_finite(const SensorEvent& e) {
  return std::visit(
      Overloaded{
          [](const ImuSample& s) {
            return std::isfinite(s.stamp) && s.gyro.allFinite() && s.accel.allFinite() &&
                   (s.orientation_dof == 0 || s.rpy.head(s.orientation_dof).allFinite());
          },
          [](const EncoderSample& s) {
            return std::isfinite(s.stamp) && std::isfinite(s.vx) && std::isfinite(s.vy) && std::isfinite(s.wz);
          },
          [](const GpsFixSample& s) {
            return std::isfinite(s.stamp) && std::isfinite(s.coord.lat) && std::isfinite(s.coord.lon) &&
                   std::isfinite(s.coord.alt) && std::isfinite(s.hdop) && std::isfinite(s.vdop);
          },
          [](const GpsVelocitySample& s) {
            return std::isfinite(s.stamp) && std::isfinite(s.ve) && std::isfinite(s.vn);
          },
          [](const RadarVelocitySample& s) {
            return std::isfinite(s.stamp) && std::isfinite(s.vx) && std::isfinite(s.vy);
          },
          [](const VslamPoseSample& s) {
            return std::isfinite(s.stamp) && s.position.allFinite() && s.rpy.allFinite();
          },
      },
      e);
}

std::string format_event(const SensorEvent& e) {
  std::string out = format_double(stamp_of(e));
  out += ' ';
  out += kind_of(e);
  std::visit(Overloaded{
                 [&](const ImuSample& s) {
                   put(out, s.gyro);
                   put(out, s.accel);
                   for (int i = 0; i < s.orientation_dof; ++i) put(out, s.rpy[i]);
                 },
                 [&](const EncoderSample& s) {
                   put(out, s.vx);
                   put(out, s.vy);
                   put(out, s.wz);
                 },
                 [&](const GpsFixSample& s) {
                   put(out, geodesy::rad2deg(s.coord.lat));
                   put(out, geodesy::rad2deg(s.coord.lon));
                   put(out, s.coord.alt);
                   out += ' ' + std::to_string(static_cast<int>(s.fix));
                   put(out, s.hdop);
                   put(out, s.vdop);
                   out += ' ' + std::to_string(s.satellites);
                   if (s.covariance) {
                     for (int r = 0; r < 3; ++r) {
                       for (int c = 0; c < 3; ++c) put(out, (*s.covariance)(r, c));
                     }
                   } else if (s.err_horz && s.err_vert) {
                     put(out, *s.err_horz);
                     put(out, *s.err_vert);
                   }
                 },
                 [&](const GpsVelocitySample& s) {
                   put(out, s.ve);
                   put(out, s.vn);
                 },
                 [&](const RadarVelocitySample& s) {
                   put(out, s.vx);
                   put(out, s.vy);
                 },
                 [&](const VslamPoseSample& s) {
                   put(out, s.position);
                   put(out, s.rpy);
                   if (s.variances) {
                     for (int i = 0; i < 6; ++i) put(out, (*s.variances)[i]);
                   }
                 },
             },
             e);
  return out;
}

SensorEvent parse_event(std::string_view line, std::size_t line_no) {
  const auto tok = split_ws(line);
  auto fail = [&](const std::string& msg) -> StreamParseError {
    return StreamParseError("line " + std::to_string(line_no) + ": " + msg, line_no);
  };
  if (tok.size() < 2) throw fail("expected '<stamp> <kind> ...'");
  const std::string_view kind = tok[1];
  const std::size_t n = tok.size() - 2;
  auto num = [&](std::size_t i) {
    try {
      return parse_double(tok[i + 2]);
    } catch (const std::invalid_argument& ex) {
      throw fail(ex.what());
    }
  };
  auto vec = [&](std::size_t i) { return Vec3(num(i), num(i + 1), num(i + 2)); };
  double stamp = 0.0;
  try {
    stamp = parse_double(tok[0]);
  } catch (const std::invalid_argument& ex) {
    throw fail(ex.what());
  }
  auto arity = [&](std::initializer_list<std::size_t> allowed) {
    for (std::size_t a : allowed) {
      if (a == n) return;
    }
    throw fail("wrong number of fields for '" + std::string(kind) + "'");
  };

  if (kind == "imu" || kind == "imu2") {
    arity({6, 8, 9});
    ImuSample s;
    s.stamp = stamp;
    s.secondary = kind == "imu2";
    s.gyro = vec(0);
    s.accel = vec(3);
    s.orientation_dof = static_cast<int>(n) - 6;
    for (int i = 0; i < s.orientation_dof; ++i) s.rpy[i] = num(6 + i);
    return s;
  }
  if (kind == "enc") {
    arity({3});
    return EncoderSample{stamp, num(0), num(1), num(2)};
  }
  if (kind == "gps") {
    arity({7, 9, 16});
    GpsFixSample s;
    s.stamp = stamp;
    s.coord = {geodesy::deg2rad(num(0)), geodesy::deg2rad(num(1)), num(2)};
    const double fix = num(3);
    if (fix != std::floor(fix) || fix < 0 || fix > 4) throw fail("fix type must be an integer in 0..4");
    s.fix = static_cast<FixType>(static_cast<int>(fix));
    s.hdop = num(4);
    s.vdop = num(5);
    const double sats = num(6);
    if (sats != std::floor(sats) || sats < 0) throw fail("satellite count must be a non-negative integer");
    s.satellites = static_cast<int>(sats);
    if (n == 9) {
      s.err_horz = num(7);
      s.err_vert = num(8);
    } else if (n == 16) {
      Mat3 c;
      for (int r = 0; r < 3; ++r) {
        for (int k = 0; k < 3; ++k) c(r, k) = num(7 + 3 * r + k);
      }
      s.covariance = c;
    }
    return s;
  }
  if (kind == "gpsvel") {
    arity({2});
    return GpsVelocitySample{stamp, num(0), num(1)};
  }
  if (kind == "radar") {
    arity({2});
    return RadarVelocitySample{stamp, num(0), num(1)};
  }
  if (kind == "vslam") {
    arity({6, 12});
    VslamPoseSample s;
    s.stamp = stamp;
    s.position = vec(0);
    s.rpy = vec(3);
    if (n == 12) {
      Eigen::Matrix<double, 6, 1> v;
      for (int i = 0; i < 6; ++i) v[i] = num(6 + i);
      s.variances = v;
    }
    return s;
  }
  throw fail("unknown sensor kind '" + std::string(kind) + "'");
}

std::optional<SensorEvent> EventReader::next() {
  std::string line;
  while (std::getline(in_, line)) {
    ++line_;
    const auto tok = line.find_first_not_of(" \t\r");
    if (tok == std::string::npos || line[tok] == '#') continue;
    return parse_event(line, line_);
  }
  return std::nullopt;
}

}  // namespace quatfuse
