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

#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace quatfuse {

/// Shortest decimal form that parses back to the identical double.
std::string format_double(double v);
/// Strict parse of a whole token; throws std::invalid_argument.
double parse_double(std::string_view token);
long long parse_int(std::string_view token);

std::vector<std::string_view> split_ws(std::string_view line);

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/**
 * Flat `key = value` document with dotted namespaces, e.g.
 *
 *     # comment
 *     ukf.alpha = 0.1
 *     imu.gyro_bias = 0 0 0.008
 *
 * Readers mark keys as consumed; `require_all_consumed` rejects anything
 * left over so misspelt keys never pass silently.
 */
class KeyValueDoc {
 public:
  KeyValueDoc() = default;
  static KeyValueDoc parse(std::string_view text, const std::string& source = "<string>");
  static KeyValueDoc load(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  Vec3 get_vec3(const std::string& key, const Vec3& fallback) const;
  /// Whitespace-separated numbers.
  std::vector<double> get_doubles(const std::string& key) const;
  /// Comma-separated groups of whitespace- or colon-separated numbers.
  std::vector<std::vector<double>> get_groups(const std::string& key) const;

  std::vector<std::string> keys_with_prefix(const std::string& prefix) const;
  void require_all_consumed() const;
  /// Sorted `key=value` lines; the basis for config hashes.
  std::string canonical() const;
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  const std::string* find(const std::string& key) const;

  std::string source_;
  std::map<std::string, std::string> values_;
  mutable std::set<std::string> consumed_;
};

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view data);

}  // namespace quatfuse
