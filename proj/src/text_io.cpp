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

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace quatfuse {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view token) {
  token = trim(token);
  if (token == "nan" || token == "NaN") return std::nan("");
  if (token == "inf") return HUGE_VAL;
  if (token == "-inf") return -HUGE_VAL;
  double v = 0.0;
  const char* first = token.data();
  if (!token.empty() && token.front() == '+') ++first;
  const auto res = std::from_chars(first, token.data() + token.size(), v);
  if (res.ec != std::errc() || res.ptr != token.data() + token.size() || token.empty()) {
    throw std::invalid_argument("not a number: '" + std::string(token) + "'");
  }
  return v;
}

long long parse_int(std::string_view token) {
  token = trim(token);
  long long v = 0;
  const auto res = std::from_chars(token.data(), token.data() + token.size(), v);
  if (res.ec != std::errc() || res.ptr != token.data() + token.size() || token.empty()) {
    throw std::invalid_argument("not an integer: '" + std::string(token) + "'");
  }
  return v;
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

KeyValueDoc KeyValueDoc::parse(std::string_view text, const std::string& source) {
  KeyValueDoc doc;
  doc.source_ = source;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    if (key.empty()) throw ConfigError(source + ":" + std::to_string(line_no) + ": empty key");
    if (doc.values_.count(key)) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
    doc.values_[key] = value;
  }
  return doc;
}

KeyValueDoc KeyValueDoc::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path);
}

const std::string* KeyValueDoc::find(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return nullptr;
  consumed_.insert(key);
  return &it->second;
}

std::string KeyValueDoc::get_string(const std::string& key, const std::string& fallback) const {
  const std::string* v = find(key);
  return v ? *v : fallback;
}

double KeyValueDoc::get_double(const std::string& key, double fallback) const {
  const std::string* v = find(key);
  if (!v) return fallback;
  try {
    return parse_double(*v);
  } catch (const std::invalid_argument&) {
    throw ConfigError(source_ + ": key '" + key + "' expects a number, got '" + *v + "'");
  }
}

long long KeyValueDoc::get_int(const std::string& key, long long fallback) const {
  const std::string* v = find(key);
  if (!v) return fallback;
  try {
    return parse_int(*v);
  } catch (const std::invalid_argument&) {
    throw ConfigError(source_ + ": key '" + key + "' expects an integer, got '" + *v + "'");
  }
}

bool KeyValueDoc::get_bool(const std::string& key, bool fallback) const {
  const std::string* v = find(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "on" || *v == "yes") return true;
  if (*v == "false" || *v == "0" || *v == "off" || *v == "no") return false;
  throw ConfigError(source_ + ": key '" + key + "' expects a boolean, got '" + *v + "'");
}

Vec3 KeyValueDoc::get_vec3(const std::string& key, const Vec3& fallback) const {
  if (!has(key)) return fallback;
  const std::vector<double> d = get_doubles(key);
  if (d.size() != 3) throw ConfigError(source_ + ": key '" + key + "' expects three numbers");
  return {d[0], d[1], d[2]};
}

std::vector<double> KeyValueDoc::get_doubles(const std::string& key) const {
  const std::string* v = find(key);
  std::vector<double> out;
  if (!v) return out;
  try {
    for (auto tok : split_ws(*v)) out.push_back(parse_double(tok));
  } catch (const std::invalid_argument&) {
    throw ConfigError(source_ + ": key '" + key + "' expects numbers, got '" + *v + "'");
  }
  return out;
}

std::vector<std::vector<double>> KeyValueDoc::get_groups(const std::string& key) const {
  const std::string* v = find(key);
  std::vector<std::vector<double>> out;
  if (!v) return out;
  std::string_view rest = *v;
  try {
    while (!rest.empty()) {
      const auto comma = rest.find(',');
      std::string group(trim(rest.substr(0, comma)));
      rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
      for (char& c : group) {
        if (c == ':') c = ' ';
      }
      std::vector<double> g;
      for (auto tok : split_ws(group)) g.push_back(parse_double(tok));
      if (!g.empty()) out.push_back(std::move(g));
    }
  } catch (const std::invalid_argument&) {
    throw ConfigError(source_ + ": key '" + key + "' expects numeric groups, got '" + *v + "'");
  }
  return out;
}

std::vector<std::string> KeyValueDoc::keys_with_prefix(const std::string& prefix) const {
  std::vector<std::string> out;
  for (const auto& [k, v] : values_) {
    if (k.rfind(prefix, 0) == 0) out.push_back(k);
  }
  return out;
}

void KeyValueDoc::require_all_consumed() const {
  for (const auto& [k, v] : values_) {
    if (!consumed_.count(k)) throw ConfigError(source_ + ": unknown key '" + k + "'");
  }
}

std::string KeyValueDoc::canonical() const {
  std::string out;
  for (const auto& [k, v] : values_) {
    out += k;
    out += '=';
    out += v;
    out += '\n';
  }
  return out;
}

std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace quatfuse
