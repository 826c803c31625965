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

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace quatfuse::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kConfigError = 2,
  kDataError = 3,
  kNumericalError = 4,
};

struct SimulateOptions {
  std::string scenario;
  std::string out;
  std::optional<unsigned long long> seed;
};

struct RunOptions {
  std::string stream;
  std::string config;  // empty: built-in defaults
  std::string out;
  std::vector<std::string> disable;
  std::vector<std::string> set;  // key=value config overrides
};

struct EvaluateOptions {
  std::string est;
  std::string ref;
  std::string out;
  std::string log;          // report log from `run`, optional
  std::string series;       // series file from `run`, optional
  std::string truth_state;  // truth state file from `simulate`, optional
  double max_dt = 0.02;
  double blackout_s = 5.0;
  bool align = true;
};

/// One sweep entry: simulate, run and evaluate into `out/<name>`.
struct RunManifest {
  std::string name;
  std::string scenario;
  std::string config;
  std::optional<unsigned long long> seed;
  std::vector<std::string> disable;
  std::vector<std::string> set;
  std::string out;

  std::string to_text() const;
};

/// Reads `out = D` and `run.<name>.{scenario,config,seed,disable,set}`
/// keys. Relative paths resolve against the manifest's directory.
std::vector<RunManifest> load_manifest(const std::string& path);

int cmd_simulate(const SimulateOptions& o, std::ostream& log);
int cmd_run(const RunOptions& o, std::ostream& log);
int cmd_evaluate(const EvaluateOptions& o, std::ostream& log);
int cmd_sweep(const std::string& manifest, std::ostream& log);

/// Parses argv and dispatches.
int main_entry(int argc, char** argv);

}  // namespace quatfuse::cli
