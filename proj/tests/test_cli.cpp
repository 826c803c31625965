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
#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli_commands.hpp"

namespace quatfuse::cli {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int shell(const std::string& cmd) {
  const int status = std::system((cmd + " > /dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("quatfuse_cli_" + std::to_string(::getpid()) + "_" +
                                        ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string scenario(const std::string& name) const {
    return std::string(QUATFUSE_SOURCE_DIR) + "/scenarios/" + name + ".scn";
  }

  fs::path dir_;
  std::ostringstream log_;
};

TEST_F(Cli, SameSeedSameFiles) {
  SimulateOptions so{scenario("gps_spike"), (dir_ / "a").string(), 7};
  ASSERT_EQ(cmd_simulate(so, log_), kOk);
  so.out = (dir_ / "b").string();
  ASSERT_EQ(cmd_simulate(so, log_), kOk);
  for (const char* f : {"stream.txt", "truth.txt", "truth_state.txt"}) {
    EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;
  }
  so.out = (dir_ / "c").string();
  so.seed = 8;
  ASSERT_EQ(cmd_simulate(so, log_), kOk);
  EXPECT_NE(slurp(dir_ / "a" / "stream.txt"), slurp(dir_ / "c" / "stream.txt"));

  RunOptions ro;
  ro.stream = (dir_ / "a" / "stream.txt").string();
  ro.out = (dir_ / "run1").string();
  ASSERT_EQ(cmd_run(ro, log_), kOk);
  ro.out = (dir_ / "run2").string();
  ASSERT_EQ(cmd_run(ro, log_), kOk);
  EXPECT_EQ(slurp(dir_ / "run1" / "trajectory.txt"), slurp(dir_ / "run2" / "trajectory.txt"));
  EXPECT_EQ(slurp(dir_ / "run1" / "report.log"), slurp(dir_ / "run2" / "report.log"));

  EvaluateOptions eo;
  eo.est = (dir_ / "run1" / "trajectory.txt").string();
  eo.ref = (dir_ / "a" / "truth.txt").string();
  eo.out = (dir_ / "eval").string();
  eo.log = (dir_ / "run1" / "report.log").string();
  ASSERT_EQ(cmd_evaluate(eo, log_), kOk);
  const std::string metrics = slurp(dir_ / "eval" / "metrics.txt");
  EXPECT_NE(metrics.find("ate.rmse = "), std::string::npos);
}

TEST_F(Cli, MissingScenarioIsConfigError) {
  SimulateOptions so{(dir_ / "nope.scn").string(), (dir_ / "x").string(), std::nullopt};
  EXPECT_EQ(cmd_simulate(so, log_), kConfigError);
}

TEST_F(Cli, UnknownConfigKeyIsConfigError) {
  std::ofstream(dir_ / "bad.cfg") << "ukf.alpah = 0.2\n";
  std::ofstream(dir_ / "s.txt") << "0 imu 0 0 0 0 0 9.8\n";
  RunOptions ro;
  ro.stream = (dir_ / "s.txt").string();
  ro.config = (dir_ / "bad.cfg").string();
  ro.out = (dir_ / "run").string();
  EXPECT_EQ(cmd_run(ro, log_), kConfigError);
  ro.config.clear();
  ro.disable = {"warp-drive"};
  EXPECT_EQ(cmd_run(ro, log_), kConfigError);
}

TEST_F(Cli, CorruptStreamReportsLine) {
  std::ofstream(dir_ / "s.txt") << "0 imu 0 0 0 0 0 9.8\n0.01 imu 0 0 0 0 0 9.8\n0.02 enc 1 2\n";
  RunOptions ro;
  ro.stream = (dir_ / "s.txt").string();
  ro.out = (dir_ / "run").string();
  EXPECT_EQ(cmd_run(ro, log_), kDataError);
  EXPECT_NE(log_.str().find("line 3"), std::string::npos) << log_.str();
}

TEST_F(Cli, BinaryExitCodes) {
  const std::string cli = QUATFUSE_CLI;
  EXPECT_EQ(shell(cli), kUsage);
  EXPECT_EQ(shell(cli + " simulate --out " + dir_.string()), kUsage);
  EXPECT_EQ(shell(cli + " simulate --scenario " + (dir_ / "none.scn").string() + " --out " + dir_.string()),
            kConfigError);
  std::ofstream(dir_ / "s.txt") << "0 imu 0 0 0 0 0 9.8\nbad\n";
  EXPECT_EQ(shell(cli + " run --stream " + (dir_ / "s.txt").string() + " --out " + (dir_ / "r").string()),
            kDataError);
}

TEST_F(Cli, SweepManifest) {
  std::ofstream(dir_ / "m.txt") << "out = results\n"
                                << "run.spike.scenario = " << scenario("gps_spike") << "\n"
                                << "run.spike_nozupt.scenario = " << scenario("gps_spike") << "\n"
                                << "run.spike_nozupt.disable = zupt\n";
  ASSERT_EQ(cmd_sweep((dir_ / "m.txt").string(), log_), kOk) << log_.str();
  EXPECT_TRUE(fs::exists(dir_ / "results" / "spike"));
  EXPECT_TRUE(fs::exists(dir_ / "results" / "spike_nozupt"));
  const auto manifests = load_manifest((dir_ / "m.txt").string());
  ASSERT_EQ(manifests.size(), 2u);
  std::ofstream(dir_ / "bad.txt") << "run.x.scenari = a\n";
  EXPECT_THROW(load_manifest((dir_ / "bad.txt").string()), std::exception);
}

}  // namespace
}  // namespace quatfuse::cli
