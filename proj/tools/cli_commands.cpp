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
#include "cli_commands.hpp"

#include "quatfuse/evaluation.hpp"
#include "quatfuse/fusion_pipeline.hpp"
#include "quatfuse/simulator.hpp"
#include "quatfuse/text_io.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

namespace quatfuse::cli {

namespace fs = std::filesystem;

namespace {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw DataError("cannot write " + p.string());
  return out;
}

void make_dir(const std::string& d) {
  std::error_code ec;
  fs::create_directories(d, ec);
  if (ec) throw DataError("cannot create " + d + ": " + ec.message());
}

// Maps every failure class onto its exit code.
int guarded(std::ostream& log, const std::function<void()>& body) {
  try {
    body();
    return kOk;
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const sim::ScenarioError& e) {
    log << "scenario error: " << e.what() << '\n';
    return kConfigError;
  } catch (const StreamParseError& e) {
    log << "data error: line " << e.line() << ": " << e.what() << '\n';
    return kDataError;
  } catch (const eval::EvaluationError& e) {
    log << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const DataError& e) {
    log << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const geodesy::GeodesyError& e) {
    log << "numerical error: " << e.what() << '\n';
    return kNumericalError;
  } catch (const NumericalError& e) {
    log << "numerical error: " << e.what() << '\n';
    return kNumericalError;
  }
}

PipelineConfig resolve_config(const std::string& path, const std::vector<std::string>& sets,
                              const std::vector<std::string>& disable) {
  KeyValueDoc doc;
  if (!path.empty()) doc = KeyValueDoc::load(path);
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    auto trim = [](std::string s) {
      s.erase(0, s.find_first_not_of(" \t"));
      s.erase(s.find_last_not_of(" \t") + 1);
      return s;
    };
    doc.set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }
  PipelineConfig cfg = PipelineConfig::from_doc(doc);
  for (const auto& d : disable) cfg.apply_toggle(d);
  cfg.validate();
  return cfg;
}

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (const auto& s : v) out += (out.empty() ? "" : " ") + s;
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

int cmd_simulate(const SimulateOptions& o, std::ostream& log) {
  return guarded(log, [&] {
    if (!fs::exists(o.scenario)) throw ConfigError("scenario file not found: " + o.scenario);
    sim::SimScenario sc = sim::SimScenario::load(o.scenario);
    if (o.seed) sc.seed = *o.seed;
    make_dir(o.out);
    std::ofstream stream = open_out(fs::path(o.out) / "stream.txt");
    std::ofstream truth = open_out(fs::path(o.out) / "truth.txt");
    std::ofstream state = open_out(fs::path(o.out) / "truth_state.txt");
    stream << "# quatfuse event stream, seed " << sc.seed << '\n';
    std::size_t n_events = 0, n_truth = 0;
    sim::Simulator simulator(sc);
    // Written as generated so memory stays flat for long scenarios.
    simulator.run(
        [&](const SensorEvent& e) {
          stream << format_event(e) << '\n';
          ++n_events;
        },
        [&](const sim::TruthSample& s) {
          sim::write_truth_tum(truth, s);
          sim::write_truth_state(state, s);
          ++n_truth;
        });
    std::ofstream meta = open_out(fs::path(o.out) / "simulation.txt");
    meta << "scenario = " << o.scenario << '\n'
         << "seed = " << sc.seed << '\n'
         << "events = " << n_events << '\n'
         << "truth_samples = " << n_truth << '\n';
    log << "simulated " << n_events << " events, " << n_truth << " truth samples\n";
  });
}

int cmd_run(const RunOptions& o, std::ostream& log) {
  return guarded(log, [&] {
    const PipelineConfig cfg = resolve_config(o.config, o.set, o.disable);
    std::ifstream in(o.stream);
    if (!in) throw DataError("cannot open " + o.stream);
    make_dir(o.out);
    std::ofstream traj = open_out(fs::path(o.out) / "trajectory.txt");
    std::ofstream report = open_out(fs::path(o.out) / "report.log");
    std::ofstream series = open_out(fs::path(o.out) / "series.txt");
    series << "# stamp yaw bgx bgy bgz bax bay baz b_ewz gps_sigma_xy gps_sigma_z sx sy sz coast zupt\n";

    FusionPipeline pipeline(cfg);
    EventReader reader(in);
    std::size_t n = 0;
    while (auto e = reader.next()) {
      const StepReport r = pipeline.ingest(*e);
      ++n;
      report << format_report(r);
      if (!r.state_report) continue;
      eval::write_tum(traj, eval::PoseSample{r.stamp, r.x.p, r.x.q, std::nullopt});
      const Mat3& Rg = pipeline.gps_noise().R();
      series << format_double(r.stamp) << ' ' << format_double(r.x.q.to_euler().z());
      for (int i = 0; i < 3; ++i) series << ' ' << format_double(r.x.b_g[i]);
      for (int i = 0; i < 3; ++i) series << ' ' << format_double(r.x.b_a[i]);
      series << ' ' << format_double(r.x.b_ewz) << ' ' << format_double(std::sqrt(Rg(0, 0))) << ' '
             << format_double(std::sqrt(Rg(2, 2)));
      for (int i = 0; i < 3; ++i) series << ' ' << format_double(r.position_sigma[i]);
      series << ' ' << (r.coast_active ? 1 : 0) << ' ' << (r.zupt_active ? 1 : 0) << '\n';
    }

    std::ofstream manifest = open_out(fs::path(o.out) / "manifest.txt");
    manifest << "# stream = " << o.stream << '\n'
             << "# config = " << (o.config.empty() ? "<defaults>" : o.config) << '\n'
             << "# disable = " << join(o.disable) << '\n'
             << "# set = " << join(o.set) << '\n'
             << "# config_hash = " << pipeline.config().hash() << '\n'
             << pipeline.config().to_text();
    std::ofstream counters = open_out(fs::path(o.out) / "counters.txt");
    counters << "events = " << n << '\n' << "engine_calls = " << pipeline.engine_calls() << '\n';
    for (const auto& [k, v] : pipeline.counters()) counters << k << " = " << v << '\n';
    log << "processed " << n << " events\n";
  });
}

int cmd_evaluate(const EvaluateOptions& o, std::ostream& log) {
  return guarded(log, [&] {
    const eval::TrajectoryEstimate est = eval::load_tum(o.est);
    const eval::TrajectoryEstimate ref = eval::load_tum(o.ref);
    make_dir(o.out);
    eval::AteOptions ao;
    ao.max_dt = o.max_dt;
    ao.align = o.align;
    const eval::AteResult a = eval::ate(est, ref, ao);

    eval::Report rep;
    rep.add("ate.rmse", a.rmse);
    rep.add("ate.mean", a.mean);
    rep.add("ate.median", a.median);
    rep.add("ate.max", a.max);
    rep.add("ate.pairs", static_cast<double>(a.count));
    rep.add("ate.unmatched_est", static_cast<double>(a.unmatched_est));
    rep.add("ate.unmatched_ref", static_cast<double>(a.unmatched_ref));
    {
      std::ofstream res = open_out(fs::path(o.out) / "ate_residuals.txt");
      res << "# stamp residual_m\n";
      for (const auto& [t, d] : a.residuals) res << format_double(t) << ' ' << format_double(d) << '\n';
    }

    if (!o.log.empty()) {
      std::ifstream lin(o.log);
      if (!lin) throw DataError("cannot open " + o.log);
      const auto results = eval::read_report_log(lin);
      for (int p = 0; p < static_cast<int>(Path::kCount); ++p) {
        const Path path = static_cast<Path>(p);
        const eval::NisSeries s = eval::nis_series(results, path);
        if (s.samples.empty()) continue;
        const std::string name = path_name(path);
        rep.add("nis." + name + ".count", static_cast<double>(s.summary.count));
        rep.add("nis." + name + ".mean", s.summary.mean);
        rep.add("nis." + name + ".in_band95", s.summary.in_band);
        std::size_t rejected = 0;
        for (const auto& x : s.samples) rejected += x.accepted ? 0 : 1;
        rep.add("nis." + name + ".rejected", static_cast<double>(rejected));
        std::ofstream f = open_out(fs::path(o.out) / ("nis_" + name + ".txt"));
        f << "# stamp d2 dim threshold accepted\n";
        for (const auto& x : s.samples)
          f << format_double(x.stamp) << ' ' << format_double(x.d2) << ' ' << x.dim << ' '
            << format_double(x.threshold) << ' ' << (x.accepted ? 1 : 0) << '\n';
      }
      std::vector<double> fixes;
      for (const auto& r : results)
        if (r.path == Path::kGps && r.stamp >= est[0].stamp) fixes.push_back(r.stamp);
      std::sort(fixes.begin(), fixes.end());
      fixes.erase(std::unique(fixes.begin(), fixes.end()), fixes.end());
      const auto segs = eval::blackout_segments(fixes, o.blackout_s);
      rep.add("blackout.count", static_cast<double>(segs.size()));
      double longest = 0.0;
      for (const auto& s : segs) longest = std::max(longest, s.duration());
      rep.add("blackout.longest_s", longest);
      if (!segs.empty()) {
        const eval::DriftResult d = eval::drift_rate(eval::transformed(est, a.transform), ref, segs);
        rep.add("drift.m_per_km", d.overall_m_per_km);
        std::ofstream f = open_out(fs::path(o.out) / "drift.txt");
        f << "# t0 t1 distance_m terminal_error_m drift_m_per_km\n";
        for (const auto& s : d.segments)
          f << format_double(s.segment.t0) << ' ' << format_double(s.segment.t1) << ' ' << format_double(s.distance)
            << ' ' << format_double(s.terminal_error) << ' ' << format_double(s.drift_m_per_km) << '\n';
      }
    }

    if (!o.series.empty()) {
      std::ifstream sin(o.series);
      if (!sin) throw DataError("cannot open " + o.series);
      // Truth columns: stamp p(3) yaw v(3) w(3) bg(3) ba(3) b_ewz.
      std::vector<std::vector<double>> truth;
      if (!o.truth_state.empty()) {
        std::ifstream tin(o.truth_state);
        if (!tin) throw DataError("cannot open " + o.truth_state);
        std::string line;
        while (std::getline(tin, line)) {
          const auto tok = split_ws(line);
          if (tok.empty() || tok[0].front() == '#') continue;
          if (tok.size() != 18) throw DataError("truth state: expected 18 columns");
          std::vector<double> row;
          for (auto t : tok) row.push_back(parse_double(t));
          truth.push_back(std::move(row));
        }
      }
      auto truth_at = [&](double t) -> const std::vector<double>* {
        if (truth.empty()) return nullptr;
        auto it = std::lower_bound(truth.begin(), truth.end(), t,
                                   [](const std::vector<double>& r, double v) { return r[0] < v; });
        if (it == truth.end()) --it;
        if (it != truth.begin() && std::abs((*(it - 1))[0] - t) < std::abs((*it)[0] - t)) --it;
        return std::abs((*it)[0] - t) <= o.max_dt ? &*it : nullptr;
      };
      std::ofstream bias = open_out(fs::path(o.out) / "bias.txt");
      std::ofstream sigma = open_out(fs::path(o.out) / "adaptive_sigma.txt");
      bias << "# stamp bgz_est bgz_true b_ewz_est b_ewz_true yaw_err\n";
      sigma << "# stamp gps_sigma_xy gps_sigma_z\n";
      std::string line;
      double last_bgz_err = 0.0;
      while (std::getline(sin, line)) {
        const auto tok = split_ws(line);
        if (tok.empty() || tok[0].front() == '#') continue;
        if (tok.size() != 16) throw DataError("series: expected 16 columns");
        const double t = parse_double(tok[0]);
        sigma << tok[0] << ' ' << tok[9] << ' ' << tok[10] << '\n';
        const auto* tr = truth_at(t);
        if (!tr) continue;
        const double bgz = parse_double(tok[4]);
        const double yaw_err = wrap_angle(parse_double(tok[1]) - (*tr)[4]);
        bias << tok[0] << ' ' << tok[4] << ' ' << format_double((*tr)[13]) << ' ' << tok[8] << ' '
             << format_double((*tr)[17]) << ' ' << format_double(yaw_err) << '\n';
        last_bgz_err = bgz - (*tr)[13];
      }
      if (!truth.empty()) rep.add("bias.final_bgz_error", last_bgz_err);
    }

    std::ofstream metrics = open_out(fs::path(o.out) / "metrics.txt");
    rep.write(metrics);
    log << "ate.rmse = " << format_double(a.rmse) << '\n';
  });
}

// ---------------------------------------------------------------------------

std::string RunManifest::to_text() const {
  std::ostringstream s;
  s << "name = " << name << '\n'
    << "scenario = " << scenario << '\n'
    << "config = " << config << '\n'
    << "seed = " << (seed ? std::to_string(*seed) : std::string("scenario")) << '\n'
    << "disable = " << join(disable) << '\n'
    << "set = " << join(set) << '\n'
    << "out = " << out << '\n';
  return s.str();
}

std::vector<RunManifest> load_manifest(const std::string& path) {
  const KeyValueDoc doc = KeyValueDoc::load(path);
  const fs::path base = fs::path(path).parent_path();
  auto resolve = [&](const std::string& p) { return p.empty() || fs::path(p).is_absolute() ? p : (base / p).string(); };
  const std::string out_root = resolve(doc.get_string("out", "sweep_out"));
  std::map<std::string, RunManifest> runs;
  for (const auto& key : doc.keys_with_prefix("run.")) {
    const auto dot = key.find('.', 4);
    if (dot == std::string::npos) throw ConfigError("manifest key '" + key + "' lacks a field");
    const std::string name = key.substr(4, dot - 4);
    const std::string field = key.substr(dot + 1);
    RunManifest& m = runs[name];
    m.name = name;
    m.out = (fs::path(out_root) / name).string();
    if (field == "scenario") {
      m.scenario = resolve(doc.get_string(key, ""));
    } else if (field == "config") {
      m.config = resolve(doc.get_string(key, ""));
    } else if (field == "seed") {
      m.seed = static_cast<unsigned long long>(doc.get_int(key, 0));
    } else if (field == "disable") {
      for (auto t : split_ws(doc.get_string(key, ""))) m.disable.emplace_back(t);
    } else if (field == "set") {
      // Comma separated key=value overrides.
      std::stringstream ss(doc.get_string(key, ""));
      std::string item;
      while (std::getline(ss, item, ','))
        if (item.find_first_not_of(" \t") != std::string::npos) m.set.push_back(item);
    } else {
      throw ConfigError("unknown manifest field '" + field + "'");
    }
  }
  doc.require_all_consumed();
  std::vector<RunManifest> out;
  for (auto& [name, m] : runs) {
    if (m.scenario.empty()) throw ConfigError("run '" + name + "' has no scenario");
    out.push_back(std::move(m));
  }
  return out;
}

int cmd_sweep(const std::string& manifest, std::ostream& log) {
  std::vector<RunManifest> runs;
  const int rc = guarded(log, [&] { runs = load_manifest(manifest); });
  if (rc != kOk) return rc;
  int worst = kOk;
  for (const auto& m : runs) {
    log << "[" << m.name << "]\n";
    const std::string sim_dir = (fs::path(m.out) / "sim").string();
    const std::string run_dir = (fs::path(m.out) / "run").string();
    const std::string eval_dir = (fs::path(m.out) / "eval").string();
    int r = cmd_simulate({m.scenario, sim_dir, m.seed}, log);
    if (r == kOk) r = cmd_run({sim_dir + "/stream.txt", m.config, run_dir, m.disable, m.set}, log);
    if (r == kOk) {
      EvaluateOptions e;
      e.est = run_dir + "/trajectory.txt";
      e.ref = sim_dir + "/truth.txt";
      e.out = eval_dir;
      e.log = run_dir + "/report.log";
      e.series = run_dir + "/series.txt";
      e.truth_state = sim_dir + "/truth_state.txt";
      r = cmd_evaluate(e, log);
    }
    if (r == kOk) {
      r = guarded(log, [&] {
        std::ofstream f = open_out(fs::path(m.out) / "manifest.txt");
        f << m.to_text();
      });
    }
    if (r != kOk) {
      log << "run '" << m.name << "' failed with exit code " << r << '\n';
      worst = std::max(worst, r);
    }
  }
  return worst;
}

// ---------------------------------------------------------------------------

int main_entry(int argc, char** argv) {
  CLI::App app{"quatfuse: quaternion UKF sensor fusion toolkit"};
  app.require_subcommand(1);

  SimulateOptions so;
  unsigned long long seed = 0;
  auto* sim_cmd = app.add_subcommand("simulate", "Generate a sensor stream and ground truth from a scenario");
  sim_cmd->add_option("--scenario", so.scenario, "Scenario file")->required();
  sim_cmd->add_option("--out", so.out, "Output directory")->required();
  auto* seed_opt = sim_cmd->add_option("--seed", seed, "Override the scenario seed");

  RunOptions ro;
  auto* run_cmd = app.add_subcommand("run", "Replay a stream through the fusion pipeline");
  run_cmd->add_option("--stream", ro.stream, "Event stream file")->required();
  run_cmd->add_option("--config", ro.config, "Pipeline configuration file");
  run_cmd->add_option("--out", ro.out, "Output directory")->required();
  run_cmd->add_option("--disable", ro.disable, "Ablation switch (repeatable)");
  run_cmd->add_option("--set", ro.set, "Config override key=value (repeatable)");

  EvaluateOptions eo;
  auto* eval_cmd = app.add_subcommand("evaluate", "Compare an estimate against a reference trajectory");
  eval_cmd->add_option("--est", eo.est, "Estimated trajectory (TUM format)")->required();
  eval_cmd->add_option("--ref", eo.ref, "Reference trajectory (TUM format)")->required();
  eval_cmd->add_option("--out", eo.out, "Output directory")->required();
  eval_cmd->add_option("--log", eo.log, "Report log from run");
  eval_cmd->add_option("--series", eo.series, "Series file from run");
  eval_cmd->add_option("--truth-state", eo.truth_state, "Truth state file from simulate");
  eval_cmd->add_option("--max-dt", eo.max_dt, "Association tolerance, s");
  eval_cmd->add_option("--blackout", eo.blackout_s, "GPS gap counted as a blackout, s");
  bool no_align = false;
  eval_cmd->add_flag("--no-align", no_align, "Skip SE3 alignment");

  std::string manifest;
  auto* sweep_cmd = app.add_subcommand("sweep", "Simulate, run and evaluate every entry of a manifest");
  sweep_cmd->add_option("--manifest", manifest, "Manifest file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  if (sim_cmd->parsed()) {
    if (seed_opt->count() > 0) so.seed = seed;
    return cmd_simulate(so, std::cerr);
  }
  if (run_cmd->parsed()) return cmd_run(ro, std::cerr);
  if (eval_cmd->parsed()) {
    eo.align = !no_align;
    return cmd_evaluate(eo, std::cerr);
  }
  if (sweep_cmd->parsed()) return cmd_sweep(manifest, std::cerr);
  return kUsage;
}

}  // namespace quatfuse::cli
