/*
 * Copyright 2026 The cosim Authors
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
 */

// Command-line front end: run, validate, diff, monolith, replay, audit.
// Exit status is 0 only on full success. COSIM_VERBOSE=0..3 sets log detail.

#include <iostream>

#include "CLI11.hpp"

#include "cosim/log.hpp"
#include "cosim/orchestrate.hpp"

namespace {

struct TraceFlags {
  bool sync = false;
  bool off = false;
  bool dump = false;

  void add_to(CLI::App* app) {
    app->add_flag("--trace-sync", sync, "Record SYNC messages in traces");
    app->add_flag("--no-trace", off, "Disable trace files");
    app->add_flag("--dump-payload", dump, "Append payload bytes to trace records");
  }
  cosim::TraceOptions options() const {
    cosim::TraceOptions t;
    t.enabled = !off;
    t.include_sync = sync;
    t.dump_payload = dump;
    return t;
  }
};

int report_diff(const cosim::TraceDiff& d) {
  std::cout << d.describe() << "\n";
  return d.identical ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cosim: modular network co-simulation"};
  app.require_subcommand(1);

  std::string config_path, out_dir, bin_dir, dir_a, dir_b;
  TraceFlags trace;
  std::optional<double> watchdog_s;
  std::size_t replays = 5;
  bool strict = false;

  auto* run = app.add_subcommand("run", "Run every component as its own process");
  run->add_option("config", config_path, "Experiment config")->required();
  run->add_option("-o,--out", out_dir, "Run directory")->required();
  run->add_option("--bin-dir", bin_dir, "Directory with the cosim-* binaries");
  run->add_option("--watchdog-s", watchdog_s, "Abort after this many seconds without progress");
  trace.add_to(run);

  auto* validate = app.add_subcommand("validate", "Check a config without running it");
  validate->add_option("config", config_path, "Experiment config")->required();

  auto* diff = app.add_subcommand("diff", "Compare the canonical traces of two runs");
  diff->add_option("a", dir_a, "First run directory")->required();
  diff->add_option("b", dir_b, "Second run directory")->required();
  diff->add_flag("--strict", strict, "Include SYNC records");

  auto* mono = app.add_subcommand("monolith", "Run the whole topology in this process");
  mono->add_option("config", config_path, "Experiment config")->required();
  mono->add_option("-o,--out", out_dir, "Run directory")->required();
  trace.add_to(mono);

  auto* rep = app.add_subcommand("replay", "Run a config n times and diff all pairs");
  rep->add_option("config", config_path, "Experiment config")->required();
  rep->add_option("-n", replays, "Number of runs")->check(CLI::Range(2, 100));
  rep->add_option("-o,--out", out_dir, "Parent directory for run0..run<n-1>")->required();
  rep->add_option("--bin-dir", bin_dir, "Directory with the cosim-* binaries");
  trace.add_to(rep);

  auto* aud = app.add_subcommand("audit", "Check that every message arrived exactly one latency after it was sent");
  aud->add_option("dir", dir_a, "Run directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*validate) {
      auto issues = cosim::check_config(cosim::load_config(config_path));
      for (const auto& i : issues) std::cout << cosim::errc_name(i.code) << ": " << i.message << "\n";
      if (issues.empty()) std::cout << "ok\n";
      return issues.empty() ? 0 : 1;
    }
    if (*diff) {
      cosim::CanonicalOptions c;
      c.include_sync = strict;
      return report_diff(cosim::diff_runs(dir_a, dir_b, c));
    }
    if (*aud) {
      auto r = cosim::audit_run(dir_a);
      for (const auto& v : r.violations) std::cout << "violation: " << v << "\n";
      for (const auto& s : r.skipped) std::cout << "skipped unsynchronized channel " << s << "\n";
      std::cout << r.matched << " messages matched, " << r.trailing << " in flight at the end, "
                << r.violations.size() << " violations\n";
      return r.ok() ? 0 : 1;
    }

    cosim::RunOptions opts;
    opts.out_dir = out_dir;
    opts.bin_dir = bin_dir;
    opts.trace = trace.options();
    opts.watchdog_s = watchdog_s;
    auto cfg = cosim::load_config(config_path);
    if (*mono) {
      auto art = cosim::run_monolith(cfg, opts);
      std::cout << "ok " << art.dir.string() << "\n";
      return 0;
    }
    if (*run) {
      auto art = cosim::run_experiment(cfg, opts);
      std::cout << "ok " << art.dir.string() << " (" << art.wall_seconds << " s)\n";
      return 0;
    }
    if (*rep) {
      auto r = cosim::replay(cfg, opts, replays);
      for (const auto& [pair, d] : r.diffs)
        std::cout << "run" << pair.first << " vs run" << pair.second << ": " << d.describe() << "\n";
      return r.identical() ? 0 : 1;
    }
  } catch (const cosim::Error& e) {
    std::cerr << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
