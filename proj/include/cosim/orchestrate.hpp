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

/**
 * @file orchestrate.hpp
 * @brief Launching, monitoring and verifying whole experiments.
 *
 * A run directory looks the same whichever way it was produced:
 *
 *   config.json          the effective config (proxy ports filled in)
 *   traces/<id>.trace    one trace per component
 *   results/<id>.txt     component counters plus per-channel kernel stats
 *   logs/<id>.log        stdout and stderr of each process (run only)
 *   run.json             outcome, exit codes, wall-clock seconds
 */

#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "cosim/config.hpp"
#include "cosim/sync.hpp"
#include "cosim/trace.hpp"

namespace cosim {

namespace fs = std::filesystem;

/// File names inside a run directory.
namespace layout {
inline fs::path config(const fs::path& run) { return run / "config.json"; }
inline fs::path trace(const fs::path& run, const std::string& id) { return run / "traces" / (id + ".trace"); }
inline fs::path results(const fs::path& run, const std::string& id) { return run / "results" / (id + ".txt"); }
inline fs::path log(const fs::path& run, const std::string& id) { return run / "logs" / (id + ".log"); }
inline fs::path ready(const fs::path& run, const std::string& id) { return run / "ready" / id; }
inline fs::path progress(const fs::path& run, const std::string& id) { return run / "progress" / id; }
inline fs::path start(const fs::path& run) { return run / "start"; }
inline fs::path summary(const fs::path& run) { return run / "run.json"; }
/// Socket a channel side listens on. Side a always listens on `c<i>a`; a
/// proxied channel adds a listener at `c<i>b` for side b.
inline fs::path socket(const fs::path& sock_dir, std::size_t channel, bool side_a) {
  return sock_dir / ("c" + std::to_string(channel) + (side_a ? "a" : "b"));
}
}  // namespace layout

/// Parses a results file into key/value pairs, in file order.
std::vector<std::pair<std::string, std::string>> read_results(const fs::path& path);

/// `chan.<id>.{tx_data,rx_data,tx_sync,rx_sync}=` for every peer in attach order.
void write_channel_stats(const Kernel& kernel, std::ostream& out);

struct ProcessOutcome {
  std::string id;
  std::string kind;  // component kind or "proxy"
  int exit_code = -1;
  int signal = 0;
};

struct RunArtifacts {
  fs::path dir;
  bool ok = false;
  std::string error;  // first failure, empty when ok
  double wall_seconds = 0;
  std::vector<ProcessOutcome> processes;
};

struct RunOptions {
  fs::path out_dir;
  /// Directory holding cosim-<kind> and cosim-proxy; defaults to the
  /// directory of the running executable.
  fs::path bin_dir;
  TraceOptions trace;
  /// Overrides of the config's timeouts.
  std::optional<double> watchdog_s;
  std::optional<double> startup_timeout_s;
};

/// A whole topology inside this process: one kernel per component, in-memory
/// channels, one SerialScheduler. Attach order matches the component
/// processes, so traces and results are the same as a multi-process run.
class Monolith {
 public:
  /// Validates the config first. With `trace_dir` set, traces go to
  /// <trace_dir>/<id>.trace; otherwise, if enabled, into memory.
  explicit Monolith(const ExperimentConfig& cfg, TraceOptions trace = TraceOptions{false}, fs::path trace_dir = {});
  ~Monolith();

  void run();
  void write_results(const fs::path& run_dir) const;
  void flush_traces();

  Component& component(const std::string& id);
  template <typename T>
  T& get(const std::string& id) {
    return dynamic_cast<T&>(component(id));
  }
  Kernel& kernel(const std::string& id);
  /// In-memory records of one component; empty unless traced into memory.
  const std::vector<TraceRecord>& trace(const std::string& id) const;

 private:
  ExperimentConfig cfg_;
  std::vector<std::unique_ptr<TraceSink>> sinks_;
  std::vector<std::unique_ptr<Kernel>> kernels_;
  std::vector<std::unique_ptr<Component>> comps_;
};

/// Whole topology in this process on one event queue. Throws on an invalid
/// config before touching out_dir.
RunArtifacts run_monolith(const ExperimentConfig& cfg, const RunOptions& opts);

/// One process per component (plus two per proxied channel). Throws Error
/// with SpawnFailed, StartupTimeout, ComponentCrashed or WatchdogTimeout
/// after killing every child; run.json is written in every case.
RunArtifacts run_experiment(const ExperimentConfig& cfg, const RunOptions& opts);

/// Entry point of the cosim-<kind> binaries.
int component_main(int argc, char** argv, const std::string& kind);

struct TraceDiff {
  bool identical = true;
  std::string component;  // empty when the component sets differ
  std::size_t line = 0;   // 1-based line in the canonical stream
  std::string a;
  std::string b;

  std::string describe() const;
};

/// Compares canonical traces component by component, in sorted id order.
TraceDiff diff_runs(const fs::path& a, const fs::path& b, CanonicalOptions opts = {});

struct ReplayReport {
  std::vector<RunArtifacts> runs;
  /// One entry per unordered pair (i, j), i < j.
  std::vector<std::pair<std::pair<std::size_t, std::size_t>, TraceDiff>> diffs;
  bool identical() const;
};

ReplayReport replay(const ExperimentConfig& cfg, const RunOptions& opts, std::size_t n);

struct AuditReport {
  std::uint64_t matched = 0;          // tx/rx pairs checked
  std::uint64_t trailing = 0;         // tx still in flight at the end
  std::vector<std::string> skipped;   // unsynchronized channels
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

/// Pairs every tx record with the peer's rx record on the same channel and
/// direction, in FIFO order, and checks rx.t - tx.t == latency and equal
/// type and digest.
AuditReport audit_run(const fs::path& run_dir);

/// Directory of /proc/self/exe.
fs::path self_dir();

}  // namespace cosim
