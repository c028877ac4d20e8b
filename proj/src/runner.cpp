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

// Body of the per-component executables. The process wires its channels in
// four phases so that no ordering between processes can deadlock:
//
//   1. bind every listening socket
//   2. start every connect (completes once the peer has bound)
//   3. accept every listener (sends the handshake record)
//   4. finish every connect (reads the handshake record)

#include <csignal>
#include <fstream>
#include <thread>

#include "CLI11.hpp"

#include "cosim/log.hpp"
#include "cosim/orchestrate.hpp"

namespace cosim {

namespace {

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop.store(true); }

void write_atomic(const fs::path& path, const std::string& text) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error(Errc::IoError, fmt::format("cannot write {}", tmp.string()));
    out << text;
  }
  fs::rename(tmp, path);
}

struct Args {
  fs::path config;
  std::string id;
  fs::path run_dir;
  fs::path sock_dir;
  bool trace_sync = false;
  bool no_trace = false;
  bool dump_payload = false;
};

void run_component(const Args& args, const std::string& kind) {
  ExperimentConfig cfg = load_config(args.config);
  std::size_t self = cfg.component_index(args.id);
  const ComponentSpec& spec = cfg.components[self];
  if (spec.kind != kind)
    throw Error(Errc::ConfigError, fmt::format("{} is a {}, not a {}", spec.id, spec.kind, kind));

  auto startup = std::chrono::milliseconds(static_cast<std::int64_t>(cfg.startup_timeout_s * 1000));

  std::unique_ptr<TraceWriter> trace;
  if (!args.no_trace) {
    TraceOptions topts;
    topts.include_sync = args.trace_sync;
    topts.dump_payload = args.dump_payload;
    trace = std::make_unique<TraceWriter>(layout::trace(args.run_dir, spec.id), spec.id, topts);
  }
  Kernel kernel(spec.id, trace.get());
  auto component = make_component(spec, cfg.duration_ns, kernel);

  auto bindings = port_bindings(cfg, self);
  std::vector<std::optional<ChannelListener>> listeners(bindings.size());
  std::vector<std::optional<PendingConnect>> pending(bindings.size());
  std::vector<std::optional<ChannelEndpoint>> endpoints(bindings.size());

  for (std::size_t i = 0; i < bindings.size(); ++i) {
    const ChannelSpec& ch = cfg.channels[bindings[i].channel];
    if (bindings[i].side_a)
      listeners[i].emplace(layout::socket(args.sock_dir, bindings[i].channel, true).string(), ch.params);
  }
  for (std::size_t i = 0; i < bindings.size(); ++i) {
    if (bindings[i].side_a) continue;
    const ChannelSpec& ch = cfg.channels[bindings[i].channel];
    bool via_proxy = ch.via_proxy.has_value();
    pending[i] = PendingConnect::start(layout::socket(args.sock_dir, bindings[i].channel, !via_proxy).string(),
                                       startup);
  }
  for (std::size_t i = 0; i < bindings.size(); ++i)
    if (listeners[i]) endpoints[i] = listeners[i]->accept(startup);
  for (std::size_t i = 0; i < bindings.size(); ++i) {
    if (!pending[i]) continue;
    endpoints[i] = pending[i]->finish(startup);
    const ChannelSpec& ch = cfg.channels[bindings[i].channel];
    if (endpoints[i]->params() != ch.params)
      throw Error(Errc::ParamMismatch, fmt::format("channel {}: peer offers {}, config says {}", ch.id,
                                                   to_string(endpoints[i]->params()), to_string(ch.params)));
  }

  for (std::size_t i = 0; i < bindings.size(); ++i) {
    const ChannelSpec& ch = cfg.channels[bindings[i].channel];
    PeerId peer = kernel.attach_peer(std::make_unique<ShmTransport>(std::move(*endpoints[i])), ch.params, ch.id);
    component->bind(bindings[i].port, peer);
  }

  write_atomic(layout::ready(args.run_dir, spec.id), "ready\n");
  auto deadline = std::chrono::steady_clock::now() + startup;
  while (!fs::exists(layout::start(args.run_dir))) {
    if (g_stop.load()) throw Error(Errc::Interrupted, "stopped before start");
    if (std::chrono::steady_clock::now() > deadline)
      throw Error(Errc::StartupTimeout, "no start signal from the orchestrator");
    std::this_thread::sleep_for(std::chrono::milliseconds(1));
  }

  std::atomic<std::uint64_t> progress{0};
  std::atomic<bool> progress_done{false};
  std::thread reporter([&] {
    std::uint64_t last = ~std::uint64_t{0};
    fs::path path = layout::progress(args.run_dir, spec.id);
    while (!progress_done.load()) {
      std::uint64_t now = progress.load(std::memory_order_relaxed);
      if (now != last) {
        try {
          write_atomic(path, std::to_string(now) + "\n");
        } catch (const std::exception& e) {
          log::warn("{}: progress: {}", spec.id, e.what());
        }
        last = now;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
  });
  struct Joiner {
    std::atomic<bool>& done;
    std::thread& t;
    ~Joiner() {
      done.store(true);
      t.join();
    }
  } joiner{progress_done, reporter};

  kernel.set_progress(&progress);
  kernel.set_stop_flag(&g_stop);
  kernel.set_deadlock_timeout(std::chrono::milliseconds(static_cast<std::int64_t>(cfg.watchdog_s * 2000)));

  component->start();
  kernel.run(cfg.duration_ns);

  std::ostringstream results;
  component->write_results(results);
  write_channel_stats(kernel, results);
  write_atomic(layout::results(args.run_dir, spec.id), results.str());
  if (trace) trace->flush();
  kernel.finish();
}

}  // namespace

int component_main(int argc, char** argv, const std::string& kind) {
  Args args;
  CLI::App app{fmt::format("cosim {} component", kind)};
  app.add_option("--config", args.config, "Experiment config (JSON)")->required();
  app.add_option("--id", args.id, "Component id in the config")->required();
  app.add_option("--run-dir", args.run_dir, "Run directory")->required();
  app.add_option("--sock-dir", args.sock_dir, "Directory for channel sockets");
  app.add_flag("--trace-sync", args.trace_sync, "Record SYNC messages");
  app.add_flag("--no-trace", args.no_trace, "Disable the trace file");
  app.add_flag("--dump-payload", args.dump_payload, "Append payload bytes to trace records");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  if (args.sock_dir.empty()) args.sock_dir = args.run_dir / "sock";

  std::signal(SIGTERM, on_signal);
  std::signal(SIGINT, on_signal);
  std::signal(SIGPIPE, SIG_IGN);
  try {
    run_component(args, kind);
    return 0;
  } catch (const Error& e) {
    log::error("{}: {}", args.id, e.what());
    return e.code() == Errc::Interrupted ? 3 : 1;
  } catch (const std::exception& e) {
    log::error("{}: {}", args.id, e.what());
    return 1;
  }
}

}  // namespace cosim
