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

#include <csignal>

#include "CLI11.hpp"

#include "cosim/log.hpp"
#include "cosim/error.hpp"
#include "cosim/proxy.hpp"

namespace {
std::atomic<bool> g_stop{false};
extern "C" void on_signal(int) { g_stop.store(true); }
}  // namespace

int main(int argc, char** argv) {
  cosim::ProxyOptions opts;
  std::string listen_addr, connect_addr;
  double timeout_s = 30;
  bool unsynchronized = false;

  CLI::App app{"Splice one cosim channel over TCP"};
  auto* l = app.add_option("--listen", listen_addr, "Accept the peer proxy on host:port; dial the local socket");
  auto* c = app.add_option("--connect", connect_addr, "Dial the peer proxy at host:port; listen on the local socket");
  l->excludes(c);
  app.add_option("--chan", opts.chan_path, "Local channel socket path")->required();
  app.add_option("--latency-ns", opts.params.link_latency_ns, "Link latency");
  app.add_option("--sync-interval-ns", opts.params.sync_interval_ns, "Sync interval");
  app.add_option("--slot-bytes", opts.params.slot_size_bytes, "Slot size");
  app.add_option("--queue-slots", opts.params.queue_len_slots, "Queue length");
  app.add_flag("--unsynchronized", unsynchronized, "Channel runs without synchronization");
  app.add_option("--timeout-s", timeout_s, "Startup timeout");
  try {
    app.parse(argc, argv);
    if (listen_addr.empty() == connect_addr.empty()) throw CLI::ValidationError("exactly one of --listen/--connect");
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  opts.params.synchronized = !unsynchronized;
  opts.mode = listen_addr.empty() ? cosim::ProxyOptions::Mode::Connect : cosim::ProxyOptions::Mode::Listen;
  opts.tcp_addr = listen_addr.empty() ? connect_addr : listen_addr;
  opts.timeout = std::chrono::milliseconds(static_cast<long>(timeout_s * 1000));

  std::signal(SIGTERM, on_signal);
  std::signal(SIGINT, on_signal);
  std::signal(SIGPIPE, SIG_IGN);
  try {
    cosim::run_proxy(opts, &g_stop);
    return 0;
  } catch (const cosim::Error& e) {
    cosim::log::error("proxy {}: {}", opts.chan_path, e.what());
    return e.code() == cosim::Errc::Interrupted ? 3 : 1;
  } catch (const std::exception& e) {
    cosim::log::error("proxy {}: {}", opts.chan_path, e.what());
    return 1;
  }
}
