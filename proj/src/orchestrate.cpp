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

#include "cosim/orchestrate.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netinet/in.h>
#include <signal.h>
#include <spawn.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include <fmt/core.h>

#include "cosim/log.hpp"
#include "cosim/shmq.hpp"

extern char** environ;

namespace cosim {

using Clock = std::chrono::steady_clock;

fs::path self_dir() {
  std::error_code ec;
  fs::path exe = fs::read_symlink("/proc/self/exe", ec);
  if (ec) return fs::current_path();
  return exe.parent_path();
}

void write_channel_stats(const Kernel& kernel, std::ostream& out) {
  for (PeerId p = 0; p < kernel.peer_count(); ++p) {
    const PeerStats& s = kernel.stats(p);
    const std::string& ch = kernel.channel(p);
    out << fmt::format("chan.{}.tx_data={}\nchan.{}.rx_data={}\nchan.{}.tx_sync={}\nchan.{}.rx_sync={}\n", ch,
                       s.tx_data, ch, s.rx_data, ch, s.tx_sync, ch, s.rx_sync);
  }
}

std::vector<std::pair<std::string, std::string>> read_results(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, fmt::format("cannot read {}", path.string()));
  std::vector<std::pair<std::string, std::string>> out;
  std::string token;
  while (in >> token) {
    auto eq = token.find('=');
    if (eq == std::string::npos) continue;
    out.emplace_back(token.substr(0, eq), token.substr(eq + 1));
  }
  return out;
}

namespace {

void prepare_run_dir(const fs::path& dir) {
  fs::create_directories(dir);
  for (const char* sub : {"traces", "results", "logs", "ready", "progress"}) {
    fs::remove_all(dir / sub);
    fs::create_directories(dir / sub);
  }
  fs::remove(layout::start(dir));
  fs::remove(layout::summary(dir));
}

void write_json(const fs::path& path, const Json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(Errc::IoError, fmt::format("cannot write {}", path.string()));
  out << j.dump(2) << "\n";
}

void write_summary(const RunArtifacts& art) {
  Json j;
  j["ok"] = art.ok;
  j["error"] = art.error;
  j["wall_seconds"] = art.wall_seconds;
  j["processes"] = Json::array();
  for (const auto& p : art.processes)
    j["processes"].push_back({{"id", p.id}, {"kind", p.kind}, {"exit_code", p.exit_code}, {"signal", p.signal}});
  write_json(layout::summary(art.dir), j);
}

void check_or_throw(const ExperimentConfig& cfg) {
  auto issues = check_config(cfg);
  for (const auto& i : issues) log::error("config: {}", i.message);
  if (!issues.empty()) throw Error(issues.front().code, issues.front().message);
}

double elapsed_s(Clock::time_point since) {
  return std::chrono::duration<double>(Clock::now() - since).count();
}

}  // namespace

// Monolith ----------------------------------------------------------------------

Monolith::Monolith(const ExperimentConfig& cfg, TraceOptions trace, fs::path trace_dir) : cfg_(cfg) {
  check_or_throw(cfg_);
  for (const auto& spec : cfg_.components) {
    TraceSink* sink = nullptr;
    if (trace.enabled) {
      if (trace_dir.empty())
        sinks_.push_back(std::make_unique<TraceBuffer>(spec.id, trace));
      else
        sinks_.push_back(std::make_unique<TraceWriter>(trace_dir / (spec.id + ".trace"), spec.id, trace));
      sink = sinks_.back().get();
    } else {
      sinks_.push_back(nullptr);
    }
    kernels_.push_back(std::make_unique<Kernel>(spec.id, sink));
    comps_.push_back(make_component(spec, cfg_.duration_ns, *kernels_.back()));
  }

  std::vector<std::unique_ptr<Transport>> side_a, side_b;
  for (std::size_t i = 0; i < cfg_.channels.size(); ++i) {
    auto [a, b] = make_mem_channel();
    side_a.push_back(std::move(a));
    side_b.push_back(std::move(b));
  }
  for (std::size_t c = 0; c < cfg_.components.size(); ++c) {
    for (const PortBinding& pb : port_bindings(cfg_, c)) {
      const ChannelSpec& ch = cfg_.channels[pb.channel];
      auto& t = pb.side_a ? side_a[pb.channel] : side_b[pb.channel];
      PeerId peer = kernels_[c]->attach_peer(std::move(t), ch.params, ch.id);
      comps_[c]->bind(pb.port, peer);
    }
  }
}

Monolith::~Monolith() {
  // Components refer to their kernels; drop them first.
  comps_.clear();
}

void Monolith::run() {
  SerialScheduler sched;
  for (auto& k : kernels_) sched.add(*k);
  for (auto& c : comps_) c->start();
  sched.run(cfg_.duration_ns);
}

void Monolith::write_results(const fs::path& run_dir) const {
  for (std::size_t c = 0; c < cfg_.components.size(); ++c) {
    std::ofstream out(layout::results(run_dir, cfg_.components[c].id), std::ios::trunc);
    if (!out) throw Error(Errc::IoError, fmt::format("cannot write results for {}", cfg_.components[c].id));
    comps_[c]->write_results(out);
    write_channel_stats(*kernels_[c], out);
  }
}

void Monolith::flush_traces() {
  for (auto& s : sinks_)
    if (s) s->flush();
}

Component& Monolith::component(const std::string& id) { return *comps_.at(cfg_.component_index(id)); }
Kernel& Monolith::kernel(const std::string& id) { return *kernels_.at(cfg_.component_index(id)); }

const std::vector<TraceRecord>& Monolith::trace(const std::string& id) const {
  static const std::vector<TraceRecord> kEmpty;
  auto* buf = dynamic_cast<const TraceBuffer*>(sinks_.at(cfg_.component_index(id)).get());
  return buf != nullptr ? buf->records() : kEmpty;
}

RunArtifacts run_monolith(const ExperimentConfig& cfg, const RunOptions& opts) {
  check_or_throw(cfg);
  auto t0 = Clock::now();
  RunArtifacts art;
  art.dir = fs::absolute(opts.out_dir);
  prepare_run_dir(art.dir);
  write_json(layout::config(art.dir), to_json(cfg));

  Monolith mono(cfg, opts.trace, art.dir / "traces");
  mono.run();
  mono.write_results(art.dir);
  mono.flush_traces();
  art.ok = true;
  art.wall_seconds = elapsed_s(t0);
  write_summary(art);
  return art;
}

// Multi-process run ---------------------------------------------------------------

namespace {

struct Child {
  ProcessOutcome outcome;
  pid_t pid = -1;
  bool running = false;
  bool is_proxy = false;
};

pid_t spawn(const fs::path& binary, const std::vector<std::string>& args, const fs::path& log_path) {
  if (::access(binary.c_str(), X_OK) != 0)
    throw Error(Errc::SpawnFailed, fmt::format("{}: {}", binary.string(), std::strerror(errno)));
  posix_spawn_file_actions_t fa;
  posix_spawn_file_actions_init(&fa);
  posix_spawn_file_actions_addopen(&fa, 0, "/dev/null", O_RDONLY, 0);
  posix_spawn_file_actions_addopen(&fa, 1, log_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  posix_spawn_file_actions_adddup2(&fa, 1, 2);

  std::vector<std::string> full{binary.string()};
  full.insert(full.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : full) argv.push_back(s.data());
  argv.push_back(nullptr);

  pid_t pid = -1;
  int rc = posix_spawn(&pid, binary.c_str(), &fa, nullptr, argv.data(), environ);
  posix_spawn_file_actions_destroy(&fa);
  if (rc != 0) throw Error(Errc::SpawnFailed, fmt::format("{}: {}", binary.string(), std::strerror(rc)));
  return pid;
}

std::uint16_t pick_free_port(const std::string& host) {
  UniqueFd fd(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = 0;
  if (::inet_pton(AF_INET, host == "localhost" ? "127.0.0.1" : host.c_str(), &addr.sin_addr) != 1)
    throw Error(Errc::ConfigError, fmt::format("proxy host '{}' is not an IPv4 address", host));
  if (!fd || ::bind(fd.get(), reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0)
    throw Error(Errc::SpawnFailed, fmt::format("cannot reserve a TCP port on {}: {}", host, std::strerror(errno)));
  socklen_t len = sizeof(addr);
  ::getsockname(fd.get(), reinterpret_cast<sockaddr*>(&addr), &len);
  return ntohs(addr.sin_port);
}

std::vector<std::string> param_flags(const ChannelParams& p) {
  std::vector<std::string> f = {"--latency-ns",   std::to_string(p.link_latency_ns),
                                "--sync-interval-ns", std::to_string(p.sync_interval_ns),
                                "--slot-bytes",   std::to_string(p.slot_size_bytes),
                                "--queue-slots",  std::to_string(p.queue_len_slots)};
  if (!p.synchronized) f.push_back("--unsynchronized");
  return f;
}

/// Owns the children of one run and kills whatever is still alive on exit.
class Supervisor {
 public:
  ~Supervisor() { kill_all(); }

  void add(Child c) { children_.push_back(std::move(c)); }
  std::vector<Child>& children() { return children_; }

  /// Reaps exited children; returns the first one that failed.
  const Child* reap() {
    const Child* failed = nullptr;
    for (auto& c : children_) {
      if (!c.running) continue;
      int status = 0;
      pid_t r = ::waitpid(c.pid, &status, WNOHANG);
      if (r != c.pid) continue;
      c.running = false;
      if (WIFEXITED(status)) c.outcome.exit_code = WEXITSTATUS(status);
      if (WIFSIGNALED(status)) c.outcome.signal = WTERMSIG(status);
      log::debug("{} exited: code {} signal {}", c.outcome.id, c.outcome.exit_code, c.outcome.signal);
      if ((c.outcome.exit_code != 0 || c.outcome.signal != 0) && failed == nullptr) failed = &c;
    }
    return failed;
  }

  bool all_components_exited() const {
    return std::none_of(children_.begin(), children_.end(), [](const Child& c) { return c.running && !c.is_proxy; });
  }
  bool all_exited() const {
    return std::none_of(children_.begin(), children_.end(), [](const Child& c) { return c.running; });
  }

  /// SIGTERM, a grace period for trace flushing, then SIGKILL.
  void kill_all() {
    for (auto& c : children_)
      if (c.running) ::kill(c.pid, SIGTERM);
    auto deadline = Clock::now() + std::chrono::seconds(3);
    while (!all_exited() && Clock::now() < deadline) {
      reap();
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    for (auto& c : children_) {
      if (!c.running) continue;
      ::kill(c.pid, SIGKILL);
      int status = 0;
      ::waitpid(c.pid, &status, 0);
      c.running = false;
      c.outcome.signal = SIGKILL;
    }
  }

 private:
  std::vector<Child> children_;
};

std::string describe_exit(const Child& c) {
  if (c.outcome.signal != 0) return fmt::format("{} killed by signal {}", c.outcome.id, c.outcome.signal);
  return fmt::format("{} exited with code {}", c.outcome.id, c.outcome.exit_code);
}

std::string read_small(const fs::path& p) {
  std::ifstream in(p);
  std::string s;
  std::getline(in, s);
  return s;
}

}  // namespace

RunArtifacts run_experiment(const ExperimentConfig& cfg_in, const RunOptions& opts) {
  check_or_throw(cfg_in);
  auto t0 = Clock::now();
  ExperimentConfig cfg = cfg_in;
  double watchdog_s = opts.watchdog_s.value_or(cfg.watchdog_s);
  double startup_s = opts.startup_timeout_s.value_or(cfg.startup_timeout_s);
  cfg.watchdog_s = watchdog_s;
  cfg.startup_timeout_s = startup_s;

  RunArtifacts art;
  art.dir = fs::absolute(opts.out_dir);
  prepare_run_dir(art.dir);
  fs::path bin_dir = opts.bin_dir.empty() ? self_dir() : fs::absolute(opts.bin_dir);

  for (auto& ch : cfg.channels)
    if (ch.via_proxy && ch.via_proxy->port == 0) ch.via_proxy->port = pick_free_port(ch.via_proxy->host);
  write_json(layout::config(art.dir), to_json(cfg));

  // Socket paths are limited to 108 bytes; fall back to /tmp for deep out_dirs.
  fs::path sock_dir = art.dir / "sock";
  bool temp_sock = false;
  if (sock_dir.string().size() + 16 > 100) {
    std::string tmpl = "/tmp/cosim-XXXXXX";
    if (::mkdtemp(tmpl.data()) == nullptr) throw Error(Errc::IoError, "mkdtemp failed");
    sock_dir = tmpl;
    temp_sock = true;
  } else {
    fs::remove_all(sock_dir);
    fs::create_directories(sock_dir);
  }
  struct SockCleanup {
    fs::path dir;
    bool remove_dir;
    ~SockCleanup() {
      std::error_code ec;
      if (remove_dir) {
        fs::remove_all(dir, ec);
      } else {
        for (auto& e : fs::directory_iterator(dir, ec)) fs::remove(e.path(), ec);
      }
    }
  } sock_cleanup{sock_dir, temp_sock};

  std::size_t procs = cfg.components.size();
  for (const auto& ch : cfg.channels) procs += ch.via_proxy ? 2 : 0;
  unsigned cores = std::max(1u, std::thread::hardware_concurrency());
  if (procs > cores)
    log::warn("{} processes on {} cores: the run is overcommitted and will be slow", procs, cores);

  Supervisor sup;
  auto fail = [&](Errc code, const std::string& msg) -> RunArtifacts {
    sup.kill_all();
    art.ok = false;
    art.error = std::string(errc_name(code)) + ": " + msg;
    art.wall_seconds = elapsed_s(t0);
    for (auto& c : sup.children()) art.processes.push_back(c.outcome);
    write_summary(art);
    log::error("run {}: {}", cfg.name, art.error);
    throw Error(code, msg);
  };

  try {
    for (const auto& spec : cfg.components) {
      fs::path bin = spec.binary.empty() ? bin_dir / ("cosim-" + spec.kind) : fs::path(spec.binary);
      if (bin.is_relative() && !spec.binary.empty()) bin = bin_dir / bin;
      std::vector<std::string> args = {"--config",   layout::config(art.dir).string(),
                                       "--id",       spec.id,
                                       "--run-dir",  art.dir.string(),
                                       "--sock-dir", sock_dir.string()};
      if (!opts.trace.enabled) args.push_back("--no-trace");
      if (opts.trace.include_sync) args.push_back("--trace-sync");
      if (opts.trace.dump_payload) args.push_back("--dump-payload");
      Child c;
      c.outcome.id = spec.id;
      c.outcome.kind = spec.kind;
      c.pid = spawn(bin, args, layout::log(art.dir, spec.id));
      c.running = true;
      sup.add(std::move(c));
    }
    for (std::size_t i = 0; i < cfg.channels.size(); ++i) {
      const ChannelSpec& ch = cfg.channels[i];
      if (!ch.via_proxy) continue;
      std::string addr = fmt::format("{}:{}", ch.via_proxy->host, ch.via_proxy->port);
      for (bool near_a : {true, false}) {
        std::vector<std::string> args = {near_a ? "--listen" : "--connect", addr, "--chan",
                                         layout::socket(sock_dir, i, near_a).string(), "--timeout-s",
                                         fmt::format("{}", startup_s)};
        auto pf = param_flags(ch.params);
        args.insert(args.end(), pf.begin(), pf.end());
        Child c;
        c.outcome.id = fmt::format("proxy-{}{}", i, near_a ? 'a' : 'b');
        c.outcome.kind = "proxy";
        c.is_proxy = true;
        c.pid = spawn(bin_dir / "cosim-proxy", args, layout::log(art.dir, c.outcome.id));
        c.running = true;
        sup.add(std::move(c));
      }
    }
  } catch (const Error& e) {
    std::string_view what = e.what();
    what.remove_prefix(std::min(what.size(), errc_name(e.code()).size() + 2));
    return fail(e.code(), std::string(what));
  }

  // Start barrier: every component has completed its handshakes.
  auto startup_deadline = Clock::now() + std::chrono::duration<double>(startup_s);
  for (;;) {
    if (const Child* bad = sup.reap()) return fail(Errc::ComponentCrashed, describe_exit(*bad) + " during startup");
    std::size_t ready = 0;
    for (const auto& spec : cfg.components) ready += fs::exists(layout::ready(art.dir, spec.id)) ? 1 : 0;
    if (ready == cfg.components.size()) break;
    if (Clock::now() > startup_deadline) {
      std::string missing;
      for (const auto& spec : cfg.components)
        if (!fs::exists(layout::ready(art.dir, spec.id))) missing += " " + spec.id;
      return fail(Errc::StartupTimeout, fmt::format("not ready after {} s:{}", startup_s, missing));
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  { std::ofstream(layout::start(art.dir)) << "start\n"; }
  log::info("run {}: all {} components ready", cfg.name, cfg.components.size());

  std::string last_progress;
  auto last_change = Clock::now();
  std::optional<Clock::time_point> components_done_at;
  for (;;) {
    if (const Child* bad = sup.reap()) return fail(Errc::ComponentCrashed, describe_exit(*bad));
    if (sup.all_exited()) break;
    if (sup.all_components_exited()) {
      // Proxies exit on their own once both sides have closed.
      if (!components_done_at) components_done_at = Clock::now();
      if (Clock::now() - *components_done_at > std::chrono::seconds(10))
        return fail(Errc::ComponentCrashed, "proxies still running after every component finished");
    }
    std::string progress;
    for (const auto& spec : cfg.components) progress += read_small(layout::progress(art.dir, spec.id)) + ";";
    for (const auto& spec : cfg.components) progress += fs::exists(layout::results(art.dir, spec.id)) ? "r" : "-";
    if (progress != last_progress) {
      last_progress = progress;
      last_change = Clock::now();
    } else if (elapsed_s(last_change) > watchdog_s) {
      return fail(Errc::WatchdogTimeout, fmt::format("no progress for {} s", watchdog_s));
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }

  for (const auto& spec : cfg.components)
    if (!fs::exists(layout::results(art.dir, spec.id)))
      return fail(Errc::ComponentCrashed, fmt::format("{} exited without results", spec.id));

  art.ok = true;
  art.wall_seconds = elapsed_s(t0);
  for (auto& c : sup.children()) art.processes.push_back(c.outcome);
  write_summary(art);
  log::info("run {}: ok in {:.2f} s", cfg.name, art.wall_seconds);
  return art;
}

// Verification ------------------------------------------------------------------------

std::string TraceDiff::describe() const {
  if (identical) return "identical";
  if (component.empty()) return fmt::format("component sets differ: {} vs {}", a, b);
  return fmt::format("{} line {}:\n  a: {}\n  b: {}", component, line, a.empty() ? "<end>" : a,
                     b.empty() ? "<end>" : b);
}

namespace {

std::set<std::string> trace_ids(const fs::path& run) {
  std::set<std::string> ids;
  std::error_code ec;
  for (auto& e : fs::directory_iterator(run / "traces", ec))
    if (e.path().extension() == ".trace") ids.insert(e.path().stem().string());
  if (ec) throw Error(Errc::IoError, fmt::format("{}: no traces directory", run.string()));
  return ids;
}

std::string join(const std::set<std::string>& s) {
  std::string out;
  for (const auto& x : s) out += (out.empty() ? "" : ",") + x;
  return out;
}

}  // namespace

TraceDiff diff_runs(const fs::path& a, const fs::path& b, CanonicalOptions opts) {
  TraceDiff d;
  auto ids_a = trace_ids(a);
  auto ids_b = trace_ids(b);
  if (ids_a != ids_b) {
    d.identical = false;
    d.a = join(ids_a);
    d.b = join(ids_b);
    return d;
  }
  for (const auto& id : ids_a) {
    std::istringstream ca(canonicalize_file(layout::trace(a, id), opts));
    std::istringstream cb(canonicalize_file(layout::trace(b, id), opts));
    std::string la, lb;
    for (std::size_t line = 1;; ++line) {
      bool ha = static_cast<bool>(std::getline(ca, la));
      bool hb = static_cast<bool>(std::getline(cb, lb));
      if (!ha && !hb) break;
      if (ha && hb && la == lb) continue;
      d.identical = false;
      d.component = id;
      d.line = line;
      d.a = ha ? la : "";
      d.b = hb ? lb : "";
      return d;
    }
  }
  return d;
}

bool ReplayReport::identical() const {
  return std::all_of(diffs.begin(), diffs.end(), [](const auto& p) { return p.second.identical; });
}

ReplayReport replay(const ExperimentConfig& cfg, const RunOptions& opts, std::size_t n) {
  ReplayReport rep;
  for (std::size_t i = 0; i < n; ++i) {
    RunOptions o = opts;
    o.out_dir = opts.out_dir / fmt::format("run{}", i);
    rep.runs.push_back(run_experiment(cfg, o));
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      rep.diffs.push_back({{i, j}, diff_runs(rep.runs[i].dir, rep.runs[j].dir)});
  return rep;
}

AuditReport audit_run(const fs::path& run_dir) {
  ExperimentConfig cfg = load_config(layout::config(run_dir));
  std::map<std::string, std::vector<TraceRecord>> traces;
  for (const auto& id : trace_ids(run_dir)) traces[id] = read_trace(layout::trace(run_dir, id));

  AuditReport rep;
  auto violation = [&](std::string msg) {
    if (rep.violations.size() < 100) rep.violations.push_back(std::move(msg));
  };
  for (const auto& ch : cfg.channels) {
    if (!ch.params.synchronized) {
      rep.skipped.push_back(ch.id);
      continue;
    }
    for (bool from_a : {true, false}) {
      const std::string& src = from_a ? ch.a.component : ch.b.component;
      const std::string& dst = from_a ? ch.b.component : ch.a.component;
      if (!traces.count(src) || !traces.count(dst)) {
        violation(fmt::format("{}: missing trace for {} or {}", ch.id, src, dst));
        continue;
      }
      std::vector<const TraceRecord*> tx, rx;
      for (const auto& r : traces[src])
        if (r.channel == ch.id && r.dir == Direction::Tx) tx.push_back(&r);
      for (const auto& r : traces[dst])
        if (r.channel == ch.id && r.dir == Direction::Rx) rx.push_back(&r);
      std::size_t k = 0;
      for (; k < tx.size() && k < rx.size(); ++k) {
        const TraceRecord& t = *tx[k];
        const TraceRecord& r = *rx[k];
        if (r.time != t.time + ch.params.link_latency_ns || r.type != t.type || r.digest != t.digest)
          violation(fmt::format("{} {}->{} #{}: tx t={} {} {:016x}, rx t={} {} {:016x}, latency {}", ch.id, src, dst,
                                k, t.time, t.type, t.digest, r.time, r.type, r.digest, ch.params.link_latency_ns));
        ++rep.matched;
      }
      for (; k < tx.size(); ++k) {
        if (tx[k]->time + ch.params.link_latency_ns >= cfg.duration_ns)
          ++rep.trailing;
        else
          violation(fmt::format("{} {}->{} #{}: tx t={} {} never received", ch.id, src, dst, k, tx[k]->time,
                                tx[k]->type));
      }
      for (; k < rx.size(); ++k)
        violation(fmt::format("{} {}->{} #{}: rx t={} {} without a send", ch.id, src, dst, k, rx[k]->time,
                              rx[k]->type));
    }
  }
  return rep;
}

}  // namespace cosim
