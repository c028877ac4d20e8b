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
 * @file sync.hpp
 * @brief Discrete-event kernel with conservative pairwise synchronization.
 *
 * Every component embeds one Kernel. A message sent at local time T over a
 * channel with latency D is stamped T + D and executed by the receiver at
 * exactly that time. The timestamp of the newest message received from a
 * peer (its horizon) promises that nothing earlier will follow, so a kernel
 * may run events up to the minimum horizon over its synchronized peers. A
 * channel that carried no message for the sync interval gets a SYNC so the
 * peer's horizon keeps moving.
 *
 * Events at equal time run in three phases:
 *
 *   0. SYNC timers, by peer attach index
 *   1. inbound messages, by peer attach index, then channel FIFO order
 *   2. local events, by insertion order
 *
 * A SYNC timer at t may run once every horizon is >= t. Inbound and local
 * events at t need every horizon > t, which guarantees that no further
 * message stamped t can still arrive and keeps the order above independent
 * of wall-clock arrival.
 */

#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cosim/proto.hpp"
#include "cosim/shmq.hpp"
#include "cosim/trace.hpp"

namespace cosim {

/// One end of a channel as seen by the kernel.
class Transport {
 public:
  virtual ~Transport() = default;
  /// False when the outbound queue is full.
  virtual bool try_send(const WireMessage& m) = 0;
  virtual std::optional<WireMessage> poll() = 0;
  /// The peer has finished or died; nothing beyond what is queued will come.
  virtual bool peer_gone() const = 0;
  /// Announce that this side will send nothing more.
  virtual void close_tx() = 0;
};

class ShmTransport final : public Transport {
 public:
  explicit ShmTransport(ChannelEndpoint ep) : ep_(std::move(ep)) {}

  bool try_send(const WireMessage& m) override { return ep_.tx().try_send(m); }
  std::optional<WireMessage> poll() override { return ep_.rx().try_recv(); }
  bool peer_gone() const override { return ep_.peer_closed(); }
  void close_tx() override { ep_.shutdown_tx(); }

  ChannelEndpoint& endpoint() { return ep_; }

 private:
  ChannelEndpoint ep_;
};

/// Unbounded in-memory channel; both ends live in the same thread.
std::pair<std::unique_ptr<Transport>, std::unique_ptr<Transport>> make_mem_channel();

using PeerId = std::size_t;
using MessageHandler = std::function<void(const WireMessage&)>;

struct EventId {
  SimTime time = 0;
  std::uint64_t seq = 0;
  bool valid = false;
};

struct PeerStats {
  std::uint64_t tx_data = 0;
  std::uint64_t rx_data = 0;
  std::uint64_t tx_sync = 0;
  std::uint64_t rx_sync = 0;
};

class Kernel {
 public:
  enum class Phase : std::uint8_t { SyncTimer = 0, Inbound = 1, Local = 2 };

  struct NextEvent {
    SimTime time;
    Phase phase;
    std::size_t index;  // peer index for phases 0/1, insertion seq for 2
    bool safe;
  };

  explicit Kernel(std::string component_id, TraceSink* trace = nullptr);
  Kernel(const Kernel&) = delete;
  Kernel& operator=(const Kernel&) = delete;

  const std::string& id() const { return id_; }

  /// Peers are indexed in attach order, which is also the tie-break order.
  PeerId attach_peer(std::unique_ptr<Transport> transport, const ChannelParams& params, std::string channel_id,
                     MessageHandler handler = {});
  void set_handler(PeerId peer, MessageHandler handler);
  std::size_t peer_count() const { return peers_.size(); }
  const ChannelParams& params(PeerId peer) const { return peers_.at(peer).params; }
  const std::string& channel(PeerId peer) const { return peers_.at(peer).channel; }
  const PeerStats& stats(PeerId peer) const { return peers_.at(peer).stats; }

  SimTime now() const { return now_; }

  /// Stamps the message now + latency and pushes this channel's SYNC timer
  /// to now + sync interval. A full queue is waited out, never reordered.
  void send(PeerId peer, Payload body);

  EventId schedule_at(SimTime t, std::function<void()> fn);
  EventId schedule_in(SimTime delay, std::function<void()> fn) { return schedule_at(now_ + delay, std::move(fn)); }
  void cancel(EventId& ev);

  /// Records a component-level event in the trace.
  void trace_local(std::string_view type, std::span<const std::uint8_t> data);
  TraceSink* trace_sink() const { return trace_; }

  /// Min horizon over synchronized peers; kTimeInfinity when there are none.
  SimTime safe_horizon() const;

  // Lifecycle ------------------------------------------------------------

  /// Sends the bootstrap SYNC (stamped latency) on every synchronized
  /// channel. Called by run() when needed.
  void start();
  bool started() const { return started_; }

  /// Runs every event with time < until, blocking on peers as required.
  void run(SimTime until);

  /// Half-closes every channel, then discards inbound traffic until each
  /// peer has closed too, so no peer blocks on a queue we stopped reading.
  void finish(std::chrono::milliseconds timeout = std::chrono::seconds(60));

  // Stepping interface (used by run() and by single-threaded drivers) -----

  /// Moves everything currently readable into the per-peer inboxes.
  void poll_peers();
  std::optional<NextEvent> peek(SimTime until) const;
  /// Executes the next event if it is safe and earlier than until.
  bool execute_next(SimTime until);
  /// No event before until remains and none can still arrive.
  bool done(SimTime until) const;

  // Process integration ----------------------------------------------------

  void set_progress(std::atomic<std::uint64_t>* progress) { progress_ = progress; }
  void set_stop_flag(const std::atomic<bool>* stop) { stop_ = stop; }
  /// Wall-clock bound on a single blocked wait; zero disables.
  void set_deadlock_timeout(std::chrono::milliseconds t) { deadlock_timeout_ = t; }

 private:
  struct Peer {
    std::unique_ptr<Transport> transport;
    ChannelParams params;
    std::string channel;
    MessageHandler handler;
    std::deque<WireMessage> inbox;
    SimTime horizon = 0;
    std::optional<SimTime> sync_due;
    PeerStats stats;
  };

  void transmit(Peer& p, const WireMessage& m);
  void deliver(PeerId idx);
  void check_interrupt() const;
  [[noreturn]] void fail_peer_gone(const Peer& p) const;

  std::string id_;
  TraceSink* trace_;
  std::vector<Peer> peers_;
  std::map<std::pair<SimTime, std::uint64_t>, std::function<void()>> local_;
  std::uint64_t local_seq_ = 0;
  SimTime now_ = 0;
  bool started_ = false;
  std::atomic<std::uint64_t>* progress_ = nullptr;
  const std::atomic<bool>* stop_ = nullptr;
  std::chrono::milliseconds deadlock_timeout_{0};
};

/// Drives several kernels from one thread in global (time, phase, kernel)
/// order. Used for whole-topology runs inside one process.
class SerialScheduler {
 public:
  void add(Kernel& k) { kernels_.push_back(&k); }
  /// Throws DeadlockTimeout if every kernel is blocked before until.
  void run(SimTime until);

 private:
  std::vector<Kernel*> kernels_;
};

}  // namespace cosim
