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

#include "cosim/sync.hpp"

#include <algorithm>
#include <cassert>
#include <tuple>

#include <fmt/core.h>

#include "cosim/error.hpp"
#include "cosim/log.hpp"

namespace cosim {

namespace {

constexpr unsigned kIdleChecksEvery = 256;

struct MemPipe {
  std::deque<WireMessage> q;
  bool closed = false;
};

class MemTransport final : public Transport {
 public:
  MemTransport(std::shared_ptr<MemPipe> tx, std::shared_ptr<MemPipe> rx) : tx_(std::move(tx)), rx_(std::move(rx)) {}

  bool try_send(const WireMessage& m) override {
    tx_->q.push_back(m);
    return true;
  }
  std::optional<WireMessage> poll() override {
    if (rx_->q.empty()) return std::nullopt;
    WireMessage m = std::move(rx_->q.front());
    rx_->q.pop_front();
    return m;
  }
  bool peer_gone() const override { return rx_->closed; }
  void close_tx() override { tx_->closed = true; }

 private:
  std::shared_ptr<MemPipe> tx_;
  std::shared_ptr<MemPipe> rx_;
};

auto event_key(const Kernel::NextEvent& e) { return std::tuple(e.time, static_cast<int>(e.phase), e.index); }

}  // namespace

std::pair<std::unique_ptr<Transport>, std::unique_ptr<Transport>> make_mem_channel() {
  auto ab = std::make_shared<MemPipe>();
  auto ba = std::make_shared<MemPipe>();
  return {std::make_unique<MemTransport>(ab, ba), std::make_unique<MemTransport>(ba, ab)};
}

Kernel::Kernel(std::string component_id, TraceSink* trace) : id_(std::move(component_id)), trace_(trace) {}

PeerId Kernel::attach_peer(std::unique_ptr<Transport> transport, const ChannelParams& params,
                           std::string channel_id, MessageHandler handler) {
  if (started_) throw Error(Errc::AttachAfterStart, fmt::format("{}: attach of {}", id_, channel_id));
  params.validate();
  Peer p;
  p.transport = std::move(transport);
  p.params = params;
  p.channel = std::move(channel_id);
  p.handler = std::move(handler);
  peers_.push_back(std::move(p));
  return peers_.size() - 1;
}

void Kernel::set_handler(PeerId peer, MessageHandler handler) { peers_.at(peer).handler = std::move(handler); }

void Kernel::send(PeerId peer, Payload body) {
  Peer& p = peers_.at(peer);
  WireMessage m{now_ + p.params.link_latency_ns, std::move(body)};
  MsgType type = m.type();
  if (trace_ != nullptr && trace_->options().enabled)
    trace_->message(now_, p.channel, Direction::Tx, type, encode_payload(m.body));
  transmit(p, m);
  if (type == MsgType::Sync)
    ++p.stats.tx_sync;
  else
    ++p.stats.tx_data;
  if (p.params.synchronized) p.sync_due = now_ + p.params.sync_interval_ns;
}

void Kernel::transmit(Peer& p, const WireMessage& m) {
  if (p.transport->try_send(m)) return;
  // Keep draining inbound while waiting for space so two kernels sending to
  // each other over full queues cannot wedge.
  Backoff backoff;
  auto since = std::chrono::steady_clock::now();
  unsigned idle = 0;
  while (!p.transport->try_send(m)) {
    poll_peers();
    backoff.pause();
    if (++idle % kIdleChecksEvery == 0) {
      check_interrupt();
      if (p.transport->peer_gone()) fail_peer_gone(p);
      if (deadlock_timeout_.count() > 0 && std::chrono::steady_clock::now() - since > deadlock_timeout_)
        throw Error(Errc::DeadlockTimeout, fmt::format("{}: queue to {} stayed full", id_, p.channel));
    }
  }
}

EventId Kernel::schedule_at(SimTime t, std::function<void()> fn) {
  if (t < now_)
    throw Error(Errc::CausalityViolation, fmt::format("{}: event at {} scheduled in the past ({})", id_, t, now_));
  std::uint64_t seq = local_seq_++;
  local_.emplace(std::pair(t, seq), std::move(fn));
  return EventId{t, seq, true};
}

void Kernel::cancel(EventId& ev) {
  if (!ev.valid) return;
  local_.erase(std::pair(ev.time, ev.seq));
  ev.valid = false;
}

void Kernel::trace_local(std::string_view type, std::span<const std::uint8_t> data) {
  if (trace_ != nullptr) trace_->local(now_, type, data);
}

SimTime Kernel::safe_horizon() const {
  SimTime h = kTimeInfinity;
  for (const Peer& p : peers_)
    if (p.params.synchronized) h = std::min(h, p.horizon);
  return h;
}

void Kernel::start() {
  if (started_) return;
  started_ = true;
  for (PeerId i = 0; i < peers_.size(); ++i)
    if (peers_[i].params.synchronized) send(i, msg::Sync{});
}

void Kernel::poll_peers() {
  for (Peer& p : peers_) {
    while (auto m = p.transport->poll()) {
      if (m->timestamp < p.horizon)
        throw Error(Errc::CausalityViolation, fmt::format("{}: {} delivered t={} after t={}", id_, p.channel,
                                                          m->timestamp, p.horizon));
      if (p.params.synchronized && m->timestamp < now_)
        throw Error(Errc::CausalityViolation,
                    fmt::format("{}: {} delivered t={} but local time is {}", id_, p.channel, m->timestamp, now_));
      p.horizon = m->timestamp;
      p.inbox.push_back(std::move(*m));
    }
  }
}

std::optional<Kernel::NextEvent> Kernel::peek(SimTime until) const {
  std::optional<NextEvent> best;
  auto consider = [&](NextEvent e) {
    if (!best || event_key(e) < event_key(*best)) best = e;
  };
  for (std::size_t i = 0; i < peers_.size(); ++i) {
    const Peer& p = peers_[i];
    if (p.sync_due) consider({*p.sync_due, Phase::SyncTimer, i, false});
    if (!p.inbox.empty())
      consider({p.params.synchronized ? p.inbox.front().timestamp : now_, Phase::Inbound, i, false});
  }
  if (!local_.empty()) {
    const auto& key = local_.begin()->first;
    consider({key.first, Phase::Local, static_cast<std::size_t>(key.second), false});
  }
  if (!best) return best;

  SimTime h = safe_horizon();
  bool safe;
  switch (best->phase) {
    case Phase::SyncTimer:
      safe = best->time <= h;
      break;
    case Phase::Inbound:
      safe = !peers_[best->index].params.synchronized || best->time < h;
      break;
    case Phase::Local:
    default:
      safe = best->time < h;
      break;
  }
  best->safe = safe && best->time < until;
  return best;
}

bool Kernel::execute_next(SimTime until) {
  auto e = peek(until);
  if (!e || !e->safe) return false;
  assert(e->time >= now_);
  now_ = e->time;
  switch (e->phase) {
    case Phase::SyncTimer:
      peers_[e->index].sync_due.reset();
      send(e->index, msg::Sync{});
      break;
    case Phase::Inbound:
      deliver(e->index);
      break;
    case Phase::Local: {
      auto it = local_.begin();
      auto fn = std::move(it->second);
      local_.erase(it);
      fn();
      break;
    }
  }
  if (progress_ != nullptr) progress_->store(now_, std::memory_order_relaxed);
  return true;
}

void Kernel::deliver(PeerId idx) {
  Peer& p = peers_[idx];
  WireMessage m = std::move(p.inbox.front());
  p.inbox.pop_front();
  if (p.params.synchronized && m.timestamp != now_)
    throw Error(Errc::CausalityViolation,
                fmt::format("{}: {} message stamped {} executed at {}", id_, p.channel, m.timestamp, now_));
  MsgType type = m.type();
  if (trace_ != nullptr && trace_->options().enabled)
    trace_->message(now_, p.channel, Direction::Rx, type, encode_payload(m.body));
  if (type == MsgType::Sync) {
    ++p.stats.rx_sync;
    return;
  }
  ++p.stats.rx_data;
  if (p.handler) p.handler(m);
}

bool Kernel::done(SimTime until) const {
  if (safe_horizon() < until) return false;
  auto e = peek(until);
  return !e || e->time >= until;
}

void Kernel::check_interrupt() const {
  if (stop_ != nullptr && stop_->load(std::memory_order_relaxed))
    throw Error(Errc::Interrupted, fmt::format("{}: stop requested at t={}", id_, now_));
}

void Kernel::fail_peer_gone(const Peer& p) const {
  throw Error(Errc::PeerExited,
              fmt::format("{}: peer on {} exited (horizon {}, local time {})", id_, p.channel, p.horizon, now_));
}

void Kernel::run(SimTime until) {
  start();
  Backoff backoff;
  unsigned idle = 0;
  auto blocked_since = std::chrono::steady_clock::now();
  for (;;) {
    poll_peers();
    if (execute_next(until)) {
      backoff.reset();
      idle = 0;
      continue;
    }
    if (done(until)) break;
    if (idle == 0) blocked_since = std::chrono::steady_clock::now();
    backoff.pause();
    if (++idle % kIdleChecksEvery != 0) continue;

    check_interrupt();
    for (const Peer& p : peers_) {
      if (!p.params.synchronized || p.horizon >= until || !p.transport->peer_gone()) continue;
      // Whatever the peer queued before leaving is still ours to read.
      poll_peers();
      if (p.horizon < until) fail_peer_gone(p);
    }
    if (deadlock_timeout_.count() > 0 && std::chrono::steady_clock::now() - blocked_since > deadlock_timeout_)
      throw Error(Errc::DeadlockTimeout,
                  fmt::format("{}: no progress at t={} (horizon {})", id_, now_, safe_horizon()));
  }
  if (progress_ != nullptr) progress_->store(until, std::memory_order_relaxed);
}

void Kernel::finish(std::chrono::milliseconds timeout) {
  for (Peer& p : peers_) p.transport->close_tx();
  auto deadline = std::chrono::steady_clock::now() + timeout;
  Backoff backoff;
  for (;;) {
    bool all_gone = true;
    for (Peer& p : peers_) {
      while (p.transport->poll()) {
      }
      if (!p.transport->peer_gone()) all_gone = false;
    }
    if (all_gone) return;
    if (std::chrono::steady_clock::now() > deadline) {
      log::warn("{}: peers still attached after {} ms, leaving anyway", id_, timeout.count());
      return;
    }
    check_interrupt();
    backoff.pause();
  }
}

void SerialScheduler::run(SimTime until) {
  for (Kernel* k : kernels_) k->start();
  for (;;) {
    std::optional<std::pair<Kernel::NextEvent, std::size_t>> best;
    for (std::size_t i = 0; i < kernels_.size(); ++i) {
      kernels_[i]->poll_peers();
      auto e = kernels_[i]->peek(until);
      if (!e || !e->safe) continue;
      auto key = std::tuple(e->time, static_cast<int>(e->phase), i);
      if (!best || key < std::tuple(best->first.time, static_cast<int>(best->first.phase), best->second))
        best = std::pair(*e, i);
    }
    if (best) {
      kernels_[best->second]->execute_next(until);
      continue;
    }
    bool all_done = std::all_of(kernels_.begin(), kernels_.end(), [&](Kernel* k) { return k->done(until); });
    if (all_done) return;
    std::string who;
    for (Kernel* k : kernels_)
      if (!k->done(until)) who += fmt::format(" {}@{}(h={})", k->id(), k->now(), k->safe_horizon());
    throw Error(Errc::DeadlockTimeout, fmt::format("all kernels blocked before t={}:{}", until, who));
  }
}

}  // namespace cosim
