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
 * @file net.hpp
 * @brief Ethernet-side components: a MAC-learning switch and a packet
 * generator that doubles as a sink.
 */

#pragma once

#include <deque>
#include <map>
#include <optional>
#include <vector>

#include "cosim/component.hpp"

namespace cosim {

/// MAC to port map without aging. A full table stops learning new MACs but
/// still updates known ones.
class MacTable {
 public:
  explicit MacTable(std::size_t capacity = 1024) : capacity_(capacity) {}

  void learn(const MacAddr& mac, std::size_t port);
  std::optional<std::size_t> lookup(const MacAddr& mac) const;
  std::size_t size() const { return map_.size(); }

 private:
  std::size_t capacity_;
  std::map<MacAddr, std::size_t> map_;
};

struct SwitchParams {
  std::size_t ports = 2;
  SimTime forward_delay_ns = 0;
  std::size_t queue_capacity = 64;
  std::size_t mac_table_capacity = 1024;

  static SwitchParams parse(const Json& j, const std::string& id);
};

struct PortStats {
  std::uint64_t rx = 0;
  std::uint64_t tx = 0;
  std::uint64_t drop = 0;
};

/// Store-and-forward switch. Each egress port is a FIFO served one frame per
/// forward_delay_ns; a frame reaching a full FIFO is dropped on that port.
class Switch final : public Component {
 public:
  Switch(std::string id, Kernel& kernel, SwitchParams params);

  void bind(const std::string& port, PeerId peer) override;
  void start() override;
  void write_results(std::ostream& out) const override;

  /// Forwarding decision for one frame; also the unit-test entry point.
  void forward(Bytes frame, std::size_t ingress);

  const std::vector<PortStats>& stats() const { return stats_; }
  std::uint64_t replicated() const { return replicated_; }
  std::uint64_t queued() const;
  const MacTable& table() const { return table_; }
  /// Σrx + replicated == Σtx + Σdrop + queued
  bool balanced() const;

  /// Frames handed to each port's peer, in order (kept only when enabled).
  void record_egress(bool on) { record_ = on; }
  const std::vector<std::vector<Bytes>>& egress_log() const { return egress_log_; }

 private:
  void enqueue(std::size_t port, const Bytes& frame);
  void serve(std::size_t port);

  SwitchParams p_;
  std::vector<std::optional<PeerId>> peers_;
  std::vector<std::deque<Bytes>> queues_;
  std::vector<bool> busy_;
  std::vector<PortStats> stats_;
  MacTable table_;
  std::uint64_t replicated_ = 0;
  bool record_ = false;
  std::vector<std::vector<Bytes>> egress_log_;
};

struct PktgenParams {
  MacAddr mac{};
  MacAddr dst_mac{};
  std::uint64_t rate_pps = 0;
  std::uint64_t frame_len = 60;
  SimTime duration_ns = 0;  // defaults to the experiment duration

  static PktgenParams parse(const Json& j, const std::string& id, SimTime experiment_duration);
  /// Frame emission times: k * period for k >= 1 while < duration.
  SimTime period() const { return rate_pps == 0 ? 0 : 1'000'000'000 / rate_pps; }
};

struct FlowStats {
  std::uint64_t count = 0;
  std::uint64_t digest = 0;  // sum of per-frame FNV-1a, order independent
  SimTime lat_min = 0;
  SimTime lat_max = 0;
};

/// Emits frames carrying {seq u32, tx time u64} after the Ethernet header
/// and counts what arrives for its own MAC, per source.
class Pktgen final : public Component {
 public:
  /// Payload offsets after the 14-byte header.
  static constexpr std::size_t kSeqOffset = 14;
  static constexpr std::size_t kTimeOffset = 18;
  static constexpr std::size_t kMinFrame = 26;

  Pktgen(std::string id, Kernel& kernel, PktgenParams params);

  void bind(const std::string& port, PeerId peer) override;
  void start() override;
  void write_results(std::ostream& out) const override;

  std::uint64_t sent() const { return sent_; }
  std::uint64_t received() const { return received_; }
  const std::map<std::string, FlowStats>& flows() const { return flows_; }

  static Bytes make_frame(const PktgenParams& p, std::uint32_t seq, SimTime now);

 private:
  void emit();
  void on_eth(const WireMessage& m);

  PktgenParams p_;
  std::optional<PeerId> eth_;
  std::uint64_t sent_ = 0;
  std::uint64_t received_ = 0;
  std::uint64_t rx_other_ = 0;
  std::map<std::string, FlowStats> flows_;  // keyed by source MAC
};

}  // namespace cosim
