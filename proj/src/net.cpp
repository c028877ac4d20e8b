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

#include "cosim/net.hpp"

#include <algorithm>
#include <charconv>
#include <numeric>

#include <fmt/core.h>

#include "cosim/error.hpp"
#include "cosim/log.hpp"
#include "cosim/trace.hpp"

namespace cosim {

void MacTable::learn(const MacAddr& mac, std::size_t port) {
  auto it = map_.find(mac);
  if (it != map_.end()) {
    it->second = port;
    return;
  }
  if (map_.size() < capacity_) map_.emplace(mac, port);
}

std::optional<std::size_t> MacTable::lookup(const MacAddr& mac) const {
  auto it = map_.find(mac);
  if (it == map_.end()) return std::nullopt;
  return it->second;
}

SwitchParams SwitchParams::parse(const Json& j, const std::string& id) {
  ParamReader r(j, id);
  SwitchParams p;
  p.ports = r.u64("ports");
  p.forward_delay_ns = r.u64("forward_delay_ns", p.forward_delay_ns);
  p.queue_capacity = r.u64("queue_capacity", p.queue_capacity);
  p.mac_table_capacity = r.u64("mac_table_capacity", p.mac_table_capacity);
  r.finish();
  if (p.ports == 0 || p.ports > 256) r.fail("ports must be in [1, 256]");
  if (p.queue_capacity == 0) r.fail("queue_capacity must be > 0");
  return p;
}

Switch::Switch(std::string id, Kernel& kernel, SwitchParams params)
    : Component(std::move(id), kernel),
      p_(params),
      peers_(params.ports),
      queues_(params.ports),
      busy_(params.ports, false),
      stats_(params.ports),
      table_(params.mac_table_capacity),
      egress_log_(params.ports) {}

void Switch::bind(const std::string& port, PeerId peer) {
  std::size_t idx = 0;
  auto [p, ec] = std::from_chars(port.data(), port.data() + port.size(), idx);
  if (ec != std::errc() || p != port.data() + port.size() || idx >= p_.ports)
    throw Error(Errc::UnknownPort, fmt::format("{}: switch has no port '{}'", id(), port));
  peers_[idx] = peer;
  kernel().set_handler(peer, [this, idx](const WireMessage& m) {
    if (const auto* pkt = std::get_if<msg::Packet>(&m.body))
      forward(pkt->data, idx);
    else
      log::error("{}: unexpected {} on port {}", id(), type_name(m.type()), idx);
  });
}

void Switch::start() {
  for (std::size_t i = 0; i < peers_.size(); ++i)
    if (!peers_[i]) throw Error(Errc::UnconnectedPort, fmt::format("{}: port {} not connected", id(), i));
}

void Switch::forward(Bytes frame, std::size_t ingress) {
  ++stats_[ingress].rx;
  if (frame.size() < kEthHeaderBytes) {
    ++stats_[ingress].drop;
    return;
  }
  MacAddr src = frame_src(frame);
  MacAddr dst = frame_dst(frame);
  if (!is_multicast(src)) table_.learn(src, ingress);

  std::optional<std::size_t> out = is_multicast(dst) ? std::nullopt : table_.lookup(dst);
  if (out) {
    if (*out == ingress) {
      ++stats_[ingress].drop;  // destination sits behind the ingress port
      return;
    }
    enqueue(*out, frame);
    return;
  }
  std::size_t copies = 0;
  for (std::size_t port = 0; port < p_.ports; ++port) {
    if (port == ingress) continue;
    enqueue(port, frame);
    ++copies;
  }
  if (copies == 0)
    ++stats_[ingress].drop;
  else
    replicated_ += copies - 1;
}

void Switch::enqueue(std::size_t port, const Bytes& frame) {
  if (queues_[port].size() >= p_.queue_capacity) {
    ++stats_[port].drop;
    return;
  }
  queues_[port].push_back(frame);
  if (busy_[port]) return;
  if (p_.forward_delay_ns == 0) {
    serve(port);
    return;
  }
  busy_[port] = true;
  kernel().schedule_in(p_.forward_delay_ns, [this, port] { serve(port); });
}

void Switch::serve(std::size_t port) {
  busy_[port] = false;
  if (queues_[port].empty()) return;
  Bytes frame = std::move(queues_[port].front());
  queues_[port].pop_front();
  ++stats_[port].tx;
  if (record_) egress_log_[port].push_back(frame);
  if (peers_[port]) kernel().send(*peers_[port], msg::Packet{std::move(frame)});
  if (!queues_[port].empty()) {
    if (p_.forward_delay_ns == 0) {
      serve(port);
      return;
    }
    busy_[port] = true;
    kernel().schedule_in(p_.forward_delay_ns, [this, port] { serve(port); });
  }
}

std::uint64_t Switch::queued() const {
  std::uint64_t n = 0;
  for (const auto& q : queues_) n += q.size();
  return n;
}

bool Switch::balanced() const {
  std::uint64_t rx = 0, tx = 0, drop = 0;
  for (const auto& s : stats_) {
    rx += s.rx;
    tx += s.tx;
    drop += s.drop;
  }
  return rx + replicated_ == tx + drop + queued();
}

void Switch::write_results(std::ostream& out) const {
  for (std::size_t i = 0; i < stats_.size(); ++i)
    out << fmt::format("port{}.rx={} port{}.tx={} port{}.drop={}\n", i, stats_[i].rx, i, stats_[i].tx, i,
                       stats_[i].drop);
  out << "replicated=" << replicated_ << "\n";
  out << "queued=" << queued() << "\n";
  out << "mac_table=" << table_.size() << "\n";
  out << "balanced=" << (balanced() ? 1 : 0) << "\n";
}

// Packet generator ---------------------------------------------------------------

PktgenParams PktgenParams::parse(const Json& j, const std::string& id, SimTime experiment_duration) {
  ParamReader r(j, id);
  PktgenParams p;
  p.mac = parse_mac(r.str("mac"));
  p.rate_pps = r.u64("rate_pps", 0);
  p.dst_mac = parse_mac(r.str("dst_mac", format_mac(kBroadcastMac)));
  p.frame_len = r.u64("frame_len", p.frame_len);
  p.duration_ns = r.u64("duration_ns", experiment_duration);
  r.finish();
  if (p.rate_pps != 0 && 1'000'000'000 % p.rate_pps != 0)
    throw Error(Errc::PeriodNotIntegral,
                fmt::format("{}: 1e9 ns is not divisible by rate_pps={}", id, p.rate_pps));
  if (p.frame_len < Pktgen::kMinFrame || p.frame_len > 65535)
    r.fail(fmt::format("frame_len {} must be in [{}, 65535]", p.frame_len, Pktgen::kMinFrame));
  return p;
}

Pktgen::Pktgen(std::string id, Kernel& kernel, PktgenParams params)
    : Component(std::move(id), kernel), p_(params) {}

void Pktgen::bind(const std::string& port, PeerId peer) {
  if (port != "eth") throw Error(Errc::UnknownPort, fmt::format("{}: pktgen has no port '{}'", id(), port));
  eth_ = peer;
  kernel().set_handler(peer, [this](const WireMessage& m) { on_eth(m); });
}

void Pktgen::start() {
  if (!eth_) throw Error(Errc::UnconnectedPort, fmt::format("{}: eth port not connected", id()));
  if (p_.rate_pps == 0 || p_.period() >= p_.duration_ns) return;
  kernel().schedule_at(p_.period(), [this] { emit(); });
}

Bytes Pktgen::make_frame(const PktgenParams& p, std::uint32_t seq, SimTime now) {
  Bytes f(p.frame_len, 0);
  std::copy(p.dst_mac.begin(), p.dst_mac.end(), f.begin());
  std::copy(p.mac.begin(), p.mac.end(), f.begin() + 6);
  f[12] = kWorkloadEthertype >> 8;
  f[13] = kWorkloadEthertype & 0xff;
  for (int i = 0; i < 4; ++i) f[kSeqOffset + i] = static_cast<std::uint8_t>(seq >> (8 * i));
  for (int i = 0; i < 8; ++i) f[kTimeOffset + i] = static_cast<std::uint8_t>(now >> (8 * i));
  return f;
}

void Pktgen::emit() {
  kernel().send(*eth_, msg::Packet{make_frame(p_, static_cast<std::uint32_t>(sent_), kernel().now())});
  ++sent_;
  SimTime next = kernel().now() + p_.period();
  if (next < p_.duration_ns) kernel().schedule_at(next, [this] { emit(); });
}

void Pktgen::on_eth(const WireMessage& m) {
  const auto* pkt = std::get_if<msg::Packet>(&m.body);
  if (pkt == nullptr) return;
  const Bytes& f = pkt->data;
  if (f.size() < kMinFrame || frame_dst(f) != p_.mac || frame_ethertype(f) != kWorkloadEthertype) {
    ++rx_other_;
    return;
  }
  ++received_;
  SimTime sent_at = 0;
  for (int i = 0; i < 8; ++i) sent_at |= SimTime{f[kTimeOffset + i]} << (8 * i);
  SimTime lat = kernel().now() - sent_at;
  FlowStats& fs = flows_[mac_key(frame_src(f))];
  fs.lat_min = fs.count == 0 ? lat : std::min(fs.lat_min, lat);
  fs.lat_max = fs.count == 0 ? lat : std::max(fs.lat_max, lat);
  fs.digest += fnv1a(f);
  ++fs.count;
}

void Pktgen::write_results(std::ostream& out) const {
  out << "sent=" << sent_ << "\n";
  out << "received=" << received_ << "\n";
  out << "rx_other=" << rx_other_ << "\n";
  for (const auto& [key, fs] : flows_) {
    out << "flow." << key << ".count=" << fs.count << "\n";
    out << "flow." << key << ".digest=" << fmt::format("{:016x}", fs.digest) << "\n";
    out << "flow." << key << ".lat_min_ns=" << fs.lat_min << "\n";
    out << "flow." << key << ".lat_max_ns=" << fs.lat_max << "\n";
  }
}

}  // namespace cosim
