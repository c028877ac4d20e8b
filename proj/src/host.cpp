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

#include "cosim/host.hpp"

#include <algorithm>
#include <cstring>

#include <fmt/core.h>

#include "cosim/error.hpp"
#include "cosim/log.hpp"

namespace cosim {

namespace {

constexpr std::uint64_t kPage = 4096;
constexpr std::uint64_t kRingsBase = 0x1000;

std::uint64_t page_up(std::uint64_t v) { return (v + kPage - 1) / kPage * kPage; }

std::uint64_t le64(std::span<const std::uint8_t> b) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < b.size() && i < 8; ++i) v |= std::uint64_t{b[i]} << (8 * i);
  return v;
}

Bytes to_le64(std::uint64_t v) {
  Bytes b(8);
  for (int i = 0; i < 8; ++i) b[i] = static_cast<std::uint8_t>(v >> (8 * i));
  return b;
}

struct Layout {
  std::uint64_t tx_ring, rx_ring, tx_buf, rx_buf, end;
};

Layout layout_for(const HostParams& p) {
  Layout l;
  l.tx_ring = kRingsBase;
  l.rx_ring = page_up(l.tx_ring + std::uint64_t{p.tx_ring} * refnic::kDescBytes);
  l.tx_buf = page_up(l.rx_ring + std::uint64_t{p.rx_ring} * refnic::kDescBytes);
  l.rx_buf = page_up(l.tx_buf + std::uint64_t{p.tx_ring} * p.buf_bytes);
  l.end = l.rx_buf + std::uint64_t{p.rx_ring} * p.buf_bytes;
  return l;
}

}  // namespace

void GuestMemory::check(std::uint64_t addr, std::uint64_t len) const {
  if (addr > bytes_.size() || len > bytes_.size() - addr)
    throw Error(Errc::DmaOutOfRange,
                fmt::format("addr=0x{:x} len={} outside guest memory of {} bytes", addr, len, bytes_.size()));
}

Bytes GuestMemory::read(std::uint64_t addr, std::uint64_t len) const {
  check(addr, len);
  return Bytes(bytes_.begin() + static_cast<std::ptrdiff_t>(addr),
               bytes_.begin() + static_cast<std::ptrdiff_t>(addr + len));
}

void GuestMemory::write(std::uint64_t addr, std::span<const std::uint8_t> data) {
  check(addr, data.size());
  if (!data.empty()) std::memcpy(bytes_.data() + addr, data.data(), data.size());
}

HostParams HostParams::parse(const Json& j, const std::string& id) {
  ParamReader r(j, id);
  HostParams p;
  p.mac = parse_mac(r.str("mac"));
  p.mem_bytes = r.u64("mem_bytes", p.mem_bytes);
  p.mmio_issue_delay_ns = r.u64("mmio_issue_delay_ns", 0);
  p.interrupt_entry_delay_ns = r.u64("interrupt_entry_delay_ns", 0);
  p.per_packet_processing_ns = r.u64("per_packet_processing_ns", 0);
  p.tx_ring = static_cast<std::uint32_t>(r.u64("tx_ring", p.tx_ring));
  p.rx_ring = static_cast<std::uint32_t>(r.u64("rx_ring", p.rx_ring));
  p.buf_bytes = static_cast<std::uint32_t>(r.u64("buf_bytes", p.buf_bytes));
  if (p.tx_ring < 2 || p.rx_ring < 2) r.fail("rings need at least 2 descriptors");
  if (p.buf_bytes < 64 || p.buf_bytes > 65535) r.fail("buf_bytes must be in [64, 65535]");

  if (r.has("workload")) {
    ParamReader w(r.raw("workload"), id + ".workload");
    WorkloadParams& wl = p.workload;
    std::string kind = w.str("kind", "none");
    if (kind == "none") wl.kind = WorkloadParams::Kind::None;
    else if (kind == "pingpong") wl.kind = WorkloadParams::Kind::PingPong;
    else if (kind == "echo") wl.kind = WorkloadParams::Kind::Echo;
    else if (kind == "stream") wl.kind = WorkloadParams::Kind::Stream;
    else w.fail(fmt::format("unknown workload kind '{}'", kind));
    bool sends = wl.kind == WorkloadParams::Kind::PingPong || wl.kind == WorkloadParams::Kind::Stream;
    if (sends) {
      wl.peer_mac = parse_mac(w.str("peer_mac"));
      wl.count = w.u64("count");
    }
    if (wl.kind == WorkloadParams::Kind::Stream) {
      wl.rate_pps = w.u64("rate_pps");
      if (wl.rate_pps == 0) w.fail("stream rate_pps must be > 0");
      if (1'000'000'000 % wl.rate_pps != 0)
        throw Error(Errc::PeriodNotIntegral, fmt::format("{}: 1e9 is not divisible by rate {}", id, wl.rate_pps));
    }
    wl.frame_len = w.u64("frame_len", wl.frame_len);
    wl.start_ns = w.u64("start_ns", wl.start_ns);
    wl.timeout_ns = w.u64("timeout_ns", wl.timeout_ns);
    if (wl.frame_len < kEthHeaderBytes + 2 || wl.frame_len > p.buf_bytes)
      w.fail(fmt::format("frame_len {} must be in [16, buf_bytes]", wl.frame_len));
    w.finish();
  }
  r.finish();
  if (layout_for(p).end > p.mem_bytes)
    r.fail(fmt::format("rings and buffers need {} bytes, memory has {}", layout_for(p).end, p.mem_bytes));
  return p;
}

Host::Host(std::string id, Kernel& kernel, HostParams params)
    : Component(std::move(id), kernel), p_(params), mem_(params.mem_bytes) {
  Layout l = layout_for(p_);
  tx_ring_addr_ = l.tx_ring;
  rx_ring_addr_ = l.rx_ring;
  tx_buf_addr_ = l.tx_buf;
  rx_buf_addr_ = l.rx_buf;
}

void Host::bind(const std::string& port, PeerId peer) {
  if (port != "pci") throw Error(Errc::UnknownPort, fmt::format("{}: host has no port '{}'", id(), port));
  pci_ = peer;
  bound_ = true;
  kernel().set_handler(peer, [this](const WireMessage& m) { on_message(m); });
}

void Host::start() {
  if (!bound_) throw Error(Errc::UnconnectedPort, fmt::format("{}: pci port not connected", id()));
}

// CPU ----------------------------------------------------------------------

Host::Step Host::delay(SimTime d) {
  Step s;
  s.kind = Step::Kind::Delay;
  s.delay = d;
  return s;
}

Host::Step Host::call(std::function<void()> fn) {
  Step s;
  s.kind = Step::Kind::Call;
  s.fn = std::move(fn);
  return s;
}

Host::Step Host::mmio_w(std::uint64_t off, std::uint64_t v) {
  Step s;
  s.kind = Step::Kind::MmioWrite;
  s.offset = off;
  s.value = v;
  return s;
}

Host::Step Host::mmio_r(std::uint64_t off, std::function<void(std::uint64_t)> on_value) {
  Step s;
  s.kind = Step::Kind::MmioRead;
  s.offset = off;
  s.on_value = std::move(on_value);
  return s;
}

void Host::submit(Task t) {
  tasks_.push_back(std::move(t));
  run_cpu();
}

void Host::prepend(std::vector<Step> steps) {
  Task& t = tasks_.front();
  for (auto it = steps.rbegin(); it != steps.rend(); ++it) t.push_front(std::move(*it));
}

void Host::run_cpu() {
  if (in_cpu_) return;  // the outer loop will pick up new work
  in_cpu_ = true;
  while (!cpu_waiting_ && !tasks_.empty()) {
    if (tasks_.front().empty()) {
      tasks_.pop_front();
      continue;
    }
    Step s = std::move(tasks_.front().front());
    tasks_.front().pop_front();
    switch (s.kind) {
      case Step::Kind::Call:
        s.fn();
        break;
      case Step::Kind::Delay:
        if (s.delay == 0) break;
        cpu_waiting_ = true;
        kernel().schedule_in(s.delay, [this] {
          cpu_waiting_ = false;
          run_cpu();
        });
        break;
      case Step::Kind::MmioRead:
      case Step::Kind::MmioWrite:
        cpu_waiting_ = true;
        if (p_.mmio_issue_delay_ns == 0)
          issue_mmio(std::move(s));
        else
          kernel().schedule_in(p_.mmio_issue_delay_ns, [this, s = std::move(s)]() mutable { issue_mmio(std::move(s)); });
        break;
    }
  }
  in_cpu_ = false;
}

void Host::issue_mmio(Step s) {
  if (!intro_) throw Error(Errc::ProtocolError, fmt::format("{}: MMIO before the device introduced itself", id()));
  std::uint64_t req = next_req_++;
  if (s.kind == Step::Kind::MmioRead)
    kernel().send(pci_, msg::MmioRead{req, 0, s.offset, 8});
  else
    kernel().send(pci_, msg::MmioWrite{req, 0, s.offset, to_le64(s.value)});
  mmio_pending_.emplace(req, std::move(s));
}

void Host::mmio_read(std::uint64_t offset, std::function<void(std::uint64_t)> done) {
  submit(Task{mmio_r(offset, std::move(done))});
}

void Host::mmio_write(std::uint64_t offset, std::uint64_t value, std::function<void()> done) {
  Task t{mmio_w(offset, value)};
  if (done) t.push_back(call(std::move(done)));
  submit(std::move(t));
}

// PCIe inbound ---------------------------------------------------------------

void Host::on_message(const WireMessage& m) {
  std::visit(
      [this](const auto& body) {
        using T = std::decay_t<decltype(body)>;
        if constexpr (std::is_same_v<T, msg::InitDev>)
          on_init_dev(body);
        else if constexpr (std::is_same_v<T, msg::DmaRead>)
          on_dma_read(body);
        else if constexpr (std::is_same_v<T, msg::DmaWrite>)
          on_dma_write(body);
        else if constexpr (std::is_same_v<T, msg::MmioCompl>)
          on_mmio_compl(body);
        else if constexpr (std::is_same_v<T, msg::Interrupt>)
          on_interrupt(body);
        else
          throw Error(Errc::ProtocolError,
                      fmt::format("{}: unexpected {} from device", id(), type_name(type_of(Payload{body}))));
      },
      m.body);
}

void Host::on_init_dev(const msg::InitDev& m) {
  if (intro_) {
    log::error("{}: device introduced itself twice; ignoring the second INIT_DEV", id());
    return;
  }
  intro_ = m.intro;
  const DeviceIntro& d = *intro_;
  if (d.pci_vendor_id != refnic::kVendorId || d.pci_device_id != refnic::kDeviceId) {
    log::warn("{}: no driver for device {:04x}:{:04x}", id(), d.pci_vendor_id, d.pci_device_id);
    return;
  }
  init_driver();
}

void Host::on_dma_read(const msg::DmaRead& m) {
  Bytes data = mem_.read(m.addr, m.len);
  kernel().send(pci_, msg::DmaCompl{m.req_id, std::move(data)});
}

void Host::on_dma_write(const msg::DmaWrite& m) {
  mem_.write(m.addr, m.data);
  kernel().send(pci_, msg::DmaCompl{m.req_id, std::nullopt});
}

void Host::on_mmio_compl(const msg::MmioCompl& m) {
  auto it = mmio_pending_.find(m.req_id);
  if (it == mmio_pending_.end())
    throw Error(Errc::CompletionIdMismatch, fmt::format("{}: MMIO completion for unknown request {}", id(), m.req_id));
  Step s = std::move(it->second);
  mmio_pending_.erase(it);
  if (s.kind == Step::Kind::MmioRead) {
    if (!m.data) throw Error(Errc::ProtocolError, fmt::format("{}: read completion without data", id()));
    if (s.on_value) s.on_value(le64(*m.data));
  }
  cpu_waiting_ = false;
  run_cpu();
}

void Host::on_interrupt(const msg::Interrupt& m) {
  bool enabled = (m.kind == msg::IrqKind::Msi && irq_enabled_.msi_enabled) ||
                 (m.kind == msg::IrqKind::Legacy && irq_enabled_.legacy_enabled) ||
                 (m.kind == msg::IrqKind::Msix && irq_enabled_.msix_enabled);
  if (!enabled) {
    ++irqs_dropped_;
    log::warn("{}: dropping interrupt kind {} vector {}: mechanism disabled", id(), static_cast<int>(m.kind),
              m.vector);
    return;
  }
  std::vector<Task> handlers;
  if (m.kind == msg::IrqKind::Legacy || m.vector == refnic::kVectorTx) handlers.push_back(tx_handler());
  if (m.kind == msg::IrqKind::Legacy || m.vector == refnic::kVectorRx) handlers.push_back(rx_handler());
  if (handlers.empty()) {
    ++irqs_dropped_;
    log::warn("{}: no handler for vector {}", id(), m.vector);
    return;
  }
  auto enqueue = [this, handlers = std::move(handlers)]() mutable {
    for (Task& t : handlers) submit(std::move(t));
  };
  if (p_.interrupt_entry_delay_ns == 0)
    enqueue();
  else
    kernel().schedule_in(p_.interrupt_entry_delay_ns, std::move(enqueue));
}

// Driver ---------------------------------------------------------------------

void Host::init_driver() {
  Task t;
  t.push_back(call([this] {
    for (std::uint32_t i = 0; i < p_.tx_ring; ++i)
      mem_.write(tx_ring_addr_ + i * refnic::kDescBytes, refnic::Descriptor{}.encode());
    for (std::uint32_t i = 0; i < p_.rx_ring; ++i) {
      refnic::Descriptor d{rx_buf_addr_ + std::uint64_t{i} * p_.buf_bytes, static_cast<std::uint16_t>(p_.buf_bytes),
                           0, 0};
      mem_.write(rx_ring_addr_ + i * refnic::kDescBytes, d.encode());
    }
    irq_enabled_ = msg::IntStatus{false, true, false};
    kernel().send(pci_, irq_enabled_);
  }));
  rx_tail_ = p_.rx_ring - 1;
  t.push_back(mmio_w(refnic::kTxBase, tx_ring_addr_));
  t.push_back(mmio_w(refnic::kTxLen, p_.tx_ring));
  t.push_back(mmio_w(refnic::kRxBase, rx_ring_addr_));
  t.push_back(mmio_w(refnic::kRxLen, p_.rx_ring));
  t.push_back(mmio_w(refnic::kRxTail, rx_tail_));
  t.push_back(mmio_w(refnic::kCtrl, refnic::kCtrlEnable));
  t.push_back(mmio_r(refnic::kCtrl, [this](std::uint64_t v) {
    if ((v & refnic::kCtrlEnable) == 0)
      throw Error(Errc::ProtocolError, fmt::format("{}: NIC did not come up (CTRL=0x{:x})", id(), v));
  }));
  t.push_back(call([this] {
    driver_ready_ = true;
    start_workload();
  }));
  submit(std::move(t));
}

std::uint32_t Host::fill_tx_ring() {
  std::uint32_t n = 0;
  while (!tx_backlog_.empty() && (tx_tail_ + 1) % p_.tx_ring != tx_reap_) {
    Bytes& f = tx_backlog_.front();
    std::uint64_t buf = tx_buf_addr_ + std::uint64_t{tx_tail_} * p_.buf_bytes;
    mem_.write(buf, f);
    refnic::Descriptor d{buf, static_cast<std::uint16_t>(f.size()), 0, 0};
    mem_.write(tx_ring_addr_ + std::uint64_t{tx_tail_} * refnic::kDescBytes, d.encode());
    tx_tail_ = (tx_tail_ + 1) % p_.tx_ring;
    tx_backlog_.pop_front();
    ++sent_;
    ++n;
  }
  return n;
}

void Host::transmit(Bytes frame) {
  if (frame.size() > p_.buf_bytes)
    throw Error(Errc::InvalidParams, fmt::format("{}: frame of {} bytes exceeds buffer", id(), frame.size()));
  submit(Task{call([this, f = std::move(frame)]() mutable {
    tx_backlog_.push_back(std::move(f));
    if (fill_tx_ring() > 0) prepend({mmio_w(refnic::kTxTail, tx_tail_)});
  })});
}

Host::Task Host::tx_handler() {
  return Task{call([this] {
    for (;;) {
      std::uint64_t at = tx_ring_addr_ + std::uint64_t{tx_reap_} * refnic::kDescBytes;
      auto d = refnic::Descriptor::decode(mem_.read(at, refnic::kDescBytes));
      if (tx_reap_ == tx_tail_ || (d.flags & refnic::kDescDone) == 0) break;
      d.flags = 0;
      mem_.write(at, d.encode());
      tx_reap_ = (tx_reap_ + 1) % p_.tx_ring;
      ++tx_reaped_;
    }
    if (!tx_backlog_.empty() && fill_tx_ring() > 0) prepend({mmio_w(refnic::kTxTail, tx_tail_)});
  })};
}

Host::Task Host::rx_handler() {
  return Task{call([this] {
    std::vector<Step> steps;
    std::uint32_t consumed = 0;
    for (;;) {
      std::uint64_t at = rx_ring_addr_ + std::uint64_t{rx_next_} * refnic::kDescBytes;
      auto d = refnic::Descriptor::decode(mem_.read(at, refnic::kDescBytes));
      if ((d.flags & refnic::kDescDone) == 0) break;
      if (d.flags & refnic::kDescError) {
        ++rx_errors_;
      } else {
        Bytes frame = mem_.read(d.addr, d.len);
        steps.push_back(delay(p_.per_packet_processing_ns));
        steps.push_back(call([this, f = std::move(frame)]() mutable { deliver(std::move(f)); }));
      }
      refnic::Descriptor fresh{rx_buf_addr_ + std::uint64_t{rx_next_} * p_.buf_bytes,
                               static_cast<std::uint16_t>(p_.buf_bytes), 0, 0};
      mem_.write(at, fresh.encode());
      rx_next_ = (rx_next_ + 1) % p_.rx_ring;
      ++consumed;
      if (consumed == p_.rx_ring) break;
    }
    if (consumed == 0) return;
    rx_tail_ = (rx_tail_ + consumed) % p_.rx_ring;
    steps.push_back(mmio_w(refnic::kRxTail, rx_tail_));
    prepend(std::move(steps));
  })};
}

// Workloads ------------------------------------------------------------------

Bytes Host::make_frame(const MacAddr& dst, std::uint16_t seq) const {
  Bytes f(p_.workload.frame_len, 0);
  std::copy(dst.begin(), dst.end(), f.begin());
  std::copy(p_.mac.begin(), p_.mac.end(), f.begin() + 6);
  f[12] = kWorkloadEthertype >> 8;
  f[13] = kWorkloadEthertype & 0xff;
  f[14] = static_cast<std::uint8_t>(seq >> 8);
  f[15] = static_cast<std::uint8_t>(seq);
  return f;
}

void Host::start_workload() {
  const WorkloadParams& w = p_.workload;
  SimTime at = std::max(kernel().now(), w.start_ns);
  switch (w.kind) {
    case WorkloadParams::Kind::PingPong:
      if (w.count > 0) kernel().schedule_at(at, [this] { send_ping(); });
      break;
    case WorkloadParams::Kind::Stream: {
      SimTime period = 1'000'000'000 / w.rate_pps;
      for (std::uint64_t k = 0; k < w.count; ++k)
        kernel().schedule_at(at + k * period,
                             [this, k] { transmit(make_frame(p_.workload.peer_mac, static_cast<std::uint16_t>(k))); });
      break;
    }
    case WorkloadParams::Kind::None:
    case WorkloadParams::Kind::Echo:
      break;
  }
}

void Host::send_ping() {
  submit(Task{call([this] {
    ping_start_ = kernel().now();
    awaiting_echo_ = true;
    std::uint16_t seq = seq_;
    ping_timeout_ = kernel().schedule_in(p_.workload.timeout_ns, [this, seq] {
      throw Error(Errc::WorkloadTimeout,
                  fmt::format("{}: no echo for ping {} within {} ns", id(), seq, p_.workload.timeout_ns));
    });
    tx_backlog_.push_back(make_frame(p_.workload.peer_mac, seq));
    if (fill_tx_ring() > 0) prepend({mmio_w(refnic::kTxTail, tx_tail_)});
  })});
}

void Host::deliver(Bytes frame) {
  if (frame.size() < kEthHeaderBytes + 2) return;
  MacAddr dst = frame_dst(frame);
  if (dst != p_.mac && !is_multicast(dst)) return;
  ++delivered_;
  if (frame_ethertype(frame) != kWorkloadEthertype) return;
  std::uint16_t seq = static_cast<std::uint16_t>(frame[14] << 8 | frame[15]);
  const WorkloadParams& w = p_.workload;
  switch (w.kind) {
    case WorkloadParams::Kind::PingPong:
      if (!awaiting_echo_ || frame_src(frame) != w.peer_mac || seq != seq_) break;
      awaiting_echo_ = false;
      kernel().cancel(ping_timeout_);
      rtts_.push_back(kernel().now() - ping_start_);
      ++seq_;
      if (rtts_.size() < w.count) send_ping();
      break;
    case WorkloadParams::Kind::Echo: {
      if (dst != p_.mac) break;
      Bytes reply = frame;
      MacAddr src = frame_src(frame);
      std::copy(src.begin(), src.end(), reply.begin());
      std::copy(p_.mac.begin(), p_.mac.end(), reply.begin() + 6);
      transmit(std::move(reply));
      break;
    }
    case WorkloadParams::Kind::Stream:
    case WorkloadParams::Kind::None:
      break;
  }
}

void Host::write_results(std::ostream& out) const {
  out << "sent=" << sent_ << "\n";
  out << "delivered=" << delivered_ << "\n";
  out << "tx_reaped=" << tx_reaped_ << "\n";
  out << "irq_dropped=" << irqs_dropped_ << "\n";
  out << "rx_errors=" << rx_errors_ << "\n";
  for (SimTime r : rtts_) out << "rtt_ns=" << r << "\n";
}

}  // namespace cosim
