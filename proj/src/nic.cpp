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

#include "cosim/nic.hpp"

#include <algorithm>

#include <fmt/core.h>

#include "cosim/error.hpp"
#include "cosim/log.hpp"

namespace cosim {

namespace {

std::uint64_t le_value(std::span<const std::uint8_t> b) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < b.size() && i < 8; ++i) v |= std::uint64_t{b[i]} << (8 * i);
  return v;
}

Bytes le_bytes(std::uint64_t v, std::uint32_t len) {
  Bytes b(len);
  for (std::uint32_t i = 0; i < len; ++i) b[i] = i < 8 ? static_cast<std::uint8_t>(v >> (8 * i)) : 0;
  return b;
}

}  // namespace

NicParams NicParams::parse(const Json& j, const std::string& id) {
  ParamReader r(j, id);
  NicParams p;
  p.mac = parse_mac(r.str("mac", "02:00:00:00:ff:00"));
  p.tx_pipeline_delay_ns = r.u64("tx_pipeline_delay_ns", p.tx_pipeline_delay_ns);
  p.rx_pipeline_delay_ns = r.u64("rx_pipeline_delay_ns", p.rx_pipeline_delay_ns);
  p.mmio_latency_ns = r.u64("mmio_latency_ns", p.mmio_latency_ns);
  r.finish();
  return p;
}

Nic::Nic(std::string id, Kernel& kernel, NicParams params) : Component(std::move(id), kernel), p_(params) {}

void Nic::bind(const std::string& port, PeerId peer) {
  if (port == "pci") {
    pci_ = peer;
    kernel().set_handler(peer, [this](const WireMessage& m) { on_pci(m); });
  } else if (port == "eth") {
    eth_ = peer;
    kernel().set_handler(peer, [this](const WireMessage& m) { on_eth(m); });
  } else {
    throw Error(Errc::UnknownPort, fmt::format("{}: nic has no port '{}'", id(), port));
  }
}

void Nic::start() {
  if (!pci_) throw Error(Errc::UnconnectedPort, fmt::format("{}: pci port not connected", id()));
  kernel().schedule_at(0, [this] { announce(); });
}

void Nic::announce() {
  if (announced_) {
    log::error("{}: INIT_DEV already sent; ignoring second announce", id());
    return;
  }
  announced_ = true;
  DeviceIntro d;
  d.pci_vendor_id = refnic::kVendorId;
  d.pci_device_id = refnic::kDeviceId;
  d.pci_class = refnic::kClassNetwork;
  d.bars.push_back(BarInfo{refnic::kBar0Size, true});
  d.num_msi_vectors = refnic::kMsiVectors;
  kernel().send(*pci_, msg::InitDev{d});
}

std::uint64_t Nic::reg(std::uint64_t offset) const {
  switch (offset) {
    case refnic::kCtrl: return regs_.ctrl;
    case refnic::kTxBase: return regs_.tx_base;
    case refnic::kTxLen: return regs_.tx_len;
    case refnic::kTxTail: return regs_.tx_tail;
    case refnic::kRxBase: return regs_.rx_base;
    case refnic::kRxLen: return regs_.rx_len;
    case refnic::kRxTail: return regs_.rx_tail;
    case refnic::kIrqStatus: return regs_.irq_status;
    case refnic::kRxDrop: return regs_.rx_drop;
    default: return ~std::uint64_t{0};
  }
}

void Nic::on_pci(const WireMessage& m) {
  std::visit(
      [&](const auto& body) {
        using T = std::decay_t<decltype(body)>;
        if constexpr (std::is_same_v<T, msg::MmioRead>) {
          if (p_.mmio_latency_ns == 0)
            mmio_read(body);
          else
            kernel().schedule_in(p_.mmio_latency_ns, [this, body] { mmio_read(body); });
        } else if constexpr (std::is_same_v<T, msg::MmioWrite>) {
          if (p_.mmio_latency_ns == 0)
            mmio_write(body);
          else
            kernel().schedule_in(p_.mmio_latency_ns, [this, body] { mmio_write(body); });
        } else if constexpr (std::is_same_v<T, msg::DmaCompl>) {
          dma_done(body);
        } else if constexpr (std::is_same_v<T, msg::IntStatus>) {
          irq_ = body;
        } else {
          log::error("{}: unexpected {} from host", id(), type_name(m.type()));
        }
      },
      m.body);
}

void Nic::mmio_read(const msg::MmioRead& m) {
  std::uint64_t v;
  if (m.bar != 0 || m.offset >= refnic::kBar0Size || m.offset % 8 != 0 || m.offset > refnic::kRxDrop) {
    ++unmapped_;
    log::warn("{}: read of unmapped BAR{} offset 0x{:x}", id(), m.bar, m.offset);
    v = ~std::uint64_t{0};
  } else {
    v = reg(m.offset);
    if (m.offset == refnic::kIrqStatus) regs_.irq_status = 0;
  }
  kernel().send(*pci_, msg::MmioCompl{m.req_id, le_bytes(v, m.len)});
}

void Nic::mmio_write(const msg::MmioWrite& m) {
  std::uint64_t v = le_value(m.data);
  bool kick = false;
  if (m.bar != 0) {
    ++unmapped_;
    log::warn("{}: write to unmapped BAR{}", id(), m.bar);
  } else {
    switch (m.offset) {
      case refnic::kCtrl:
        kick = (v & refnic::kCtrlEnable) && !(regs_.ctrl & refnic::kCtrlEnable);
        regs_.ctrl = v;
        break;
      case refnic::kTxBase: regs_.tx_base = v; break;
      case refnic::kTxLen: regs_.tx_len = v; break;
      case refnic::kTxTail:
        regs_.tx_tail = v;
        kick = true;
        break;
      case refnic::kRxBase: regs_.rx_base = v; break;
      case refnic::kRxLen: regs_.rx_len = v; break;
      case refnic::kRxTail: regs_.rx_tail = v; break;
      case refnic::kIrqStatus: regs_.irq_status &= ~v; break;  // write-one-to-clear
      case refnic::kRxDrop: break;                               // read-only
      default:
        ++unmapped_;
        log::warn("{}: write to unmapped offset 0x{:x}", id(), m.offset);
        break;
    }
  }
  kernel().send(*pci_, msg::MmioCompl{m.req_id, std::nullopt});
  if (kick) tx_kick();
}

std::uint64_t Nic::dma_read(std::uint64_t addr, std::uint32_t len, DmaCtx ctx) {
  std::uint64_t id = next_dma_++;
  dma_.emplace(id, std::move(ctx));
  kernel().send(*pci_, msg::DmaRead{id, addr, len});
  return id;
}

std::uint64_t Nic::dma_write(std::uint64_t addr, Bytes data, DmaCtx ctx) {
  std::uint64_t id = next_dma_++;
  dma_.emplace(id, std::move(ctx));
  kernel().send(*pci_, msg::DmaWrite{id, addr, std::move(data)});
  return id;
}

void Nic::raise(std::uint64_t status_bit, std::uint32_t vector) {
  regs_.irq_status |= status_bit;
  if (irq_.msi_enabled)
    kernel().send(*pci_, msg::Interrupt{msg::IrqKind::Msi, vector});
  else if (irq_.legacy_enabled)
    kernel().send(*pci_, msg::Interrupt{msg::IrqKind::Legacy, 1});
}

void Nic::dma_done(const msg::DmaCompl& m) {
  auto it = dma_.find(m.req_id);
  if (it == dma_.end())
    throw Error(Errc::CompletionIdMismatch, fmt::format("{}: DMA completion for unknown request {}", id(), m.req_id));
  DmaCtx ctx = std::move(it->second);
  dma_.erase(it);

  auto need_data = [&](std::size_t n) -> const Bytes& {
    if (!m.data || m.data->size() != n)
      throw Error(Errc::ProtocolError,
                  fmt::format("{}: DMA read {} returned {} bytes, wanted {}", id(), m.req_id,
                              m.data ? m.data->size() : 0, n));
    return *m.data;
  };
  auto slot_for = [&](std::uint64_t serial) -> TxSlot& {
    for (TxSlot& s : tx_inflight_)
      if (s.serial == serial) return s;
    throw Error(Errc::ProtocolError, fmt::format("{}: no tx slot {}", id(), serial));
  };

  switch (ctx.kind) {
    case DmaCtx::Kind::TxDesc: {
      TxSlot& s = slot_for(ctx.index);
      s.desc = refnic::Descriptor::decode(need_data(refnic::kDescBytes));
      dma_read(s.desc.addr, s.desc.len, DmaCtx{DmaCtx::Kind::TxBuf, ctx.index, {}, {}});
      break;
    }
    case DmaCtx::Kind::TxBuf: {
      TxSlot& s = slot_for(ctx.index);
      s.payload = need_data(s.desc.len);
      s.ready_at = kernel().now() + p_.tx_pipeline_delay_ns;
      kernel().schedule_at(s.ready_at, [this] { tx_drain(); });
      break;
    }
    case DmaCtx::Kind::RxDesc: {
      refnic::Descriptor d = refnic::Descriptor::decode(need_data(refnic::kDescBytes));
      std::uint64_t at = regs_.rx_base + ctx.index * refnic::kDescBytes;
      if (ctx.frame.size() > d.len) {
        ++regs_.rx_drop;
        d.len = 0;
        d.flags = refnic::kDescDone | refnic::kDescError;
        auto enc = d.encode();
        dma_write(at, Bytes(enc.begin(), enc.end()), DmaCtx{DmaCtx::Kind::RxWriteBack, ctx.index, {}, {}});
        raise(refnic::kIrqRx, refnic::kVectorRx);
        break;
      }
      d.len = static_cast<std::uint16_t>(ctx.frame.size());
      d.flags = refnic::kDescDone;
      dma_write(d.addr, std::move(ctx.frame), DmaCtx{DmaCtx::Kind::RxData, ctx.index, {}, {}});
      auto enc = d.encode();
      dma_write(at, Bytes(enc.begin(), enc.end()), DmaCtx{DmaCtx::Kind::RxWriteBack, ctx.index, {}, {}});
      raise(refnic::kIrqRx, refnic::kVectorRx);
      ++rx_packets_;
      break;
    }
    case DmaCtx::Kind::RxData:
    case DmaCtx::Kind::RxWriteBack:
    case DmaCtx::Kind::TxWriteBack:
      if (m.data) throw Error(Errc::ProtocolError, fmt::format("{}: DMA write completion carries data", id()));
      break;
  }
}

void Nic::tx_kick() {
  if (!(regs_.ctrl & refnic::kCtrlEnable) || regs_.tx_len == 0) return;
  std::uint64_t tail = regs_.tx_tail % regs_.tx_len;
  while (tx_fetch_ != tail) {
    std::uint64_t ring_idx = tx_fetch_;
    std::uint64_t serial = tx_serial_++;
    tx_inflight_.push_back(TxSlot{serial, ring_idx, refnic::Descriptor{}, std::nullopt, 0});
    dma_read(regs_.tx_base + ring_idx * refnic::kDescBytes, refnic::kDescBytes,
             DmaCtx{DmaCtx::Kind::TxDesc, serial, {}, {}});
    tx_fetch_ = (tx_fetch_ + 1) % regs_.tx_len;
  }
}

void Nic::tx_drain() {
  while (!tx_inflight_.empty()) {
    TxSlot& s = tx_inflight_.front();
    if (!s.payload || s.ready_at > kernel().now()) break;
    std::uint64_t ring_idx = s.ring_idx;
    if (eth_) kernel().send(*eth_, msg::Packet{std::move(*s.payload)});
    refnic::Descriptor wb = s.desc;
    wb.flags |= refnic::kDescDone;
    auto enc = wb.encode();
    dma_write(regs_.tx_base + ring_idx * refnic::kDescBytes, Bytes(enc.begin(), enc.end()),
              DmaCtx{DmaCtx::Kind::TxWriteBack, ring_idx, {}, {}});
    raise(refnic::kIrqTx, refnic::kVectorTx);
    ++tx_packets_;
    tx_inflight_.pop_front();
  }
}

void Nic::on_eth(const WireMessage& m) {
  const auto* pkt = std::get_if<msg::Packet>(&m.body);
  if (pkt == nullptr) {
    log::error("{}: unexpected {} on ethernet", id(), type_name(m.type()));
    return;
  }
  kernel().schedule_in(p_.rx_pipeline_delay_ns, [this, frame = pkt->data]() mutable { rx_start(std::move(frame)); });
}

void Nic::rx_start(Bytes frame) {
  bool ready = (regs_.ctrl & refnic::kCtrlEnable) && regs_.rx_len != 0 && rx_head_ != regs_.rx_tail % regs_.rx_len;
  if (!ready) {
    ++regs_.rx_drop;
    return;
  }
  std::uint64_t idx = rx_head_;
  rx_head_ = (rx_head_ + 1) % regs_.rx_len;
  dma_read(regs_.rx_base + idx * refnic::kDescBytes, refnic::kDescBytes,
           DmaCtx{DmaCtx::Kind::RxDesc, idx, {}, std::move(frame)});
}

void Nic::write_results(std::ostream& out) const {
  out << "tx_packets=" << tx_packets_ << "\n";
  out << "rx_packets=" << rx_packets_ << "\n";
  out << "rx_drop=" << regs_.rx_drop << "\n";
  out << "unmapped_accesses=" << unmapped_ << "\n";
}

}  // namespace cosim
