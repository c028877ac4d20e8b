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

#include "cosim/proto.hpp"

#include <cstring>

#include <fmt/core.h>

#include "cosim/error.hpp"

namespace cosim {

namespace {

class Writer {
 public:
  explicit Writer(Bytes& out) : out_(out) {}

  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { le(v, 2); }
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void raw(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }

  void opt_bytes(const std::optional<Bytes>& b) {
    u8(b ? 1 : 0);
    u32(b ? static_cast<std::uint32_t>(b->size()) : 0);
    if (b) raw(*b);
  }

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  Bytes& out_;
};

class Reader {
 public:
  Reader(std::span<const std::uint8_t> in, MsgType t) : in_(in), type_(t) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(le(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(le(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::uint64_t u64() { return le(8); }

  Bytes raw(std::size_t n) {
    need(n);
    Bytes b(in_.begin() + pos_, in_.begin() + pos_ + n);
    pos_ += n;
    return b;
  }

  std::optional<Bytes> opt_bytes() {
    std::uint8_t present = u8();
    std::uint32_t n = u32();
    if (present > 1) fail("bad presence flag");
    if (!present) {
      if (n != 0) fail("absent data with nonzero length");
      return std::nullopt;
    }
    return raw(n);
  }

  void finish() const {
    if (pos_ != in_.size()) fail("trailing bytes");
  }

  [[noreturn]] void fail(const char* why) const {
    throw Error(Errc::MalformedPayload, fmt::format("{} payload: {}", type_name(type_), why));
  }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > in_.size()) fail("short payload");
  }
  std::uint64_t le(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= std::uint64_t{in_[pos_ + i]} << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  std::span<const std::uint8_t> in_;
  MsgType type_;
  std::size_t pos_ = 0;
};

bool is_pow2_or_zero(std::uint64_t v) { return (v & (v - 1)) == 0; }

void write_le(std::span<std::uint8_t> dst, std::uint64_t v, int n) {
  for (int i = 0; i < n; ++i) dst[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

std::uint64_t read_le(std::span<const std::uint8_t> src, int n) {
  std::uint64_t v = 0;
  for (int i = 0; i < n; ++i) v |= std::uint64_t{src[i]} << (8 * i);
  return v;
}

}  // namespace

void ChannelParams::validate() const {
  if (link_latency_ns == 0) throw Error(Errc::InvalidParams, "link latency must be > 0");
  if (sync_interval_ns == 0 || sync_interval_ns > link_latency_ns)
    throw Error(Errc::InvalidParams,
                fmt::format("sync interval {} must be in (0, {}]", sync_interval_ns, link_latency_ns));
  if (slot_size_bytes % 64 != 0 || slot_size_bytes < 128)
    throw Error(Errc::InvalidParams,
                fmt::format("slot size {} must be a multiple of 64 and >= 128", slot_size_bytes));
  if (queue_len_slots < 2)
    throw Error(Errc::InvalidParams, fmt::format("queue length {} must be >= 2", queue_len_slots));
}

std::string to_string(const ChannelParams& p) {
  return fmt::format("latency={}ns sync_interval={}ns slot={}B queue={} synchronized={}",
                     p.link_latency_ns, p.sync_interval_ns, p.slot_size_bytes, p.queue_len_slots,
                     p.synchronized);
}

std::string_view type_name(MsgType t) {
  switch (t) {
    case MsgType::Sync: return "SYNC";
    case MsgType::InitDev: return "INIT_DEV";
    case MsgType::DmaRead: return "DMA_READ";
    case MsgType::DmaWrite: return "DMA_WRITE";
    case MsgType::MmioCompl: return "MMIO_COMPL";
    case MsgType::Interrupt: return "INTERRUPT";
    case MsgType::DmaCompl: return "DMA_COMPL";
    case MsgType::MmioRead: return "MMIO_READ";
    case MsgType::MmioWrite: return "MMIO_WRITE";
    case MsgType::IntStatus: return "INT_STATUS";
    case MsgType::Packet: return "PACKET";
  }
  return "UNKNOWN";
}

bool is_catalog_type(std::uint8_t raw) {
  switch (raw) {
    case 0x01:
    case 0x10: case 0x11: case 0x12: case 0x13: case 0x14:
    case 0x20: case 0x21: case 0x22: case 0x23:
    case 0x30:
      return true;
    default:
      return false;
  }
}

MsgType type_of(const Payload& p) {
  struct Visitor {
    MsgType operator()(const msg::Sync&) const { return MsgType::Sync; }
    MsgType operator()(const msg::InitDev&) const { return MsgType::InitDev; }
    MsgType operator()(const msg::DmaRead&) const { return MsgType::DmaRead; }
    MsgType operator()(const msg::DmaWrite&) const { return MsgType::DmaWrite; }
    MsgType operator()(const msg::MmioCompl&) const { return MsgType::MmioCompl; }
    MsgType operator()(const msg::Interrupt&) const { return MsgType::Interrupt; }
    MsgType operator()(const msg::DmaCompl&) const { return MsgType::DmaCompl; }
    MsgType operator()(const msg::MmioRead&) const { return MsgType::MmioRead; }
    MsgType operator()(const msg::MmioWrite&) const { return MsgType::MmioWrite; }
    MsgType operator()(const msg::IntStatus&) const { return MsgType::IntStatus; }
    MsgType operator()(const msg::Packet&) const { return MsgType::Packet; }
  };
  return std::visit(Visitor{}, p);
}

Bytes encode_payload(const Payload& p) {
  Bytes out;
  Writer w(out);
  struct Visitor {
    Writer& w;
    void operator()(const msg::Sync&) const {}
    void operator()(const msg::InitDev& m) const {
      const DeviceIntro& d = m.intro;
      if (d.bars.size() > 6) throw Error(Errc::InvalidParams, "more than 6 BARs");
      w.u16(d.pci_vendor_id);
      w.u16(d.pci_device_id);
      w.u8(d.pci_class);
      w.u8(d.pci_subclass);
      w.u8(d.pci_revision);
      w.u8(static_cast<std::uint8_t>(d.bars.size()));
      for (const BarInfo& b : d.bars) {
        if (!is_pow2_or_zero(b.size_bytes))
          throw Error(Errc::InvalidParams, fmt::format("BAR size {} not a power of two", b.size_bytes));
        w.u64(b.size_bytes);
        w.u8(b.mmio ? 1 : 0);
      }
      w.u16(d.num_msi_vectors);
      w.u16(d.num_msix_vectors);
      w.u8(d.msix_table.bar_index);
      w.u64(d.msix_table.offset);
      w.u8(d.msix_pba.bar_index);
      w.u64(d.msix_pba.offset);
    }
    void operator()(const msg::DmaRead& m) const {
      w.u64(m.req_id);
      w.u64(m.addr);
      w.u32(m.len);
    }
    void operator()(const msg::DmaWrite& m) const {
      w.u64(m.req_id);
      w.u64(m.addr);
      w.u32(static_cast<std::uint32_t>(m.data.size()));
      w.raw(m.data);
    }
    void operator()(const msg::MmioCompl& m) const {
      w.u64(m.req_id);
      w.opt_bytes(m.data);
    }
    void operator()(const msg::Interrupt& m) const {
      w.u8(static_cast<std::uint8_t>(m.kind));
      w.u32(m.vector);
    }
    void operator()(const msg::DmaCompl& m) const {
      w.u64(m.req_id);
      w.opt_bytes(m.data);
    }
    void operator()(const msg::MmioRead& m) const {
      w.u64(m.req_id);
      w.u8(m.bar);
      w.u64(m.offset);
      w.u32(m.len);
    }
    void operator()(const msg::MmioWrite& m) const {
      w.u64(m.req_id);
      w.u8(m.bar);
      w.u64(m.offset);
      w.u32(static_cast<std::uint32_t>(m.data.size()));
      w.raw(m.data);
    }
    void operator()(const msg::IntStatus& m) const {
      w.u8(m.legacy_enabled);
      w.u8(m.msi_enabled);
      w.u8(m.msix_enabled);
    }
    void operator()(const msg::Packet& m) const {
      if (m.data.size() > 0xffff) throw Error(Errc::OversizedMessage, "frame longer than 65535 bytes");
      w.u16(static_cast<std::uint16_t>(m.data.size()));
      w.raw(m.data);
    }
  };
  std::visit(Visitor{w}, p);
  return out;
}

Payload decode_payload(MsgType t, std::span<const std::uint8_t> bytes) {
  Reader r(bytes, t);
  Payload out;
  switch (t) {
    case MsgType::Sync:
      out = msg::Sync{};
      break;
    case MsgType::InitDev: {
      DeviceIntro d;
      d.pci_vendor_id = r.u16();
      d.pci_device_id = r.u16();
      d.pci_class = r.u8();
      d.pci_subclass = r.u8();
      d.pci_revision = r.u8();
      std::uint8_t nbars = r.u8();
      if (nbars > 6) r.fail("more than 6 BARs");
      for (std::uint8_t i = 0; i < nbars; ++i) {
        BarInfo b;
        b.size_bytes = r.u64();
        std::uint8_t flags = r.u8();
        if (flags > 1) r.fail("bad BAR flags");
        if (!is_pow2_or_zero(b.size_bytes)) r.fail("BAR size not a power of two");
        b.mmio = flags == 1;
        d.bars.push_back(b);
      }
      d.num_msi_vectors = r.u16();
      d.num_msix_vectors = r.u16();
      d.msix_table.bar_index = r.u8();
      d.msix_table.offset = r.u64();
      d.msix_pba.bar_index = r.u8();
      d.msix_pba.offset = r.u64();
      out = msg::InitDev{d};
      break;
    }
    case MsgType::DmaRead: {
      msg::DmaRead m;
      m.req_id = r.u64();
      m.addr = r.u64();
      m.len = r.u32();
      out = m;
      break;
    }
    case MsgType::DmaWrite: {
      msg::DmaWrite m;
      m.req_id = r.u64();
      m.addr = r.u64();
      m.data = r.raw(r.u32());
      out = std::move(m);
      break;
    }
    case MsgType::MmioCompl: {
      msg::MmioCompl m;
      m.req_id = r.u64();
      m.data = r.opt_bytes();
      out = std::move(m);
      break;
    }
    case MsgType::Interrupt: {
      msg::Interrupt m;
      std::uint8_t kind = r.u8();
      if (kind > 2) r.fail("bad interrupt kind");
      m.kind = static_cast<msg::IrqKind>(kind);
      m.vector = r.u32();
      out = m;
      break;
    }
    case MsgType::DmaCompl: {
      msg::DmaCompl m;
      m.req_id = r.u64();
      m.data = r.opt_bytes();
      out = std::move(m);
      break;
    }
    case MsgType::MmioRead: {
      msg::MmioRead m;
      m.req_id = r.u64();
      m.bar = r.u8();
      m.offset = r.u64();
      m.len = r.u32();
      out = m;
      break;
    }
    case MsgType::MmioWrite: {
      msg::MmioWrite m;
      m.req_id = r.u64();
      m.bar = r.u8();
      m.offset = r.u64();
      m.data = r.raw(r.u32());
      out = std::move(m);
      break;
    }
    case MsgType::IntStatus: {
      msg::IntStatus m;
      m.legacy_enabled = r.u8() != 0;
      m.msi_enabled = r.u8() != 0;
      m.msix_enabled = r.u8() != 0;
      out = m;
      break;
    }
    case MsgType::Packet: {
      msg::Packet m;
      m.data = r.raw(r.u16());
      out = std::move(m);
      break;
    }
  }
  r.finish();
  return out;
}

MsgType encode_body(const WireMessage& m, std::span<std::uint8_t> slot) {
  Bytes payload = encode_payload(m.body);
  if (payload.size() > payload_capacity(slot.size()))
    throw Error(Errc::OversizedMessage,
                fmt::format("{} payload of {} bytes exceeds slot capacity {}", type_name(m.type()),
                            payload.size(), payload_capacity(slot.size())));
  write_le(slot, m.timestamp, 8);
  write_le(slot.subspan(8), payload.size(), 4);
  if (!payload.empty()) std::memcpy(slot.data() + kHeaderBytes, payload.data(), payload.size());
  return m.type();
}

Bytes encode(const WireMessage& m, std::size_t slot_size) {
  Bytes block(slot_size, 0);
  MsgType t = encode_body(m, block);
  block.back() = static_cast<std::uint8_t>(t) & kTypeMask;
  return block;
}

WireMessage decode(std::span<const std::uint8_t> block) {
  if (block.size() < kHeaderBytes + kMetaBytes)
    throw Error(Errc::TruncatedPayload, fmt::format("block of {} bytes has no header", block.size()));
  std::uint8_t raw_type = block.back() & kTypeMask;
  if (!is_catalog_type(raw_type))
    throw Error(Errc::UnknownType, fmt::format("type byte 0x{:02x}", raw_type));
  std::uint64_t len = read_le(block.subspan(8), 4);
  if (len > payload_capacity(block.size()))
    throw Error(Errc::TruncatedPayload,
                fmt::format("declared length {} exceeds capacity {}", len, payload_capacity(block.size())));
  WireMessage m;
  m.timestamp = read_le(block, 8);
  m.body = decode_payload(static_cast<MsgType>(raw_type), block.subspan(kHeaderBytes, len));
  return m;
}

MacAddr parse_mac(std::string_view text) {
  MacAddr mac{};
  auto hex = [&](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  if (text.size() != 17) throw Error(Errc::ConfigError, fmt::format("bad MAC '{}'", text));
  for (std::size_t i = 0; i < 6; ++i) {
    int hi = hex(text[3 * i]);
    int lo = hex(text[3 * i + 1]);
    if (hi < 0 || lo < 0 || (i < 5 && text[3 * i + 2] != ':'))
      throw Error(Errc::ConfigError, fmt::format("bad MAC '{}'", text));
    mac[i] = static_cast<std::uint8_t>(hi << 4 | lo);
  }
  return mac;
}

std::string format_mac(const MacAddr& m) {
  return fmt::format("{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}", m[0], m[1], m[2], m[3], m[4], m[5]);
}

std::string mac_key(const MacAddr& m) {
  return fmt::format("{:02x}{:02x}{:02x}{:02x}{:02x}{:02x}", m[0], m[1], m[2], m[3], m[4], m[5]);
}

MacAddr frame_dst(std::span<const std::uint8_t> f) {
  MacAddr m{};
  std::memcpy(m.data(), f.data(), 6);
  return m;
}

MacAddr frame_src(std::span<const std::uint8_t> f) {
  MacAddr m{};
  std::memcpy(m.data(), f.data() + 6, 6);
  return m;
}

std::uint16_t frame_ethertype(std::span<const std::uint8_t> f) {
  return static_cast<std::uint16_t>(f[12] << 8 | f[13]);
}

}  // namespace cosim
