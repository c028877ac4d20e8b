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
 * @file proto.hpp
 * @brief Message catalog of the PCIe and Ethernet component interfaces and
 *        the slot encoding shared by every process.
 *
 * Slot layout (all integers little-endian):
 *
 *   [0, 8)          timestamp (ns of virtual time)
 *   [8, 12)         payload length in bytes
 *   [12, 12 + len)  type-specific payload
 *   [slot - 1]      metadata: bit 7 = owner (1 = consumer), bits 0..6 = type
 *
 * Everything between the payload and the metadata byte is unspecified.
 */

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace cosim {

/// Virtual time in nanoseconds since the simulation epoch.
using SimTime = std::uint64_t;
inline constexpr SimTime kTimeInfinity = std::numeric_limits<SimTime>::max();

using Bytes = std::vector<std::uint8_t>;

/// Per-link configuration agreed by both ends during the handshake.
struct ChannelParams {
  SimTime link_latency_ns = 500;
  SimTime sync_interval_ns = 500;
  std::uint32_t slot_size_bytes = 4096;
  std::uint32_t queue_len_slots = 512;
  bool synchronized = true;

  /// Throws Error(InvalidParams) when an invariant is broken.
  void validate() const;

  bool operator==(const ChannelParams&) const = default;
};

std::string to_string(const ChannelParams& p);

enum class MsgType : std::uint8_t {
  Sync = 0x01,
  // device -> host
  InitDev = 0x10,
  DmaRead = 0x11,
  DmaWrite = 0x12,
  MmioCompl = 0x13,
  Interrupt = 0x14,
  // host -> device
  DmaCompl = 0x20,
  MmioRead = 0x21,
  MmioWrite = 0x22,
  IntStatus = 0x23,
  // ethernet
  Packet = 0x30,
};

std::string_view type_name(MsgType t);
bool is_catalog_type(std::uint8_t raw);

struct BarInfo {
  std::uint64_t size_bytes = 0;
  bool mmio = true;  // false: dummy BAR

  bool operator==(const BarInfo&) const = default;
};

struct BarOffset {
  std::uint8_t bar_index = 0;
  std::uint64_t offset = 0;

  bool operator==(const BarOffset&) const = default;
};

/// Payload of INIT_DEV: what the host needs to expose a PCI function.
struct DeviceIntro {
  std::uint16_t pci_vendor_id = 0;
  std::uint16_t pci_device_id = 0;
  std::uint8_t pci_class = 0;
  std::uint8_t pci_subclass = 0;
  std::uint8_t pci_revision = 0;
  std::vector<BarInfo> bars;  // at most 6
  std::uint16_t num_msi_vectors = 0;
  std::uint16_t num_msix_vectors = 0;
  BarOffset msix_table;
  BarOffset msix_pba;

  bool operator==(const DeviceIntro&) const = default;
};

namespace msg {

struct Sync {
  bool operator==(const Sync&) const = default;
};

struct InitDev {
  DeviceIntro intro;
  bool operator==(const InitDev&) const = default;
};

struct DmaRead {
  std::uint64_t req_id = 0;
  std::uint64_t addr = 0;
  std::uint32_t len = 0;
  bool operator==(const DmaRead&) const = default;
};

struct DmaWrite {
  std::uint64_t req_id = 0;
  std::uint64_t addr = 0;
  Bytes data;
  bool operator==(const DmaWrite&) const = default;
};

struct MmioCompl {
  std::uint64_t req_id = 0;
  std::optional<Bytes> data;
  bool operator==(const MmioCompl&) const = default;
};

enum class IrqKind : std::uint8_t { Legacy = 0, Msi = 1, Msix = 2 };

struct Interrupt {
  IrqKind kind = IrqKind::Msi;
  std::uint32_t vector = 0;  // MSI(-X) vector, or pin level for legacy
  bool operator==(const Interrupt&) const = default;
};

struct DmaCompl {
  std::uint64_t req_id = 0;
  std::optional<Bytes> data;
  bool operator==(const DmaCompl&) const = default;
};

struct MmioRead {
  std::uint64_t req_id = 0;
  std::uint8_t bar = 0;
  std::uint64_t offset = 0;
  std::uint32_t len = 0;
  bool operator==(const MmioRead&) const = default;
};

struct MmioWrite {
  std::uint64_t req_id = 0;
  std::uint8_t bar = 0;
  std::uint64_t offset = 0;
  Bytes data;
  bool operator==(const MmioWrite&) const = default;
};

struct IntStatus {
  bool legacy_enabled = false;
  bool msi_enabled = false;
  bool msix_enabled = false;
  bool operator==(const IntStatus&) const = default;
};

/// An Ethernet frame without CRC.
struct Packet {
  Bytes data;
  bool operator==(const Packet&) const = default;
};

}  // namespace msg

using Payload = std::variant<msg::Sync, msg::InitDev, msg::DmaRead, msg::DmaWrite, msg::MmioCompl,
                             msg::Interrupt, msg::DmaCompl, msg::MmioRead, msg::MmioWrite,
                             msg::IntStatus, msg::Packet>;

MsgType type_of(const Payload& p);

struct WireMessage {
  SimTime timestamp = 0;
  Payload body;

  MsgType type() const { return type_of(body); }
  bool operator==(const WireMessage&) const = default;
};

inline constexpr std::size_t kHeaderBytes = 12;
inline constexpr std::size_t kMetaBytes = 1;
inline constexpr std::uint8_t kOwnerBit = 0x80;
inline constexpr std::uint8_t kTypeMask = 0x7f;

/// Largest payload a slot of this size can carry.
constexpr std::size_t payload_capacity(std::size_t slot_size) {
  return slot_size < kHeaderBytes + kMetaBytes ? 0 : slot_size - kHeaderBytes - kMetaBytes;
}

/// Type-specific payload bytes (what the trace digest covers).
Bytes encode_payload(const Payload& p);
Payload decode_payload(MsgType t, std::span<const std::uint8_t> bytes);

/// Writes header and payload into `slot` but not the metadata byte; the
/// transport publishes that byte separately. Returns the type to publish.
MsgType encode_body(const WireMessage& m, std::span<std::uint8_t> slot);

/// Full slot image with the owner bit clear.
Bytes encode(const WireMessage& m, std::size_t slot_size);

/// Inverse of encode; ignores the owner bit.
WireMessage decode(std::span<const std::uint8_t> block);

// Ethernet helpers --------------------------------------------------------

using MacAddr = std::array<std::uint8_t, 6>;

inline constexpr std::size_t kEthHeaderBytes = 14;
inline constexpr MacAddr kBroadcastMac = {0xff, 0xff, 0xff, 0xff, 0xff, 0xff};
/// Local experimental ethertype used by the built-in workloads.
inline constexpr std::uint16_t kWorkloadEthertype = 0x88b5;

MacAddr parse_mac(std::string_view text);
std::string format_mac(const MacAddr& mac);
/// Twelve hex digits without separators, usable as a key.
std::string mac_key(const MacAddr& mac);

inline bool is_multicast(const MacAddr& mac) { return (mac[0] & 0x01) != 0; }

MacAddr frame_dst(std::span<const std::uint8_t> frame);
MacAddr frame_src(std::span<const std::uint8_t> frame);
std::uint16_t frame_ethertype(std::span<const std::uint8_t> frame);

}  // namespace cosim
