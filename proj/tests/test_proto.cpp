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

#include <random>

#include <gtest/gtest.h>

#include "cosim/error.hpp"
#include "cosim/proto.hpp"

namespace cosim {
namespace {

// Byte-level reference encoder written straight from the slot layout, kept
// separate from the library writer.
struct RefBlock {
  Bytes b;
  explicit RefBlock(std::size_t n) : b(n, 0) {}
  void le(std::size_t at, std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) b[at + i] = static_cast<std::uint8_t>((v >> (8 * i)) & 0xff);
  }
};

template <typename F>
Errc code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return Errc::IoError;
}

TEST(Encode, SyncBlock) {
  Bytes got = encode(WireMessage{500, msg::Sync{}}, 4096);
  RefBlock ref(4096);
  ref.le(0, 500, 8);
  ref.le(8, 0, 4);
  ref.b.back() = 0x01;
  EXPECT_EQ(got, ref.b);
}

TEST(Encode, PacketBlock) {
  Bytes got = encode(WireMessage{1500, msg::Packet{Bytes(60, 0)}}, 4096);
  RefBlock ref(4096);
  ref.le(0, 1500, 8);
  ref.le(8, 62, 4);
  ref.le(12, 60, 2);
  ref.b.back() = 0x30;
  EXPECT_EQ(got, ref.b);
}

TEST(Encode, MmioWriteBlock) {
  Bytes data = {1, 2, 3, 4, 5, 6, 7, 8};
  WireMessage m{2000, msg::MmioWrite{7, 0, 0x18, data}};
  Bytes got = encode(m, 256);
  RefBlock ref(256);
  ref.le(0, 2000, 8);
  // req_id u64, bar u8, offset u64, len u32, data
  ref.le(8, 8 + 1 + 8 + 4 + 8, 4);
  ref.le(12, 7, 8);
  ref.le(20, 0, 1);
  ref.le(21, 0x18, 8);
  ref.le(29, 8, 4);
  for (int i = 0; i < 8; ++i) ref.b[33 + i] = data[i];
  ref.b.back() = 0x22;
  EXPECT_EQ(got, ref.b);
  EXPECT_EQ(decode(got), m);
}

TEST(Encode, OwnerBitNeverSet) {
  for (auto body : {Payload{msg::Sync{}}, Payload{msg::Interrupt{msg::IrqKind::Msi, 1}},
                    Payload{msg::Packet{Bytes(1500, 0xee)}}})
    EXPECT_EQ(encode(WireMessage{1, body}, 4096).back() & kOwnerBit, 0);
}

TEST(Encode, OversizedMessage) {
  // 128-byte slot: capacity 115, packet payload is 2 + len.
  EXPECT_NO_THROW(encode(WireMessage{0, msg::Packet{Bytes(113, 0)}}, 128));
  EXPECT_EQ(code_of([] { encode(WireMessage{0, msg::Packet{Bytes(114, 0)}}, 128); }), Errc::OversizedMessage);
}

TEST(Decode, UnknownType) {
  Bytes b = encode(WireMessage{0, msg::Sync{}}, 128);
  b.back() = 0x7f;
  EXPECT_EQ(code_of([&] { decode(b); }), Errc::UnknownType);
  b.back() = 0xff;  // owner bit is ignored, type still unknown
  EXPECT_EQ(code_of([&] { decode(b); }), Errc::UnknownType);
}

TEST(Decode, DeclaredLengthBeyondSlot) {
  Bytes b = encode(WireMessage{0, msg::Packet{Bytes(60, 0)}}, 128);
  b[8] = 200;
  EXPECT_EQ(code_of([&] { decode(b); }), Errc::TruncatedPayload);
}

TEST(Decode, InconsistentPayloadIsMalformed) {
  Bytes b = encode(WireMessage{0, msg::Packet{Bytes(60, 0)}}, 128);
  b[12] = 61;  // inner length disagrees with outer
  EXPECT_EQ(code_of([&] { decode(b); }), Errc::MalformedPayload);
}

TEST(Decode, IgnoresOwnerBit) {
  WireMessage m{99, msg::IntStatus{false, true, false}};
  Bytes b = encode(m, 128);
  b.back() |= kOwnerBit;
  EXPECT_EQ(decode(b), m);
}

Payload random_payload(std::mt19937_64& rng) {
  auto bytes = [&](std::size_t max) {
    Bytes b(rng() % (max + 1));
    for (auto& x : b) x = static_cast<std::uint8_t>(rng());
    return b;
  };
  auto opt = [&](std::size_t max) -> std::optional<Bytes> {
    if (rng() % 2) return std::nullopt;
    return bytes(max);
  };
  switch (rng() % 11) {
    case 0: return msg::Sync{};
    case 1: {
      DeviceIntro d;
      d.pci_vendor_id = static_cast<std::uint16_t>(rng());
      d.pci_device_id = static_cast<std::uint16_t>(rng());
      d.pci_class = static_cast<std::uint8_t>(rng());
      d.pci_subclass = static_cast<std::uint8_t>(rng());
      d.pci_revision = static_cast<std::uint8_t>(rng());
      d.bars.resize(rng() % 7);
      for (auto& bar : d.bars) bar = BarInfo{rng() % 3 == 0 ? 0 : std::uint64_t{1} << (rng() % 40), (rng() & 1) != 0};
      d.num_msi_vectors = static_cast<std::uint16_t>(rng());
      d.num_msix_vectors = static_cast<std::uint16_t>(rng());
      d.msix_table = BarOffset{static_cast<std::uint8_t>(rng() % 6), rng()};
      d.msix_pba = BarOffset{static_cast<std::uint8_t>(rng() % 6), rng()};
      return msg::InitDev{d};
    }
    case 2: return msg::DmaRead{rng(), rng(), static_cast<std::uint32_t>(rng())};
    case 3: return msg::DmaWrite{rng(), rng(), bytes(2000)};
    case 4: return msg::MmioCompl{rng(), opt(8)};
    case 5: return msg::Interrupt{static_cast<msg::IrqKind>(rng() % 3), static_cast<std::uint32_t>(rng())};
    case 6: return msg::DmaCompl{rng(), opt(2000)};
    case 7: {
      static constexpr std::uint32_t kLens[] = {1, 2, 4, 8};
      return msg::MmioRead{rng(), static_cast<std::uint8_t>(rng() % 6), rng(), kLens[rng() % 4]};
    }
    case 8: {
      Bytes d(std::size_t{1} << (rng() % 4));
      for (auto& x : d) x = static_cast<std::uint8_t>(rng());
      return msg::MmioWrite{rng(), static_cast<std::uint8_t>(rng() % 6), rng(), d};
    }
    case 9: return msg::IntStatus{(rng() & 1) != 0, (rng() & 2) != 0, (rng() & 4) != 0};
    default: {
      Bytes f = bytes(3000);
      if (f.size() < 14) f.resize(14);
      return msg::Packet{f};
    }
  }
}

TEST(RoundTrip, RandomizedCatalog) {
  std::mt19937_64 rng(12345);
  for (int i = 0; i < 20000; ++i) {
    WireMessage m{rng(), random_payload(rng)};
    Bytes a = encode(m, 4096);
    Bytes b = encode(m, 4096);
    ASSERT_EQ(a, b);
    ASSERT_EQ(decode(a), m) << "iteration " << i << " type " << type_name(m.type());
  }
}

TEST(Mac, ParseFormatKey) {
  MacAddr m = parse_mac("02:00:00:0A:bc:ff");
  EXPECT_EQ(format_mac(m), "02:00:00:0a:bc:ff");
  EXPECT_EQ(mac_key(m), "0200000abcff");
  EXPECT_FALSE(is_multicast(m));
  EXPECT_TRUE(is_multicast(kBroadcastMac));
  EXPECT_EQ(code_of([] { parse_mac("02:00:00:0a:bc"); }), Errc::ConfigError);
}

TEST(Params, Validation) {
  ChannelParams p;
  EXPECT_NO_THROW(p.validate());
  p.sync_interval_ns = 600;
  EXPECT_EQ(code_of([&] { p.validate(); }), Errc::InvalidParams);
  p = {};
  p.queue_len_slots = 1;
  EXPECT_EQ(code_of([&] { p.validate(); }), Errc::InvalidParams);
  p = {};
  p.slot_size_bytes = 100;
  EXPECT_EQ(code_of([&] { p.validate(); }), Errc::InvalidParams);
}

}  // namespace
}  // namespace cosim
