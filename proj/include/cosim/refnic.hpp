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
 * @file refnic.hpp
 * @brief Register map and descriptor layout shared by the host driver and the
 * NIC model. docs/refnic.md is the prose version of this file.
 */

#pragma once

#include <array>
#include <cstdint>
#include <span>

namespace cosim::refnic {

inline constexpr std::uint16_t kVendorId = 0x5342;
inline constexpr std::uint16_t kDeviceId = 0x0001;
inline constexpr std::uint8_t kClassNetwork = 0x02;
inline constexpr std::uint64_t kBar0Size = 4096;
inline constexpr std::uint16_t kMsiVectors = 2;

// BAR0, 64-bit little-endian registers.
inline constexpr std::uint64_t kCtrl = 0x00;       // bit0 enable
inline constexpr std::uint64_t kTxBase = 0x08;
inline constexpr std::uint64_t kTxLen = 0x10;      // descriptors
inline constexpr std::uint64_t kTxTail = 0x18;     // doorbell
inline constexpr std::uint64_t kRxBase = 0x20;
inline constexpr std::uint64_t kRxLen = 0x28;
inline constexpr std::uint64_t kRxTail = 0x30;     // buffer-post doorbell
inline constexpr std::uint64_t kIrqStatus = 0x38;  // read-to-ack
inline constexpr std::uint64_t kRxDrop = 0x40;     // read-only counter

inline constexpr std::uint64_t kCtrlEnable = 1;
inline constexpr std::uint64_t kIrqTx = 1;
inline constexpr std::uint64_t kIrqRx = 2;

inline constexpr std::uint32_t kVectorTx = 0;
inline constexpr std::uint32_t kVectorRx = 1;

inline constexpr std::size_t kDescBytes = 16;
inline constexpr std::uint16_t kDescDone = 0x1;
/// Set with DONE when a received frame did not fit the posted buffer.
inline constexpr std::uint16_t kDescError = 0x2;

struct Descriptor {
  std::uint64_t addr = 0;
  std::uint16_t len = 0;
  std::uint16_t flags = 0;
  std::uint32_t reserved = 0;

  std::array<std::uint8_t, kDescBytes> encode() const {
    std::array<std::uint8_t, kDescBytes> b{};
    for (int i = 0; i < 8; ++i) b[i] = static_cast<std::uint8_t>(addr >> (8 * i));
    b[8] = static_cast<std::uint8_t>(len);
    b[9] = static_cast<std::uint8_t>(len >> 8);
    b[10] = static_cast<std::uint8_t>(flags);
    b[11] = static_cast<std::uint8_t>(flags >> 8);
    for (int i = 0; i < 4; ++i) b[12 + i] = static_cast<std::uint8_t>(reserved >> (8 * i));
    return b;
  }

  static Descriptor decode(std::span<const std::uint8_t> b) {
    Descriptor d;
    for (int i = 0; i < 8; ++i) d.addr |= std::uint64_t{b[i]} << (8 * i);
    d.len = static_cast<std::uint16_t>(b[8] | b[9] << 8);
    d.flags = static_cast<std::uint16_t>(b[10] | b[11] << 8);
    for (int i = 0; i < 4; ++i) d.reserved |= std::uint32_t{b[12 + i]} << (8 * i);
    return d;
  }
};

}  // namespace cosim::refnic
