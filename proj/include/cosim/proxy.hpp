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
 * @file proxy.hpp
 * @brief Splices one channel across a TCP connection.
 *
 * Two proxies sit between the components of a channel:
 *
 *   comp a  <-shm->  proxy (--listen)  <-tcp->  proxy (--connect)  <-shm->  comp b
 *
 * The --listen proxy accepts TCP and connects to the socket of component a;
 * the --connect proxy listens on a socket for component b and dials TCP.
 *
 * TCP stream: "SBPX" u32 version in each direction, then the 32-byte params
 * record in each direction, then frames:
 *
 *   u32 count, count x (u32 n, n bytes)
 *
 * A block is the used prefix of a slot (timestamp, length, payload) followed
 * by the type byte with the owner bit clear. A frame never exceeds 64 KiB.
 * count = 0 marks the end of the stream: the local component has closed.
 */

#pragma once

#include <array>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cosim/proto.hpp"
#include "cosim/shmq.hpp"

namespace cosim {

inline constexpr std::array<char, 4> kProxyMagic = {'S', 'B', 'P', 'X'};
inline constexpr std::uint32_t kProxyVersion = 1;
inline constexpr std::size_t kMaxFrameBytes = 64 * 1024;
inline constexpr std::size_t kProxyParamsBytes = 32;

std::array<std::uint8_t, kProxyParamsBytes> encode_proxy_params(const ChannelParams& p);
ChannelParams decode_proxy_params(std::span<const std::uint8_t> bytes);

/// Accumulates blocks into one frame.
class FrameBuilder {
 public:
  FrameBuilder() { reset(); }
  /// False when the block would push the frame past kMaxFrameBytes.
  bool add(std::span<const std::uint8_t> block);
  std::uint32_t count() const { return count_; }
  /// The finished frame; count patched into the first four bytes.
  std::span<const std::uint8_t> bytes();
  void reset();

 private:
  Bytes buf_;
  std::uint32_t count_ = 0;
};

/// Moves every ready slot of `rx` into `frame`, stopping when the frame is
/// full. Returns the number of blocks added.
std::size_t drain_slots(QueueRegion& rx, FrameBuilder& frame);

/// Writes one block into the next free slot of `tx`. Returns false when no
/// slot is free.
bool try_enqueue_block(QueueRegion& tx, std::span<const std::uint8_t> block);

struct ProxyOptions {
  enum class Mode { Listen, Connect };
  Mode mode = Mode::Listen;
  std::string tcp_addr;   // host:port
  std::string chan_path;  // unix socket of the local side
  ChannelParams params;
  std::chrono::milliseconds timeout{30000};
};

struct ProxyStats {
  std::uint64_t frames_out = 0;
  std::uint64_t frames_in = 0;
  std::uint64_t msgs_out = 0;
  std::uint64_t msgs_in = 0;
  std::uint64_t dropped_in = 0;  // arrived after the local component exited
  std::map<std::uint32_t, std::uint64_t> batch_sizes;  // outbound count -> frames
};

/// Connects both sides, then forwards until both directions have seen the
/// close marker. Throws ParamMismatch, TcpClosed, ConnectFailed, Interrupted.
ProxyStats run_proxy(const ProxyOptions& opts, const std::atomic<bool>* stop = nullptr);

/// Splits "host:port".
std::pair<std::string, std::uint16_t> parse_tcp_addr(const std::string& addr);

}  // namespace cosim
