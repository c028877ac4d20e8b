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
 * @file shmq.hpp
 * @brief Single-producer single-consumer slot queues and the channels built
 *        from them.
 *
 * A queue is an array of fixed-size slots. The last byte of every slot holds
 * the owner bit and the message type; it is the only word both sides touch.
 * The producer keeps its tail index and the consumer its head index in local
 * memory, so the shared region contains nothing but a 64-byte header and the
 * slots themselves.
 *
 * Shared-memory file layout of one channel:
 *
 *   [0, 64)          header: magic "SBRK1\0\0\0", slot_size u32, queue_len u32
 *   [64, 64 + Q)     queue A: listener -> connector
 *   [64 + Q, ...)    queue B: connector -> listener
 *
 * where Q = slot_size * queue_len rounded up to 64 bytes.
 */

#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>

#include "cosim/proto.hpp"

namespace cosim {

/// Spin a few times, then yield the CPU. Blocking paths use this instead of
/// sleeping so a freshly published slot is noticed quickly.
class Backoff {
 public:
  void pause();
  void reset() { spins_ = 0; }

 private:
  unsigned spins_ = 0;
};

class QueueRegion {
 public:
  enum class Role : std::uint8_t { Producer, Consumer };

  QueueRegion() = default;
  QueueRegion(std::span<std::uint8_t> slots, std::uint32_t slot_size, std::uint32_t queue_len, Role role);

  Role role() const { return role_; }
  std::uint32_t slot_size() const { return slot_size_; }
  std::uint32_t queue_len() const { return queue_len_; }
  /// Tail for the producer, head for the consumer.
  std::uint32_t local_index() const { return index_; }

  // Producer side.
  std::span<std::uint8_t> alloc_slot();
  std::optional<std::span<std::uint8_t>> try_alloc_slot();
  /// Throws Error(WouldBlock) when no slot frees up within `timeout`.
  std::span<std::uint8_t> alloc_slot_for(std::chrono::nanoseconds timeout);
  void enqueue_slot(std::span<std::uint8_t> slot, MsgType type);

  // Consumer side.
  std::optional<std::span<const std::uint8_t>> poll_slot();
  void release_slot(std::span<const std::uint8_t> slot);

  // Message-level helpers over the slot primitives.
  bool try_send(const WireMessage& m);
  void send(const WireMessage& m);
  std::optional<WireMessage> try_recv();

 private:
  std::uint8_t* slot_ptr(std::uint32_t i) const { return base_ + std::size_t{i} * slot_size_; }

  std::uint8_t* base_ = nullptr;
  std::uint32_t slot_size_ = 0;
  std::uint32_t queue_len_ = 0;
  std::uint32_t index_ = 0;
  Role role_ = Role::Producer;
};

/// Heap-backed queue with the same slot protocol, for exercising the
/// algorithm across threads without any process machinery.
class HeapQueue {
 public:
  HeapQueue(std::uint32_t slot_size, std::uint32_t queue_len);

  QueueRegion producer() { return {bytes(), slot_size_, queue_len_, QueueRegion::Role::Producer}; }
  QueueRegion consumer() { return {bytes(), slot_size_, queue_len_, QueueRegion::Role::Consumer}; }

 private:
  std::span<std::uint8_t> bytes() { return {mem_.get(), std::size_t{slot_size_} * queue_len_}; }

  struct Free {
    void operator()(std::uint8_t* p) const;
  };
  std::uint32_t slot_size_;
  std::uint32_t queue_len_;
  std::unique_ptr<std::uint8_t, Free> mem_;
};

// Shared-memory channel files ---------------------------------------------

inline constexpr std::array<char, 8> kShmMagic = {'S', 'B', 'R', 'K', '1', '\0', '\0', '\0'};
inline constexpr std::size_t kShmHeaderBytes = 64;

struct ShmLayout {
  std::uint64_t queue_a_offset = 0;
  std::uint64_t queue_b_offset = 0;
  std::uint64_t total_size = 0;

  static ShmLayout for_geometry(std::uint32_t slot_size, std::uint32_t queue_len);
};

/// Fixed binary record the listener sends right after accepting.
struct HandshakeRecord {
  std::uint32_t version = 0;
  ChannelParams params;
  std::string shm_path;
  ShmLayout layout;
};

inline constexpr std::uint32_t kProtocolVersion = 1;
inline constexpr std::size_t kHandshakeBytes = 336;
inline constexpr std::size_t kMaxShmPath = 255;

std::array<std::uint8_t, kHandshakeBytes> encode_handshake(const HandshakeRecord& rec);
/// Throws ConnectFailed on a bad magic and HandshakeVersionMismatch when the
/// version differs from kProtocolVersion.
HandshakeRecord decode_handshake(std::span<const std::uint8_t> bytes);

class UniqueFd {
 public:
  UniqueFd() = default;
  explicit UniqueFd(int fd) : fd_(fd) {}
  UniqueFd(UniqueFd&& o) noexcept : fd_(o.release()) {}
  UniqueFd& operator=(UniqueFd&& o) noexcept;
  UniqueFd(const UniqueFd&) = delete;
  UniqueFd& operator=(const UniqueFd&) = delete;
  ~UniqueFd() { reset(); }

  int get() const { return fd_; }
  explicit operator bool() const { return fd_ >= 0; }
  int release() {
    int fd = fd_;
    fd_ = -1;
    return fd;
  }
  void reset(int fd = -1);

 private:
  int fd_ = -1;
};

class SharedMapping;

/// One side of a bidirectional channel: a consumer queue, a producer queue,
/// the agreed parameters and the socket kept open as a liveness canary.
class ChannelEndpoint {
 public:
  ChannelEndpoint(std::shared_ptr<SharedMapping> map, QueueRegion rx, QueueRegion tx, ChannelParams params,
                  std::string peer_name, UniqueFd sock);
  ChannelEndpoint(ChannelEndpoint&&) noexcept;
  ChannelEndpoint& operator=(ChannelEndpoint&&) noexcept;
  ~ChannelEndpoint();

  QueueRegion& rx() { return rx_; }
  QueueRegion& tx() { return tx_; }
  const ChannelParams& params() const { return params_; }
  const std::string& peer_name() const { return peer_name_; }
  int socket_fd() const { return sock_.get(); }

  /// True once the peer has half-closed or exited.
  bool peer_closed() const;
  /// Tell the peer we will not produce any more messages.
  void shutdown_tx();

 private:
  std::shared_ptr<SharedMapping> map_;
  QueueRegion rx_;
  QueueRegion tx_;
  ChannelParams params_;
  std::string peer_name_;
  UniqueFd sock_;
};

/// Bound, listening named socket. Construction never blocks; accept() does.
class ChannelListener {
 public:
  ChannelListener(std::string socket_path, ChannelParams params);
  ChannelListener(ChannelListener&&) noexcept = default;
  ChannelListener& operator=(ChannelListener&&) noexcept = default;
  ~ChannelListener();

  /// Waits for the connector, creates the shared-memory file and sends the
  /// handshake record. Throws ConnectFailed on timeout.
  ChannelEndpoint accept(std::chrono::milliseconds timeout = std::chrono::hours(1));

  const std::string& path() const { return path_; }

 private:
  std::string path_;
  ChannelParams params_;
  UniqueFd fd_;
};

/// A connected socket still waiting for the listener's handshake record.
class PendingConnect {
 public:
  /// Retries while the socket does not exist yet, up to `timeout`.
  static PendingConnect start(const std::string& socket_path,
                              std::chrono::milliseconds timeout = std::chrono::milliseconds(0));

  ChannelEndpoint finish(std::chrono::milliseconds timeout = std::chrono::hours(1));

 private:
  PendingConnect(std::string path, UniqueFd fd) : path_(std::move(path)), fd_(std::move(fd)) {}
  std::string path_;
  UniqueFd fd_;
};

/// Blocking listen: bind, accept one connector, hand over the channel.
ChannelEndpoint listen(const std::string& socket_path, const ChannelParams& params);
ChannelEndpoint connect(const std::string& socket_path,
                        std::chrono::milliseconds timeout = std::chrono::milliseconds(0));

}  // namespace cosim
