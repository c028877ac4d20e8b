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

#include "cosim/shmq.hpp"

#include <atomic>
#include <cassert>
#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <thread>

#include <fcntl.h>
#include <poll.h>
#include <sys/mman.h>
#include <sys/socket.h>
#include <sys/stat.h>
#include <sys/un.h>
#include <unistd.h>

#include <fmt/core.h>

#include "cosim/error.hpp"
#include "cosim/log.hpp"

namespace cosim {

namespace {

constexpr unsigned kSpinsBeforeYield = 16;

std::atomic_ref<std::uint8_t> meta_byte(std::uint8_t* slot, std::uint32_t slot_size) {
  return std::atomic_ref<std::uint8_t>(slot[slot_size - 1]);
}

std::uint64_t round_up64(std::uint64_t v) { return (v + 63) & ~std::uint64_t{63}; }

void put_le(std::uint8_t* p, std::uint64_t v, int n) {
  for (int i = 0; i < n; ++i) p[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

std::uint64_t get_le(const std::uint8_t* p, int n) {
  std::uint64_t v = 0;
  for (int i = 0; i < n; ++i) v |= std::uint64_t{p[i]} << (8 * i);
  return v;
}

constexpr std::array<char, 8> kHandshakeMagic = {'S', 'B', 'R', 'K', 'H', 'S', 'K', '1'};

sockaddr_un make_addr(const std::string& path) {
  sockaddr_un addr{};
  addr.sun_family = AF_UNIX;
  if (path.size() >= sizeof(addr.sun_path))
    throw Error(Errc::ConnectFailed, fmt::format("socket path too long: {}", path));
  std::memcpy(addr.sun_path, path.c_str(), path.size() + 1);
  return addr;
}

bool wait_readable(int fd, std::chrono::milliseconds timeout) {
  pollfd p{fd, POLLIN, 0};
  auto ms = timeout.count() > 0x7fffffff ? 0x7fffffff : static_cast<int>(timeout.count());
  int r;
  do {
    r = ::poll(&p, 1, ms);
  } while (r < 0 && errno == EINTR);
  return r > 0;
}

void read_exact(int fd, std::uint8_t* buf, std::size_t n, std::chrono::milliseconds timeout) {
  std::size_t got = 0;
  while (got < n) {
    if (!wait_readable(fd, timeout)) throw Error(Errc::ConnectFailed, "timed out waiting for handshake");
    ssize_t r = ::recv(fd, buf + got, n - got, 0);
    if (r < 0 && errno == EINTR) continue;
    if (r <= 0) throw Error(Errc::ConnectFailed, "peer closed during handshake");
    got += static_cast<std::size_t>(r);
  }
}

void write_exact(int fd, const std::uint8_t* buf, std::size_t n) {
  std::size_t put = 0;
  while (put < n) {
    ssize_t r = ::send(fd, buf + put, n - put, MSG_NOSIGNAL);
    if (r < 0 && errno == EINTR) continue;
    if (r <= 0) throw Error(Errc::ConnectFailed, fmt::format("handshake send failed: {}", std::strerror(errno)));
    put += static_cast<std::size_t>(r);
  }
}

}  // namespace

// Backoff ------------------------------------------------------------------

void Backoff::pause() {
  if (spins_ < kSpinsBeforeYield) {
    ++spins_;
#if defined(__x86_64__) || defined(__i386__)
    __builtin_ia32_pause();
#endif
    return;
  }
  std::this_thread::yield();
}

// QueueRegion --------------------------------------------------------------

QueueRegion::QueueRegion(std::span<std::uint8_t> slots, std::uint32_t slot_size, std::uint32_t queue_len,
                         Role role)
    : base_(slots.data()), slot_size_(slot_size), queue_len_(queue_len), role_(role) {
  if (slots.size() < std::size_t{slot_size} * queue_len)
    throw Error(Errc::InvalidParams, "queue backing smaller than slot_size * queue_len");
}

std::optional<std::span<std::uint8_t>> QueueRegion::try_alloc_slot() {
  assert(role_ == Role::Producer);
  std::uint8_t* slot = slot_ptr(index_);
  if (meta_byte(slot, slot_size_).load(std::memory_order_acquire) & kOwnerBit) return std::nullopt;
  return std::span<std::uint8_t>(slot, slot_size_);
}

std::span<std::uint8_t> QueueRegion::alloc_slot() {
  Backoff backoff;
  for (;;) {
    if (auto s = try_alloc_slot()) return *s;
    backoff.pause();
  }
}

std::span<std::uint8_t> QueueRegion::alloc_slot_for(std::chrono::nanoseconds timeout) {
  auto deadline = std::chrono::steady_clock::now() + timeout;
  Backoff backoff;
  for (;;) {
    if (auto s = try_alloc_slot()) return *s;
    if (std::chrono::steady_clock::now() >= deadline) throw Error(Errc::WouldBlock, "queue full");
    backoff.pause();
  }
}

void QueueRegion::enqueue_slot(std::span<std::uint8_t> slot, MsgType type) {
  assert(role_ == Role::Producer);
  assert(slot.data() == slot_ptr(index_));
  auto meta = meta_byte(slot.data(), slot_size_);
  assert((meta.load(std::memory_order_relaxed) & kOwnerBit) == 0);
  meta.store(static_cast<std::uint8_t>((static_cast<std::uint8_t>(type) & kTypeMask) | kOwnerBit),
             std::memory_order_release);
  index_ = (index_ + 1) % queue_len_;
}

std::optional<std::span<const std::uint8_t>> QueueRegion::poll_slot() {
  assert(role_ == Role::Consumer);
  std::uint8_t* slot = slot_ptr(index_);
  if (!(meta_byte(slot, slot_size_).load(std::memory_order_acquire) & kOwnerBit)) return std::nullopt;
  index_ = (index_ + 1) % queue_len_;
  return std::span<const std::uint8_t>(slot, slot_size_);
}

void QueueRegion::release_slot(std::span<const std::uint8_t> slot) {
  assert(role_ == Role::Consumer);
  auto* p = const_cast<std::uint8_t*>(slot.data());
  auto meta = meta_byte(p, slot_size_);
  std::uint8_t cur = meta.load(std::memory_order_relaxed);
  assert(cur & kOwnerBit);
  meta.store(static_cast<std::uint8_t>(cur & kTypeMask), std::memory_order_release);
}

bool QueueRegion::try_send(const WireMessage& m) {
  auto slot = try_alloc_slot();
  if (!slot) return false;
  MsgType t = encode_body(m, *slot);
  enqueue_slot(*slot, t);
  return true;
}

void QueueRegion::send(const WireMessage& m) {
  auto slot = alloc_slot();
  MsgType t = encode_body(m, slot);
  enqueue_slot(slot, t);
}

std::optional<WireMessage> QueueRegion::try_recv() {
  auto slot = poll_slot();
  if (!slot) return std::nullopt;
  // Decode before release: after release the producer may overwrite the slot.
  // The owner bit is masked off by decode.
  WireMessage m;
  try {
    m = decode(*slot);
  } catch (...) {
    release_slot(*slot);
    throw;
  }
  release_slot(*slot);
  return m;
}

// HeapQueue ----------------------------------------------------------------

void HeapQueue::Free::operator()(std::uint8_t* p) const { std::free(p); }

HeapQueue::HeapQueue(std::uint32_t slot_size, std::uint32_t queue_len)
    : slot_size_(slot_size), queue_len_(queue_len) {
  ChannelParams probe;
  probe.slot_size_bytes = slot_size;
  probe.queue_len_slots = queue_len;
  probe.validate();
  std::size_t bytes = round_up64(std::uint64_t{slot_size} * queue_len);
  auto* p = static_cast<std::uint8_t*>(std::aligned_alloc(64, bytes));
  if (p == nullptr) throw std::bad_alloc();
  std::memset(p, 0, bytes);
  mem_.reset(p);
}

// Layout and handshake -------------------------------------------------------

ShmLayout ShmLayout::for_geometry(std::uint32_t slot_size, std::uint32_t queue_len) {
  std::uint64_t q = round_up64(std::uint64_t{slot_size} * queue_len);
  ShmLayout l;
  l.queue_a_offset = kShmHeaderBytes;
  l.queue_b_offset = kShmHeaderBytes + q;
  l.total_size = kShmHeaderBytes + 2 * q;
  return l;
}

// Record layout (little-endian):
//   0 magic[8] | 8 version u32 | 12 slot_size u32 | 16 queue_len u32 |
//   20 synchronized u32 | 24 link_latency u64 | 32 sync_interval u64 |
//   40 queue_a u64 | 48 queue_b u64 | 56 shm_size u64 | 64 path_len u32 |
//   68 path[256] | 324 zero padding
std::array<std::uint8_t, kHandshakeBytes> encode_handshake(const HandshakeRecord& rec) {
  if (rec.shm_path.size() > kMaxShmPath)
    throw Error(Errc::ShmCreateFailed, fmt::format("shm path too long: {}", rec.shm_path));
  std::array<std::uint8_t, kHandshakeBytes> b{};
  std::memcpy(b.data(), kHandshakeMagic.data(), 8);
  put_le(&b[8], rec.version, 4);
  put_le(&b[12], rec.params.slot_size_bytes, 4);
  put_le(&b[16], rec.params.queue_len_slots, 4);
  put_le(&b[20], rec.params.synchronized ? 1 : 0, 4);
  put_le(&b[24], rec.params.link_latency_ns, 8);
  put_le(&b[32], rec.params.sync_interval_ns, 8);
  put_le(&b[40], rec.layout.queue_a_offset, 8);
  put_le(&b[48], rec.layout.queue_b_offset, 8);
  put_le(&b[56], rec.layout.total_size, 8);
  put_le(&b[64], rec.shm_path.size(), 4);
  std::memcpy(&b[68], rec.shm_path.data(), rec.shm_path.size());
  return b;
}

HandshakeRecord decode_handshake(std::span<const std::uint8_t> b) {
  if (b.size() != kHandshakeBytes || std::memcmp(b.data(), kHandshakeMagic.data(), 8) != 0)
    throw Error(Errc::ConnectFailed, "bad handshake magic");
  HandshakeRecord rec;
  rec.version = static_cast<std::uint32_t>(get_le(&b[8], 4));
  if (rec.version != kProtocolVersion)
    throw Error(Errc::HandshakeVersionMismatch,
                fmt::format("peer speaks version {}, expected {}", rec.version, kProtocolVersion));
  rec.params.slot_size_bytes = static_cast<std::uint32_t>(get_le(&b[12], 4));
  rec.params.queue_len_slots = static_cast<std::uint32_t>(get_le(&b[16], 4));
  rec.params.synchronized = get_le(&b[20], 4) != 0;
  rec.params.link_latency_ns = get_le(&b[24], 8);
  rec.params.sync_interval_ns = get_le(&b[32], 8);
  rec.layout.queue_a_offset = get_le(&b[40], 8);
  rec.layout.queue_b_offset = get_le(&b[48], 8);
  rec.layout.total_size = get_le(&b[56], 8);
  auto n = static_cast<std::size_t>(get_le(&b[64], 4));
  if (n > kMaxShmPath) throw Error(Errc::ConnectFailed, "bad shm path length");
  rec.shm_path.assign(reinterpret_cast<const char*>(&b[68]), n);
  return rec;
}

// File descriptors and mappings -----------------------------------------------

UniqueFd& UniqueFd::operator=(UniqueFd&& o) noexcept {
  if (this != &o) reset(o.release());
  return *this;
}

void UniqueFd::reset(int fd) {
  if (fd_ >= 0) ::close(fd_);
  fd_ = fd;
}

class SharedMapping {
 public:
  static std::shared_ptr<SharedMapping> create(const std::string& path, std::size_t size) {
    UniqueFd fd(::open(path.c_str(), O_RDWR | O_CREAT | O_EXCL, 0600));
    if (!fd)
      throw Error(Errc::ShmCreateFailed, fmt::format("create {}: {}", path, std::strerror(errno)));
    if (::ftruncate(fd.get(), static_cast<off_t>(size)) != 0)
      throw Error(Errc::ShmCreateFailed, fmt::format("size {}: {}", path, std::strerror(errno)));
    return map(fd.get(), size, path, Errc::ShmCreateFailed);
  }

  static std::shared_ptr<SharedMapping> open(const std::string& path, std::size_t size) {
    UniqueFd fd(::open(path.c_str(), O_RDWR));
    if (!fd) throw Error(Errc::MapFailed, fmt::format("open {}: {}", path, std::strerror(errno)));
    struct stat st {};
    if (::fstat(fd.get(), &st) != 0 || static_cast<std::size_t>(st.st_size) < size)
      throw Error(Errc::MapFailed, fmt::format("{} smaller than advertised {}", path, size));
    return map(fd.get(), size, path, Errc::MapFailed);
  }

  ~SharedMapping() { ::munmap(base_, size_); }

  std::span<std::uint8_t> bytes() { return {base_, size_}; }

 private:
  SharedMapping(std::uint8_t* base, std::size_t size) : base_(base), size_(size) {}

  static std::shared_ptr<SharedMapping> map(int fd, std::size_t size, const std::string& path, Errc err) {
    void* p = ::mmap(nullptr, size, PROT_READ | PROT_WRITE, MAP_SHARED, fd, 0);
    if (p == MAP_FAILED) throw Error(err, fmt::format("mmap {}: {}", path, std::strerror(errno)));
    return std::shared_ptr<SharedMapping>(new SharedMapping(static_cast<std::uint8_t*>(p), size));
  }

  std::uint8_t* base_;
  std::size_t size_;
};

// ChannelEndpoint --------------------------------------------------------------

ChannelEndpoint::ChannelEndpoint(std::shared_ptr<SharedMapping> map, QueueRegion rx, QueueRegion tx,
                                 ChannelParams params, std::string peer_name, UniqueFd sock)
    : map_(std::move(map)),
      rx_(rx),
      tx_(tx),
      params_(params),
      peer_name_(std::move(peer_name)),
      sock_(std::move(sock)) {}

ChannelEndpoint::ChannelEndpoint(ChannelEndpoint&&) noexcept = default;
ChannelEndpoint& ChannelEndpoint::operator=(ChannelEndpoint&&) noexcept = default;
ChannelEndpoint::~ChannelEndpoint() = default;

bool ChannelEndpoint::peer_closed() const {
  if (!sock_) return true;
  std::uint8_t b;
  ssize_t r = ::recv(sock_.get(), &b, 1, MSG_PEEK | MSG_DONTWAIT);
  if (r == 0) return true;
  if (r < 0) return errno != EAGAIN && errno != EWOULDBLOCK && errno != EINTR;
  return false;
}

void ChannelEndpoint::shutdown_tx() {
  if (sock_) ::shutdown(sock_.get(), SHUT_WR);
}

// Listener / connector ----------------------------------------------------------

ChannelListener::ChannelListener(std::string socket_path, ChannelParams params)
    : path_(std::move(socket_path)), params_(params) {
  params_.validate();
  sockaddr_un addr = make_addr(path_);
  UniqueFd fd(::socket(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0));
  if (!fd) throw Error(Errc::ConnectFailed, fmt::format("socket: {}", std::strerror(errno)));
  if (::bind(fd.get(), reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    if (errno == EADDRINUSE) throw Error(Errc::AddressInUse, path_);
    throw Error(Errc::ConnectFailed, fmt::format("bind {}: {}", path_, std::strerror(errno)));
  }
  if (::listen(fd.get(), 4) != 0)
    throw Error(Errc::ConnectFailed, fmt::format("listen {}: {}", path_, std::strerror(errno)));
  fd_ = std::move(fd);
}

ChannelListener::~ChannelListener() {
  if (fd_) ::unlink(path_.c_str());
}

ChannelEndpoint ChannelListener::accept(std::chrono::milliseconds timeout) {
  if (!wait_readable(fd_.get(), timeout))
    throw Error(Errc::ConnectFailed, fmt::format("no connector on {} within {} ms", path_, timeout.count()));
  UniqueFd conn(::accept4(fd_.get(), nullptr, nullptr, SOCK_CLOEXEC));
  if (!conn) throw Error(Errc::ConnectFailed, fmt::format("accept {}: {}", path_, std::strerror(errno)));

  HandshakeRecord rec;
  rec.version = kProtocolVersion;
  rec.params = params_;
  rec.shm_path = path_ + ".shm";
  rec.layout = ShmLayout::for_geometry(params_.slot_size_bytes, params_.queue_len_slots);

  auto map = SharedMapping::create(rec.shm_path, rec.layout.total_size);
  auto bytes = map->bytes();
  std::memcpy(bytes.data(), kShmMagic.data(), kShmMagic.size());
  put_le(bytes.data() + 8, params_.slot_size_bytes, 4);
  put_le(bytes.data() + 12, params_.queue_len_slots, 4);

  std::size_t qbytes = std::size_t{params_.slot_size_bytes} * params_.queue_len_slots;
  QueueRegion tx(bytes.subspan(rec.layout.queue_a_offset, qbytes), params_.slot_size_bytes,
                 params_.queue_len_slots, QueueRegion::Role::Producer);
  QueueRegion rx(bytes.subspan(rec.layout.queue_b_offset, qbytes), params_.slot_size_bytes,
                 params_.queue_len_slots, QueueRegion::Role::Consumer);

  auto wire = encode_handshake(rec);
  write_exact(conn.get(), wire.data(), wire.size());
  log::debug("channel {} accepted ({})", path_, to_string(params_));
  return ChannelEndpoint(std::move(map), rx, tx, params_, path_, std::move(conn));
}

PendingConnect PendingConnect::start(const std::string& socket_path, std::chrono::milliseconds timeout) {
  sockaddr_un addr = make_addr(socket_path);
  auto deadline = std::chrono::steady_clock::now() + timeout;
  for (;;) {
    UniqueFd fd(::socket(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0));
    if (!fd) throw Error(Errc::ConnectFailed, fmt::format("socket: {}", std::strerror(errno)));
    if (::connect(fd.get(), reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) == 0)
      return PendingConnect(socket_path, std::move(fd));
    int err = errno;
    bool retryable = err == ENOENT || err == ECONNREFUSED || err == EAGAIN;
    if (!retryable || std::chrono::steady_clock::now() >= deadline)
      throw Error(Errc::ConnectFailed, fmt::format("connect {}: {}", socket_path, std::strerror(err)));
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
  }
}

ChannelEndpoint PendingConnect::finish(std::chrono::milliseconds timeout) {
  std::array<std::uint8_t, kHandshakeBytes> wire{};
  read_exact(fd_.get(), wire.data(), wire.size(), timeout);
  HandshakeRecord rec = decode_handshake(wire);
  rec.params.validate();

  ShmLayout expect = ShmLayout::for_geometry(rec.params.slot_size_bytes, rec.params.queue_len_slots);
  if (rec.layout.queue_a_offset != expect.queue_a_offset || rec.layout.queue_b_offset != expect.queue_b_offset ||
      rec.layout.total_size != expect.total_size)
    throw Error(Errc::MapFailed, "handshake layout does not match queue geometry");

  auto map = SharedMapping::open(rec.shm_path, rec.layout.total_size);
  auto bytes = map->bytes();
  if (std::memcmp(bytes.data(), kShmMagic.data(), kShmMagic.size()) != 0 ||
      get_le(bytes.data() + 8, 4) != rec.params.slot_size_bytes ||
      get_le(bytes.data() + 12, 4) != rec.params.queue_len_slots)
    throw Error(Errc::MapFailed, fmt::format("{} header does not match handshake", rec.shm_path));

  std::size_t qbytes = std::size_t{rec.params.slot_size_bytes} * rec.params.queue_len_slots;
  QueueRegion rx(bytes.subspan(rec.layout.queue_a_offset, qbytes), rec.params.slot_size_bytes,
                 rec.params.queue_len_slots, QueueRegion::Role::Consumer);
  QueueRegion tx(bytes.subspan(rec.layout.queue_b_offset, qbytes), rec.params.slot_size_bytes,
                 rec.params.queue_len_slots, QueueRegion::Role::Producer);
  log::debug("channel {} connected ({})", path_, to_string(rec.params));
  return ChannelEndpoint(std::move(map), rx, tx, rec.params, path_, std::move(fd_));
}

ChannelEndpoint listen(const std::string& socket_path, const ChannelParams& params) {
  ChannelListener l(socket_path, params);
  return l.accept();
}

ChannelEndpoint connect(const std::string& socket_path, std::chrono::milliseconds timeout) {
  return PendingConnect::start(socket_path, timeout).finish();
}

}  // namespace cosim
