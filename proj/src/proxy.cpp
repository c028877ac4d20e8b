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

#include "cosim/proxy.hpp"

#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <cstring>
#include <exception>
#include <mutex>
#include <thread>

#include <fmt/core.h>

#include "cosim/error.hpp"
#include "cosim/log.hpp"

namespace cosim {

namespace {

constexpr std::size_t kBlockHeader = 12;  // timestamp + length, as in a slot

void put_u32(std::uint8_t* p, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) p[i] = static_cast<std::uint8_t>(v >> (8 * i));
}
void put_u64(std::uint8_t* p, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) p[i] = static_cast<std::uint8_t>(v >> (8 * i));
}
std::uint32_t get_u32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t{p[i]} << (8 * i);
  return v;
}
std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t{p[i]} << (8 * i);
  return v;
}

bool wait_fd(int fd, short events, std::chrono::milliseconds timeout) {
  pollfd p{fd, events, 0};
  for (;;) {
    int r = ::poll(&p, 1, static_cast<int>(timeout.count()));
    if (r > 0) return true;
    if (r == 0) return false;
    if (errno != EINTR) throw Error(Errc::TcpClosed, fmt::format("poll: {}", std::strerror(errno)));
  }
}

void send_all(int fd, std::span<const std::uint8_t> data) {
  while (!data.empty()) {
    ssize_t n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(Errc::TcpClosed, fmt::format("send: {}", std::strerror(errno)));
    }
    data = data.subspan(static_cast<std::size_t>(n));
  }
}

/// Buffered exact reads from a stream socket.
class Reader {
 public:
  explicit Reader(int fd) : fd_(fd), buf_(kMaxFrameBytes) {}

  /// Returns false on EOF before the first byte; EOF mid-read throws.
  bool read(std::uint8_t* out, std::size_t n) {
    std::size_t got = 0;
    while (got < n) {
      if (pos_ == len_) {
        ssize_t r = ::recv(fd_, buf_.data(), buf_.size(), 0);
        if (r < 0 && errno == EINTR) continue;
        if (r < 0) throw Error(Errc::TcpClosed, fmt::format("recv: {}", std::strerror(errno)));
        if (r == 0) {
          if (got == 0) return false;
          throw Error(Errc::TcpClosed, "connection closed inside a frame");
        }
        pos_ = 0;
        len_ = static_cast<std::size_t>(r);
      }
      std::size_t k = std::min(n - got, len_ - pos_);
      std::memcpy(out + got, buf_.data() + pos_, k);
      pos_ += k;
      got += k;
    }
    return true;
  }

  void read_or_throw(std::uint8_t* out, std::size_t n, const char* what) {
    if (!read(out, n)) throw Error(Errc::TcpClosed, fmt::format("connection closed before {}", what));
  }

 private:
  int fd_;
  Bytes buf_;
  std::size_t pos_ = 0;
  std::size_t len_ = 0;
};

sockaddr_storage resolve(const std::string& addr, socklen_t& len) {
  auto [host, port] = parse_tcp_addr(addr);
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  int rc = ::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res);
  if (rc != 0 || res == nullptr)
    throw Error(Errc::ConnectFailed, fmt::format("resolve {}: {}", addr, ::gai_strerror(rc)));
  sockaddr_storage ss{};
  std::memcpy(&ss, res->ai_addr, res->ai_addrlen);
  len = res->ai_addrlen;
  ::freeaddrinfo(res);
  return ss;
}

void tune(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

UniqueFd tcp_listen(const std::string& addr) {
  socklen_t len = 0;
  sockaddr_storage ss = resolve(addr, len);
  UniqueFd fd(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
  if (!fd) throw Error(Errc::ConnectFailed, fmt::format("socket: {}", std::strerror(errno)));
  int one = 1;
  ::setsockopt(fd.get(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  if (::bind(fd.get(), reinterpret_cast<sockaddr*>(&ss), len) != 0) {
    if (errno == EADDRINUSE) throw Error(Errc::AddressInUse, addr);
    throw Error(Errc::ConnectFailed, fmt::format("bind {}: {}", addr, std::strerror(errno)));
  }
  if (::listen(fd.get(), 1) != 0) throw Error(Errc::ConnectFailed, fmt::format("listen {}: {}", addr, std::strerror(errno)));
  return fd;
}

UniqueFd tcp_accept(const UniqueFd& listener, std::chrono::milliseconds timeout) {
  if (!wait_fd(listener.get(), POLLIN, timeout))
    throw Error(Errc::ConnectFailed, fmt::format("no peer proxy within {} ms", timeout.count()));
  UniqueFd fd(::accept4(listener.get(), nullptr, nullptr, SOCK_CLOEXEC));
  if (!fd) throw Error(Errc::ConnectFailed, fmt::format("accept: {}", std::strerror(errno)));
  tune(fd.get());
  return fd;
}

UniqueFd tcp_connect(const std::string& addr, std::chrono::milliseconds timeout) {
  socklen_t len = 0;
  sockaddr_storage ss = resolve(addr, len);
  auto deadline = std::chrono::steady_clock::now() + timeout;
  for (;;) {
    UniqueFd fd(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
    if (!fd) throw Error(Errc::ConnectFailed, fmt::format("socket: {}", std::strerror(errno)));
    if (::connect(fd.get(), reinterpret_cast<sockaddr*>(&ss), len) == 0) {
      tune(fd.get());
      return fd;
    }
    int err = errno;
    if (err != ECONNREFUSED || std::chrono::steady_clock::now() >= deadline)
      throw Error(Errc::ConnectFailed, fmt::format("connect {}: {}", addr, std::strerror(err)));
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
}

/// Preamble and params in both directions. Each side writes before reading;
/// the records are far smaller than any socket buffer.
void exchange(int fd, const ChannelParams& mine, std::chrono::milliseconds timeout) {
  std::array<std::uint8_t, 8 + kProxyParamsBytes> out{};
  std::memcpy(out.data(), kProxyMagic.data(), 4);
  put_u32(out.data() + 4, kProxyVersion);
  auto p = encode_proxy_params(mine);
  std::memcpy(out.data() + 8, p.data(), p.size());
  send_all(fd, out);

  std::array<std::uint8_t, 8 + kProxyParamsBytes> in{};
  std::size_t got = 0;
  while (got < in.size()) {
    if (!wait_fd(fd, POLLIN, timeout)) throw Error(Errc::ConnectFailed, "peer proxy sent no preamble");
    ssize_t n = ::recv(fd, in.data() + got, in.size() - got, 0);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) throw Error(Errc::TcpClosed, "peer proxy closed during the preamble");
    got += static_cast<std::size_t>(n);
  }
  if (std::memcmp(in.data(), kProxyMagic.data(), 4) != 0) throw Error(Errc::ConnectFailed, "bad proxy preamble");
  if (get_u32(in.data() + 4) != kProxyVersion)
    throw Error(Errc::HandshakeVersionMismatch,
                fmt::format("peer proxy speaks version {}, we speak {}", get_u32(in.data() + 4), kProxyVersion));
  ChannelParams theirs = decode_proxy_params(std::span(in).subspan(8));
  if (theirs != mine)
    throw Error(Errc::ParamMismatch,
                fmt::format("local side uses {}, remote side uses {}", to_string(mine), to_string(theirs)));
}

}  // namespace

std::array<std::uint8_t, kProxyParamsBytes> encode_proxy_params(const ChannelParams& p) {
  std::array<std::uint8_t, kProxyParamsBytes> out{};
  put_u64(out.data(), p.link_latency_ns);
  put_u64(out.data() + 8, p.sync_interval_ns);
  put_u32(out.data() + 16, p.slot_size_bytes);
  put_u32(out.data() + 20, p.queue_len_slots);
  out[24] = p.synchronized ? 1 : 0;
  return out;
}

ChannelParams decode_proxy_params(std::span<const std::uint8_t> b) {
  if (b.size() < kProxyParamsBytes) throw Error(Errc::MalformedPayload, "short proxy params record");
  ChannelParams p;
  p.link_latency_ns = get_u64(b.data());
  p.sync_interval_ns = get_u64(b.data() + 8);
  p.slot_size_bytes = get_u32(b.data() + 16);
  p.queue_len_slots = get_u32(b.data() + 20);
  p.synchronized = b[24] != 0;
  return p;
}

std::pair<std::string, std::uint16_t> parse_tcp_addr(const std::string& addr) {
  auto colon = addr.rfind(':');
  if (colon == std::string::npos || colon == 0)
    throw Error(Errc::InvalidParams, fmt::format("'{}' is not host:port", addr));
  unsigned port = 0;
  const char* b = addr.data() + colon + 1;
  const char* e = addr.data() + addr.size();
  auto [p, ec] = std::from_chars(b, e, port);
  if (ec != std::errc() || p != e || port == 0 || port > 65535)
    throw Error(Errc::InvalidParams, fmt::format("'{}' has no valid port", addr));
  return {addr.substr(0, colon), static_cast<std::uint16_t>(port)};
}

// Frames --------------------------------------------------------------------------

void FrameBuilder::reset() {
  buf_.assign(4, 0);
  count_ = 0;
}

bool FrameBuilder::add(std::span<const std::uint8_t> block) {
  if (buf_.size() + 4 + block.size() > kMaxFrameBytes) return false;
  std::size_t at = buf_.size();
  buf_.resize(at + 4 + block.size());
  put_u32(buf_.data() + at, static_cast<std::uint32_t>(block.size()));
  std::memcpy(buf_.data() + at + 4, block.data(), block.size());
  ++count_;
  return true;
}

std::span<const std::uint8_t> FrameBuilder::bytes() {
  put_u32(buf_.data(), count_);
  return buf_;
}

std::size_t drain_slots(QueueRegion& rx, FrameBuilder& frame) {
  const std::size_t slot_size = rx.slot_size();
  std::size_t added = 0;
  Bytes block;
  for (;;) {
    // Stop before polling if even a full slot could not fit.
    if (frame.count() > 0 && frame.bytes().size() + 4 + slot_size > kMaxFrameBytes) break;
    auto slot = rx.poll_slot();
    if (!slot) break;
    std::uint32_t len = get_u32(slot->data() + 8);
    if (kBlockHeader + len > slot_size - 1)
      throw Error(Errc::TruncatedPayload, fmt::format("slot declares {} payload bytes", len));
    block.assign(slot->begin(), slot->begin() + kBlockHeader + len);
    block.push_back(static_cast<std::uint8_t>((*slot)[slot_size - 1] & 0x7f));
    rx.release_slot(*slot);
    if (!frame.add(block)) throw Error(Errc::OversizedMessage, "slot does not fit in a proxy frame");
    ++added;
  }
  return added;
}

bool try_enqueue_block(QueueRegion& tx, std::span<const std::uint8_t> block) {
  if (block.size() < kBlockHeader + 1 || block.size() > tx.slot_size())
    throw Error(Errc::MalformedPayload, fmt::format("proxy block of {} bytes", block.size()));
  if (get_u32(block.data() + 8) != block.size() - kBlockHeader - 1)
    throw Error(Errc::MalformedPayload, "proxy block length field disagrees with its size");
  auto slot = tx.try_alloc_slot();
  if (!slot) return false;
  std::memcpy(slot->data(), block.data(), block.size() - 1);
  tx.enqueue_slot(*slot, static_cast<MsgType>(block.back() & 0x7f));
  return true;
}

// Forwarding ----------------------------------------------------------------------

ProxyStats run_proxy(const ProxyOptions& opts, const std::atomic<bool>* stop) {
  opts.params.validate();
  if (opts.params.slot_size_bytes + 8 > kMaxFrameBytes)
    throw Error(Errc::InvalidParams, "slot size too large to proxy");

  std::optional<ChannelEndpoint> ep;
  UniqueFd tcp;
  if (opts.mode == ProxyOptions::Mode::Listen) {
    UniqueFd listener = tcp_listen(opts.tcp_addr);
    ep = PendingConnect::start(opts.chan_path, opts.timeout).finish(opts.timeout);
    if (ep->params() != opts.params)
      throw Error(Errc::ParamMismatch, fmt::format("component offers {}, proxy configured with {}",
                                                   to_string(ep->params()), to_string(opts.params)));
    tcp = tcp_accept(listener, opts.timeout);
    exchange(tcp.get(), opts.params, opts.timeout);
  } else {
    ChannelListener local(opts.chan_path, opts.params);
    tcp = tcp_connect(opts.tcp_addr, opts.timeout);
    exchange(tcp.get(), opts.params, opts.timeout);
    ep = local.accept(opts.timeout);
  }
  log::info("proxy {} <-> {} up", opts.chan_path, opts.tcp_addr);

  ProxyStats stats;
  std::atomic<bool> abort{false};
  std::mutex err_mu;
  std::exception_ptr err;
  auto stopped = [&] { return abort.load() || (stop != nullptr && stop->load()); };
  auto record_error = [&](std::exception_ptr e) {
    {
      std::lock_guard lock(err_mu);
      if (!err) err = e;
    }
    abort.store(true);
    ::shutdown(tcp.get(), SHUT_RDWR);
  };

  // shm -> tcp
  std::thread outbound([&] {
    try {
      FrameBuilder frame;
      Backoff backoff;
      for (;;) {
        if (stopped()) throw Error(Errc::Interrupted, "proxy stopped");
        // Sample closure before draining so nothing published earlier is lost.
        bool closed = ep->peer_closed();
        frame.reset();
        drain_slots(ep->rx(), frame);
        if (frame.count() > 0) {
          send_all(tcp.get(), frame.bytes());
          ++stats.frames_out;
          stats.msgs_out += frame.count();
          ++stats.batch_sizes[frame.count()];
          backoff.reset();
          continue;
        }
        if (closed) {
          std::array<std::uint8_t, 4> marker{};
          send_all(tcp.get(), marker);
          return;
        }
        backoff.pause();
      }
    } catch (...) {
      record_error(std::current_exception());
    }
  });

  // tcp -> shm
  std::thread inbound([&] {
    try {
      Reader in(tcp.get());
      Bytes block;
      Backoff backoff;
      for (;;) {
        std::array<std::uint8_t, 4> hdr{};
        if (!in.read(hdr.data(), 4)) throw Error(Errc::TcpClosed, "peer proxy went away without closing");
        std::uint32_t count = get_u32(hdr.data());
        ++stats.frames_in;
        if (count == 0) {
          ep->shutdown_tx();
          return;
        }
        for (std::uint32_t i = 0; i < count; ++i) {
          in.read_or_throw(hdr.data(), 4, "a block length");
          std::uint32_t n = get_u32(hdr.data());
          if (n > kMaxFrameBytes) throw Error(Errc::MalformedPayload, fmt::format("block of {} bytes", n));
          block.resize(n);
          in.read_or_throw(block.data(), n, "a block");
          backoff.reset();
          while (!try_enqueue_block(ep->tx(), block)) {
            if (stopped()) throw Error(Errc::Interrupted, "proxy stopped");
            if (ep->peer_closed()) {  // the component is gone; nobody will read this
              ++stats.dropped_in;
              break;
            }
            backoff.pause();
          }
          ++stats.msgs_in;
        }
      }
    } catch (...) {
      record_error(std::current_exception());
    }
  });

  outbound.join();
  inbound.join();
  if (err) std::rethrow_exception(err);
  log::info("proxy {}: {} msgs out in {} frames, {} msgs in", opts.chan_path, stats.msgs_out, stats.frames_out,
            stats.msgs_in);
  return stats;
}

}  // namespace cosim
