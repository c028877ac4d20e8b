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

#include <sys/socket.h>
#include <sys/un.h>
#include <unistd.h>

#include <cstring>
#include <thread>

#include <gtest/gtest.h>

#include "cosim/error.hpp"
#include "cosim/shmq.hpp"
#include "test_util.hpp"

namespace cosim {
namespace {

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

WireMessage seq_msg(std::uint64_t seq) {
  Bytes frame(64, 0);
  for (int i = 0; i < 8; ++i) frame[14 + i] = static_cast<std::uint8_t>(seq >> (8 * i));
  return WireMessage{seq, msg::Packet{frame}};
}

std::uint64_t seq_of(const WireMessage& m) {
  const auto& f = std::get<msg::Packet>(m.body).data;
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t{f[14 + i]} << (8 * i);
  return v;
}

TEST(Queue, SingleThreadFifo) {
  HeapQueue q(128, 4);
  QueueRegion tx = q.producer(), rx = q.consumer();
  for (std::uint64_t i = 0; i < 3; ++i) {
    ASSERT_TRUE(tx.try_send(seq_msg(i)));
    auto m = rx.try_recv();
    ASSERT_TRUE(m);
    EXPECT_EQ(seq_of(*m), i);
  }
  EXPECT_FALSE(rx.try_recv());
}

TEST(Queue, FullQueueBlocksUntilRelease) {
  HeapQueue q(128, 2);
  QueueRegion tx = q.producer(), rx = q.consumer();
  EXPECT_TRUE(tx.try_send(seq_msg(0)));
  EXPECT_TRUE(tx.try_send(seq_msg(1)));
  EXPECT_FALSE(tx.try_send(seq_msg(2)));
  EXPECT_EQ(code_of([&] { tx.alloc_slot_for(std::chrono::milliseconds(5)); }), Errc::WouldBlock);

  // Polling without releasing does not free the slot.
  auto slot = rx.poll_slot();
  ASSERT_TRUE(slot);
  EXPECT_FALSE(tx.try_alloc_slot());
  rx.release_slot(*slot);
  EXPECT_TRUE(tx.try_send(seq_msg(2)));
  EXPECT_EQ(seq_of(*rx.try_recv()), 1u);
  EXPECT_EQ(seq_of(*rx.try_recv()), 2u);
}

TEST(Queue, BlockedSendResumesWhenConsumerDrains) {
  HeapQueue q(128, 2);
  QueueRegion tx = q.producer(), rx = q.consumer();
  tx.send(seq_msg(0));
  tx.send(seq_msg(1));
  std::thread consumer([&] {
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
    rx.try_recv();
  });
  tx.send(seq_msg(2));  // blocks until the consumer frees a slot
  consumer.join();
  EXPECT_EQ(seq_of(*rx.try_recv()), 1u);
  EXPECT_EQ(seq_of(*rx.try_recv()), 2u);
}

TEST(Queue, OwnerBitAlternates) {
  HeapQueue q(128, 2);
  QueueRegion tx = q.producer(), rx = q.consumer();
  auto s = tx.alloc_slot();
  EXPECT_EQ(s.back() & kOwnerBit, 0);
  encode_body(seq_msg(0), s);
  tx.enqueue_slot(s, MsgType::Packet);
  EXPECT_EQ(s.back(), kOwnerBit | 0x30);
  auto r = rx.poll_slot();
  ASSERT_TRUE(r);
  rx.release_slot(*r);
  EXPECT_EQ(s.back() & kOwnerBit, 0);
}

// Concurrent producer/consumer over a small ring; the payload carries a
// sequence number checked by the consumer.
class Concurrent : public ::testing::TestWithParam<std::uint32_t> {};

TEST_P(Concurrent, NoLossNoDuplicationInOrder) {
  constexpr std::uint64_t kCount = 200'000;
  HeapQueue q(128, GetParam());
  QueueRegion tx = q.producer(), rx = q.consumer();
  std::thread producer([&] {
    for (std::uint64_t i = 0; i < kCount; ++i) tx.send(seq_msg(i));
  });
  std::uint64_t expect = 0, bad = 0;
  Backoff backoff;
  while (expect < kCount) {
    auto m = rx.try_recv();
    if (!m) {
      backoff.pause();
      continue;
    }
    backoff.reset();
    if (seq_of(*m) != expect || m->timestamp != expect) ++bad;
    ++expect;
  }
  producer.join();
  EXPECT_EQ(bad, 0u);
  EXPECT_FALSE(rx.try_recv());
}

INSTANTIATE_TEST_SUITE_P(QueueLens, Concurrent, ::testing::Values(2u, 3u, 64u));

TEST(Channel, HandshakeAgreesAndLoopsBack) {
  test::TempDir dir("shmq");
  const std::string path = (dir.path() / "s").string();
  ChannelParams p;
  p.link_latency_ns = 700;
  p.sync_interval_ns = 300;
  p.queue_len_slots = 8;
  p.slot_size_bytes = 256;
  ChannelListener l(path, p);
  auto pc = PendingConnect::start(path, std::chrono::seconds(2));
  ChannelEndpoint a = l.accept(std::chrono::seconds(2));
  ChannelEndpoint b = pc.finish(std::chrono::seconds(2));
  EXPECT_EQ(a.params(), p);
  EXPECT_EQ(b.params(), p);

  a.tx().send(seq_msg(5));
  b.tx().send(seq_msg(6));
  EXPECT_EQ(seq_of(*b.rx().try_recv()), 5u);
  EXPECT_EQ(seq_of(*a.rx().try_recv()), 6u);

  EXPECT_FALSE(a.peer_closed());
  b.shutdown_tx();
  EXPECT_TRUE(a.peer_closed());
}

TEST(Channel, SecondListenIsAddressInUse) {
  test::TempDir dir("shmq");
  const std::string path = (dir.path() / "s").string();
  ChannelListener l(path, ChannelParams{});
  EXPECT_EQ(code_of([&] { ChannelListener again(path, ChannelParams{}); }), Errc::AddressInUse);
}

TEST(Channel, ConnectWithoutListenerFails) {
  test::TempDir dir("shmq");
  EXPECT_EQ(code_of([&] { connect((dir.path() / "nobody").string()); }), Errc::ConnectFailed);
}

TEST(Channel, VersionMismatchDetected) {
  test::TempDir dir("shmq");
  const std::string path = (dir.path() / "s").string();
  // Hand-rolled listener that sends a record with a future version.
  int fd = ::socket(AF_UNIX, SOCK_STREAM, 0);
  ASSERT_GE(fd, 0);
  sockaddr_un addr{};
  addr.sun_family = AF_UNIX;
  std::strncpy(addr.sun_path, path.c_str(), sizeof(addr.sun_path) - 1);
  ASSERT_EQ(::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)), 0);
  ASSERT_EQ(::listen(fd, 1), 0);
  std::thread fake([&] {
    int c = ::accept(fd, nullptr, nullptr);
    HandshakeRecord rec;
    rec.version = kProtocolVersion + 1;
    rec.shm_path = path + ".shm";
    auto bytes = encode_handshake(rec);
    (void)!::write(c, bytes.data(), bytes.size());
    ::close(c);
  });
  EXPECT_EQ(code_of([&] { connect(path, std::chrono::seconds(2)); }), Errc::HandshakeVersionMismatch);
  fake.join();
  ::close(fd);
}

TEST(Layout, QueuesAreCacheAligned) {
  auto l = ShmLayout::for_geometry(4096, 512);
  EXPECT_EQ(l.queue_a_offset, kShmHeaderBytes);
  EXPECT_EQ(l.queue_b_offset % 64, 0u);
  EXPECT_EQ(l.queue_b_offset, kShmHeaderBytes + 4096ull * 512);
  EXPECT_EQ(l.total_size, l.queue_b_offset + 4096ull * 512);
}

}  // namespace
}  // namespace cosim
