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

#include <fstream>

#include <gtest/gtest.h>

#include "cosim/trace.hpp"
#include "test_util.hpp"

namespace cosim {
namespace {

// Published FNV-1a 64 test vectors.
TEST(Fnv, KnownVectors) {
  auto h = [](std::string_view s) {
    return fnv1a({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
  };
  EXPECT_EQ(h(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(h("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(h("foobar"), 0x85944171f73967e8ULL);
}

TEST(Record, FormatIsExact) {
  TraceRecord r{1500, "h0", "h0-n0", Direction::Tx, "MMIO_WRITE", 0xabc, 3, ""};
  EXPECT_EQ(format_record(r), "t=1500 c=h0 ch=h0-n0 d=tx ty=MMIO_WRITE dg=0000000000000abc sq=3");
  auto back = parse_record(format_record(r));
  ASSERT_TRUE(back);
  EXPECT_EQ(*back, r);
  EXPECT_FALSE(parse_record("t=1 c=x"));
  EXPECT_FALSE(parse_record("garbage"));
}

TEST(Sink, TimeOrderAndSyncFlag) {
  TraceBuffer buf("h0", {});
  Bytes none;
  buf.message(500, "ch", Direction::Rx, MsgType::Sync, none);
  buf.message(600, "ch", Direction::Tx, MsgType::MmioWrite, Bytes{1, 2});
  buf.message(1100, "ch", Direction::Rx, MsgType::MmioCompl, Bytes{3});
  ASSERT_EQ(buf.records().size(), 2u);
  EXPECT_EQ(buf.records()[0].seq, 0u);
  EXPECT_EQ(buf.records()[1].seq, 1u);
  EXPECT_LT(buf.records()[0].time, buf.records()[1].time);

  TraceBuffer strict("h0", {true, true, false});
  strict.message(500, "ch", Direction::Rx, MsgType::Sync, none);
  EXPECT_EQ(strict.records().size(), 1u);
}

TEST(Sink, EqualPayloadsEqualDigest) {
  TraceBuffer a("x", {}), b("y", {});
  a.message(1, "c", Direction::Tx, MsgType::Packet, Bytes{9, 9, 9});
  b.message(7, "d", Direction::Rx, MsgType::Packet, Bytes{9, 9, 9});
  EXPECT_EQ(a.records()[0].digest, b.records()[0].digest);
}

TEST(Canonical, FiltersSyncDropsPayloadRenumbers) {
  std::string raw =
      "t=500 c=a ch=a-b d=rx ty=SYNC dg=cbf29ce484222325 sq=0\n"
      "t=600 c=a ch=a-b d=tx ty=PACKET dg=0000000000000001 sq=1 pl=0102\n"
      "t=700 c=a ch=- d=local ty=rtt dg=0000000000000002 sq=2\n";
  std::string want =
      "t=600 c=a ch=a-b d=tx ty=PACKET dg=0000000000000001 sq=0\n"
      "t=700 c=a ch=- d=local ty=rtt dg=0000000000000002 sq=1\n";
  EXPECT_EQ(canonicalize(raw), want);
  EXPECT_EQ(canonicalize(canonicalize(raw)), canonicalize(raw));
  std::string strict = canonicalize(raw, {true});
  EXPECT_NE(strict.find("SYNC"), std::string::npos);
  EXPECT_EQ(canonicalize(strict, {true}), strict);
}

TEST(Writer, FileRoundTrip) {
  test::TempDir dir("trace");
  auto path = dir.path() / "a.trace";
  {
    TraceWriter w(path, "a", {true, false, true});
    for (int i = 0; i < 5000; ++i) w.message(i, "a-b", Direction::Tx, MsgType::Packet, Bytes{1, 2, 3});
  }
  auto recs = read_trace(path);
  ASSERT_EQ(recs.size(), 5000u);
  EXPECT_EQ(recs[4999].seq, 4999u);
  EXPECT_EQ(recs[0].payload_hex, "010203");
  EXPECT_EQ(canonicalize_file(path).find("pl="), std::string::npos);
}

}  // namespace
}  // namespace cosim
