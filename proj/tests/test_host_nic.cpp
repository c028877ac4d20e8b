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

#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include <fmt/format.h>

#include "cosim/error.hpp"
#include "cosim/host.hpp"
#include "cosim/nic.hpp"
#include "cosim/orchestrate.hpp"

namespace cosim {
namespace {

Bytes le64(std::uint64_t v) {
  Bytes b(8);
  for (int i = 0; i < 8; ++i) b[i] = static_cast<std::uint8_t>(v >> (8 * i));
  return b;
}

std::uint64_t from_le(const Bytes& b) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < b.size() && i < 8; ++i) v |= std::uint64_t{b[i]} << (8 * i);
  return v;
}

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::IoError;
}

// Two-host topology --------------------------------------------------------

struct SideParams {
  SimTime d_m = 0;       // host MMIO issue delay
  SimTime d_i = 0;       // host interrupt entry delay
  SimTime d_p = 0;       // host per-packet processing
  SimTime L = 0;         // NIC register access latency
  SimTime p_tx = 200;    // NIC tx pipeline
  SimTime p_rx = 200;    // NIC rx pipeline
  SimTime pci = 500;     // host<->NIC link latency
  SimTime eth = 500;     // NIC<->switch link latency
};

Json side_channel(const std::string& a, const std::string& b, SimTime latency) {
  return Json{{"a", a}, {"b", b}, {"latency_ns", latency}, {"sync_interval_ns", latency}};
}

Json two_host(const SideParams& s0, const SideParams& s1, SimTime fwd, Json w0, Json w1, SimTime duration) {
  auto host = [](const std::string& id, int last, const SideParams& s, Json w) {
    return Json{{"id", id},
                {"kind", "host"},
                {"mac", fmt::format("02:00:00:00:00:{:02x}", last)},
                {"mmio_issue_delay_ns", s.d_m},
                {"interrupt_entry_delay_ns", s.d_i},
                {"per_packet_processing_ns", s.d_p},
                {"workload", std::move(w)}};
  };
  auto nic = [](const std::string& id, int last, const SideParams& s) {
    return Json{{"id", id},
                {"kind", "nic"},
                {"mac", fmt::format("02:00:00:00:00:{:02x}", last)},
                {"mmio_latency_ns", s.L},
                {"tx_pipeline_delay_ns", s.p_tx},
                {"rx_pipeline_delay_ns", s.p_rx}};
  };
  return Json{{"duration_ns", duration},
              {"components",
               {host("h0", 1, s0, std::move(w0)), nic("n0", 1, s0),
                {{"id", "sw"}, {"kind", "switch"}, {"ports", 2}, {"forward_delay_ns", fwd}}, nic("n1", 2, s1),
                host("h1", 2, s1, std::move(w1))}},
              {"channels",
               {side_channel("h0.pci", "n0.pci", s0.pci), side_channel("n0.eth", "sw.0", s0.eth),
                side_channel("sw.1", "n1.eth", s1.eth), side_channel("h1.pci", "n1.pci", s1.pci)}}};
}

// One-way oracle from the sending host's TX_TAIL write to delivery in the
// receiving host:
//   tx: issue delay, doorbell (1 hop), register latency, descriptor and
//       buffer reads (4 hops), tx pipeline
//   wire: both Ethernet links plus the switch forwarding delay
//   rx: rx pipeline, descriptor read (2 hops), MSI (1 hop), interrupt entry,
//       per-packet processing
SimTime one_way(const SideParams& src, const SideParams& dst, SimTime fwd) {
  return src.d_m + src.pci + src.L + 4 * src.pci + src.p_tx + src.eth + fwd + dst.eth + dst.p_rx + 2 * dst.pci +
         dst.pci + dst.d_i + dst.d_p;
}

// The echo host finishes its rx handler with a blocking RX_TAIL write before
// its echo task reaches the CPU.
SimTime rtt_oracle(const SideParams& s0, const SideParams& s1, SimTime fwd) {
  SimTime rx_tail_write = s1.d_m + s1.pci + s1.L + s1.pci;
  return one_way(s0, s1, fwd) + rx_tail_write + one_way(s1, s0, fwd);
}

Json pingpong(std::uint64_t count, const std::string& peer = "02:00:00:00:00:02") {
  return Json{{"kind", "pingpong"}, {"peer_mac", peer}, {"count", count}};
}

TEST(RttOracle, DefaultsByHand) {
  // 2 * (5*500 + 200 + 500 + 500 + 200 + 3*500) + 2*500 = 11800
  EXPECT_EQ(rtt_oracle({}, {}, 0), 11'800);
}

TEST(PingPong, DefaultRttIsConstant) {
  Monolith m(parse_config(two_host({}, {}, 0, pingpong(200), {{"kind", "echo"}}, 10'000'000)));
  m.run();
  const auto& rtts = m.get<Host>("h0").rtt_samples();
  ASSERT_EQ(rtts.size(), 200u);
  std::set<SimTime> distinct(rtts.begin(), rtts.end());
  EXPECT_EQ(distinct, std::set<SimTime>{rtt_oracle({}, {}, 0)});
  EXPECT_EQ(m.get<Nic>("n0").tx_packets(), 200u);
  EXPECT_EQ(m.get<Nic>("n1").rx_packets(), 200u);
  EXPECT_EQ(m.get<Host>("h1").delivered(), 200u);
}

TEST(PingPong, AsymmetricRttMatchesOracle) {
  SideParams s0;
  s0.d_m = 30;
  s0.d_i = 70;
  s0.d_p = 110;
  s0.L = 50;
  s0.p_tx = 150;
  s0.p_rx = 250;
  s0.pci = 300;
  s0.eth = 700;
  SideParams s1;
  s1.d_m = 40;
  s1.d_i = 90;
  s1.d_p = 60;
  s1.L = 80;
  s1.p_tx = 220;
  s1.p_rx = 130;
  s1.pci = 600;
  s1.eth = 400;
  const SimTime fwd = 120;

  Monolith m(parse_config(two_host(s0, s1, fwd, pingpong(150), {{"kind", "echo"}}, 10'000'000)));
  m.run();
  const auto& rtts = m.get<Host>("h0").rtt_samples();
  ASSERT_EQ(rtts.size(), 150u);
  std::set<SimTime> distinct(rtts.begin(), rtts.end());
  EXPECT_EQ(distinct, std::set<SimTime>{rtt_oracle(s0, s1, fwd)});
}

TEST(PingPong, UnknownPeerTimesOut) {
  Json w = pingpong(5, "02:00:00:00:00:09");
  w["timeout_ns"] = 200'000;
  Monolith m(parse_config(two_host({}, {}, 0, w, {{"kind", "echo"}}, 5'000'000)));
  EXPECT_EQ(code_of([&] { m.run(); }), Errc::WorkloadTimeout);
  // The flooded frame reached h1, which is not the addressee.
  EXPECT_EQ(m.get<Host>("h1").delivered(), 0u);
  EXPECT_EQ(m.get<Nic>("n1").rx_packets(), 1u);
}

TEST(Stream, ThousandFramesDelivered) {
  Json w{{"kind", "stream"}, {"peer_mac", "02:00:00:00:00:02"}, {"count", 1000}, {"rate_pps", 1'000'000}};
  Monolith m(parse_config(two_host({}, {}, 0, w, {{"kind", "none"}}, 2'000'000)));
  m.run();
  EXPECT_EQ(m.get<Host>("h0").sent(), 1000u);
  EXPECT_EQ(m.get<Host>("h0").tx_reaped(), 1000u);
  EXPECT_EQ(m.get<Nic>("n0").tx_packets(), 1000u);
  EXPECT_EQ(m.get<Nic>("n1").rx_packets(), 1000u);
  EXPECT_EQ(m.get<Nic>("n1").rx_drops(), 0u);
  EXPECT_EQ(m.get<Host>("h1").delivered(), 1000u);
}

TEST(Driver, InitAgainstReferenceNic) {
  Monolith m(parse_config(two_host({}, {}, 0, {{"kind", "none"}}, {{"kind", "none"}}, 100'000)));
  m.run();
  Host& h = m.get<Host>("h0");
  ASSERT_TRUE(h.driver_ready());
  ASSERT_TRUE(h.device().has_value());
  EXPECT_EQ(h.device()->pci_vendor_id, 0x5342);
  EXPECT_EQ(h.device()->num_msi_vectors, 2);
  Nic& n = m.get<Nic>("n0");
  EXPECT_EQ(n.reg(refnic::kCtrl), refnic::kCtrlEnable);
  EXPECT_EQ(n.reg(refnic::kTxLen), h.params().tx_ring);
  EXPECT_EQ(n.reg(refnic::kRxLen), h.params().rx_ring);
  EXPECT_EQ(n.reg(refnic::kRxTail), h.params().rx_ring - 1);
}

TEST(GuestMemoryTest, BoundsAndRoundTrip) {
  GuestMemory mem(64);
  Bytes data{1, 2, 3, 4};
  mem.write(60, data);
  EXPECT_EQ(mem.read(60, 4), data);
  EXPECT_EQ(code_of([&] { mem.check(61, 4); }), Errc::DmaOutOfRange);
  EXPECT_EQ(code_of([&] { mem.read(~std::uint64_t{0}, 2); }), Errc::DmaOutOfRange);
  EXPECT_NO_THROW(mem.check(64, 0));
}

// Host against a scripted device -------------------------------------------

class FakeDevice : public ::testing::Test {
 protected:
  FakeDevice() {
    HostParams p;
    p.mac = {2, 0, 0, 0, 0, 1};
    p.mem_bytes = 1 << 16;
    host_ = std::make_unique<Host>("h", hk_, p);
    auto [a, b] = make_mem_channel();
    host_->bind("pci", hk_.attach_peer(std::move(a), ChannelParams{}, "pci"));
    dev_ = dk_.attach_peer(std::move(b), ChannelParams{}, "pci", [this](const WireMessage& m) { on_msg(m); });
    host_->start();
  }

  void on_msg(const WireMessage& m) {
    seen_.push_back(m);
    if (!respond_) return;
    if (auto* w = std::get_if<msg::MmioWrite>(&m.body)) dk_.send(dev_, msg::MmioCompl{w->req_id, std::nullopt});
    if (auto* r = std::get_if<msg::MmioRead>(&m.body))
      dk_.send(dev_, msg::MmioCompl{r->req_id, le64(r->offset == refnic::kCtrl ? 1 : 0)});
  }

  void at(SimTime t, Payload body) {
    dk_.schedule_at(t, [this, body = std::move(body)] { dk_.send(dev_, body); });
  }

  void run(SimTime until) {
    SerialScheduler s;
    s.add(hk_);
    s.add(dk_);
    s.run(until);
  }

  template <typename T>
  std::vector<std::pair<SimTime, T>> seen() const {
    std::vector<std::pair<SimTime, T>> out;
    for (const auto& m : seen_)
      if (auto* b = std::get_if<T>(&m.body)) out.emplace_back(m.timestamp, *b);
    return out;
  }

  static DeviceIntro intro() {
    DeviceIntro d;
    d.pci_vendor_id = refnic::kVendorId;
    d.pci_device_id = refnic::kDeviceId;
    d.bars.push_back(BarInfo{4096, true});
    d.num_msi_vectors = 2;
    return d;
  }

  Kernel hk_{"h"};
  Kernel dk_{"dev"};
  std::unique_ptr<Host> host_;
  PeerId dev_ = 0;
  bool respond_ = true;
  std::vector<WireMessage> seen_;
};

TEST_F(FakeDevice, DmaWriteThenReadRoundTrip) {
  Bytes data{9, 8, 7, 6, 5};
  at(0, msg::DmaWrite{1, 0x100, data});
  at(0, msg::DmaRead{2, 0x100, 5});
  run(5000);
  auto compl_ = seen<msg::DmaCompl>();
  ASSERT_EQ(compl_.size(), 2u);
  // One hop to the host, one back.
  EXPECT_EQ(compl_[0], (std::pair<SimTime, msg::DmaCompl>{1000, {1, std::nullopt}}));
  EXPECT_EQ(compl_[1], (std::pair<SimTime, msg::DmaCompl>{1000, {2, data}}));
  EXPECT_EQ(host_->memory().read(0x100, 5), data);
}

TEST_F(FakeDevice, DmaReadPastEndFails) {
  at(0, msg::DmaRead{3, (1 << 16) - 4, 8});
  EXPECT_EQ(code_of([&] { run(5000); }), Errc::DmaOutOfRange);
}

TEST_F(FakeDevice, UnknownMmioCompletionFails) {
  at(0, msg::MmioCompl{99, std::nullopt});
  EXPECT_EQ(code_of([&] { run(5000); }), Errc::CompletionIdMismatch);
}

TEST_F(FakeDevice, DriverInitSequence) {
  at(0, msg::InitDev{intro()});
  run(50'000);
  ASSERT_TRUE(host_->driver_ready());
  EXPECT_EQ(host_->device(), intro());

  auto irq = seen<msg::IntStatus>();
  ASSERT_EQ(irq.size(), 1u);
  EXPECT_EQ(irq[0].second, (msg::IntStatus{false, true, false}));

  std::vector<std::uint64_t> offsets;
  for (const auto& [t, w] : seen<msg::MmioWrite>()) offsets.push_back(w.offset);
  EXPECT_EQ(offsets, (std::vector<std::uint64_t>{refnic::kTxBase, refnic::kTxLen, refnic::kRxBase, refnic::kRxLen,
                                                 refnic::kRxTail, refnic::kCtrl}));
  // Register writes are blocking: each one waits for the previous completion.
  auto writes = seen<msg::MmioWrite>();
  for (std::size_t i = 1; i < writes.size(); ++i) EXPECT_EQ(writes[i].first - writes[i - 1].first, 1000);
}

TEST_F(FakeDevice, InterruptsOfDisabledKindsAreDropped) {
  at(0, msg::InitDev{intro()});
  at(20'000, msg::Interrupt{msg::IrqKind::Legacy, 1});
  at(20'000, msg::Interrupt{msg::IrqKind::Msix, 0});
  run(50'000);
  ASSERT_TRUE(host_->driver_ready());
  EXPECT_EQ(host_->irqs_dropped(), 2u);
}

TEST_F(FakeDevice, InterruptBeforeInitIsDropped) {
  at(0, msg::Interrupt{msg::IrqKind::Msi, refnic::kVectorRx});
  run(5000);
  EXPECT_EQ(host_->irqs_dropped(), 1u);
}

// NIC against a scripted host ----------------------------------------------

class FakeHost : public ::testing::Test {
 protected:
  FakeHost() : mem_(1 << 16) {
    nic_ = std::make_unique<Nic>("n", nk_, NicParams{});
    auto [a, b] = make_mem_channel();
    host_ = hk_.attach_peer(std::move(a), ChannelParams{}, "pci", [this](const WireMessage& m) { on_pci(m); });
    nic_->bind("pci", nk_.attach_peer(std::move(b), ChannelParams{}, "pci"));
    auto [c, d] = make_mem_channel();
    nic_->bind("eth", nk_.attach_peer(std::move(c), ChannelParams{}, "eth"));
    wire_ = ek_.attach_peer(std::move(d), ChannelParams{}, "eth", [this](const WireMessage& m) {
      if (auto* p = std::get_if<msg::Packet>(&m.body)) wire_rx_.push_back(p->data);
    });
    nic_->start();
  }

  void on_pci(const WireMessage& m) {
    pci_rx_.push_back(m);
    if (auto* r = std::get_if<msg::DmaRead>(&m.body)) hk_.send(host_, msg::DmaCompl{r->req_id, mem_.read(r->addr, r->len)});
    if (auto* w = std::get_if<msg::DmaWrite>(&m.body)) {
      mem_.write(w->addr, w->data);
      hk_.send(host_, msg::DmaCompl{w->req_id, std::nullopt});
    }
    if (auto* c = std::get_if<msg::MmioCompl>(&m.body)) reads_[c->req_id] = c->data.value_or(Bytes{});
  }

  void at(SimTime t, Payload body) {
    hk_.schedule_at(t, [this, body = std::move(body)] { hk_.send(host_, body); });
  }
  void write(SimTime t, std::uint64_t off, std::uint64_t v) { at(t, msg::MmioWrite{next_id_++, 0, off, le64(v)}); }
  std::uint64_t read(SimTime t, std::uint64_t off, std::uint8_t bar = 0) {
    std::uint64_t id = next_id_++;
    at(t, msg::MmioRead{id, bar, off, 8});
    return id;
  }

  void run(SimTime until) {
    SerialScheduler s;
    s.add(hk_);
    s.add(nk_);
    s.add(ek_);
    s.run(until);
  }

  Kernel hk_{"host"};
  Kernel nk_{"n"};
  Kernel ek_{"wire"};
  std::unique_ptr<Nic> nic_;
  PeerId host_ = 0;
  PeerId wire_ = 0;
  GuestMemory mem_;
  std::uint64_t next_id_ = 1;
  std::vector<WireMessage> pci_rx_;
  std::vector<Bytes> wire_rx_;
  std::map<std::uint64_t, Bytes> reads_;
};

TEST_F(FakeHost, AnnouncesItselfAfterOneHop) {
  run(2000);
  ASSERT_FALSE(pci_rx_.empty());
  EXPECT_EQ(pci_rx_[0].timestamp, 500);
  auto* init = std::get_if<msg::InitDev>(&pci_rx_[0].body);
  ASSERT_NE(init, nullptr);
  EXPECT_EQ(init->intro.pci_vendor_id, 0x5342);
  EXPECT_EQ(init->intro.pci_device_id, 1);
  EXPECT_EQ(init->intro.pci_class, 2);
  ASSERT_EQ(init->intro.bars.size(), 1u);
  EXPECT_EQ(init->intro.bars[0].size_bytes, 4096u);
  EXPECT_TRUE(init->intro.bars[0].mmio);
  EXPECT_EQ(init->intro.num_msi_vectors, 2);
  EXPECT_EQ(init->intro.num_msix_vectors, 0);
}

TEST_F(FakeHost, UnmappedReadsReturnAllOnes) {
  std::vector<std::uint64_t> bad = {read(0, 0x1000), read(0, 0x48), read(0, 0x3), read(0, 0, 1)};
  std::uint64_t ctrl = read(0, refnic::kCtrl);
  write(0, 0x800, 5);
  run(5000);
  for (std::uint64_t id : bad) EXPECT_EQ(reads_.at(id), Bytes(8, 0xff)) << id;
  EXPECT_EQ(reads_.at(ctrl), Bytes(8, 0));
  std::ostringstream out;
  nic_->write_results(out);
  EXPECT_NE(out.str().find("unmapped_accesses=5"), std::string::npos) << out.str();
}

TEST_F(FakeHost, FrameWhileDisabledCountsAsDrop) {
  Bytes f(60, 0xab);
  ek_.schedule_at(0, [&] { ek_.send(wire_, msg::Packet{f}); });
  std::uint64_t id = read(2000, refnic::kRxDrop);
  write(2000, refnic::kRxDrop, 0);  // read-only
  std::uint64_t again = read(3000, refnic::kRxDrop);
  run(6000);
  EXPECT_EQ(from_le(reads_.at(id)), 1u);
  EXPECT_EQ(from_le(reads_.at(again)), 1u);
  EXPECT_EQ(nic_->rx_packets(), 0u);
}

TEST_F(FakeHost, TransmitAndIrqStatusAck) {
  refnic::Descriptor d0{0x1000, 60, 0, 0};
  refnic::Descriptor d1{0x1100, 64, 0, 0};
  mem_.write(0, d0.encode());
  mem_.write(refnic::kDescBytes, d1.encode());
  mem_.write(0x1000, Bytes(60, 0x11));
  mem_.write(0x1100, Bytes(64, 0x22));

  write(0, refnic::kTxLen, 4);
  write(0, refnic::kCtrl, refnic::kCtrlEnable);
  write(0, refnic::kTxTail, 1);
  // Doorbell at 500, descriptor read 500..1500, buffer read 1500..2500,
  // pipeline until 2700, on the wire at 3200.
  write(5000, refnic::kIrqStatus, refnic::kIrqRx);  // not pending: no effect
  std::uint64_t first = read(6000, refnic::kIrqStatus);
  std::uint64_t after_read = read(7000, refnic::kIrqStatus);
  write(8000, refnic::kTxTail, 2);
  write(15'000, refnic::kIrqStatus, refnic::kIrqTx);
  std::uint64_t after_w1c = read(16'000, refnic::kIrqStatus);
  run(20'000);

  ASSERT_EQ(wire_rx_.size(), 2u);
  EXPECT_EQ(wire_rx_[0], Bytes(60, 0x11));
  EXPECT_EQ(wire_rx_[1], Bytes(64, 0x22));
  EXPECT_EQ(from_le(reads_.at(first)), refnic::kIrqTx);
  EXPECT_EQ(from_le(reads_.at(after_read)), 0u);
  EXPECT_EQ(from_le(reads_.at(after_w1c)), 0u);
  EXPECT_EQ(nic_->tx_packets(), 2u);
  auto wb = refnic::Descriptor::decode(mem_.read(0, refnic::kDescBytes));
  EXPECT_EQ(wb.flags & refnic::kDescDone, refnic::kDescDone);
  // No interrupt mechanism was enabled.
  for (const auto& m : pci_rx_) EXPECT_EQ(std::get_if<msg::Interrupt>(&m.body), nullptr);
}

TEST_F(FakeHost, IrqStatusWriteOneToClearKeepsOtherBits) {
  refnic::Descriptor d0{0x1000, 60, 0, 0};
  mem_.write(0, d0.encode());
  write(0, refnic::kTxLen, 4);
  write(0, refnic::kCtrl, refnic::kCtrlEnable);
  write(0, refnic::kTxTail, 1);
  run(5000);
  EXPECT_EQ(nic_->reg(refnic::kIrqStatus), refnic::kIrqTx);
  write(5000, refnic::kIrqStatus, refnic::kIrqRx);
  run(7000);
  EXPECT_EQ(nic_->reg(refnic::kIrqStatus), refnic::kIrqTx);
  write(7000, refnic::kIrqStatus, refnic::kIrqTx);
  run(9000);
  EXPECT_EQ(nic_->reg(refnic::kIrqStatus), 0u);
}

}  // namespace
}  // namespace cosim
