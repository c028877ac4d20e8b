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
 * @file nic.hpp
 * @brief Behavioral model of the reference NIC (see docs/refnic.md).
 *
 * TX: a doorbell fetches every new descriptor at once, then each payload as
 * its descriptor arrives. A frame leaves tx_pipeline_delay_ns after its
 * payload arrived, strictly in ring order, followed by the descriptor
 * write-back and a tx interrupt.
 *
 * RX: rx_pipeline_delay_ns after arrival the frame claims the next posted
 * buffer (or is dropped and counted), the descriptor is read, then payload
 * and descriptor are written back and an rx interrupt is raised.
 */

#pragma once

#include <deque>
#include <map>
#include <optional>

#include "cosim/component.hpp"
#include "cosim/refnic.hpp"

namespace cosim {

struct NicParams {
  MacAddr mac{};
  SimTime tx_pipeline_delay_ns = 200;
  SimTime rx_pipeline_delay_ns = 200;
  /// Device-internal delay before a register access takes effect.
  SimTime mmio_latency_ns = 0;

  static NicParams parse(const Json& j, const std::string& id);
};

class Nic final : public Component {
 public:
  Nic(std::string id, Kernel& kernel, NicParams params);

  void bind(const std::string& port, PeerId peer) override;
  void start() override;
  void write_results(std::ostream& out) const override;

  /// Sends INIT_DEV. Called once from start(); a second call is a protocol
  /// error that is logged and ignored.
  void announce();

  std::uint64_t reg(std::uint64_t offset) const;
  std::uint64_t tx_packets() const { return tx_packets_; }
  std::uint64_t rx_packets() const { return rx_packets_; }
  std::uint64_t rx_drops() const { return regs_.rx_drop; }

 private:
  struct Regs {
    std::uint64_t ctrl = 0, tx_base = 0, tx_len = 0, tx_tail = 0, rx_base = 0, rx_len = 0, rx_tail = 0;
    std::uint64_t irq_status = 0, rx_drop = 0;
  };

  struct DmaCtx {
    enum class Kind { TxDesc, TxBuf, RxDesc, RxData, RxWriteBack, TxWriteBack };
    Kind kind;
    std::uint64_t index = 0;
    refnic::Descriptor desc;
    Bytes frame;  // RxDesc: the frame waiting for a buffer
  };

  struct TxSlot {
    std::uint64_t serial;
    std::uint64_t ring_idx;
    refnic::Descriptor desc;
    std::optional<Bytes> payload;
    SimTime ready_at = 0;
  };

  void on_pci(const WireMessage& m);
  void on_eth(const WireMessage& m);
  void mmio_read(const msg::MmioRead& m);
  void mmio_write(const msg::MmioWrite& m);
  void dma_done(const msg::DmaCompl& m);

  std::uint64_t dma_read(std::uint64_t addr, std::uint32_t len, DmaCtx ctx);
  std::uint64_t dma_write(std::uint64_t addr, Bytes data, DmaCtx ctx);
  void raise(std::uint64_t status_bit, std::uint32_t vector);

  void tx_kick();
  void tx_drain();
  void rx_start(Bytes frame);

  NicParams p_;
  std::optional<PeerId> pci_;
  std::optional<PeerId> eth_;
  bool announced_ = false;
  msg::IntStatus irq_{};

  Regs regs_;
  std::uint64_t tx_fetch_ = 0;  // next descriptor index to fetch
  std::uint64_t rx_head_ = 0;   // next rx descriptor to claim
  std::deque<TxSlot> tx_inflight_;
  std::uint64_t tx_serial_ = 0;

  std::uint64_t next_dma_ = 1;
  std::map<std::uint64_t, DmaCtx> dma_;

  std::uint64_t tx_packets_ = 0;
  std::uint64_t rx_packets_ = 0;
  std::uint64_t unmapped_ = 0;
};

}  // namespace cosim
