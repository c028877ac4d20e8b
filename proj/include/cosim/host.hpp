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
 * @file host.hpp
 * @brief Synthetic host: guest memory, the PCIe host side, a driver for the
 * reference NIC and a couple of raw-Ethernet workloads.
 *
 * The CPU is a FIFO of tasks. A task is a list of steps (delay, blocking
 * MMIO, plain call) and runs to completion before the next one starts.
 * Interrupt handlers and workload actions are tasks too, so their relative
 * order follows submission order. DMA requests are served immediately and
 * never wait for the CPU.
 */

#pragma once

#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <vector>

#include "cosim/component.hpp"
#include "cosim/refnic.hpp"

namespace cosim {

class GuestMemory {
 public:
  explicit GuestMemory(std::uint64_t size) : bytes_(size, 0) {}

  std::uint64_t size() const { return bytes_.size(); }
  /// Throws DmaOutOfRange when [addr, addr+len) leaves the memory.
  void check(std::uint64_t addr, std::uint64_t len) const;
  Bytes read(std::uint64_t addr, std::uint64_t len) const;
  void write(std::uint64_t addr, std::span<const std::uint8_t> data);

 private:
  Bytes bytes_;
};

struct WorkloadParams {
  enum class Kind { None, PingPong, Echo, Stream };
  Kind kind = Kind::None;
  MacAddr peer_mac{};
  std::uint64_t count = 0;
  std::uint64_t rate_pps = 0;       // stream
  std::uint64_t frame_len = 60;
  SimTime start_ns = 20'000;        // earliest start; driver init must be done too
  SimTime timeout_ns = 1'000'000;   // pingpong: per-echo budget
};

struct HostParams {
  MacAddr mac{};
  std::uint64_t mem_bytes = 16 << 20;
  SimTime mmio_issue_delay_ns = 0;
  SimTime interrupt_entry_delay_ns = 0;
  SimTime per_packet_processing_ns = 0;
  std::uint32_t tx_ring = 64;
  std::uint32_t rx_ring = 64;
  std::uint32_t buf_bytes = 2048;
  WorkloadParams workload;

  static HostParams parse(const Json& j, const std::string& id);
};

class Host final : public Component {
 public:
  Host(std::string id, Kernel& kernel, HostParams params);

  void bind(const std::string& port, PeerId peer) override;
  void start() override;
  void write_results(std::ostream& out) const override;

  // Inspection, mostly for tests.
  const HostParams& params() const { return p_; }
  GuestMemory& memory() { return mem_; }
  const std::optional<DeviceIntro>& device() const { return intro_; }
  bool driver_ready() const { return driver_ready_; }
  const std::vector<SimTime>& rtt_samples() const { return rtts_; }
  std::uint64_t sent() const { return sent_; }
  std::uint64_t delivered() const { return delivered_; }
  std::uint64_t tx_reaped() const { return tx_reaped_; }
  std::uint64_t irqs_dropped() const { return irqs_dropped_; }

  /// Queue a blocking register access as its own CPU task. `done` receives
  /// the read value (0 for writes).
  void mmio_read(std::uint64_t offset, std::function<void(std::uint64_t)> done);
  void mmio_write(std::uint64_t offset, std::uint64_t value, std::function<void()> done = {});
  /// Queue a frame for transmission through the driver.
  void transmit(Bytes frame);

 private:
  struct Step {
    enum class Kind { Delay, MmioRead, MmioWrite, Call };
    Kind kind = Kind::Call;
    SimTime delay = 0;
    std::uint64_t offset = 0;
    std::uint64_t value = 0;
    std::function<void(std::uint64_t)> on_value;
    std::function<void()> fn;
  };
  using Task = std::deque<Step>;

  static Step delay(SimTime d);
  static Step call(std::function<void()> fn);
  static Step mmio_w(std::uint64_t off, std::uint64_t v);
  static Step mmio_r(std::uint64_t off, std::function<void(std::uint64_t)> on_value);

  void submit(Task t);
  /// Inserts steps at the front of the running task.
  void prepend(std::vector<Step> steps);
  void run_cpu();
  void issue_mmio(Step step);

  void on_message(const WireMessage& m);
  void on_init_dev(const msg::InitDev& m);
  void on_dma_read(const msg::DmaRead& m);
  void on_dma_write(const msg::DmaWrite& m);
  void on_mmio_compl(const msg::MmioCompl& m);
  void on_interrupt(const msg::Interrupt& m);

  void init_driver();
  Task rx_handler();
  Task tx_handler();
  /// Copies as many backlog frames as fit into the tx ring; returns how many.
  std::uint32_t fill_tx_ring();
  void deliver(Bytes frame);

  void start_workload();
  void send_ping();
  Bytes make_frame(const MacAddr& dst, std::uint16_t seq) const;

  HostParams p_;
  GuestMemory mem_;
  PeerId pci_ = 0;
  bool bound_ = false;

  std::optional<DeviceIntro> intro_;
  msg::IntStatus irq_enabled_{};
  bool driver_ready_ = false;

  std::deque<Task> tasks_;
  bool cpu_waiting_ = false;
  bool in_cpu_ = false;
  std::uint64_t next_req_ = 1;
  std::map<std::uint64_t, Step> mmio_pending_;

  // Driver state.
  std::uint64_t tx_ring_addr_ = 0, rx_ring_addr_ = 0, tx_buf_addr_ = 0, rx_buf_addr_ = 0;
  std::uint32_t tx_tail_ = 0, tx_reap_ = 0;
  std::uint32_t rx_next_ = 0, rx_tail_ = 0;
  std::deque<Bytes> tx_backlog_;

  // Workload state.
  std::uint16_t seq_ = 0;
  SimTime ping_start_ = 0;
  EventId ping_timeout_;
  bool awaiting_echo_ = false;

  std::vector<SimTime> rtts_;
  std::uint64_t sent_ = 0;
  std::uint64_t delivered_ = 0;
  std::uint64_t tx_reaped_ = 0;
  std::uint64_t irqs_dropped_ = 0;
  std::uint64_t rx_errors_ = 0;
};

}  // namespace cosim
