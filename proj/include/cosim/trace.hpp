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
 * @file trace.hpp
 * @brief Per-component event traces and their canonical form.
 *
 * One record per line:
 *
 *   t=<ns> c=<comp> ch=<chan> d=<tx|rx|local> ty=<type> dg=<hex16> sq=<n>
 *
 * optionally followed by ` pl=<hex>` in payload-dump mode. Byte equality of
 * canonical traces is the run-equivalence relation used everywhere.
 */

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cosim/proto.hpp"

namespace cosim {

/// 64-bit FNV-1a.
constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

constexpr std::uint64_t fnv1a(std::span<const std::uint8_t> data, std::uint64_t h = kFnvOffset) {
  for (std::uint8_t b : data) {
    h ^= b;
    h *= kFnvPrime;
  }
  return h;
}

enum class Direction : std::uint8_t { Tx, Rx, Local };

std::string_view direction_name(Direction d);

struct TraceRecord {
  SimTime time = 0;
  std::string component;
  std::string channel;  // "-" for local records
  Direction dir = Direction::Local;
  std::string type;
  std::uint64_t digest = kFnvOffset;
  std::uint64_t seq = 0;
  std::string payload_hex;  // only in dump mode

  bool is_sync() const { return type == "SYNC"; }
  bool operator==(const TraceRecord&) const = default;
};

std::string format_record(const TraceRecord& r);
/// Returns nullopt on a line that is not a trace record.
std::optional<TraceRecord> parse_record(std::string_view line);

struct TraceOptions {
  bool enabled = true;
  bool include_sync = false;
  bool dump_payload = false;
};

/// Receives records from a component. Sequence numbers are assigned here so
/// that every sink numbers records the same way.
class TraceSink {
 public:
  TraceSink(std::string component, TraceOptions opts) : component_(std::move(component)), opts_(opts) {}
  virtual ~TraceSink() = default;

  const TraceOptions& options() const { return opts_; }
  const std::string& component() const { return component_; }

  /// Message record; the digest covers the encoded payload bytes.
  void message(SimTime t, std::string_view channel, Direction dir, MsgType type,
               std::span<const std::uint8_t> payload);
  /// Component-level event without a channel.
  void local(SimTime t, std::string_view type, std::span<const std::uint8_t> data);

  virtual void flush() {}

 protected:
  virtual void write(const TraceRecord& r) = 0;

 private:
  std::string component_;
  TraceOptions opts_;
  std::uint64_t seq_ = 0;
};

/// Buffered file writer; flushes every 64 KiB, on flush() and on destruction.
class TraceWriter final : public TraceSink {
 public:
  TraceWriter(const std::filesystem::path& path, std::string component, TraceOptions opts);
  ~TraceWriter() override;
  void flush() override;

 protected:
  void write(const TraceRecord& r) override;

 private:
  std::ofstream out_;
  std::string buf_;
};

/// Keeps records in memory (tests, monolith inspection).
class TraceBuffer final : public TraceSink {
 public:
  using TraceSink::TraceSink;
  const std::vector<TraceRecord>& records() const { return records_; }

 protected:
  void write(const TraceRecord& r) override { records_.push_back(r); }

 private:
  std::vector<TraceRecord> records_;
};

struct CanonicalOptions {
  bool include_sync = false;  // strict mode
};

/// Stable field order, payload dumps dropped, SYNC filtered unless strict,
/// sequence numbers renumbered from zero. Idempotent.
std::string canonicalize(std::string_view raw, CanonicalOptions opts = {});
std::string canonicalize_file(const std::filesystem::path& path, CanonicalOptions opts = {});

std::vector<TraceRecord> read_trace(const std::filesystem::path& path);

}  // namespace cosim
