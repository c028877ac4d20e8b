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

#include "cosim/trace.hpp"

#include <charconv>
#include <sstream>

#include <fmt/core.h>

#include "cosim/error.hpp"

namespace cosim {

namespace {

constexpr std::size_t kFlushThreshold = 64 * 1024;

template <typename T>
bool parse_uint(std::string_view s, T& out, int base = 10) {
  if (s.empty()) return false;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out, base);
  return ec == std::errc() && p == s.data() + s.size();
}

std::string to_hex(std::span<const std::uint8_t> data) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s;
  s.reserve(data.size() * 2);
  for (std::uint8_t b : data) {
    s.push_back(kDigits[b >> 4]);
    s.push_back(kDigits[b & 0xf]);
  }
  return s;
}

}  // namespace

std::string_view direction_name(Direction d) {
  switch (d) {
    case Direction::Tx: return "tx";
    case Direction::Rx: return "rx";
    case Direction::Local: return "local";
  }
  return "?";
}

std::string format_record(const TraceRecord& r) {
  std::string s = fmt::format("t={} c={} ch={} d={} ty={} dg={:016x} sq={}", r.time, r.component, r.channel,
                              direction_name(r.dir), r.type, r.digest, r.seq);
  if (!r.payload_hex.empty()) {
    s += " pl=";
    s += r.payload_hex;
  }
  return s;
}

std::optional<TraceRecord> parse_record(std::string_view line) {
  TraceRecord r;
  unsigned seen = 0;
  while (!line.empty()) {
    auto sp = line.find(' ');
    std::string_view tok = line.substr(0, sp);
    line = sp == std::string_view::npos ? std::string_view{} : line.substr(sp + 1);
    if (tok.empty()) continue;
    auto eq = tok.find('=');
    if (eq == std::string_view::npos) return std::nullopt;
    std::string_view key = tok.substr(0, eq);
    std::string_view val = tok.substr(eq + 1);
    if (key == "t") {
      if (!parse_uint(val, r.time)) return std::nullopt;
      seen |= 1;
    } else if (key == "c") {
      r.component = val;
      seen |= 2;
    } else if (key == "ch") {
      r.channel = val;
      seen |= 4;
    } else if (key == "d") {
      if (val == "tx") r.dir = Direction::Tx;
      else if (val == "rx") r.dir = Direction::Rx;
      else if (val == "local") r.dir = Direction::Local;
      else return std::nullopt;
      seen |= 8;
    } else if (key == "ty") {
      r.type = val;
      seen |= 16;
    } else if (key == "dg") {
      if (val.size() != 16 || !parse_uint(val, r.digest, 16)) return std::nullopt;
      seen |= 32;
    } else if (key == "sq") {
      if (!parse_uint(val, r.seq)) return std::nullopt;
      seen |= 64;
    } else if (key == "pl") {
      r.payload_hex = val;
    } else {
      return std::nullopt;
    }
  }
  if (seen != 127) return std::nullopt;
  return r;
}

void TraceSink::message(SimTime t, std::string_view channel, Direction dir, MsgType type,
                        std::span<const std::uint8_t> payload) {
  if (!opts_.enabled) return;
  if (type == MsgType::Sync && !opts_.include_sync) return;
  TraceRecord r;
  r.time = t;
  r.component = component_;
  r.channel = channel;
  r.dir = dir;
  r.type = type_name(type);
  r.digest = fnv1a(payload);
  r.seq = seq_++;
  if (opts_.dump_payload) r.payload_hex = to_hex(payload);
  write(r);
}

void TraceSink::local(SimTime t, std::string_view type, std::span<const std::uint8_t> data) {
  if (!opts_.enabled) return;
  TraceRecord r;
  r.time = t;
  r.component = component_;
  r.channel = "-";
  r.dir = Direction::Local;
  r.type = type;
  r.digest = fnv1a(data);
  r.seq = seq_++;
  if (opts_.dump_payload) r.payload_hex = to_hex(data);
  write(r);
}

TraceWriter::TraceWriter(const std::filesystem::path& path, std::string component, TraceOptions opts)
    : TraceSink(std::move(component), opts) {
  if (!opts.enabled) return;
  out_.open(path, std::ios::binary | std::ios::trunc);
  if (!out_) throw Error(Errc::IoError, fmt::format("cannot open trace {}", path.string()));
  buf_.reserve(kFlushThreshold + 256);
}

TraceWriter::~TraceWriter() {
  try {
    flush();
  } catch (...) {
  }
}

void TraceWriter::write(const TraceRecord& r) {
  buf_ += format_record(r);
  buf_ += '\n';
  if (buf_.size() >= kFlushThreshold) flush();
}

void TraceWriter::flush() {
  if (!out_.is_open() || buf_.empty()) return;
  out_.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
  out_.flush();
  buf_.clear();
}

std::string canonicalize(std::string_view raw, CanonicalOptions opts) {
  std::string out;
  std::uint64_t seq = 0;
  while (!raw.empty()) {
    auto nl = raw.find('\n');
    std::string_view line = raw.substr(0, nl);
    raw = nl == std::string_view::npos ? std::string_view{} : raw.substr(nl + 1);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    auto rec = parse_record(line);
    if (!rec) throw Error(Errc::IoError, fmt::format("not a trace record: '{}'", line));
    if (rec->is_sync() && !opts.include_sync) continue;
    rec->payload_hex.clear();
    rec->seq = seq++;
    out += format_record(*rec);
    out += '\n';
  }
  return out;
}

namespace {
std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, fmt::format("cannot read {}", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}
}  // namespace

std::string canonicalize_file(const std::filesystem::path& path, CanonicalOptions opts) {
  return canonicalize(slurp(path), opts);
}

std::vector<TraceRecord> read_trace(const std::filesystem::path& path) {
  std::string raw = slurp(path);
  std::vector<TraceRecord> out;
  std::string_view rest = raw;
  while (!rest.empty()) {
    auto nl = rest.find('\n');
    std::string_view line = rest.substr(0, nl);
    rest = nl == std::string_view::npos ? std::string_view{} : rest.substr(nl + 1);
    if (line.empty()) continue;
    auto rec = parse_record(line);
    if (!rec) throw Error(Errc::IoError, fmt::format("{}: not a trace record: '{}'", path.string(), line));
    out.push_back(std::move(*rec));
  }
  return out;
}

}  // namespace cosim
