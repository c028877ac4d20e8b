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

#include "cosim/component.hpp"

#include <fmt/core.h>

#include "cosim/error.hpp"
#include "cosim/host.hpp"
#include "cosim/net.hpp"
#include "cosim/nic.hpp"

namespace cosim {

std::string_view iface_name(Iface i) {
  switch (i) {
    case Iface::PcieHost: return "pcie-host";
    case Iface::PcieDevice: return "pcie-device";
    case Iface::Ethernet: return "ethernet";
  }
  return "?";
}

bool is_known_kind(std::string_view kind) {
  return kind == "host" || kind == "nic" || kind == "switch" || kind == "pktgen";
}

std::vector<std::string> component_ports(const ComponentSpec& spec) {
  if (spec.kind == "host") return {"pci"};
  if (spec.kind == "nic") return {"pci", "eth"};
  if (spec.kind == "pktgen") return {"eth"};
  if (spec.kind == "switch") {
    SwitchParams p = SwitchParams::parse(spec.params, spec.id);
    std::vector<std::string> ports;
    for (std::size_t i = 0; i < p.ports; ++i) ports.push_back(std::to_string(i));
    return ports;
  }
  throw Error(Errc::ConfigError, fmt::format("{}: unknown component kind '{}'", spec.id, spec.kind));
}

Iface port_iface(const ComponentSpec& spec, const std::string& port) {
  auto ports = component_ports(spec);
  if (std::find(ports.begin(), ports.end(), port) == ports.end())
    throw Error(Errc::UnknownPort, fmt::format("{} ({}) has no port '{}'", spec.id, spec.kind, port));
  if (port == "pci") return spec.kind == "host" ? Iface::PcieHost : Iface::PcieDevice;
  return Iface::Ethernet;
}

void check_component_params(const ComponentSpec& spec, SimTime duration_ns) {
  if (spec.kind == "host")
    HostParams::parse(spec.params, spec.id);
  else if (spec.kind == "nic")
    NicParams::parse(spec.params, spec.id);
  else if (spec.kind == "switch")
    SwitchParams::parse(spec.params, spec.id);
  else if (spec.kind == "pktgen")
    PktgenParams::parse(spec.params, spec.id, duration_ns);
  else
    throw Error(Errc::ConfigError, fmt::format("{}: unknown component kind '{}'", spec.id, spec.kind));
}

std::unique_ptr<Component> make_component(const ComponentSpec& spec, SimTime duration_ns, Kernel& kernel) {
  if (spec.kind == "host") return std::make_unique<Host>(spec.id, kernel, HostParams::parse(spec.params, spec.id));
  if (spec.kind == "nic") return std::make_unique<Nic>(spec.id, kernel, NicParams::parse(spec.params, spec.id));
  if (spec.kind == "switch")
    return std::make_unique<Switch>(spec.id, kernel, SwitchParams::parse(spec.params, spec.id));
  if (spec.kind == "pktgen")
    return std::make_unique<Pktgen>(spec.id, kernel, PktgenParams::parse(spec.params, spec.id, duration_ns));
  throw Error(Errc::ConfigError, fmt::format("{}: unknown component kind '{}'", spec.id, spec.kind));
}

// ParamReader ----------------------------------------------------------------

ParamReader::ParamReader(const Json& obj, std::string context) : obj_(obj), context_(std::move(context)) {
  if (!obj_.is_object()) fail("parameters must be an object");
}

void ParamReader::fail(const std::string& what) const {
  throw Error(Errc::InvalidParams, fmt::format("{}: {}", context_, what));
}

std::uint64_t ParamReader::u64(const std::string& key) {
  if (!obj_.contains(key)) fail(fmt::format("missing '{}'", key));
  return u64(key, 0);
}

std::uint64_t ParamReader::u64(const std::string& key, std::uint64_t def) {
  used_.insert(key);
  auto it = obj_.find(key);
  if (it == obj_.end()) return def;
  if (!it->is_number_unsigned() && !(it->is_number_integer() && it->get<std::int64_t>() >= 0))
    fail(fmt::format("'{}' must be a non-negative integer", key));
  return it->get<std::uint64_t>();
}

std::string ParamReader::str(const std::string& key) {
  if (!obj_.contains(key)) fail(fmt::format("missing '{}'", key));
  return str(key, "");
}

std::string ParamReader::str(const std::string& key, const std::string& def) {
  used_.insert(key);
  auto it = obj_.find(key);
  if (it == obj_.end()) return def;
  if (!it->is_string()) fail(fmt::format("'{}' must be a string", key));
  return it->get<std::string>();
}

bool ParamReader::boolean(const std::string& key, bool def) {
  used_.insert(key);
  auto it = obj_.find(key);
  if (it == obj_.end()) return def;
  if (!it->is_boolean()) fail(fmt::format("'{}' must be true or false", key));
  return it->get<bool>();
}

const Json& ParamReader::raw(const std::string& key) {
  used_.insert(key);
  if (!obj_.contains(key)) fail(fmt::format("missing '{}'", key));
  return obj_.at(key);
}

void ParamReader::finish() const {
  for (const auto& [key, value] : obj_.items())
    if (!used_.count(key)) fail(fmt::format("unknown key '{}'", key));
}

}  // namespace cosim
