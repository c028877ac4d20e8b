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
 * @file component.hpp
 * @brief Common shape of the built-in component simulators.
 *
 * A component owns no transport. The driver (a component process or the
 * monolith runner) attaches one kernel peer per port, in ports() order, and
 * then calls bind() for each so the component can install its handlers.
 * Because attach order fixes the tie-break order, both drivers produce the
 * same event sequence.
 */

#pragma once

#include <memory>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "cosim/sync.hpp"

namespace cosim {

using Json = nlohmann::json;

/// One entry of the config's component list.
struct ComponentSpec {
  std::string id;
  std::string kind;
  Json params = Json::object();  // kind-specific keys only
  std::string binary;            // empty: cosim-<kind> next to the orchestrator
};

enum class Iface { PcieHost, PcieDevice, Ethernet };

std::string_view iface_name(Iface i);

class Component {
 public:
  Component(std::string id, Kernel& kernel) : id_(std::move(id)), kernel_(kernel) {}
  virtual ~Component() = default;
  Component(const Component&) = delete;
  Component& operator=(const Component&) = delete;

  const std::string& id() const { return id_; }
  Kernel& kernel() { return kernel_; }

  virtual void bind(const std::string& port, PeerId peer) = 0;
  /// Schedules the initial events; called once after every port is bound.
  virtual void start() {}
  /// Final `key=value` lines in a stable order.
  virtual void write_results(std::ostream& out) const = 0;

 private:
  std::string id_;
  Kernel& kernel_;
};

/// Ports of a component in attach order. Throws InvalidParams on bad params.
std::vector<std::string> component_ports(const ComponentSpec& spec);
/// Throws UnknownPort when `port` is not a port of the component.
Iface port_iface(const ComponentSpec& spec, const std::string& port);
bool is_known_kind(std::string_view kind);

/// Parses params fully (so validation errors surface before any launch).
void check_component_params(const ComponentSpec& spec, SimTime duration_ns);
std::unique_ptr<Component> make_component(const ComponentSpec& spec, SimTime duration_ns, Kernel& kernel);

/// Strict reader for a flat JSON parameter object: typed getters with
/// defaults, and finish() rejects keys nobody asked for.
class ParamReader {
 public:
  ParamReader(const Json& obj, std::string context);

  std::uint64_t u64(const std::string& key, std::uint64_t def);
  std::uint64_t u64(const std::string& key);
  std::string str(const std::string& key, const std::string& def);
  std::string str(const std::string& key);
  bool boolean(const std::string& key, bool def);
  bool has(const std::string& key) const { return obj_.contains(key); }
  const Json& raw(const std::string& key);

  /// Throws InvalidParams when a key was never read.
  void finish() const;
  [[noreturn]] void fail(const std::string& what) const;

 private:
  const Json& obj_;
  std::string context_;
  std::set<std::string> used_;
};

}  // namespace cosim
