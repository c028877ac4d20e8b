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
 * @file config.hpp
 * @brief Experiment description: components, channels and run settings.
 *
 * The on-disk form is JSON:
 *
 *   {
 *     "name": "pingpong",
 *     "duration_ns": 10000000,
 *     "channel_defaults": {"latency_ns": 500, "sync_interval_ns": 500},
 *     "components": [
 *       {"id": "h0", "kind": "host", "mac": "02:00:00:00:00:01",
 *        "workload": {"kind": "pingpong", "peer_mac": "02:00:00:00:00:02", "count": 100}},
 *       {"id": "n0", "kind": "nic"}
 *     ],
 *     "channels": [
 *       {"a": "h0.pci", "b": "n0.pci"},
 *       {"a": "n0.eth", "b": "sw.0", "latency_ns": 1000, "via_proxy": {"port": 0}}
 *     ]
 *   }
 *
 * Component entries hold `id`, `kind`, an optional `binary` and otherwise
 * kind-specific keys. Side `a` of a channel listens, side `b` connects.
 */

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cosim/component.hpp"
#include "cosim/error.hpp"

namespace cosim {

struct Endpoint {
  std::string component;
  std::string port;

  std::string str() const { return component + "." + port; }
  bool operator==(const Endpoint&) const = default;
};

struct ProxySpec {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;  // 0: pick a free port at launch
};

struct ChannelSpec {
  std::string id;
  Endpoint a;
  Endpoint b;
  ChannelParams params;
  std::optional<ProxySpec> via_proxy;
};

struct ExperimentConfig {
  std::string name;
  SimTime duration_ns = 0;
  ChannelParams channel_defaults;
  double watchdog_s = 30;
  double startup_timeout_s = 30;
  std::vector<ComponentSpec> components;
  std::vector<ChannelSpec> channels;

  /// Throws UnknownComponent.
  std::size_t component_index(const std::string& id) const;
  const ComponentSpec& component(const std::string& id) const { return components[component_index(id)]; }
};

/// Structural parse; semantic checks are in check_config().
ExperimentConfig parse_config(const Json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
Json to_json(const ExperimentConfig& cfg);

struct ConfigIssue {
  Errc code;
  std::string message;
};

/// Every problem found, in a stable order. Empty means valid.
std::vector<ConfigIssue> check_config(const ExperimentConfig& cfg);
/// Throws the first issue as an Error.
void validate(const ExperimentConfig& cfg);

/// The channels of one component in attach order.
struct PortBinding {
  std::string port;
  std::size_t channel;
  bool side_a;
};
std::vector<PortBinding> port_bindings(const ExperimentConfig& cfg, std::size_t component);

}  // namespace cosim
