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

#include "cosim/config.hpp"

#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include <fmt/core.h>

namespace cosim {

namespace {

[[noreturn]] void bad(const std::string& what) { throw Error(Errc::ConfigError, what); }

bool non_negative_int(const Json& v) {
  return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

ChannelParams read_params(const Json& j, ChannelParams p, std::set<std::string>* used) {
  auto num = [&](const char* key, auto& field) {
    if (used) used->insert(key);
    if (!j.contains(key)) return;
    const Json& v = j.at(key);
    if (!non_negative_int(v)) bad(fmt::format("'{}' must be a non-negative integer", key));
    field = v.get<std::remove_reference_t<decltype(field)>>();
  };
  num("latency_ns", p.link_latency_ns);
  num("sync_interval_ns", p.sync_interval_ns);
  num("slot_bytes", p.slot_size_bytes);
  num("queue_slots", p.queue_len_slots);
  if (used) used->insert("synchronized");
  if (j.contains("synchronized")) {
    if (!j.at("synchronized").is_boolean()) bad("'synchronized' must be true or false");
    p.synchronized = j.at("synchronized").get<bool>();
  }
  return p;
}

Json params_json(const ChannelParams& p) {
  return Json{{"latency_ns", p.link_latency_ns},
              {"sync_interval_ns", p.sync_interval_ns},
              {"slot_bytes", p.slot_size_bytes},
              {"queue_slots", p.queue_len_slots},
              {"synchronized", p.synchronized}};
}

Endpoint read_endpoint(const Json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_string()) bad(fmt::format("channel needs a string '{}'", key));
  std::string s = j.at(key).get<std::string>();
  auto dot = s.rfind('.');
  if (dot == std::string::npos || dot == 0 || dot + 1 == s.size())
    bad(fmt::format("endpoint '{}' is not <component>.<port>", s));
  return Endpoint{s.substr(0, dot), s.substr(dot + 1)};
}

bool valid_id(const std::string& id) {
  if (id.empty() || id.size() > 64) return false;
  for (char c : id)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-') return false;
  return true;
}

double read_seconds(const Json& j, const char* key, double def) {
  if (!j.contains(key)) return def;
  if (!j.at(key).is_number() || j.at(key).get<double>() <= 0) bad(fmt::format("'{}' must be a positive number", key));
  return j.at(key).get<double>();
}

struct UnionFind {
  std::vector<std::size_t> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  bool unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent[a] = b;
    return true;
  }
};

}  // namespace

std::size_t ExperimentConfig::component_index(const std::string& id) const {
  for (std::size_t i = 0; i < components.size(); ++i)
    if (components[i].id == id) return i;
  throw Error(Errc::UnknownComponent, fmt::format("no component '{}'", id));
}

ExperimentConfig parse_config(const Json& j) {
  if (!j.is_object()) bad("config must be a JSON object");
  static const std::set<std::string> kTopKeys = {"name",       "duration_ns",       "channel_defaults", "watchdog_s",
                                                 "startup_timeout_s", "components", "channels"};
  for (const auto& [k, v] : j.items())
    if (!kTopKeys.count(k)) bad(fmt::format("unknown top-level key '{}'", k));

  ExperimentConfig cfg;
  cfg.name = j.value("name", std::string("experiment"));
  if (!j.contains("duration_ns") || !non_negative_int(j.at("duration_ns"))) bad("'duration_ns' is required");
  cfg.duration_ns = j.at("duration_ns").get<SimTime>();
  if (j.contains("channel_defaults")) {
    std::set<std::string> used;
    cfg.channel_defaults = read_params(j.at("channel_defaults"), ChannelParams{}, &used);
    for (const auto& [k, v] : j.at("channel_defaults").items())
      if (!used.count(k)) bad(fmt::format("unknown channel_defaults key '{}'", k));
  }
  cfg.watchdog_s = read_seconds(j, "watchdog_s", cfg.watchdog_s);
  cfg.startup_timeout_s = read_seconds(j, "startup_timeout_s", cfg.startup_timeout_s);

  if (!j.contains("components") || !j.at("components").is_array()) bad("'components' must be a list");
  for (const Json& c : j.at("components")) {
    if (!c.is_object()) bad("component entries must be objects");
    ComponentSpec spec;
    if (!c.contains("id") || !c.at("id").is_string()) bad("component without string 'id'");
    if (!c.contains("kind") || !c.at("kind").is_string()) bad("component without string 'kind'");
    spec.id = c.at("id").get<std::string>();
    spec.kind = c.at("kind").get<std::string>();
    if (c.contains("binary")) {
      if (!c.at("binary").is_string()) bad("'binary' must be a string");
      spec.binary = c.at("binary").get<std::string>();
    }
    for (const auto& [k, v] : c.items())
      if (k != "id" && k != "kind" && k != "binary") spec.params[k] = v;
    cfg.components.push_back(std::move(spec));
  }

  if (!j.contains("channels") || !j.at("channels").is_array()) bad("'channels' must be a list");
  for (const Json& c : j.at("channels")) {
    if (!c.is_object()) bad("channel entries must be objects");
    std::set<std::string> used = {"a", "b", "id", "via_proxy"};
    ChannelSpec ch;
    ch.a = read_endpoint(c, "a");
    ch.b = read_endpoint(c, "b");
    ch.id = c.value("id", ch.a.str() + "-" + ch.b.str());
    ch.params = read_params(c, cfg.channel_defaults, &used);
    if (c.contains("via_proxy")) {
      const Json& v = c.at("via_proxy");
      if (v.is_boolean()) {
        if (v.get<bool>()) ch.via_proxy = ProxySpec{};
      } else if (v.is_object()) {
        ProxySpec ps;
        ps.host = v.value("host", ps.host);
        std::uint64_t port = v.value("port", std::uint64_t{0});
        if (port > 65535) bad("proxy port out of range");
        ps.port = static_cast<std::uint16_t>(port);
        ch.via_proxy = ps;
      } else {
        bad("'via_proxy' must be true/false or an object");
      }
    }
    for (const auto& [k, v] : c.items())
      if (!used.count(k)) bad(fmt::format("unknown channel key '{}'", k));
    cfg.channels.push_back(std::move(ch));
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, fmt::format("cannot read config {}", path.string()));
  Json j;
  try {
    j = Json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const Json::parse_error& e) {
    bad(fmt::format("{}: {}", path.string(), e.what()));
  }
  return parse_config(j);
}

Json to_json(const ExperimentConfig& cfg) {
  Json j;
  j["name"] = cfg.name;
  j["duration_ns"] = cfg.duration_ns;
  j["channel_defaults"] = params_json(cfg.channel_defaults);
  j["watchdog_s"] = cfg.watchdog_s;
  j["startup_timeout_s"] = cfg.startup_timeout_s;
  j["components"] = Json::array();
  for (const auto& c : cfg.components) {
    Json e = c.params;
    e["id"] = c.id;
    e["kind"] = c.kind;
    if (!c.binary.empty()) e["binary"] = c.binary;
    j["components"].push_back(e);
  }
  j["channels"] = Json::array();
  for (const auto& ch : cfg.channels) {
    Json e = params_json(ch.params);
    e["id"] = ch.id;
    e["a"] = ch.a.str();
    e["b"] = ch.b.str();
    if (ch.via_proxy) e["via_proxy"] = Json{{"host", ch.via_proxy->host}, {"port", ch.via_proxy->port}};
    j["channels"].push_back(e);
  }
  return j;
}

std::vector<ConfigIssue> check_config(const ExperimentConfig& cfg) {
  std::vector<ConfigIssue> issues;
  auto add = [&](Errc code, std::string msg) { issues.push_back({code, std::move(msg)}); };

  if (cfg.duration_ns == 0) add(Errc::ConfigError, "duration_ns must be > 0");

  std::set<std::string> ids;
  std::vector<bool> kind_ok(cfg.components.size(), false);
  for (std::size_t i = 0; i < cfg.components.size(); ++i) {
    const ComponentSpec& c = cfg.components[i];
    if (!valid_id(c.id)) add(Errc::ConfigError, fmt::format("component id '{}' must match [A-Za-z0-9_-]{{1,64}}", c.id));
    if (!ids.insert(c.id).second) add(Errc::DuplicateId, fmt::format("component id '{}' used twice", c.id));
    if (!is_known_kind(c.kind)) {
      add(Errc::ConfigError, fmt::format("{}: unknown kind '{}'", c.id, c.kind));
      continue;
    }
    try {
      check_component_params(c, cfg.duration_ns);
      kind_ok[i] = true;
    } catch (const Error& e) {
      add(e.code(), e.what());
    }
  }

  std::set<std::string> chan_ids;
  std::map<std::pair<std::size_t, std::string>, std::size_t> used_ports;
  UnionFind uf(cfg.components.size());
  std::vector<std::size_t> eth_channels;
  for (std::size_t ci = 0; ci < cfg.channels.size(); ++ci) {
    const ChannelSpec& ch = cfg.channels[ci];
    if (!chan_ids.insert(ch.id).second) add(Errc::DuplicateId, fmt::format("channel id '{}' used twice", ch.id));
    if (ch.id.find_first_of(" \t\n/") != std::string::npos)
      add(Errc::ConfigError, fmt::format("channel id '{}' contains whitespace or '/'", ch.id));
    try {
      ch.params.validate();
    } catch (const Error& e) {
      add(e.code(), fmt::format("channel {}: {}", ch.id, e.what()));
    }

    std::optional<Iface> ifaces[2];
    std::size_t comp_idx[2] = {0, 0};
    bool resolved = true;
    const Endpoint* eps[2] = {&ch.a, &ch.b};
    for (int s = 0; s < 2; ++s) {
      const Endpoint& ep = *eps[s];
      auto it = std::find_if(cfg.components.begin(), cfg.components.end(),
                             [&](const ComponentSpec& c) { return c.id == ep.component; });
      if (it == cfg.components.end()) {
        add(Errc::UnknownComponent, fmt::format("channel {}: no component '{}'", ch.id, ep.component));
        resolved = false;
        continue;
      }
      comp_idx[s] = static_cast<std::size_t>(it - cfg.components.begin());
      if (!kind_ok[comp_idx[s]]) {
        resolved = false;
        continue;
      }
      try {
        ifaces[s] = port_iface(*it, ep.port);
      } catch (const Error& e) {
        add(e.code(), fmt::format("channel {}: {}", ch.id, e.what()));
        resolved = false;
        continue;
      }
      auto [pos, fresh] = used_ports.emplace(std::pair(comp_idx[s], ep.port), ci);
      if (!fresh)
        add(Errc::PortReused, fmt::format("channel {}: port {} already used by channel {}", ch.id, ep.str(),
                                          cfg.channels[pos->second].id));
    }
    if (!resolved) continue;
    if (comp_idx[0] == comp_idx[1]) {
      add(Errc::LoopDetected, fmt::format("channel {} connects {} to itself", ch.id, ch.a.component));
      continue;
    }
    bool pcie_pair = (*ifaces[0] == Iface::PcieHost && *ifaces[1] == Iface::PcieDevice) ||
                     (*ifaces[0] == Iface::PcieDevice && *ifaces[1] == Iface::PcieHost);
    bool eth_pair = *ifaces[0] == Iface::Ethernet && *ifaces[1] == Iface::Ethernet;
    if (!pcie_pair && !eth_pair) {
      add(Errc::InterfaceKindMismatch, fmt::format("channel {}: {} is {} but {} is {}", ch.id, ch.a.str(),
                                                   iface_name(*ifaces[0]), ch.b.str(), iface_name(*ifaces[1])));
      continue;
    }
    if (eth_pair && !uf.unite(comp_idx[0], comp_idx[1]))
      add(Errc::LoopDetected, fmt::format("channel {} closes an Ethernet loop", ch.id));
  }

  for (std::size_t i = 0; i < cfg.components.size(); ++i) {
    if (!kind_ok[i]) continue;
    for (const std::string& port : component_ports(cfg.components[i]))
      if (!used_ports.count({i, port}))
        add(Errc::UnconnectedPort, fmt::format("{}.{} is not connected", cfg.components[i].id, port));
  }
  return issues;
}

void validate(const ExperimentConfig& cfg) {
  auto issues = check_config(cfg);
  if (!issues.empty()) throw Error(issues.front().code, issues.front().message);
}

std::vector<PortBinding> port_bindings(const ExperimentConfig& cfg, std::size_t component) {
  const ComponentSpec& spec = cfg.components.at(component);
  std::vector<PortBinding> out;
  for (const std::string& port : component_ports(spec)) {
    for (std::size_t ci = 0; ci < cfg.channels.size(); ++ci) {
      const ChannelSpec& ch = cfg.channels[ci];
      if (ch.a.component == spec.id && ch.a.port == port) out.push_back({port, ci, true});
      else if (ch.b.component == spec.id && ch.b.port == port) out.push_back({port, ci, false});
    }
  }
  return out;
}

}  // namespace cosim
