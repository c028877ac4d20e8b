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

#include "cosim/error.hpp"

#include <cstdlib>

#include "cosim/log.hpp"

namespace cosim {

std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::InvalidParams: return "InvalidParams";
    case Errc::OversizedMessage: return "OversizedMessage";
    case Errc::UnknownType: return "UnknownType";
    case Errc::TruncatedPayload: return "TruncatedPayload";
    case Errc::MalformedPayload: return "MalformedPayload";
    case Errc::AddressInUse: return "AddressInUse";
    case Errc::ShmCreateFailed: return "ShmCreateFailed";
    case Errc::HandshakeVersionMismatch: return "HandshakeVersionMismatch";
    case Errc::ConnectFailed: return "ConnectFailed";
    case Errc::MapFailed: return "MapFailed";
    case Errc::WouldBlock: return "WouldBlock";
    case Errc::AttachAfterStart: return "AttachAfterStart";
    case Errc::CausalityViolation: return "CausalityViolation";
    case Errc::DeadlockTimeout: return "DeadlockTimeout";
    case Errc::PeerExited: return "PeerExited";
    case Errc::Interrupted: return "Interrupted";
    case Errc::CompletionIdMismatch: return "CompletionIdMismatch";
    case Errc::DmaOutOfRange: return "DmaOutOfRange";
    case Errc::WorkloadTimeout: return "WorkloadTimeout";
    case Errc::ProtocolError: return "ProtocolError";
    case Errc::PeriodNotIntegral: return "PeriodNotIntegral";
    case Errc::ParamMismatch: return "ParamMismatch";
    case Errc::TcpClosed: return "TcpClosed";
    case Errc::ConfigError: return "ConfigError";
    case Errc::UnknownComponent: return "UnknownComponent";
    case Errc::UnknownPort: return "UnknownPort";
    case Errc::PortReused: return "PortReused";
    case Errc::UnconnectedPort: return "UnconnectedPort";
    case Errc::DuplicateId: return "DuplicateId";
    case Errc::InterfaceKindMismatch: return "InterfaceKindMismatch";
    case Errc::LoopDetected: return "LoopDetected";
    case Errc::SpawnFailed: return "SpawnFailed";
    case Errc::StartupTimeout: return "StartupTimeout";
    case Errc::WatchdogTimeout: return "WatchdogTimeout";
    case Errc::ComponentCrashed: return "ComponentCrashed";
    case Errc::IoError: return "IoError";
  }
  return "Unknown";
}

namespace log {

Level threshold() {
  static const Level level = [] {
    const char* env = std::getenv("COSIM_VERBOSE");
    if (env == nullptr || *env == '\0') return Level::Warn;
    int v = std::atoi(env);
    if (v <= 0) return Level::Error;
    if (v >= 3) return Level::Debug;
    return static_cast<Level>(v);
  }();
  return level;
}

}  // namespace log

}  // namespace cosim
