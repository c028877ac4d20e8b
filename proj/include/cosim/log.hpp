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

#pragma once

#include <cstdio>
#include <utility>

#include <fmt/core.h>

namespace cosim::log {

enum class Level { Error = 0, Warn = 1, Info = 2, Debug = 3 };

// Read once from COSIM_VERBOSE (0..3, default 1).
Level threshold();

template <typename... Args>
void emit(Level lvl, const char* tag, fmt::format_string<Args...> f, Args&&... args) {
  if (static_cast<int>(lvl) > static_cast<int>(threshold())) return;
  fmt::print(stderr, "[{}] {}\n", tag, fmt::format(f, std::forward<Args>(args)...));
}

template <typename... Args>
void error(fmt::format_string<Args...> f, Args&&... args) {
  emit(Level::Error, "error", f, std::forward<Args>(args)...);
}
template <typename... Args>
void warn(fmt::format_string<Args...> f, Args&&... args) {
  emit(Level::Warn, "warn", f, std::forward<Args>(args)...);
}
template <typename... Args>
void info(fmt::format_string<Args...> f, Args&&... args) {
  emit(Level::Info, "info", f, std::forward<Args>(args)...);
}
template <typename... Args>
void debug(fmt::format_string<Args...> f, Args&&... args) {
  emit(Level::Debug, "debug", f, std::forward<Args>(args)...);
}

}  // namespace cosim::log
