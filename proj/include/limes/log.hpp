#pragma once

#include <fmt/core.h>

#include <cstdio>
#include <string_view>

namespace limes::log {

/// Minimal stderr logger; LIMES_QUIET=1 silences warnings.
bool quiet();

template <typename... Args>
void warn(fmt::format_string<Args...> f, Args &&...args) {
  if (!quiet())
    fmt::print(stderr, "[limes] warning: {}\n", fmt::format(f, std::forward<Args>(args)...));
}

template <typename... Args>
void info(fmt::format_string<Args...> f, Args &&...args) {
  if (!quiet())
    fmt::print(stderr, "[limes] {}\n", fmt::format(f, std::forward<Args>(args)...));
}

} // namespace limes::log
