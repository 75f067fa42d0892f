#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <string_view>

namespace xrchat {

using SystemTime = std::chrono::system_clock::time_point;

// "2024-05-01T12:00:00.123Z"
std::string to_iso8601(SystemTime t);

std::string now_iso8601();

// Accepts YYYY-MM-DDTHH:MM:SS[.fraction](Z|+HH:MM|-HH:MM); anything else is nullopt.
std::optional<SystemTime> parse_iso8601(std::string_view s);

}  // namespace xrchat
