#pragma once

#include <chrono>
#include <string>

namespace inkmark {

/// ISO-8601 UTC timestamp ("2024-01-02T03:04:05Z"). Honors SOURCE_DATE_EPOCH
/// so reproducible runs can pin the clock.
std::string utc_timestamp();

std::string format_utc(std::chrono::system_clock::time_point t);

}  // namespace inkmark
