#include "inkmark/clock.hpp"

#include <cstdlib>
#include <ctime>

namespace inkmark {

std::string format_utc(std::chrono::system_clock::time_point t) {
  const std::time_t secs = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string utc_timestamp() {
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH"); epoch != nullptr && *epoch != '\0') {
    char* end = nullptr;
    const long long secs = std::strtoll(epoch, &end, 10);
    if (end != nullptr && *end == '\0') {
      return format_utc(std::chrono::system_clock::time_point(std::chrono::seconds(secs)));
    }
  }
  return format_utc(std::chrono::system_clock::now());
}

}  // namespace inkmark
