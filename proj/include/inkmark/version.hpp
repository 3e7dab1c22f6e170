#pragma once

namespace inkmark {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace inkmark
