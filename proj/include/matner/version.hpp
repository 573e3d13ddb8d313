#pragma once

namespace matner {
inline constexpr const char* kToolName = "matner";
inline constexpr const char* kToolVersion = "1.0.0";
}  // namespace matner
