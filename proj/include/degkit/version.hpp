#pragma once

namespace degkit {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace degkit
