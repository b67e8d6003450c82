#pragma once

namespace dnlkit {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace dnlkit
