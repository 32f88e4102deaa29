#pragma once

namespace opal {

inline constexpr const char* kVersion = "1.0.0";

}  // namespace opal
