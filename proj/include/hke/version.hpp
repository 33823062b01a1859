#pragma once

namespace hke {

inline constexpr const char* version() { return "0.1.0"; }

} // namespace hke
