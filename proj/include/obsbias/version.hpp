#pragma once

namespace obsbias {

inline constexpr const char* version() { return "0.1.0"; }

}  // namespace obsbias
