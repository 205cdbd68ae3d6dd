#pragma once

namespace pertucker {

inline constexpr const char* kVersionString = "0.1.0";

}  // namespace pertucker
