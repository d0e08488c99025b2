#pragma once

namespace breakscope {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace breakscope
