#pragma once

namespace cpga {

inline constexpr const char* kVersionString = "0.1.0";

}  // namespace cpga
