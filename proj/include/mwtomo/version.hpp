#pragma once

namespace mwt {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace mwt
