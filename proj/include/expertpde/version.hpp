// SPDX-License-Identifier: MIT
#pragma once

namespace expertpde {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace expertpde
