#pragma once

#include <string_view>

namespace sar2sar {

/// Recorded in checkpoints and manifests.
inline constexpr std::string_view kCodeVersion = "0.1.0";

} // namespace sar2sar
