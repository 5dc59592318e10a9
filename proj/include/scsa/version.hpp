#pragma once

namespace scsa {
inline constexpr const char* kLibraryVersion = "0.1.0";
}
