#pragma once

namespace pdspeech {

inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace pdspeech
