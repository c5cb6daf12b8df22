#pragma once

namespace cocot {

// Bump the major number whenever cached transcripts become incompatible
// (prompt assembly, digest canonicalization, or cache layout changes).
inline constexpr int kVersionMajor = 0;
inline constexpr int kVersionMinor = 1;
inline constexpr int kVersionPatch = 0;

inline constexpr const char* kHarnessVersion = "0.1.0";

}  // namespace cocot
