#pragma once

// Command-line front end. Verbs: project, align-spatial, align-temporal,
// reconstruct, render, export-ply. Global flags: --config PATH, --seed N,
// --jobs N, --verbose.
//
// Exit codes: 0 success, 2 input or validation error, 3 numerical or
// optimization failure, 1 anything unexpected.

#include "pano4d/camera.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace pano4d::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitInput = 2;
inline constexpr int kExitNumerical = 3;

/// `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Output names for a projection rig: view_<azimuth degrees> when every view
/// is equatorial with a distinct whole-degree azimuth, else view_<index>;
/// three digits, zero padded.
std::vector<std::string> view_stems(const std::vector<PerspectiveCamera>& cams);

}  // namespace pano4d::cli
