#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "gapnp/track.hpp"
#include "gapnp/vehicle.hpp"

namespace gapnp {

/// Reads "angle distance" lines (radians, metres). Blank lines and lines
/// starting with '#' are skipped. Throws ParseError naming the line.
sim::Scan read_scan(std::istream& in, const std::string& source, double max_range = 10.0);
sim::Scan load_scan(const std::filesystem::path& path, double max_range = 10.0);

/// Loads `<dir>/<name>.track`. A relative dir that does not exist under the
/// working directory is looked up under the source tree.
sim::TrackMap load_named_track(const std::string& name, const std::filesystem::path& dir);
std::filesystem::path resolve_data_dir(const std::filesystem::path& dir);

}  // namespace gapnp
