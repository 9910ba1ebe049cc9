#include "gapnp/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <sstream>

#include "gapnp/errors.hpp"

namespace gapnp {

sim::Scan read_scan(std::istream& in, const std::string& source, double max_range) {
    sim::Scan scan;
    scan.max_range = max_range;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        std::istringstream ss(line);
        double angle = 0.0, dist = 0.0;
        std::string extra;
        if (!(ss >> angle >> dist) || (ss >> extra)) throw ParseError(source, lineno, "expected 'angle distance'");
        if (!std::isfinite(angle) || !std::isfinite(dist) || dist <= 0.0) {
            throw ParseError(source, lineno, "distance must be positive and finite");
        }
        scan.angles.push_back(angle);
        scan.distances.push_back(std::min(dist, max_range));
    }
    if (scan.distances.empty()) throw ParseError(source, lineno, "scan has no beams");
    return scan;
}

sim::Scan load_scan(const std::filesystem::path& path, double max_range) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open scan file " + path.string());
    return read_scan(in, path.string(), max_range);
}

std::filesystem::path resolve_data_dir(const std::filesystem::path& dir) {
    if (dir.is_absolute() || std::filesystem::exists(dir)) return dir;
    const std::filesystem::path fallback = std::filesystem::path(GAPNP_SOURCE_DIR) / dir;
    return std::filesystem::exists(fallback) ? fallback : dir;
}

sim::TrackMap load_named_track(const std::string& name, const std::filesystem::path& dir) {
    const std::filesystem::path path = resolve_data_dir(dir) / (name + ".track");
    if (!std::filesystem::exists(path)) throw DataError("track file not found: " + path.string());
    return sim::load_track(path);
}

}  // namespace gapnp
