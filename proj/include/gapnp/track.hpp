#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "gapnp/geometry.hpp"

namespace gapnp::sim {

/// Static racetrack geometry. Immutable after construction.
///
/// Closed tracks carry an outer and an inner boundary loop plus a centerline
/// in the driving direction; the centerline drives lap progress and respawn.
/// Open maps (corridors, rooms used in tests) carry only free wall segments.
struct TrackMap {
    std::string name;
    std::vector<Vec2> outer_loop;
    std::vector<Vec2> inner_loop;
    std::vector<Segment> extra_walls;
    std::vector<Vec2> centerline;
    Pose start_pose;
    Segment finish_line;
    bool has_finish_line = false;

    /// Every wall segment: outer loop, inner loop, then free segments.
    std::vector<Segment> walls;

    /// Rebuilds `walls` from the loops and free segments.
    void rebuild_walls();

    bool is_closed_track() const { return !outer_loop.empty(); }

    /// True when p is inside the outer loop and outside the inner loop.
    /// Maps without loops accept every point.
    bool contains(Vec2 p) const;

    /// Index of the centerline vertex nearest to p.
    std::size_t nearest_centerline_index(Vec2 p) const;
    /// Unit tangent of the centerline at vertex i (driving direction).
    Vec2 centerline_tangent(std::size_t i) const;
    double centerline_length() const;
};

/// Checks the loop invariants: closed loops, start pose strictly between them.
/// Throws ConfigError naming the violated invariant.
void validate_track(const TrackMap& map);

/// Text format (see docs/formats.md), meters with 6-decimal fixed point.
void write_track(std::ostream& out, const TrackMap& map);
TrackMap read_track(std::istream& in, const std::string& source_name);
void save_track(const std::filesystem::path& path, const TrackMap& map);
TrackMap load_track(const std::filesystem::path& path);

/// Builds a closed track from a counter-clockwise centerline and a per-vertex
/// half width. The start pose sits on vertex 0 and the finish line crosses the
/// track `finish_offset` meters ahead of it.
TrackMap track_from_centerline(std::string name, const std::vector<Vec2>& centerline,
                               const std::vector<double>& half_width, double finish_offset = 1.0);

// Bundled synthetic tracks.
TrackMap make_oval_track();
TrackMap make_scurve_track();
TrackMap make_pinch_chicane_track();

/// Axis-aligned square room of the given side, centered on the origin.
TrackMap make_square_room(double side);
/// Straight corridor along +x from x0 to x1 with walls at y = +-half_width.
TrackMap make_corridor(double x0, double x1, double half_width);

/// Reflects a map about the x-axis.
TrackMap mirror_about_x(const TrackMap& map);

}  // namespace gapnp::sim
