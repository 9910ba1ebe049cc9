#include "gapnp/track.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "gapnp/errors.hpp"

namespace gapnp::sim {

namespace {

constexpr double kPi = std::numbers::pi;

void append_loop(std::vector<Segment>& out, const std::vector<Vec2>& loop) {
    for (std::size_t i = 0; i < loop.size(); ++i) out.push_back({loop[i], loop[(i + 1) % loop.size()]});
}

bool point_in_polygon(Vec2 p, const std::vector<Vec2>& poly) {
    bool inside = false;
    for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
        const Vec2 a = poly[i], b = poly[j];
        if ((a.y > p.y) != (b.y > p.y)) {
            const double x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if (p.x < x_cross) inside = !inside;
        }
    }
    return inside;
}

std::string fmt6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    // Avoid "-0.000000" so mirrored maps print cleanly.
    if (std::string(buf) == "-0.000000") return "0.000000";
    return buf;
}

std::string segment_line(const Segment& s) {
    return fmt6(s.a.x) + " " + fmt6(s.a.y) + " " + fmt6(s.b.x) + " " + fmt6(s.b.y);
}

std::vector<double> cumulative_length(const std::vector<Vec2>& pts) {
    std::vector<double> s(pts.size(), 0.0);
    for (std::size_t i = 1; i < pts.size(); ++i) s[i] = s[i - 1] + norm(pts[i] - pts[i - 1]);
    return s;
}

/// Resamples a closed dense polyline at roughly uniform spacing.
std::vector<Vec2> resample_closed(const std::vector<Vec2>& dense, double spacing) {
    std::vector<Vec2> closed = dense;
    closed.push_back(dense.front());
    const auto s = cumulative_length(closed);
    const double total = s.back();
    const auto n = static_cast<std::size_t>(std::max(8.0, std::round(total / spacing)));
    std::vector<Vec2> out;
    out.reserve(n);
    std::size_t j = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double target = total * static_cast<double>(i) / static_cast<double>(n);
        while (j + 1 < closed.size() && s[j + 1] < target) ++j;
        const double seg = s[j + 1] - s[j];
        const double t = seg > 0 ? (target - s[j]) / seg : 0.0;
        out.push_back(closed[j] + t * (closed[j + 1] - closed[j]));
    }
    return out;
}

double smooth_bump(double u) {
    if (u <= 0.0 || u >= 1.0) return 0.0;
    const double s = std::sin(kPi * u);
    return s * s;
}

/// Dense stadium centerline: bottom straight heading +x, CCW.
std::vector<Vec2> stadium(double straight, double radius, std::size_t per_meter = 20) {
    std::vector<Vec2> pts;
    const double half = straight / 2.0;
    const auto n_straight = static_cast<std::size_t>(straight * per_meter);
    const auto n_arc = static_cast<std::size_t>(kPi * radius * per_meter);
    for (std::size_t i = 0; i < n_straight; ++i)
        pts.push_back({-half + straight * i / n_straight, -radius});
    for (std::size_t i = 0; i < n_arc; ++i) {
        const double a = -kPi / 2 + kPi * i / n_arc;
        pts.push_back({half + radius * std::cos(a), radius * std::sin(a)});
    }
    for (std::size_t i = 0; i < n_straight; ++i)
        pts.push_back({half - straight * i / n_straight, radius});
    for (std::size_t i = 0; i < n_arc; ++i) {
        const double a = kPi / 2 + kPi * i / n_arc;
        pts.push_back({-half + radius * std::cos(a), radius * std::sin(a)});
    }
    return pts;
}

}  // namespace

void TrackMap::rebuild_walls() {
    walls.clear();
    append_loop(walls, outer_loop);
    append_loop(walls, inner_loop);
    walls.insert(walls.end(), extra_walls.begin(), extra_walls.end());
}

bool TrackMap::contains(Vec2 p) const {
    if (!outer_loop.empty() && !point_in_polygon(p, outer_loop)) return false;
    if (!inner_loop.empty() && point_in_polygon(p, inner_loop)) return false;
    return true;
}

std::size_t TrackMap::nearest_centerline_index(Vec2 p) const {
    if (centerline.empty()) throw ContractError("track '" + name + "' has no centerline");
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < centerline.size(); ++i) {
        const Vec2 d = centerline[i] - p;
        const double d2 = dot(d, d);
        if (d2 < best_d) {
            best_d = d2;
            best = i;
        }
    }
    return best;
}

Vec2 TrackMap::centerline_tangent(std::size_t i) const {
    const std::size_t n = centerline.size();
    const Vec2 d = centerline[(i + 1) % n] - centerline[(i + n - 1) % n];
    const double len = norm(d);
    return len > 0 ? (1.0 / len) * d : Vec2{1.0, 0.0};
}

double TrackMap::centerline_length() const {
    double total = 0.0;
    for (std::size_t i = 0; i < centerline.size(); ++i)
        total += norm(centerline[(i + 1) % centerline.size()] - centerline[i]);
    return total;
}

void validate_track(const TrackMap& map) {
    if (map.walls.empty()) throw ConfigError("track '" + map.name + "' has no walls");
    if (map.outer_loop.empty() != map.inner_loop.empty()) {
        throw ConfigError("track '" + map.name + "' must define both boundary loops or neither");
    }
    for (const auto* loop : {&map.outer_loop, &map.inner_loop}) {
        if (!loop->empty() && loop->size() < 3) {
            throw ConfigError("track '" + map.name + "' has a boundary loop with fewer than 3 vertices");
        }
    }
    if (map.is_closed_track()) {
        const Vec2 start{map.start_pose.x, map.start_pose.y};
        if (!map.contains(start)) {
            throw ConfigError("track '" + map.name + "': start pose is not between the boundary loops");
        }
        for (const Segment& w : map.walls) {
            if (point_segment_distance(start, w) == 0.0) {
                throw ConfigError("track '" + map.name + "': start pose lies on a wall");
            }
        }
    }
}

void write_track(std::ostream& out, const TrackMap& map) {
    out << "# gapnp track v1 (meters, radians)\n";
    out << "name " << map.name << '\n';
    const Pose& p = map.start_pose;
    out << "start_pose " << fmt6(p.x) << ' ' << fmt6(p.y) << ' ' << fmt6(p.theta) << '\n';
    if (map.has_finish_line) out << "finish_line " << segment_line(map.finish_line) << '\n';
    auto write_loop = [&](const char* label, const std::vector<Vec2>& loop) {
        if (loop.empty()) return;
        out << "loop " << label << ' ' << loop.size() << '\n';
        for (std::size_t i = 0; i < loop.size(); ++i)
            out << segment_line({loop[i], loop[(i + 1) % loop.size()]}) << '\n';
    };
    write_loop("outer", map.outer_loop);
    write_loop("inner", map.inner_loop);
    if (!map.extra_walls.empty()) {
        out << "walls " << map.extra_walls.size() << '\n';
        for (const auto& s : map.extra_walls) out << segment_line(s) << '\n';
    }
    if (!map.centerline.empty()) {
        out << "centerline " << map.centerline.size() << '\n';
        for (const auto& c : map.centerline) out << fmt6(c.x) << ' ' << fmt6(c.y) << '\n';
    }
}

TrackMap read_track(std::istream& in, const std::string& source) {
    TrackMap map;
    std::string line;
    std::size_t line_no = 0;
    bool have_start = false;

    auto next_data_line = [&](const char* what) -> std::string {
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty() || line[0] == '#') continue;
            return line;
        }
        throw ParseError(source, line_no, std::string("unexpected end of file while reading ") + what);
    };
    auto parse_numbers = [&](const std::string& text, std::size_t count, const char* what) {
        std::istringstream ss(text);
        std::vector<double> v(count);
        for (auto& x : v) {
            if (!(ss >> x)) throw ParseError(source, line_no, std::string("expected ") + std::to_string(count) + " numbers for " + what);
        }
        std::string extra;
        if (ss >> extra) throw ParseError(source, line_no, std::string("trailing text after ") + what);
        return v;
    };
    auto read_count = [&](std::istringstream& ss, const char* what) {
        long long n = -1;
        if (!(ss >> n) || n < 0) throw ParseError(source, line_no, std::string("bad count for ") + what);
        return static_cast<std::size_t>(n);
    };
    auto read_segments = [&](std::size_t n, const char* what) {
        std::vector<Segment> segs;
        for (std::size_t i = 0; i < n; ++i) {
            auto v = parse_numbers(next_data_line(what), 4, what);
            segs.push_back({{v[0], v[1]}, {v[2], v[3]}});
        }
        return segs;
    };
    auto segments_to_loop = [&](const std::vector<Segment>& segs, const char* what) {
        std::vector<Vec2> loop;
        for (std::size_t i = 0; i < segs.size(); ++i) {
            const Segment& next = segs[(i + 1) % segs.size()];
            if (norm(segs[i].b - next.a) > 1e-9) {
                throw ParseError(source, line_no, std::string(what) + " loop is not closed at segment " + std::to_string(i));
            }
            loop.push_back(segs[i].a);
        }
        return loop;
    };

    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        std::string key;
        ss >> key;
        std::string rest;
        std::getline(ss, rest);
        if (key == "name") {
            std::istringstream rs(rest);
            rs >> map.name;
            if (map.name.empty()) throw ParseError(source, line_no, "empty track name");
        } else if (key == "start_pose") {
            auto v = parse_numbers(rest, 3, "start_pose");
            map.start_pose = {v[0], v[1], v[2]};
            have_start = true;
        } else if (key == "finish_line") {
            auto v = parse_numbers(rest, 4, "finish_line");
            map.finish_line = {{v[0], v[1]}, {v[2], v[3]}};
            map.has_finish_line = true;
        } else if (key == "loop") {
            std::istringstream rs(rest);
            std::string which;
            rs >> which;
            const std::size_t n = read_count(rs, "loop");
            if (which != "outer" && which != "inner") throw ParseError(source, line_no, "loop must be 'outer' or 'inner'");
            auto segs = read_segments(n, "loop segment");
            (which == "outer" ? map.outer_loop : map.inner_loop) = segments_to_loop(segs, which.c_str());
        } else if (key == "walls") {
            std::istringstream rs(rest);
            map.extra_walls = read_segments(read_count(rs, "walls"), "wall segment");
        } else if (key == "centerline") {
            std::istringstream rs(rest);
            const std::size_t n = read_count(rs, "centerline");
            for (std::size_t i = 0; i < n; ++i) {
                auto v = parse_numbers(next_data_line("centerline point"), 2, "centerline point");
                map.centerline.push_back({v[0], v[1]});
            }
        } else {
            throw ParseError(source, line_no, "unknown record '" + key + "'");
        }
    }
    if (!have_start) throw ParseError(source, line_no, "missing start_pose");
    map.rebuild_walls();
    validate_track(map);
    return map;
}

void save_track(const std::filesystem::path& path, const TrackMap& map) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write track file " + path.string());
    write_track(out, map);
}

TrackMap load_track(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open track file " + path.string());
    return read_track(in, path.string());
}

TrackMap track_from_centerline(std::string name, const std::vector<Vec2>& centerline,
                               const std::vector<double>& half_width, double finish_offset) {
    if (centerline.size() < 8 || half_width.size() != centerline.size()) {
        throw ConfigError("track_from_centerline: need >= 8 points and one half width per point");
    }
    TrackMap map;
    map.name = std::move(name);
    map.centerline = centerline;
    const std::size_t n = centerline.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2 t = map.centerline_tangent(i);
        const Vec2 left{-t.y, t.x};
        map.inner_loop.push_back(centerline[i] + half_width[i] * left);
        map.outer_loop.push_back(centerline[i] - half_width[i] * left);
    }
    const Vec2 t0 = map.centerline_tangent(0);
    map.start_pose = {centerline[0].x, centerline[0].y, std::atan2(t0.y, t0.x)};

    double travelled = 0.0;
    std::size_t f = 0;
    while (travelled < finish_offset && f + 1 < n) {
        travelled += norm(centerline[f + 1] - centerline[f]);
        ++f;
    }
    const Vec2 tf = map.centerline_tangent(f);
    const Vec2 lf{-tf.y, tf.x};
    const double w = half_width[f] * 1.05;
    map.finish_line = {centerline[f] - w * lf, centerline[f] + w * lf};
    map.has_finish_line = true;
    map.rebuild_walls();
    validate_track(map);
    return map;
}

TrackMap make_oval_track() {
    auto center = resample_closed(stadium(20.0, 6.0), 0.5);
    // Start a few meters into the bottom straight.
    std::rotate(center.begin(), center.begin() + 4, center.end());
    return track_from_centerline("oval", center, std::vector<double>(center.size(), 1.2));
}

TrackMap make_scurve_track() {
    std::vector<Vec2> dense;
    const std::size_t n = 4000;
    for (std::size_t i = 0; i < n; ++i) {
        const double t = -kPi / 2 + 2.0 * kPi * static_cast<double>(i) / n;
        const double r = 14.0 + 2.5 * std::sin(3.0 * t);
        dense.push_back({r * std::cos(t), r * std::sin(t)});
    }
    auto center = resample_closed(dense, 0.5);
    return track_from_centerline("scurve", center, std::vector<double>(center.size(), 1.25));
}

TrackMap make_pinch_chicane_track() {
    const double straight = 24.0, radius = 6.5;
    auto dense = stadium(straight, radius);
    std::vector<double> dense_width(dense.size(), 1.25);
    for (std::size_t i = 0; i < dense.size(); ++i) {
        Vec2& p = dense[i];
        // Chicane: a left-right jog on the bottom straight.
        if (p.y < 0 && std::abs(p.x) < straight / 2) {
            const double u = (p.x + 8.0) / 12.0;
            if (u > 0 && u < 1) p.y += 1.1 * std::sin(2.0 * kPi * u) * smooth_bump(u);
        }
        // Pinch: the top straight narrows around its midpoint.
        if (p.y > 0 && std::abs(p.x) < straight / 2) {
            dense_width[i] = 1.25 - 0.35 * smooth_bump((p.x + 6.0) / 12.0);
        }
    }
    auto center = resample_closed(dense, 0.5);
    std::vector<double> width;
    width.reserve(center.size());
    for (const Vec2& c : center) {
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < dense.size(); ++i) {
            const double d = norm(dense[i] - c);
            if (d < best_d) {
                best_d = d;
                best = i;
            }
        }
        width.push_back(dense_width[best]);
    }
    std::rotate(center.begin(), center.begin() + 4, center.end());
    std::rotate(width.begin(), width.begin() + 4, width.end());
    return track_from_centerline("pinch_chicane", center, width);
}

TrackMap make_square_room(double side) {
    const double h = side / 2.0;
    TrackMap map;
    map.name = "square_room";
    map.outer_loop = {{-h, -h}, {h, -h}, {h, h}, {-h, h}};
    map.start_pose = {0.0, 0.0, 0.0};
    map.rebuild_walls();
    return map;
}

TrackMap make_corridor(double x0, double x1, double half_width) {
    TrackMap map;
    map.name = "corridor";
    map.extra_walls = {{{x0, -half_width}, {x1, -half_width}}, {{x0, half_width}, {x1, half_width}}};
    map.start_pose = {x0 + 1.0, 0.0, 0.0};
    map.rebuild_walls();
    return map;
}

TrackMap mirror_about_x(const TrackMap& map) {
    TrackMap m = map;
    auto flip = [](Vec2 p) { return Vec2{p.x, -p.y}; };
    for (auto& p : m.outer_loop) p = flip(p);
    for (auto& p : m.inner_loop) p = flip(p);
    for (auto& p : m.centerline) p = flip(p);
    for (auto& s : m.extra_walls) s = {flip(s.a), flip(s.b)};
    m.finish_line = {flip(m.finish_line.a), flip(m.finish_line.b)};
    m.start_pose = {map.start_pose.x, -map.start_pose.y, wrap_angle(-map.start_pose.theta)};
    m.name = map.name + "_mirrored";
    m.rebuild_walls();
    return m;
}

}  // namespace gapnp::sim
