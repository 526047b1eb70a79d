#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace sjoin {

// Axis-aligned minimum bounding rectangle with 32-bit coordinates.
// A point is an Mbr with xmin == xmax and ymin == ymax.
struct Mbr {
    float xmin = 0.0f;
    float ymin = 0.0f;
    float xmax = 0.0f;
    float ymax = 0.0f;

    bool valid() const {
        return std::isfinite(xmin) && std::isfinite(ymin) && std::isfinite(xmax) &&
               std::isfinite(ymax) && xmin <= xmax && ymin <= ymax;
    }
    float width() const { return xmax - xmin; }
    float height() const { return ymax - ymin; }

    bool operator==(const Mbr&) const = default;
};

struct Point {
    float x = 0.0f;
    float y = 0.0f;
};

struct SpatialObject {
    std::uint32_t id = 0;
    Mbr mbr;

    bool operator==(const SpatialObject&) const = default;
};

// Closed-boundary intersection: shared edges and corners count as overlap.
inline bool intersects(const Mbr& a, const Mbr& b) {
    return a.xmax >= b.xmin && b.xmax >= a.xmin && a.ymax >= b.ymin && b.ymax >= a.ymin;
}

inline bool contains(const Mbr& outer, const Mbr& inner) {
    return outer.xmin <= inner.xmin && outer.ymin <= inner.ymin && inner.xmax <= outer.xmax &&
           inner.ymax <= outer.ymax;
}

inline Mbr merge(const Mbr& a, const Mbr& b) {
    return {std::min(a.xmin, b.xmin), std::min(a.ymin, b.ymin), std::max(a.xmax, b.xmax),
            std::max(a.ymax, b.ymax)};
}

// Minimum corner of the intersection rectangle of two overlapping MBRs.
// PBSM duplicate avoidance reports a candidate pair only from the tile that
// contains this point, so every pair is emitted by exactly one tile.
inline Point reference_point(const Mbr& a, const Mbr& b) {
    if (!intersects(a, b)) {
        throw std::invalid_argument("reference_point: MBRs do not intersect");
    }
    return {std::max(a.xmin, b.xmin), std::max(a.ymin, b.ymin)};
}

// Half-open tile membership [xmin,xmax) x [ymin,ymax). The max edge is closed
// when the tile sits on the last column/row of its grid, so the tiles of a
// grid partition the region: every point belongs to exactly one tile.
inline bool point_in_tile(Point p, const Mbr& tile, bool last_col, bool last_row) {
    const bool in_x = p.x >= tile.xmin && (p.x < tile.xmax || (last_col && p.x == tile.xmax));
    const bool in_y = p.y >= tile.ymin && (p.y < tile.ymax || (last_row && p.y == tile.ymax));
    return in_x && in_y;
}

}  // namespace sjoin
