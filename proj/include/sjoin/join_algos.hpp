#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "sjoin/geom.hpp"
#include "sjoin/join_result.hpp"
#include "sjoin/rtree.hpp"

namespace sjoin {

// Uniform grid over a region. Tile edges are computed with one shared
// expression so adjacent tiles meet exactly and partition the region.
struct GridSpec {
    Mbr region;
    std::uint32_t cols = 1;
    std::uint32_t rows = 1;
};

Mbr grid_tile(const GridSpec& grid, std::uint32_t col, std::uint32_t row);

// Tight bounds of both datasets together; the natural grid region.
Mbr dataset_bounds(std::span<const SpatialObject> r, std::span<const SpatialObject> s);

struct Tile {
    Mbr tile_mbr;
    bool last_col = false;
    bool last_row = false;
    // Set by hierarchical partitioning when the minimum tile extent stopped
    // recursion before the workload bound was met.
    bool over_bound = false;
    std::vector<SpatialObject> objects_r;
    std::vector<SpatialObject> objects_s;
};

struct NodePairTask {
    std::uint32_t node_r = 0;
    std::uint32_t node_s = 0;
};

enum class TileJoiner { kNestedLoop, kPlaneSweep };

// Serial reference join: evaluates every cross pair. The oracle the other
// algorithms are tested against.
JoinResult nested_loop_join(std::span<const SpatialObject> r, std::span<const SpatialObject> s,
                            JoinStats* stats = nullptr);

// Sorts both inputs by xmin, advances the smaller head, evicts opposite-set
// entries whose xmax has fallen behind the sweep (strict compare, so touching
// boundaries survive), and emits pairs passing the y-overlap test. At equal
// xmin the R-side object is processed first.
JoinResult plane_sweep_join(std::span<const SpatialObject> r, std::span<const SpatialObject> s,
                            JoinStats* stats = nullptr);

// Depth-first synchronous traversal of two R-trees.
JoinResult sync_traversal_dfs(const RTree& tree_r, const RTree& tree_s,
                              JoinStats* stats = nullptr);

// Level-by-level synchronous traversal. Each level's node-pair task list is
// processed by `workers` threads; static scheduling splits it into contiguous
// blocks, dynamic hands tasks to the first idle worker. When the trees have
// different heights a leaf reached early is carried forward unchanged and
// re-paired against directory children each level.
JoinResult sync_traversal_bfs(const RTree& tree_r, const RTree& tree_s, unsigned workers,
                              SchedulePolicy policy, JoinStats* stats = nullptr);

// PBSM phase 1: replicate each object into every tile it intersects. Tiles
// with an empty side are dropped. Throws std::invalid_argument when an object
// is not contained in the grid region.
std::vector<Tile> pbsm_partition(std::span<const SpatialObject> r,
                                 std::span<const SpatialObject> s, const GridSpec& grid);

// Recursive 2x2 splitting from a coarse base grid (1x1 over the datasets'
// bounds unless given) until sqrt(|R_i|*|S_i|) <= max_geomean, so the
// nested-loop work per tile stays at most max_geomean^2 comparisons. Tiles
// at the minimum extent (region extent / 2^14) may exceed the bound and are
// flagged over_bound.
std::vector<Tile> pbsm_hierarchical_partition(std::span<const SpatialObject> r,
                                              std::span<const SpatialObject> s,
                                              std::uint32_t max_geomean,
                                              std::optional<GridSpec> base = std::nullopt);

// PBSM phase 2: per-tile join with reference-point duplicate avoidance.
// The emission across tiles contains each qualifying pair exactly once.
JoinResult pbsm_join(std::span<const Tile> tiles, TileJoiner joiner, unsigned workers,
                     SchedulePolicy policy, JoinStats* stats = nullptr);

// One-dimensional PBSM: vertical strips, plane sweep along y inside each
// strip, reference-point dedup on strip membership.
JoinResult pbsm_1d(std::span<const SpatialObject> r, std::span<const SpatialObject> s,
                   std::uint32_t strips, unsigned workers, JoinStats* stats = nullptr);

}  // namespace sjoin
