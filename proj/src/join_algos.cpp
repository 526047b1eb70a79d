#include "sjoin/join_algos.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <tuple>

namespace sjoin {

namespace {

float grid_edge(float lo, float hi, std::uint32_t divisions, std::uint32_t i) {
    if (i == 0) return lo;
    if (i >= divisions) return hi;
    return lo + (hi - lo) * (static_cast<float>(i) / static_cast<float>(divisions));
}

template <typename Body>
void parallel_tasks(std::size_t n, unsigned workers, SchedulePolicy policy, Body&& body) {
    if (n == 0) return;
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i, 0u);
        return;
    }
    const auto count = static_cast<std::int64_t>(n);
    if (policy == SchedulePolicy::kStatic) {
#pragma omp parallel for num_threads(workers) schedule(static)
        for (std::int64_t i = 0; i < count; ++i) {
            body(static_cast<std::size_t>(i), static_cast<unsigned>(omp_get_thread_num()));
        }
    } else {
#pragma omp parallel for num_threads(workers) schedule(dynamic)
        for (std::int64_t i = 0; i < count; ++i) {
            body(static_cast<std::size_t>(i), static_cast<unsigned>(omp_get_thread_num()));
        }
    }
}

template <typename Emit>
void nested_loop_scan(std::span<const SpatialObject> r, std::span<const SpatialObject> s,
                      std::uint64_t& evals, Emit&& emit) {
    evals += static_cast<std::uint64_t>(r.size()) * s.size();
    for (const auto& a : r) {
        for (const auto& b : s) {
            if (intersects(a.mbr, b.mbr)) emit(a, b);
        }
    }
}

// Sweep along x (or y when sweep_y). Active sets hold objects still crossing
// the sweep line; eviction is a strict compare so touching boundaries are
// kept, consistent with the closed intersection predicate. The emit callback
// always receives (r object, s object).
template <typename Emit>
void plane_sweep_scan(std::span<const SpatialObject> r, std::span<const SpatialObject> s,
                      bool sweep_y, std::uint64_t& evals, Emit&& emit) {
    auto lo = [sweep_y](const SpatialObject& o) { return sweep_y ? o.mbr.ymin : o.mbr.xmin; };
    auto hi = [sweep_y](const SpatialObject& o) { return sweep_y ? o.mbr.ymax : o.mbr.xmax; };
    auto cross_overlap = [sweep_y](const SpatialObject& a, const SpatialObject& b) {
        return sweep_y ? a.mbr.xmax >= b.mbr.xmin && b.mbr.xmax >= a.mbr.xmin
                       : a.mbr.ymax >= b.mbr.ymin && b.mbr.ymax >= a.mbr.ymin;
    };
    auto by_lo = [&lo](const SpatialObject& a, const SpatialObject& b) {
        const float la = lo(a);
        const float lb = lo(b);
        return la < lb || (la == lb && a.id < b.id);
    };

    std::vector<SpatialObject> rs(r.begin(), r.end());
    std::vector<SpatialObject> ss(s.begin(), s.end());
    std::sort(rs.begin(), rs.end(), by_lo);
    std::sort(ss.begin(), ss.end(), by_lo);

    std::vector<SpatialObject> active_r;
    std::vector<SpatialObject> active_s;
    auto remove_inactive = [&hi](std::vector<SpatialObject>& active, float line) {
        std::erase_if(active, [&](const SpatialObject& o) { return hi(o) < line; });
    };

    std::size_t i = 0;
    std::size_t j = 0;
    while (i < rs.size() || j < ss.size()) {
        // At equal heads the R side goes first; the result is tie-order
        // independent, only the operation counts differ.
        const bool take_r = j >= ss.size() || (i < rs.size() && lo(rs[i]) <= lo(ss[j]));
        if (take_r) {
            const SpatialObject& cur = rs[i++];
            remove_inactive(active_s, lo(cur));
            active_r.push_back(cur);
            for (const auto& other : active_s) {
                ++evals;
                if (cross_overlap(cur, other)) emit(cur, other);
            }
        } else {
            const SpatialObject& cur = ss[j++];
            remove_inactive(active_r, lo(cur));
            active_s.push_back(cur);
            for (const auto& other : active_r) {
                ++evals;
                if (cross_overlap(other, cur)) emit(other, cur);
            }
        }
    }
}

void dfs_recurse(const RTree& tr, const RTree& ts, std::uint32_t a, std::uint32_t b,
                 std::size_t depth, std::vector<IdPair>& out, std::uint64_t& evals,
                 JoinStats* stats) {
    if (stats) {
        if (stats->tasks_per_level.size() <= depth) stats->tasks_per_level.resize(depth + 1, 0);
        ++stats->tasks_per_level[depth];
    }
    const RTreeNode& nr = tr.nodes[a];
    const RTreeNode& ns = ts.nodes[b];
    if (nr.is_leaf && ns.is_leaf) {
        for (const auto& er : nr.entries) {
            for (const auto& es : ns.entries) {
                ++evals;
                if (intersects(er.mbr, es.mbr)) out.push_back({er.ref, es.ref});
            }
        }
    } else if (!nr.is_leaf && !ns.is_leaf) {
        for (const auto& er : nr.entries) {
            for (const auto& es : ns.entries) {
                ++evals;
                if (intersects(er.mbr, es.mbr)) {
                    dfs_recurse(tr, ts, er.ref, es.ref, depth + 1, out, evals, stats);
                }
            }
        }
    } else if (nr.is_leaf) {
        for (const auto& es : ns.entries) {
            ++evals;
            if (intersects(nr.bounds, es.mbr)) {
                dfs_recurse(tr, ts, a, es.ref, depth + 1, out, evals, stats);
            }
        }
    } else {
        for (const auto& er : nr.entries) {
            ++evals;
            if (intersects(er.mbr, ns.bounds)) {
                dfs_recurse(tr, ts, er.ref, b, depth + 1, out, evals, stats);
            }
        }
    }
}

// One BFS step: a leaf/leaf task emits result pairs, a dir/dir task emits
// child tasks, and a mixed task re-pairs the leaf against the directory's
// children (the leaf is carried unchanged into the next level).
void expand_task(const RTree& tr, const RTree& ts, NodePairTask task,
                 std::vector<NodePairTask>& next, std::vector<IdPair>& out,
                 std::uint64_t& evals) {
    const RTreeNode& nr = tr.nodes[task.node_r];
    const RTreeNode& ns = ts.nodes[task.node_s];
    if (nr.is_leaf && ns.is_leaf) {
        for (const auto& er : nr.entries) {
            for (const auto& es : ns.entries) {
                ++evals;
                if (intersects(er.mbr, es.mbr)) out.push_back({er.ref, es.ref});
            }
        }
    } else if (!nr.is_leaf && !ns.is_leaf) {
        for (const auto& er : nr.entries) {
            for (const auto& es : ns.entries) {
                ++evals;
                if (intersects(er.mbr, es.mbr)) next.push_back({er.ref, es.ref});
            }
        }
    } else if (nr.is_leaf) {
        for (const auto& es : ns.entries) {
            ++evals;
            if (intersects(nr.bounds, es.mbr)) next.push_back({task.node_r, es.ref});
        }
    } else {
        for (const auto& er : nr.entries) {
            ++evals;
            if (intersects(er.mbr, ns.bounds)) next.push_back({er.ref, task.node_s});
        }
    }
}

void check_workers(unsigned workers) {
    if (workers < 1) throw std::invalid_argument("worker count must be at least 1");
}

}  // namespace

Mbr grid_tile(const GridSpec& grid, std::uint32_t col, std::uint32_t row) {
    return {grid_edge(grid.region.xmin, grid.region.xmax, grid.cols, col),
            grid_edge(grid.region.ymin, grid.region.ymax, grid.rows, row),
            grid_edge(grid.region.xmin, grid.region.xmax, grid.cols, col + 1),
            grid_edge(grid.region.ymin, grid.region.ymax, grid.rows, row + 1)};
}

Mbr dataset_bounds(std::span<const SpatialObject> r, std::span<const SpatialObject> s) {
    if (r.empty() && s.empty()) {
        throw std::invalid_argument("dataset_bounds: both datasets empty");
    }
    Mbr out = r.empty() ? s.front().mbr : r.front().mbr;
    for (const auto& obj : r) out = merge(out, obj.mbr);
    for (const auto& obj : s) out = merge(out, obj.mbr);
    return out;
}

JoinResult nested_loop_join(std::span<const SpatialObject> r, std::span<const SpatialObject> s,
                            JoinStats* stats) {
    JoinResult result;
    // Unconditional row-buffer emission keeps the scan free of data-dependent
    // branches, so the cost depends on the input sizes, not the hit count.
    std::vector<IdPair> row(s.size());
    for (const auto& a : r) {
        std::size_t k = 0;
        for (const auto& b : s) {
            row[k] = {a.id, b.id};
            k += intersects(a.mbr, b.mbr) ? 1 : 0;
        }
        result.pairs.insert(result.pairs.end(), row.begin(), row.begin() + k);
    }
    if (stats) stats->predicate_evals += static_cast<std::uint64_t>(r.size()) * s.size();
    return result;
}

JoinResult plane_sweep_join(std::span<const SpatialObject> r, std::span<const SpatialObject> s,
                            JoinStats* stats) {
    JoinResult result;
    std::uint64_t evals = 0;
    plane_sweep_scan(r, s, /*sweep_y=*/false, evals,
                     [&result](const SpatialObject& a, const SpatialObject& b) {
                         result.pairs.push_back({a.id, b.id});
                     });
    if (stats) stats->predicate_evals += evals;
    return result;
}

JoinResult sync_traversal_dfs(const RTree& tree_r, const RTree& tree_s, JoinStats* stats) {
    JoinResult result;
    std::uint64_t evals = 0;
    dfs_recurse(tree_r, tree_s, tree_r.root_index, tree_s.root_index, 0, result.pairs, evals,
                stats);
    if (stats) stats->predicate_evals += evals;
    return result;
}

JoinResult sync_traversal_bfs(const RTree& tree_r, const RTree& tree_s, unsigned workers,
                              SchedulePolicy policy, JoinStats* stats) {
    check_workers(workers);
    JoinResult result;
    std::vector<NodePairTask> tasks = {{tree_r.root_index, tree_s.root_index}};
    while (!tasks.empty()) {
        if (stats) stats->tasks_per_level.push_back(tasks.size());
        std::vector<std::vector<NodePairTask>> next(workers);
        std::vector<std::vector<IdPair>> found(workers);
        std::vector<std::uint64_t> evals(workers, 0);
        parallel_tasks(tasks.size(), workers, policy, [&](std::size_t i, unsigned tid) {
            expand_task(tree_r, tree_s, tasks[i], next[tid], found[tid], evals[tid]);
        });
        tasks.clear();
        for (unsigned tid = 0; tid < workers; ++tid) {
            tasks.insert(tasks.end(), next[tid].begin(), next[tid].end());
            result.pairs.insert(result.pairs.end(), found[tid].begin(), found[tid].end());
            if (stats) stats->predicate_evals += evals[tid];
        }
    }
    return result;
}

std::vector<Tile> pbsm_partition(std::span<const SpatialObject> r,
                                 std::span<const SpatialObject> s, const GridSpec& grid) {
    if (grid.cols < 1 || grid.rows < 1 || !grid.region.valid()) {
        throw std::invalid_argument("pbsm_partition: invalid grid");
    }
    for (const auto* side : {&r, &s}) {
        for (const auto& obj : *side) {
            if (!contains(grid.region, obj.mbr)) {
                throw std::invalid_argument("pbsm_partition: object id " + std::to_string(obj.id) +
                                            " lies outside the grid region");
            }
        }
    }

    std::vector<Tile> tiles(static_cast<std::size_t>(grid.cols) * grid.rows);
    for (std::uint32_t row = 0; row < grid.rows; ++row) {
        for (std::uint32_t col = 0; col < grid.cols; ++col) {
            Tile& tile = tiles[static_cast<std::size_t>(row) * grid.cols + col];
            tile.tile_mbr = grid_tile(grid, col, row);
            tile.last_col = col + 1 == grid.cols;
            tile.last_row = row + 1 == grid.rows;
        }
    }

    // Candidate index ranges come from float estimates widened by one so
    // rounding can never miss a tile; membership is the exact intersect test.
    auto index_range = [](float lo, float hi, float extent, std::uint32_t k, float obj_lo,
                          float obj_hi) {
        std::int64_t a = 0;
        std::int64_t b = static_cast<std::int64_t>(k) - 1;
        if (extent > 0) {
            const double scale = static_cast<double>(k) / extent;
            a = static_cast<std::int64_t>(std::floor((obj_lo - lo) * scale)) - 1;
            b = static_cast<std::int64_t>(std::floor((obj_hi - lo) * scale)) + 1;
            a = std::clamp<std::int64_t>(a, 0, k - 1);
            b = std::clamp<std::int64_t>(b, 0, k - 1);
        }
        (void)hi;
        return std::pair<std::uint32_t, std::uint32_t>{static_cast<std::uint32_t>(a),
                                                       static_cast<std::uint32_t>(b)};
    };

    auto assign = [&](std::span<const SpatialObject> objs, bool is_r) {
        for (const auto& obj : objs) {
            const auto [c0, c1] = index_range(grid.region.xmin, grid.region.xmax,
                                              grid.region.width(), grid.cols, obj.mbr.xmin,
                                              obj.mbr.xmax);
            const auto [r0, r1] = index_range(grid.region.ymin, grid.region.ymax,
                                              grid.region.height(), grid.rows, obj.mbr.ymin,
                                              obj.mbr.ymax);
            for (std::uint32_t row = r0; row <= r1; ++row) {
                for (std::uint32_t col = c0; col <= c1; ++col) {
                    Tile& tile = tiles[static_cast<std::size_t>(row) * grid.cols + col];
                    if (!intersects(obj.mbr, tile.tile_mbr)) continue;
                    (is_r ? tile.objects_r : tile.objects_s).push_back(obj);
                }
            }
        }
    };
    assign(r, true);
    assign(s, false);

    std::vector<Tile> out;
    for (auto& tile : tiles) {
        if (!tile.objects_r.empty() && !tile.objects_s.empty()) out.push_back(std::move(tile));
    }
    return out;
}

std::vector<Tile> pbsm_hierarchical_partition(std::span<const SpatialObject> r,
                                              std::span<const SpatialObject> s,
                                              std::uint32_t max_geomean,
                                              std::optional<GridSpec> base) {
    if (max_geomean < 1) {
        throw std::invalid_argument("pbsm_hierarchical_partition: max_geomean must be >= 1");
    }
    if (r.empty() || s.empty()) return {};

    const GridSpec grid = base ? *base : GridSpec{dataset_bounds(r, s), 1, 1};
    const float min_w = grid.region.width() / 16384.0f;
    const float min_h = grid.region.height() / 16384.0f;
    const std::uint64_t bound = static_cast<std::uint64_t>(max_geomean) * max_geomean;

    std::vector<Tile> work = pbsm_partition(r, s, grid);
    std::vector<Tile> out;
    while (!work.empty()) {
        Tile tile = std::move(work.back());
        work.pop_back();
        const std::uint64_t load =
            static_cast<std::uint64_t>(tile.objects_r.size()) * tile.objects_s.size();
        if (load <= bound) {
            out.push_back(std::move(tile));
            continue;
        }
        const float xmid = tile.tile_mbr.xmin + tile.tile_mbr.width() * 0.5f;
        const float ymid = tile.tile_mbr.ymin + tile.tile_mbr.height() * 0.5f;
        const bool split_x = tile.tile_mbr.width() > min_w && xmid > tile.tile_mbr.xmin &&
                             xmid < tile.tile_mbr.xmax;
        const bool split_y = tile.tile_mbr.height() > min_h && ymid > tile.tile_mbr.ymin &&
                             ymid < tile.tile_mbr.ymax;
        if (!split_x && !split_y) {
            tile.over_bound = true;
            out.push_back(std::move(tile));
            continue;
        }
        const std::vector<float> xs = split_x
                                          ? std::vector<float>{tile.tile_mbr.xmin, xmid,
                                                               tile.tile_mbr.xmax}
                                          : std::vector<float>{tile.tile_mbr.xmin,
                                                               tile.tile_mbr.xmax};
        const std::vector<float> ys = split_y
                                          ? std::vector<float>{tile.tile_mbr.ymin, ymid,
                                                               tile.tile_mbr.ymax}
                                          : std::vector<float>{tile.tile_mbr.ymin,
                                                               tile.tile_mbr.ymax};
        for (std::size_t yi = 0; yi + 1 < ys.size(); ++yi) {
            for (std::size_t xi = 0; xi + 1 < xs.size(); ++xi) {
                Tile child;
                child.tile_mbr = {xs[xi], ys[yi], xs[xi + 1], ys[yi + 1]};
                child.last_col = tile.last_col && xi + 2 == xs.size();
                child.last_row = tile.last_row && yi + 2 == ys.size();
                for (const auto& obj : tile.objects_r) {
                    if (intersects(obj.mbr, child.tile_mbr)) child.objects_r.push_back(obj);
                }
                for (const auto& obj : tile.objects_s) {
                    if (intersects(obj.mbr, child.tile_mbr)) child.objects_s.push_back(obj);
                }
                if (!child.objects_r.empty() && !child.objects_s.empty()) {
                    work.push_back(std::move(child));
                }
            }
        }
    }
    return out;
}

JoinResult pbsm_join(std::span<const Tile> tiles, TileJoiner joiner, unsigned workers,
                     SchedulePolicy policy, JoinStats* stats) {
    check_workers(workers);
    std::vector<std::vector<IdPair>> found(workers);
    std::vector<std::uint64_t> evals(workers, 0);
    parallel_tasks(tiles.size(), workers, policy, [&](std::size_t i, unsigned tid) {
        const Tile& tile = tiles[i];
        auto emit = [&](const SpatialObject& a, const SpatialObject& b) {
            if (point_in_tile(reference_point(a.mbr, b.mbr), tile.tile_mbr, tile.last_col,
                              tile.last_row)) {
                found[tid].push_back({a.id, b.id});
            }
        };
        if (joiner == TileJoiner::kNestedLoop) {
            nested_loop_scan(tile.objects_r, tile.objects_s, evals[tid], emit);
        } else {
            plane_sweep_scan(tile.objects_r, tile.objects_s, /*sweep_y=*/false, evals[tid], emit);
        }
    });
    JoinResult result;
    for (unsigned tid = 0; tid < workers; ++tid) {
        result.pairs.insert(result.pairs.end(), found[tid].begin(), found[tid].end());
        if (stats) stats->predicate_evals += evals[tid];
    }
    return result;
}

JoinResult pbsm_1d(std::span<const SpatialObject> r, std::span<const SpatialObject> s,
                   std::uint32_t strips, unsigned workers, JoinStats* stats) {
    if (strips < 1) throw std::invalid_argument("pbsm_1d: strip count must be >= 1");
    check_workers(workers);
    if (r.empty() || s.empty()) return {};

    const GridSpec grid{dataset_bounds(r, s), strips, 1};
    const std::vector<Tile> tiles = pbsm_partition(r, s, grid);

    std::vector<std::vector<IdPair>> found(workers);
    std::vector<std::uint64_t> evals(workers, 0);
    parallel_tasks(tiles.size(), workers, SchedulePolicy::kDynamic,
                   [&](std::size_t i, unsigned tid) {
                       const Tile& tile = tiles[i];
                       auto emit = [&](const SpatialObject& a, const SpatialObject& b) {
                           if (point_in_tile(reference_point(a.mbr, b.mbr), tile.tile_mbr,
                                             tile.last_col, tile.last_row)) {
                               found[tid].push_back({a.id, b.id});
                           }
                       };
                       plane_sweep_scan(tile.objects_r, tile.objects_s, /*sweep_y=*/true,
                                        evals[tid], emit);
                   });
    JoinResult result;
    for (unsigned tid = 0; tid < workers; ++tid) {
        result.pairs.insert(result.pairs.end(), found[tid].begin(), found[tid].end());
        if (stats) stats->predicate_evals += evals[tid];
    }
    return result;
}

}  // namespace sjoin
