#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "sjoin/join_algos.hpp"
#include "sjoin/rtree.hpp"
#include "sjoin/sim.hpp"
#include "test_util.hpp"

using namespace sjoin;

namespace {

std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) { return (a + b - 1) / b; }

std::uint64_t total_evals(const CycleStats& stats) {
    std::uint64_t total = 0;
    for (const auto& level : stats.per_level) total += level.predicate_evals;
    return total;
}

// Test-side re-derivation of the per-task unit cost, summed over a BFS
// enumeration that is independent of the engine's event loop.
std::uint64_t expected_unit_cycles(const RTree& tr, const RTree& ts, const SimConfig& cfg) {
    std::uint64_t total = 0;
    std::vector<NodePairTask> tasks = {{tr.root_index, ts.root_index}};
    while (!tasks.empty()) {
        std::vector<NodePairTask> next;
        for (const auto& task : tasks) {
            const RTreeNode& a = tr.nodes[task.node_r];
            const RTreeNode& b = ts.nodes[task.node_s];
            if (a.is_leaf == b.is_leaf) {
                total += unit_pair_cycles(a.count(), b.count(), cfg);
                if (!a.is_leaf) {
                    for (const auto& ea : a.entries) {
                        for (const auto& eb : b.entries) {
                            if (intersects(ea.mbr, eb.mbr)) next.push_back({ea.ref, eb.ref});
                        }
                    }
                }
            } else {
                const RTreeNode& dir = a.is_leaf ? b : a;
                total += cfg.mem_latency_cycles +
                         ceil_div(std::uint64_t{dir.count()} * cfg.entry_bytes,
                                  cfg.mem_bw_bytes_per_cycle) +
                         dir.count() + cfg.pipeline_depth;
                const Mbr& leaf_bounds = a.is_leaf ? a.bounds : b.bounds;
                for (const auto& e : dir.entries) {
                    if (!intersects(leaf_bounds, e.mbr)) continue;
                    if (a.is_leaf) {
                        next.push_back({task.node_r, e.ref});
                    } else {
                        next.push_back({e.ref, task.node_s});
                    }
                }
            }
        }
        tasks = std::move(next);
    }
    return total;
}

}  // namespace

TEST_CASE("unit_pair_cycles matches the closed-form memory model") {
    const SimConfig cfg;
    // fetch(32,32) = 10 latency + ceil(32*20/64) transfer = 20; + 1024 + 3
    CHECK(unit_pair_cycles(32, 32, cfg) == 1047);
    CHECK(unit_pair_cycles(8, 8, cfg) == 80);    // 10 + 3 + 64 + 3
    CHECK(unit_pair_cycles(4, 4, cfg) == 31);    // 10 + 2 + 16 + 3
    CHECK(unit_pair_cycles(16, 16, cfg) == 274); // 10 + 5 + 256 + 3

    CHECK_THROWS_AS(unit_pair_cycles(0, 4, cfg), std::invalid_argument);
    SimConfig bad;
    bad.mem_bw_bytes_per_cycle = 0;
    CHECK_THROWS_AS(unit_pair_cycles(4, 4, bad), std::invalid_argument);
}

TEST_CASE("cycles per predicate stay in the efficiency band") {
    const SimConfig cfg;
    // Medium and large nodes approach one predicate per cycle.
    for (const std::uint32_t n : {8u, 12u, 16u, 24u, 32u, 48u, 64u}) {
        const double ratio = static_cast<double>(unit_pair_cycles(n, n, cfg)) /
                             (static_cast<double>(n) * n);
        CHECK(ratio >= 1.0);
        CHECK(ratio <= 1.35);
    }
    // Tiny nodes are dominated by the random-access latency.
    for (const std::uint32_t n : {1u, 2u, 3u, 4u}) {
        const double ratio = static_cast<double>(unit_pair_cycles(n, n, cfg)) /
                             (static_cast<double>(n) * n);
        CHECK(ratio >= 1.5);
    }
}

TEST_CASE("sim results equal the software oracle for all configurations") {
    const auto r = test::uniform_squares(2500, 101);
    const auto s = test::uniform_squares(2500, 102);
    const auto expected = test::brute_force_pairs(r, s);
    const RTree tr = str_bulk_load(r, 16);
    const RTree ts = str_bulk_load(s, 16);
    const auto tiles = pbsm_hierarchical_partition(r, s, 16);

    for (const std::uint32_t units : {1u, 2u, 4u, 8u, 16u}) {
        for (const SchedulePolicy policy : {SchedulePolicy::kStatic, SchedulePolicy::kDynamic}) {
            SimConfig cfg;
            cfg.num_join_units = units;
            cfg.scheduling_policy = policy;
            CHECK(sim_sync_traversal(tr, ts, cfg).result.sorted_pairs() == expected);
            CHECK(sim_pbsm(tiles, cfg).result.sorted_pairs() == expected);
        }
    }
}

TEST_CASE("sim handles trees of different heights") {
    const auto r = test::uniform_squares(12, 103, {0, 0, 1000, 1000}, 40, 40);
    const auto s = test::uniform_squares(8000, 104, {0, 0, 1000, 1000}, 4, 4);
    const RTree tr = str_bulk_load(r, 16);
    const RTree ts = str_bulk_load(s, 16);
    REQUIRE(tr.height != ts.height);
    SimConfig cfg;
    cfg.num_join_units = 4;
    const SimOutcome out = sim_sync_traversal(tr, ts, cfg);
    CHECK(out.result.sorted_pairs() == test::brute_force_pairs(r, s));
    CHECK(out.stats.per_level.size() == std::max(tr.height, ts.height));
}

TEST_CASE("identical inputs give bit-identical stats") {
    const auto r = test::uniform_squares(1500, 105);
    const auto s = test::uniform_squares(1500, 106);
    const RTree tr = str_bulk_load(r, 8);
    const RTree ts = str_bulk_load(s, 8);
    SimConfig cfg;
    cfg.num_join_units = 8;
    cfg.record_write_offsets = true;
    const SimOutcome a = sim_sync_traversal(tr, ts, cfg);
    const SimOutcome b = sim_sync_traversal(tr, ts, cfg);
    CHECK(a.stats == b.stats);
    CHECK(a.write_offsets == b.write_offsets);
    CHECK(a.result.pairs == b.result.pairs);
}

TEST_CASE("total cycles respect the architectural floor and unit monotonicity") {
    const auto r = test::uniform_squares(3000, 107);
    const auto s = test::uniform_squares(3000, 108);
    const RTree tr = str_bulk_load(r, 16);
    const RTree ts = str_bulk_load(s, 16);
    const auto tiles = pbsm_hierarchical_partition(r, s, 16);

    for (const SchedulePolicy policy : {SchedulePolicy::kStatic, SchedulePolicy::kDynamic}) {
        std::uint64_t prev_sync = ~0ull;
        std::uint64_t prev_pbsm = ~0ull;
        for (const std::uint32_t units : {1u, 2u, 4u, 8u, 16u}) {
            SimConfig cfg;
            cfg.num_join_units = units;
            cfg.scheduling_policy = policy;

            const auto sync = sim_sync_traversal(tr, ts, cfg);
            CHECK(sync.stats.total_cycles >= ceil_div(total_evals(sync.stats), units));
            CHECK(sync.stats.total_cycles <= prev_sync);
            prev_sync = sync.stats.total_cycles;

            const auto pbsm = sim_pbsm(tiles, cfg);
            CHECK(pbsm.stats.total_cycles >= ceil_div(total_evals(pbsm.stats), units));
            CHECK(pbsm.stats.total_cycles <= prev_pbsm);
            prev_pbsm = pbsm.stats.total_cycles;
        }
    }
}

TEST_CASE("per-level task counts match the instrumented software BFS") {
    const auto r = test::uniform_squares(5000, 109);
    const auto s = test::uniform_squares(5000, 110);
    const RTree tr = str_bulk_load(r, 8);
    const RTree ts = str_bulk_load(s, 8);
    JoinStats stats;
    sync_traversal_bfs(tr, ts, 4, SchedulePolicy::kStatic, &stats);
    SimConfig cfg;
    cfg.num_join_units = 4;
    const SimOutcome out = sim_sync_traversal(tr, ts, cfg);
    REQUIRE(out.stats.per_level.size() == stats.tasks_per_level.size());
    for (std::size_t i = 0; i < stats.tasks_per_level.size(); ++i) {
        CHECK(out.stats.per_level[i].tasks == stats.tasks_per_level[i]);
    }
    CHECK(total_evals(out.stats) == stats.predicate_evals);
}

TEST_CASE("a single unit degenerates to the sum of per-task costs plus write drain") {
    const auto r = test::uniform_squares(2000, 111);
    const auto s = test::uniform_squares(2000, 112);
    for (const std::uint32_t m : {8u, 16u}) {
        const RTree tr = str_bulk_load(r, m);
        const RTree ts = str_bulk_load(s, m);
        SimConfig cfg;  // one unit
        const SimOutcome out = sim_sync_traversal(tr, ts, cfg);
        const std::uint64_t expected = expected_unit_cycles(tr, ts, cfg);
        CHECK(out.stats.total_cycles >= expected);
        CHECK(out.stats.total_cycles <= expected + out.stats.mem_write_cycles);
        CHECK(static_cast<double>(out.stats.total_cycles) <=
              1.01 * static_cast<double>(expected + out.stats.mem_write_cycles));
    }
}

TEST_CASE("disjoint roots simulate exactly one task") {
    const auto r = test::uniform_squares(400, 113, {-2000, 0, -10, 1000}, 2, 2);
    const auto s = test::uniform_squares(400, 114, {10, 0, 2000, 1000}, 2, 2);
    const SimOutcome out =
        sim_sync_traversal(str_bulk_load(r, 8), str_bulk_load(s, 8), SimConfig{});
    REQUIRE(out.stats.per_level.size() == 1);
    CHECK(out.stats.per_level[0].tasks == 1);
    CHECK(out.result.size() == 0);
    CHECK(out.stats.results_emitted == 0);
}

TEST_CASE("one tile on one unit costs the pair cycles plus the result drain") {
    const auto r = test::uniform_squares(24, 115, {0, 0, 40, 40}, 4, 4);
    const auto s = test::uniform_squares(24, 116, {0, 0, 40, 40}, 4, 4);
    const auto tiles = pbsm_partition(r, s, GridSpec{{0, 0, 40, 40}, 1, 1});
    REQUIRE(tiles.size() == 1);
    const SimConfig cfg;
    const SimOutcome out = sim_pbsm(tiles, cfg);
    CHECK(out.stats.total_cycles ==
          unit_pair_cycles(24, 24, cfg) + out.stats.mem_write_cycles);
    CHECK(out.result.size() == test::brute_force_pairs(r, s).size());
}

TEST_CASE("static and dynamic scheduling agree within 5% on balanced tiles") {
    const auto r = test::uniform_squares(20000, 117);
    const auto s = test::uniform_squares(20000, 118);
    const auto tiles = pbsm_hierarchical_partition(r, s, 16);
    SimConfig cfg;
    cfg.num_join_units = 4;
    cfg.scheduling_policy = SchedulePolicy::kStatic;
    const auto with_static = sim_pbsm(tiles, cfg);
    cfg.scheduling_policy = SchedulePolicy::kDynamic;
    const auto with_dynamic = sim_pbsm(tiles, cfg);
    const auto hi = std::max(with_static.stats.total_cycles, with_dynamic.stats.total_cycles);
    const auto lo = std::min(with_static.stats.total_cycles, with_dynamic.stats.total_cycles);
    CHECK(static_cast<double>(hi - lo) <= 0.05 * static_cast<double>(lo));
}

TEST_CASE("the write path assigns sequential physical offsets") {
    const auto r = test::uniform_squares(600, 119, {0, 0, 200, 200}, 3, 3);
    const auto s = test::uniform_squares(600, 120, {0, 0, 200, 200}, 3, 3);
    SimConfig cfg;
    cfg.num_join_units = 4;
    cfg.record_write_offsets = true;
    const SimOutcome out =
        sim_sync_traversal(str_bulk_load(r, 16), str_bulk_load(s, 16), cfg);
    REQUIRE(out.stats.results_emitted > 0);
    REQUIRE(out.write_offsets.size() == out.stats.results_emitted);
    for (std::size_t i = 0; i < out.write_offsets.size(); ++i) {
        CHECK(out.write_offsets[i] == i * cfg.result_pair_bytes);
    }
    const std::uint64_t bytes = write_path_bytes(out.stats, cfg);
    CHECK(bytes == out.stats.results_emitted * cfg.result_pair_bytes);
    CHECK(out.stats.flush_count >= ceil_div(bytes, cfg.burst_threshold_bytes));
}

TEST_CASE("an empty run leaves the write counter untouched") {
    const std::vector<SpatialObject> r = {{0, {0, 0, 1, 1}}};
    const std::vector<SpatialObject> s = {{1, {5, 5, 6, 6}}};
    SimConfig cfg;
    cfg.record_write_offsets = true;
    const SimOutcome out = sim_sync_traversal(str_bulk_load(r, 8), str_bulk_load(s, 8), cfg);
    CHECK(out.stats.results_emitted == 0);
    CHECK(write_path_bytes(out.stats, cfg) == 0);
    CHECK(out.write_offsets.empty());
}
