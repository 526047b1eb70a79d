#include "sjoin/sim.hpp"

#include <algorithm>
#include <stdexcept>

namespace sjoin {

namespace {

std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) { return (a + b - 1) / b; }

void check_config(const SimConfig& cfg) {
    const bool ok = cfg.num_join_units >= 1 && cfg.mem_latency_cycles >= 1 &&
                    cfg.mem_bw_bytes_per_cycle >= 1 && cfg.entry_bytes >= 1 &&
                    cfg.result_pair_bytes >= 1 && cfg.pipeline_depth >= 1 &&
                    cfg.burst_threshold_bytes >= 1 && cfg.clock_hz >= 1 &&
                    cfg.read_channels >= 1 && cfg.write_channels >= 1 &&
                    cfg.pcie_bytes_per_sec > 0;
    if (!ok) throw std::invalid_argument("SimConfig: all parameters must be positive");
}

struct TaskCost {
    std::uint64_t read_occupancy = 0;  // channel reservation: latency + full data volume
    std::uint64_t unit_latency = 0;    // fetch + compute as seen by the unit
    std::uint64_t evals = 0;
    std::uint64_t out_bytes = 0;       // burst-buffer output at task end
};

TaskCost pair_cost(std::uint64_t n_r, std::uint64_t n_s, const SimConfig& cfg) {
    const std::uint64_t tr = ceil_div(n_r * cfg.entry_bytes, cfg.mem_bw_bytes_per_cycle);
    const std::uint64_t ts = ceil_div(n_s * cfg.entry_bytes, cfg.mem_bw_bytes_per_cycle);
    TaskCost cost;
    cost.read_occupancy = cfg.mem_latency_cycles + tr + ts;
    cost.unit_latency =
        cfg.mem_latency_cycles + std::max(tr, ts) + n_r * n_s + cfg.pipeline_depth;
    cost.evals = n_r * n_s;
    return cost;
}

// A mixed leaf/directory task compares the leaf's node MBR (already known
// from the task metadata) against the directory's entries, so only the
// directory node is fetched.
TaskCost mixed_cost(std::uint32_t dir_count, const SimConfig& cfg) {
    const std::uint64_t transfer =
        ceil_div(std::uint64_t{dir_count} * cfg.entry_bytes, cfg.mem_bw_bytes_per_cycle);
    TaskCost cost;
    cost.read_occupancy = cfg.mem_latency_cycles + transfer;
    cost.unit_latency = cfg.mem_latency_cycles + transfer + dir_count + cfg.pipeline_depth;
    cost.evals = dir_count;
    return cost;
}

// Deterministic event engine. Static scheduling deals tasks round-robin into
// per-unit queues; dynamic keeps one shared queue that the next idle unit
// pulls from. The read channels serve fetch requests earliest-ready-first
// (ties to the lowest unit index), one outstanding fetch per unit. Burst
// flushes are serialized on the write channels in flush-ready order.
class Engine {
public:
    explicit Engine(const SimConfig& cfg)
        : cfg_(cfg),
          unit_free_(cfg.num_join_units, 0),
          read_free_(cfg.read_channels, 0),
          write_free_(cfg.write_channels, 0) {}

    // Runs one batch of tasks starting at `start`; returns the cycle the
    // batch fully drains, including the trailing result writes.
    std::uint64_t run_phase(const std::vector<TaskCost>& tasks, std::uint64_t start) {
        const std::uint32_t units = cfg_.num_join_units;
        std::fill(unit_free_.begin(), unit_free_.end(), start);
        std::fill(read_free_.begin(), read_free_.end(), start);
        std::fill(write_free_.begin(), write_free_.end(), start);

        std::vector<std::vector<std::uint32_t>> queues;
        std::size_t shared_next = 0;
        std::vector<std::size_t> queue_next;
        if (cfg_.scheduling_policy == SchedulePolicy::kStatic) {
            queues.resize(units);
            for (std::uint32_t i = 0; i < tasks.size(); ++i) queues[i % units].push_back(i);
            queue_next.assign(units, 0);
        }

        std::vector<std::pair<std::uint64_t, std::uint64_t>> flushes;  // ready time, bytes
        auto has_work = [&](std::uint32_t u) {
            return cfg_.scheduling_policy == SchedulePolicy::kStatic
                       ? queue_next[u] < queues[u].size()
                       : shared_next < tasks.size();
        };

        while (true) {
            std::uint32_t unit = units;
            for (std::uint32_t u = 0; u < units; ++u) {
                if (has_work(u) && (unit == units || unit_free_[u] < unit_free_[unit])) {
                    unit = u;
                }
            }
            if (unit == units) break;
            const TaskCost& task =
                cfg_.scheduling_policy == SchedulePolicy::kStatic
                    ? tasks[queues[unit][queue_next[unit]++]]
                    : tasks[shared_next++];

            auto& read = *std::min_element(read_free_.begin(), read_free_.end());
            const std::uint64_t ready = unit_free_[unit];
            const std::uint64_t fetch_start = std::max(ready, read);
            stats.stall_cycles += fetch_start - ready;
            read = fetch_start + task.read_occupancy;
            stats.mem_read_cycles += task.read_occupancy;
            const std::uint64_t end = fetch_start + task.unit_latency;
            unit_free_[unit] = end;
            stats.compute_cycles += task.evals + cfg_.pipeline_depth;
            if (task.out_bytes > 0) flushes.push_back({end, task.out_bytes});
        }

        std::sort(flushes.begin(), flushes.end());
        for (const auto& [ready, total_bytes] : flushes) {
            std::uint64_t bytes = total_bytes;
            while (bytes > 0) {
                const std::uint64_t chunk =
                    std::min<std::uint64_t>(bytes, cfg_.burst_threshold_bytes);
                auto& write = *std::min_element(write_free_.begin(), write_free_.end());
                const std::uint64_t cycles = ceil_div(chunk, cfg_.mem_bw_bytes_per_cycle);
                write = std::max(write, ready) + cycles;
                stats.mem_write_cycles += cycles;
                ++stats.flush_count;
                bytes -= chunk;
            }
        }

        std::uint64_t horizon = start;
        for (auto v : unit_free_) horizon = std::max(horizon, v);
        for (auto v : write_free_) horizon = std::max(horizon, v);
        return horizon;
    }

    CycleStats stats;

private:
    const SimConfig& cfg_;
    std::vector<std::uint64_t> unit_free_;
    std::vector<std::uint64_t> read_free_;
    std::vector<std::uint64_t> write_free_;
};

// The write unit's self-incrementing physical-address counter: every result
// pair lands at the next result_pair_bytes-aligned offset.
struct WriteCounter {
    std::uint64_t emitted = 0;

    void emit(SimOutcome& out, const SimConfig& cfg, std::uint32_t id_r, std::uint32_t id_s) {
        if (cfg.record_write_offsets) {
            out.write_offsets.push_back(emitted * cfg.result_pair_bytes);
        }
        out.result.pairs.push_back({id_r, id_s});
        ++emitted;
    }
};

}  // namespace

std::uint64_t unit_pair_cycles(std::uint32_t n_r, std::uint32_t n_s, const SimConfig& cfg) {
    check_config(cfg);
    if (n_r < 1 || n_s < 1) {
        throw std::invalid_argument("unit_pair_cycles: node sizes must be at least 1");
    }
    return pair_cost(n_r, n_s, cfg).unit_latency;
}

SimOutcome sim_sync_traversal(const RTree& tree_r, const RTree& tree_s, const SimConfig& cfg) {
    check_config(cfg);
    Engine engine(cfg);
    SimOutcome out;
    WriteCounter counter;

    std::vector<NodePairTask> tasks = {{tree_r.root_index, tree_s.root_index}};
    std::uint64_t now = 0;
    while (!tasks.empty()) {
        // Functional expansion first, in task order: emissions and the next
        // level's task list do not depend on unit timing or policy.
        std::vector<NodePairTask> next;
        std::vector<TaskCost> costs;
        costs.reserve(tasks.size());
        LevelStats level;
        level.tasks = tasks.size();
        for (const auto& task : tasks) {
            const RTreeNode& nr = tree_r.nodes[task.node_r];
            const RTreeNode& ns = tree_s.nodes[task.node_s];
            TaskCost cost;
            if (nr.is_leaf && ns.is_leaf) {
                cost = pair_cost(nr.count(), ns.count(), cfg);
                for (const auto& er : nr.entries) {
                    for (const auto& es : ns.entries) {
                        if (intersects(er.mbr, es.mbr)) {
                            counter.emit(out, cfg, er.ref, es.ref);
                            cost.out_bytes += cfg.result_pair_bytes;
                        }
                    }
                }
            } else if (!nr.is_leaf && !ns.is_leaf) {
                cost = pair_cost(nr.count(), ns.count(), cfg);
                for (const auto& er : nr.entries) {
                    for (const auto& es : ns.entries) {
                        if (intersects(er.mbr, es.mbr)) {
                            next.push_back({er.ref, es.ref});
                            cost.out_bytes += 8;  // a task record is two u32 node ids
                        }
                    }
                }
            } else if (nr.is_leaf) {
                cost = mixed_cost(ns.count(), cfg);
                for (const auto& es : ns.entries) {
                    if (intersects(nr.bounds, es.mbr)) {
                        next.push_back({task.node_r, es.ref});
                        cost.out_bytes += 8;
                    }
                }
            } else {
                cost = mixed_cost(nr.count(), cfg);
                for (const auto& er : nr.entries) {
                    if (intersects(er.mbr, ns.bounds)) {
                        next.push_back({er.ref, task.node_s});
                        cost.out_bytes += 8;
                    }
                }
            }
            level.predicate_evals += cost.evals;
            costs.push_back(cost);
        }

        // The scheduler learns the next level's task count only after the
        // task queue fully drains, so levels never overlap.
        const std::uint64_t level_end = engine.run_phase(costs, now);
        level.cycles = level_end - now;
        engine.stats.per_level.push_back(level);
        now = level_end;
        tasks = std::move(next);
    }

    engine.stats.total_cycles = now;
    engine.stats.results_emitted = counter.emitted;
    const std::uint64_t moved_bytes = serialized_tree_bytes(tree_r) +
                                      serialized_tree_bytes(tree_s) +
                                      counter.emitted * cfg.result_pair_bytes;
    out.stats = engine.stats;
    out.latency_seconds =
        static_cast<double>(out.stats.total_cycles) / static_cast<double>(cfg.clock_hz);
    out.transfer_seconds = static_cast<double>(moved_bytes) / cfg.pcie_bytes_per_sec;
    return out;
}

SimOutcome sim_pbsm(std::span<const Tile> tiles, const SimConfig& cfg) {
    check_config(cfg);
    Engine engine(cfg);
    SimOutcome out;
    WriteCounter counter;

    LevelStats level;
    std::vector<TaskCost> costs;
    costs.reserve(tiles.size());
    std::uint64_t moved_bytes = 0;
    for (const auto& tile : tiles) {
        if (tile.objects_r.empty() || tile.objects_s.empty()) continue;
        ++level.tasks;
        moved_bytes +=
            (tile.objects_r.size() + tile.objects_s.size()) * std::uint64_t{cfg.entry_bytes};
        TaskCost cost = pair_cost(tile.objects_r.size(), tile.objects_s.size(), cfg);
        // The join units run a nested loop; the reference-point dedup filter
        // is combinational and adds no cycles.
        for (const auto& a : tile.objects_r) {
            for (const auto& b : tile.objects_s) {
                if (!intersects(a.mbr, b.mbr)) continue;
                if (!point_in_tile(reference_point(a.mbr, b.mbr), tile.tile_mbr, tile.last_col,
                                   tile.last_row)) {
                    continue;
                }
                counter.emit(out, cfg, a.id, b.id);
                cost.out_bytes += cfg.result_pair_bytes;
            }
        }
        level.predicate_evals += cost.evals;
        costs.push_back(cost);
    }

    const std::uint64_t total = engine.run_phase(costs, 0);
    level.cycles = total;
    engine.stats.per_level.push_back(level);
    engine.stats.total_cycles = total;
    engine.stats.results_emitted = counter.emitted;
    moved_bytes += counter.emitted * cfg.result_pair_bytes;
    out.stats = engine.stats;
    out.latency_seconds =
        static_cast<double>(out.stats.total_cycles) / static_cast<double>(cfg.clock_hz);
    out.transfer_seconds = static_cast<double>(moved_bytes) / cfg.pcie_bytes_per_sec;
    return out;
}

std::uint64_t write_path_bytes(const CycleStats& stats, const SimConfig& cfg) {
    return stats.results_emitted * cfg.result_pair_bytes;
}

}  // namespace sjoin
