#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sjoin/join_algos.hpp"
#include "sjoin/join_result.hpp"
#include "sjoin/rtree.hpp"

namespace sjoin {

// Accelerator timing-model parameters. The memory defaults are calibrated so
// a 32x32 node join costs 1047 cycles (10 latency + 10 transfer + 1024
// predicates + 3 pipeline stages) and cycles-per-predicate stays in the
// 1.0..1.35 band for node sizes 8..64 while small nodes are latency-bound.
struct SimConfig {
    std::uint32_t num_join_units = 1;
    std::uint32_t mem_latency_cycles = 10;      // random-access latency
    std::uint32_t mem_bw_bytes_per_cycle = 64;  // burst transfer width
    std::uint32_t entry_bytes = 20;
    std::uint32_t result_pair_bytes = 8;
    std::uint32_t pipeline_depth = 3;
    std::uint32_t burst_threshold_bytes = 4096;
    std::uint64_t clock_hz = 200'000'000;
    SchedulePolicy scheduling_policy = SchedulePolicy::kDynamic;
    std::uint32_t read_channels = 1;
    std::uint32_t write_channels = 1;
    // Host<->accelerator movement, reported separately from total_cycles.
    double pcie_bytes_per_sec = 16e9;
    bool record_write_offsets = false;
};

struct LevelStats {
    std::uint64_t tasks = 0;
    std::uint64_t predicate_evals = 0;
    std::uint64_t cycles = 0;

    bool operator==(const LevelStats&) const = default;
};

struct CycleStats {
    std::uint64_t total_cycles = 0;
    std::vector<LevelStats> per_level;
    std::uint64_t mem_read_cycles = 0;   // read-channel busy cycles
    std::uint64_t mem_write_cycles = 0;  // write-channel busy cycles
    std::uint64_t compute_cycles = 0;    // predicate evals + pipeline fill, summed over units
    std::uint64_t stall_cycles = 0;      // unit idle time spent waiting for a read channel
    std::uint64_t results_emitted = 0;
    std::uint64_t flush_count = 0;       // bursts pushed out of the burst buffers

    bool operator==(const CycleStats&) const = default;
};

struct SimOutcome {
    JoinResult result;
    CycleStats stats;
    double latency_seconds = 0.0;
    double transfer_seconds = 0.0;
    // Physical write addresses of the emitted result pairs, captured when
    // cfg.record_write_offsets is set. Always {0, 8, 16, ...}: the write unit
    // assigns offsets from a self-incrementing counter.
    std::vector<std::uint64_t> write_offsets;
};

// Cycles one join unit spends on a node pair: both node reads are issued in
// parallel on independent read paths, then one predicate retires per cycle.
//   fetch = latency + ceil(max(n_r, n_s) * entry_bytes / bw)
//   total = fetch + n_r * n_s + pipeline_depth
std::uint64_t unit_pair_cycles(std::uint32_t n_r, std::uint32_t n_s, const SimConfig& cfg);

// Level-synchronous traversal of two R-trees on the modeled accelerator.
// Functionally equivalent to sync_traversal_bfs; cycle accounting comes from
// a per-level event loop with shared read/write channels, per-unit burst
// buffers, and a full drain barrier between levels.
SimOutcome sim_sync_traversal(const RTree& tree_r, const RTree& tree_s, const SimConfig& cfg);

// Single-phase tile-wise join (join units run nested loop; the reference
// point dedup filter is combinational and costs no extra cycles).
SimOutcome sim_pbsm(std::span<const Tile> tiles, const SimConfig& cfg);

// Bytes the result write path carried: results_emitted * result_pair_bytes.
std::uint64_t write_path_bytes(const CycleStats& stats, const SimConfig& cfg);

}  // namespace sjoin
