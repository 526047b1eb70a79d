#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "sjoin/geom.hpp"
#include "sjoin/sim.hpp"

namespace sjoin {

// One measurement in long form; serialized as the stats CSV
// (experiment,dataset,algorithm,params,metric,value,seed).
struct BenchRow {
    std::string experiment;
    std::string dataset;
    std::string algorithm;
    std::string params;
    std::string metric;
    double value = 0.0;
    std::uint64_t seed = 0;
};

struct BenchReport {
    std::vector<BenchRow> rows;
};

struct ExperimentConfig {
    std::uint64_t n = 100000;
    std::uint64_t seed = 1;
    Mbr region{0.0f, 0.0f, 10000.0f, 10000.0f};
    std::vector<std::uint32_t> node_sizes{8, 16, 32, 64};
    std::vector<std::uint32_t> unit_counts{1, 2, 4, 8, 16};
    std::vector<std::uint32_t> tile_sizes{4, 8, 16, 32, 64, 128};
    std::uint32_t tiles_per_batch = 256;  // tile-join-compare batch size
    unsigned workers = 16;
    std::uint32_t max_geomean = 16;
    std::uint32_t strips = 64;  // 1-D PBSM strip count
    SimConfig sim;              // base accelerator parameters
};

// Experiments: node-size-sweep, unit-scalability, cycles-per-predicate,
// tile-join-compare, index-cost, e2e-compare. Timed metrics are the median
// of three runs after one warm-up; everything else is deterministic.
// Throws std::invalid_argument for an unknown name and std::logic_error if
// engines disagree on the result count within one dataset group.
BenchReport run_experiment(std::string_view name, const ExperimentConfig& cfg);

const std::vector<std::string>& experiment_names();

void write_stats_csv(const BenchReport& report, std::ostream& out);
void write_stats_csv(const BenchReport& report, const std::filesystem::path& path);

}  // namespace sjoin
