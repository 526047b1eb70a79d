#include "sjoin/bench.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <ostream>
#include <stdexcept>

#include "sjoin/dataset.hpp"
#include "sjoin/join_algos.hpp"
#include "sjoin/rtree.hpp"

namespace sjoin {

namespace {

volatile std::uint64_t g_sink = 0;

// One warm-up run, then the median of three timed repetitions.
double median_wall_ns(const std::function<std::uint64_t()>& fn) {
    g_sink = g_sink + fn();
    std::array<double, 3> samples{};
    for (auto& sample : samples) {
        const auto t0 = std::chrono::steady_clock::now();
        g_sink = g_sink + fn();
        const auto t1 = std::chrono::steady_clock::now();
        sample = std::chrono::duration<double, std::nano>(t1 - t0).count();
    }
    std::sort(samples.begin(), samples.end());
    return samples[1];
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a ^ (b + 0x9E3779B97F4A7C15ull + (a << 6) + (a >> 2));
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    return z ^ (z >> 31);
}

const char* policy_name(SchedulePolicy policy) {
    return policy == SchedulePolicy::kStatic ? "static" : "dynamic";
}

std::uint64_t sim_predicate_evals(const CycleStats& stats) {
    std::uint64_t total = 0;
    for (const auto& level : stats.per_level) total += level.predicate_evals;
    return total;
}

class RowSink {
public:
    RowSink(BenchReport& report, std::string experiment, std::string dataset, std::uint64_t seed)
        : report_(report),
          experiment_(std::move(experiment)),
          dataset_(std::move(dataset)),
          seed_(seed) {}

    void add(const std::string& algorithm, const std::string& params, const std::string& metric,
             double value) {
        report_.rows.push_back({experiment_, dataset_, algorithm, params, metric, value, seed_});
    }

private:
    BenchReport& report_;
    std::string experiment_;
    std::string dataset_;
    std::uint64_t seed_;
};

// Guards the report invariant: every engine in one dataset group must agree
// on the result cardinality.
class CountCheck {
public:
    void check(std::uint64_t count, const std::string& algorithm) {
        if (!seen_) {
            seen_ = true;
            expected_ = count;
            return;
        }
        if (count != expected_) {
            throw std::logic_error("result count mismatch: " + algorithm + " produced " +
                                   std::to_string(count) + ", expected " +
                                   std::to_string(expected_));
        }
    }

private:
    bool seen_ = false;
    std::uint64_t expected_ = 0;
};

std::string uniform_label(const ExperimentConfig& cfg) {
    return "uniform-rect:n=" + std::to_string(cfg.n) + ";seeds=" + std::to_string(cfg.seed) + "+" +
           std::to_string(cfg.seed + 1);
}

std::pair<std::vector<SpatialObject>, std::vector<SpatialObject>> uniform_pair(
    const ExperimentConfig& cfg) {
    DatasetSpec spec;
    spec.kind = DatasetSpec::Kind::kUniformRect;
    spec.n = cfg.n;
    spec.region = cfg.region;
    spec.seed = cfg.seed;
    auto r = gen_uniform(spec);
    spec.seed = cfg.seed + 1;
    auto s = gen_uniform(spec);
    return {std::move(r), std::move(s)};
}

std::uint32_t fixed_units(const ExperimentConfig& cfg) {
    return cfg.unit_counts.empty() ? 16 : cfg.unit_counts.back();
}

void run_node_size_sweep(const ExperimentConfig& cfg, BenchReport& report) {
    auto [r, s] = uniform_pair(cfg);
    RowSink rows(report, "node-size-sweep", uniform_label(cfg), cfg.seed);
    CountCheck counts;
    SimConfig sim_cfg = cfg.sim;
    sim_cfg.num_join_units = fixed_units(cfg);
    for (const std::uint32_t m : cfg.node_sizes) {
        const RTree tr = str_bulk_load(r, m);
        const RTree ts = str_bulk_load(s, m);

        const SimOutcome out = sim_sync_traversal(tr, ts, sim_cfg);
        const std::string sim_params = "M=" + std::to_string(m) +
                                       ";units=" + std::to_string(sim_cfg.num_join_units) +
                                       ";policy=" + policy_name(sim_cfg.scheduling_policy);
        counts.check(out.result.size(), "sim-sync");
        rows.add("sim-sync", sim_params, "cycles", static_cast<double>(out.stats.total_cycles));
        rows.add("sim-sync", sim_params, "latency_seconds", out.latency_seconds);
        rows.add("sim-sync", sim_params, "predicate_evals",
                 static_cast<double>(sim_predicate_evals(out.stats)));
        rows.add("sim-sync", sim_params, "result_count", static_cast<double>(out.result.size()));

        const std::string cpu_params = "M=" + std::to_string(m) +
                                       ";workers=" + std::to_string(cfg.workers) +
                                       ";policy=dynamic";
        JoinStats stats;
        const JoinResult cpu =
            sync_traversal_bfs(tr, ts, cfg.workers, SchedulePolicy::kDynamic, &stats);
        counts.check(cpu.size(), "sync-bfs");
        const double wall = median_wall_ns([&] {
            return sync_traversal_bfs(tr, ts, cfg.workers, SchedulePolicy::kDynamic).size();
        });
        rows.add("sync-bfs", cpu_params, "wall_time_ns", wall);
        rows.add("sync-bfs", cpu_params, "predicate_evals",
                 static_cast<double>(stats.predicate_evals));
        rows.add("sync-bfs", cpu_params, "result_count", static_cast<double>(cpu.size()));
    }
}

void run_unit_scalability(const ExperimentConfig& cfg, BenchReport& report) {
    auto [r, s] = uniform_pair(cfg);
    RowSink rows(report, "unit-scalability", uniform_label(cfg), cfg.seed);
    CountCheck counts;
    for (const std::uint32_t m : cfg.node_sizes) {
        const RTree tr = str_bulk_load(r, m);
        const RTree ts = str_bulk_load(s, m);
        for (const std::uint32_t units : cfg.unit_counts) {
            SimConfig sim_cfg = cfg.sim;
            sim_cfg.num_join_units = units;
            const SimOutcome out = sim_sync_traversal(tr, ts, sim_cfg);
            counts.check(out.result.size(), "sim-sync");
            const std::string params = "M=" + std::to_string(m) + ";units=" +
                                       std::to_string(units) + ";policy=" +
                                       policy_name(sim_cfg.scheduling_policy);
            rows.add("sim-sync", params, "cycles", static_cast<double>(out.stats.total_cycles));
            rows.add("sim-sync", params, "latency_seconds", out.latency_seconds);
        }
    }
}

void run_cycles_per_predicate(const ExperimentConfig& cfg, BenchReport& report) {
    RowSink rows(report, "cycles-per-predicate", "synthetic-node-pairs", cfg.seed);
    std::vector<std::uint32_t> sizes = {1, 2, 4};
    sizes.insert(sizes.end(), cfg.node_sizes.begin(), cfg.node_sizes.end());
    std::sort(sizes.begin(), sizes.end());
    sizes.erase(std::unique(sizes.begin(), sizes.end()), sizes.end());

    SimConfig sim_cfg = cfg.sim;
    sim_cfg.num_join_units = 1;
    for (const std::uint32_t n : sizes) {
        const std::uint64_t cycles = unit_pair_cycles(n, n, sim_cfg);
        const std::string params = "node_size=" + std::to_string(n) + ";units=1";
        rows.add("join-unit", params, "cycles", static_cast<double>(cycles));
        rows.add("join-unit", params, "cycles_per_predicate",
                 static_cast<double>(cycles) / (static_cast<double>(n) * n));
    }
}

void run_tile_join_compare(const ExperimentConfig& cfg, BenchReport& report) {
    RowSink rows(report, "tile-join-compare", "synthetic-tiles", cfg.seed);
    struct Cardinality {
        const char* name;
        float edge;
    };
    // Tile edge lengths chosen so unit squares barely ever collide in the
    // low configuration and collide heavily in the high one.
    constexpr Cardinality kCards[] = {{"low", 200.0f}, {"high", 6.5f}};

    for (const auto& card : kCards) {
        for (const std::uint32_t n : cfg.tile_sizes) {
            std::vector<std::vector<SpatialObject>> tiles_r(cfg.tiles_per_batch);
            std::vector<std::vector<SpatialObject>> tiles_s(cfg.tiles_per_batch);
            DatasetSpec spec;
            spec.kind = DatasetSpec::Kind::kUniformRect;
            spec.n = n;
            spec.region = {0.0f, 0.0f, card.edge, card.edge};
            for (std::uint32_t k = 0; k < cfg.tiles_per_batch; ++k) {
                spec.seed = mix_seed(cfg.seed, (k * 2u + 0u) ^ (n * 131u) ^ (card.edge == 200.0f));
                tiles_r[k] = gen_uniform(spec);
                spec.seed = mix_seed(cfg.seed, (k * 2u + 1u) ^ (n * 131u) ^ (card.edge == 200.0f));
                tiles_s[k] = gen_uniform(spec);
            }

            std::uint64_t count = 0;
            for (std::uint32_t k = 0; k < cfg.tiles_per_batch; ++k) {
                count += nested_loop_join(tiles_r[k], tiles_s[k]).size();
            }
            const std::string suffix = ";cardinality=" + std::string(card.name) +
                                       ";tiles=" + std::to_string(cfg.tiles_per_batch);
            const std::string params = "tile_size=" + std::to_string(n) + suffix;

            const double nl_wall = median_wall_ns([&] {
                std::uint64_t total = 0;
                for (std::uint32_t k = 0; k < cfg.tiles_per_batch; ++k) {
                    total += nested_loop_join(tiles_r[k], tiles_s[k]).size();
                }
                return total;
            });
            rows.add("nested-loop", params, "wall_time_ns", nl_wall);
            rows.add("nested-loop", params, "result_count", static_cast<double>(count));

            const double ps_wall = median_wall_ns([&] {
                std::uint64_t total = 0;
                for (std::uint32_t k = 0; k < cfg.tiles_per_batch; ++k) {
                    total += plane_sweep_join(tiles_r[k], tiles_s[k]).size();
                }
                return total;
            });
            rows.add("plane-sweep", params, "wall_time_ns", ps_wall);
            rows.add("plane-sweep", params, "result_count", static_cast<double>(count));
        }
    }
}

void run_index_cost(const ExperimentConfig& cfg, BenchReport& report) {
    auto [r, s] = uniform_pair(cfg);
    RowSink rows(report, "index-cost", uniform_label(cfg), cfg.seed);

    const double str_wall = median_wall_ns([&] {
        return static_cast<std::uint64_t>(str_bulk_load(r, 16).node_count()) +
               str_bulk_load(s, 16).node_count();
    });
    rows.add("rtree-str", "M=16", "wall_time_ns", str_wall);

    const auto side = static_cast<std::uint32_t>(std::max(
        1.0, std::ceil(std::sqrt(static_cast<double>(cfg.n) / 16.0))));
    const GridSpec grid{cfg.region, side, side};
    const double flat_wall =
        median_wall_ns([&] { return pbsm_partition(r, s, grid).size(); });
    rows.add("partition", "grid=" + std::to_string(side) + "x" + std::to_string(side),
             "wall_time_ns", flat_wall);

    const double hier_wall = median_wall_ns(
        [&] { return pbsm_hierarchical_partition(r, s, cfg.max_geomean).size(); });
    rows.add("hierarchical-partition", "max_geomean=" + std::to_string(cfg.max_geomean),
             "wall_time_ns", hier_wall);
}

void run_e2e_compare(const ExperimentConfig& cfg, BenchReport& report) {
    auto [r, s] = uniform_pair(cfg);
    RowSink rows(report, "e2e-compare", uniform_label(cfg), cfg.seed);
    CountCheck counts;

    const RTree tr = str_bulk_load(r, 16);
    const RTree ts = str_bulk_load(s, 16);
    const auto tiles = pbsm_hierarchical_partition(r, s, cfg.max_geomean);

    auto software = [&](const std::string& algorithm, const std::string& params,
                        const std::function<JoinResult(JoinStats*)>& join) {
        JoinStats stats;
        const JoinResult result = join(&stats);
        counts.check(result.size(), algorithm);
        rows.add(algorithm, params, "wall_time_ns",
                 median_wall_ns([&] { return join(nullptr).size(); }));
        rows.add(algorithm, params, "predicate_evals",
                 static_cast<double>(stats.predicate_evals));
        rows.add(algorithm, params, "result_count", static_cast<double>(result.size()));
    };

    if (static_cast<std::uint64_t>(r.size()) * s.size() <= 100'000'000ull) {
        software("nested-loop", "", [&](JoinStats* st) { return nested_loop_join(r, s, st); });
    }
    software("plane-sweep", "", [&](JoinStats* st) { return plane_sweep_join(r, s, st); });
    software("sync-dfs", "M=16", [&](JoinStats* st) { return sync_traversal_dfs(tr, ts, st); });
    for (const SchedulePolicy policy : {SchedulePolicy::kStatic, SchedulePolicy::kDynamic}) {
        software("sync-bfs",
                 "M=16;workers=" + std::to_string(cfg.workers) + ";policy=" + policy_name(policy),
                 [&](JoinStats* st) {
                     return sync_traversal_bfs(tr, ts, cfg.workers, policy, st);
                 });
    }
    for (const TileJoiner joiner : {TileJoiner::kNestedLoop, TileJoiner::kPlaneSweep}) {
        software("pbsm",
                 "max_geomean=" + std::to_string(cfg.max_geomean) + ";joiner=" +
                     (joiner == TileJoiner::kNestedLoop ? "nested-loop" : "plane-sweep") +
                     ";workers=" + std::to_string(cfg.workers),
                 [&](JoinStats* st) {
                     return pbsm_join(tiles, joiner, cfg.workers, SchedulePolicy::kDynamic, st);
                 });
    }
    software("pbsm-1d",
             "strips=" + std::to_string(cfg.strips) + ";workers=" + std::to_string(cfg.workers),
             [&](JoinStats* st) { return pbsm_1d(r, s, cfg.strips, cfg.workers, st); });

    SimConfig sim_cfg = cfg.sim;
    sim_cfg.num_join_units = fixed_units(cfg);
    const std::string sim_suffix = ";units=" + std::to_string(sim_cfg.num_join_units) +
                                   ";policy=" + policy_name(sim_cfg.scheduling_policy);
    {
        const SimOutcome out = sim_sync_traversal(tr, ts, sim_cfg);
        counts.check(out.result.size(), "sim-sync");
        rows.add("sim-sync", "M=16" + sim_suffix, "cycles",
                 static_cast<double>(out.stats.total_cycles));
        rows.add("sim-sync", "M=16" + sim_suffix, "latency_seconds", out.latency_seconds);
        rows.add("sim-sync", "M=16" + sim_suffix, "result_count",
                 static_cast<double>(out.result.size()));
    }
    {
        const SimOutcome out = sim_pbsm(tiles, sim_cfg);
        const std::string params = "max_geomean=" + std::to_string(cfg.max_geomean) + sim_suffix;
        counts.check(out.result.size(), "sim-pbsm");
        rows.add("sim-pbsm", params, "cycles", static_cast<double>(out.stats.total_cycles));
        rows.add("sim-pbsm", params, "latency_seconds", out.latency_seconds);
        rows.add("sim-pbsm", params, "result_count", static_cast<double>(out.result.size()));
    }
}

}  // namespace

const std::vector<std::string>& experiment_names() {
    static const std::vector<std::string> kNames = {
        "node-size-sweep",  "unit-scalability", "cycles-per-predicate",
        "tile-join-compare", "index-cost",      "e2e-compare"};
    return kNames;
}

BenchReport run_experiment(std::string_view name, const ExperimentConfig& cfg) {
    BenchReport report;
    if (name == "node-size-sweep") {
        run_node_size_sweep(cfg, report);
    } else if (name == "unit-scalability") {
        run_unit_scalability(cfg, report);
    } else if (name == "cycles-per-predicate") {
        run_cycles_per_predicate(cfg, report);
    } else if (name == "tile-join-compare") {
        run_tile_join_compare(cfg, report);
    } else if (name == "index-cost") {
        run_index_cost(cfg, report);
    } else if (name == "e2e-compare") {
        run_e2e_compare(cfg, report);
    } else {
        throw std::invalid_argument("unknown experiment '" + std::string(name) + "'");
    }
    return report;
}

void write_stats_csv(const BenchReport& report, std::ostream& out) {
    std::string buf = "experiment,dataset,algorithm,params,metric,value,seed\n";
    for (const auto& row : report.rows) {
        buf += row.experiment;
        buf.push_back(',');
        buf += row.dataset;
        buf.push_back(',');
        buf += row.algorithm;
        buf.push_back(',');
        buf += row.params;
        buf.push_back(',');
        buf += row.metric;
        buf.push_back(',');
        char num[64];
        const auto res = std::to_chars(num, num + sizeof(num), row.value);
        buf.append(num, res.ptr);
        buf.push_back(',');
        buf += std::to_string(row.seed);
        buf.push_back('\n');
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw std::runtime_error("write_stats_csv: write failed");
}

void write_stats_csv(const BenchReport& report, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("write_stats_csv: cannot open " + path.string());
    }
    write_stats_csv(report, out);
}

}  // namespace sjoin
