#include "sjoin/cli.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "sjoin/bench.hpp"
#include "sjoin/dataset.hpp"
#include "sjoin/join_algos.hpp"
#include "sjoin/rtree.hpp"
#include "sjoin/sim.hpp"

namespace sjoin {

namespace {

std::vector<std::string> split(const std::string& text, char sep) {
    std::vector<std::string> parts;
    std::size_t lo = 0;
    while (true) {
        const std::size_t hi = text.find(sep, lo);
        parts.push_back(text.substr(lo, hi - lo));
        if (hi == std::string::npos) break;
        lo = hi + 1;
    }
    return parts;
}

float parse_float(const std::string& field, const char* what) {
    float value = 0.0f;
    const auto res = std::from_chars(field.data(), field.data() + field.size(), value);
    if (res.ec != std::errc{} || res.ptr != field.data() + field.size()) {
        throw std::invalid_argument(std::string("bad ") + what + " value '" + field + "'");
    }
    return value;
}

Mbr parse_region(const std::string& text) {
    const auto parts = split(text, ',');
    if (parts.size() != 4) {
        throw std::invalid_argument("region must be xmin,ymin,xmax,ymax");
    }
    const Mbr region{parse_float(parts[0], "region"), parse_float(parts[1], "region"),
                     parse_float(parts[2], "region"), parse_float(parts[3], "region")};
    if (!region.valid()) throw std::invalid_argument("invalid region '" + text + "'");
    return region;
}

std::pair<std::uint32_t, std::uint32_t> parse_grid(const std::string& text) {
    const auto parts = split(text, 'x');
    if (parts.size() != 2) throw std::invalid_argument("grid must be COLSxROWS");
    const auto parse_dim = [&](const std::string& field) {
        std::uint32_t v = 0;
        const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
        if (res.ec != std::errc{} || res.ptr != field.data() + field.size() || v < 1) {
            throw std::invalid_argument("bad grid dimension '" + field + "'");
        }
        return v;
    };
    return {parse_dim(parts[0]), parse_dim(parts[1])};
}

std::vector<std::uint32_t> parse_u32_list(const std::string& text, const char* what) {
    std::vector<std::uint32_t> out;
    for (const auto& field : split(text, ',')) {
        std::uint32_t v = 0;
        const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
        if (res.ec != std::errc{} || res.ptr != field.data() + field.size()) {
            throw std::invalid_argument(std::string("bad ") + what + " value '" + field + "'");
        }
        out.push_back(v);
    }
    if (out.empty()) throw std::invalid_argument(std::string(what) + " list is empty");
    return out;
}

SchedulePolicy parse_policy(const std::string& text) {
    if (text == "static") return SchedulePolicy::kStatic;
    if (text == "dynamic") return SchedulePolicy::kDynamic;
    throw std::invalid_argument("policy must be 'static' or 'dynamic'");
}

void append_float(std::string& out, float v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, res.ptr);
}

struct GenOpts {
    std::uint64_t n = 1;
    std::uint64_t seed = 0;
    std::string out;
    std::string region = "0,0,10000,10000";
    float obj_w = 1.0f;
    float obj_h = 1.0f;
    bool points = false;
};

void run_gen(const GenOpts& opts) {
    DatasetSpec spec;
    spec.kind = opts.points ? DatasetSpec::Kind::kUniformPoint : DatasetSpec::Kind::kUniformRect;
    spec.n = opts.n;
    spec.seed = opts.seed;
    spec.region = parse_region(opts.region);
    spec.obj_w = opts.obj_w;
    spec.obj_h = opts.obj_h;
    store_dataset(gen_uniform(spec), std::filesystem::path(opts.out));
}

struct IndexOpts {
    std::string in;
    std::string out;
    std::uint32_t node_size = 16;
};

void run_index(const IndexOpts& opts) {
    const auto objects = load_dataset(std::filesystem::path(opts.in));
    save_rtree(str_bulk_load(objects, opts.node_size), std::filesystem::path(opts.out));
}

struct ValidateOpts {
    std::string tree;
    std::string data;
    std::uint32_t min_fill = 1;
};

int run_validate(const ValidateOpts& opts) {
    const RTree tree = load_rtree(std::filesystem::path(opts.tree));
    std::vector<SpatialObject> source;
    if (!opts.data.empty()) source = load_dataset(std::filesystem::path(opts.data));
    const ValidationReport report = validate(tree, source, opts.min_fill);
    if (report.ok()) {
        std::cout << "ok: " << tree.node_count() << " nodes, height " << tree.height << "\n";
        return 0;
    }
    for (const auto& violation : report.violations) std::cout << violation << "\n";
    return 1;
}

struct PartitionOpts {
    std::string r;
    std::string s;
    std::string grid = "32x32";
    std::uint32_t max_geomean = 0;
    std::string out;
};

std::vector<Tile> make_tiles(std::span<const SpatialObject> r, std::span<const SpatialObject> s,
                             const std::string& grid_text, std::uint32_t max_geomean) {
    if (r.empty() || s.empty()) return {};
    if (max_geomean > 0) return pbsm_hierarchical_partition(r, s, max_geomean);
    const auto [cols, rows] = parse_grid(grid_text);
    return pbsm_partition(r, s, GridSpec{dataset_bounds(r, s), cols, rows});
}

void run_partition(const PartitionOpts& opts) {
    const auto r = load_dataset(std::filesystem::path(opts.r));
    const auto s = load_dataset(std::filesystem::path(opts.s));
    const auto tiles = make_tiles(r, s, opts.grid, opts.max_geomean);

    std::ofstream out(opts.out, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + opts.out);
    std::string buf = "tile,xmin,ymin,xmax,ymax,last_col,last_row,over_bound,n_r,n_s\n";
    for (std::size_t i = 0; i < tiles.size(); ++i) {
        const Tile& tile = tiles[i];
        buf += std::to_string(i);
        buf.push_back(',');
        append_float(buf, tile.tile_mbr.xmin);
        buf.push_back(',');
        append_float(buf, tile.tile_mbr.ymin);
        buf.push_back(',');
        append_float(buf, tile.tile_mbr.xmax);
        buf.push_back(',');
        append_float(buf, tile.tile_mbr.ymax);
        buf += tile.last_col ? ",1" : ",0";
        buf += tile.last_row ? ",1" : ",0";
        buf += tile.over_bound ? ",1" : ",0";
        buf.push_back(',');
        buf += std::to_string(tile.objects_r.size());
        buf.push_back(',');
        buf += std::to_string(tile.objects_s.size());
        buf.push_back('\n');
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    std::cerr << "partition: " << tiles.size() << " non-empty tiles\n";
}

struct JoinOpts {
    std::string algo;
    std::string r;
    std::string s;
    std::uint32_t node_size = 16;
    unsigned workers = 1;
    std::string policy = "dynamic";
    std::string grid = "32x32";
    std::uint32_t max_geomean = 0;
    std::string tile_joiner = "plane-sweep";
    std::uint32_t strips = 16;
    std::string out;
    std::string stats_out;
};

void run_join(const JoinOpts& opts) {
    const auto r = load_dataset(std::filesystem::path(opts.r));
    const auto s = load_dataset(std::filesystem::path(opts.s));
    const SchedulePolicy policy = parse_policy(opts.policy);
    JoinStats stats;
    JoinResult result;

    if (opts.algo == "nested-loop") {
        result = nested_loop_join(r, s, &stats);
    } else if (opts.algo == "plane-sweep") {
        result = plane_sweep_join(r, s, &stats);
    } else if (opts.algo == "sync-dfs" || opts.algo == "sync-bfs") {
        if (r.empty() || s.empty()) {
            throw std::invalid_argument("synchronous traversal needs non-empty datasets");
        }
        const RTree tr = str_bulk_load(r, opts.node_size);
        const RTree ts = str_bulk_load(s, opts.node_size);
        result = opts.algo == "sync-dfs"
                     ? sync_traversal_dfs(tr, ts, &stats)
                     : sync_traversal_bfs(tr, ts, opts.workers, policy, &stats);
    } else if (opts.algo == "pbsm") {
        const auto tiles = make_tiles(r, s, opts.grid, opts.max_geomean);
        const TileJoiner joiner = opts.tile_joiner == "nested-loop" ? TileJoiner::kNestedLoop
                                                                    : TileJoiner::kPlaneSweep;
        result = pbsm_join(tiles, joiner, opts.workers, policy, &stats);
    } else if (opts.algo == "pbsm-1d") {
        result = pbsm_1d(r, s, opts.strips, opts.workers, &stats);
    } else {
        throw std::invalid_argument("unknown join algorithm '" + opts.algo + "'");
    }

    store_result(result, std::filesystem::path(opts.out));
    if (!opts.stats_out.empty()) {
        BenchReport report;
        const std::string dataset = opts.r + "|" + opts.s;
        report.rows.push_back({"join", dataset, opts.algo, "", "result_count",
                               static_cast<double>(result.size()), 0});
        report.rows.push_back({"join", dataset, opts.algo, "", "predicate_evals",
                               static_cast<double>(stats.predicate_evals), 0});
        write_stats_csv(report, std::filesystem::path(opts.stats_out));
    }
    std::cerr << "join: " << result.size() << " pairs\n";
}

struct SimFlags {
    std::uint32_t units = 1;
    std::string policy = "dynamic";
    std::uint32_t mem_latency = 10;
    std::uint32_t mem_bw = 64;
    std::uint32_t burst_threshold = 4096;
    std::uint64_t clock_hz = 200'000'000;
    std::uint32_t pipeline_depth = 3;
    std::uint32_t entry_bytes = 20;
    std::uint32_t result_pair_bytes = 8;
    std::uint32_t read_channels = 1;
    std::uint32_t write_channels = 1;
    double pcie_bytes_per_sec = 16e9;
};

void add_sim_flags(CLI::App* cmd, SimFlags& flags) {
    cmd->add_option("--units", flags.units, "number of join units");
    cmd->add_option("--policy", flags.policy, "scheduling policy: static|dynamic");
    cmd->add_option("--mem-latency", flags.mem_latency, "random-access latency in cycles");
    cmd->add_option("--mem-bw", flags.mem_bw, "memory bandwidth in bytes per cycle");
    cmd->add_option("--burst-threshold", flags.burst_threshold, "burst buffer flush threshold");
    cmd->add_option("--clock-hz", flags.clock_hz, "accelerator clock in Hz");
    cmd->add_option("--pipeline-depth", flags.pipeline_depth, "join unit pipeline stages");
    cmd->add_option("--entry-bytes", flags.entry_bytes, "node entry footprint in bytes");
    cmd->add_option("--result-pair-bytes", flags.result_pair_bytes, "result pair footprint");
    cmd->add_option("--read-channels", flags.read_channels, "independent read channels");
    cmd->add_option("--write-channels", flags.write_channels, "independent write channels");
    cmd->add_option("--pcie-bytes-per-sec", flags.pcie_bytes_per_sec,
                    "host transfer bandwidth (reported separately)");
}

SimConfig to_sim_config(const SimFlags& flags) {
    SimConfig cfg;
    cfg.num_join_units = flags.units;
    cfg.scheduling_policy = parse_policy(flags.policy);
    cfg.mem_latency_cycles = flags.mem_latency;
    cfg.mem_bw_bytes_per_cycle = flags.mem_bw;
    cfg.burst_threshold_bytes = flags.burst_threshold;
    cfg.clock_hz = flags.clock_hz;
    cfg.pipeline_depth = flags.pipeline_depth;
    cfg.entry_bytes = flags.entry_bytes;
    cfg.result_pair_bytes = flags.result_pair_bytes;
    cfg.read_channels = flags.read_channels;
    cfg.write_channels = flags.write_channels;
    cfg.pcie_bytes_per_sec = flags.pcie_bytes_per_sec;
    return cfg;
}

struct SimOpts {
    std::string mode;
    std::string r;
    std::string s;
    std::string tree_r;
    std::string tree_s;
    std::uint32_t node_size = 16;
    std::string grid;
    std::uint32_t max_geomean = 16;
    std::string out;
    std::string result_out;
    std::uint64_t seed = 0;
    SimFlags flags;
};

void run_sim(const SimOpts& opts) {
    const SimConfig cfg = to_sim_config(opts.flags);
    SimOutcome outcome;
    std::string dataset;
    std::string params = "units=" + std::to_string(cfg.num_join_units) +
                         ";policy=" + opts.flags.policy;

    if (opts.mode == "sync") {
        RTree tr;
        RTree ts;
        if (!opts.tree_r.empty() || !opts.tree_s.empty()) {
            if (opts.tree_r.empty() || opts.tree_s.empty()) {
                throw std::invalid_argument("sync mode needs both --tree-r and --tree-s");
            }
            tr = load_rtree(std::filesystem::path(opts.tree_r));
            ts = load_rtree(std::filesystem::path(opts.tree_s));
            dataset = opts.tree_r + "|" + opts.tree_s;
            params += ";M=" + std::to_string(tr.max_entries);
        } else {
            if (opts.r.empty() || opts.s.empty()) {
                throw std::invalid_argument("sync mode needs --r/--s or --tree-r/--tree-s");
            }
            const auto r = load_dataset(std::filesystem::path(opts.r));
            const auto s = load_dataset(std::filesystem::path(opts.s));
            tr = str_bulk_load(r, opts.node_size);
            ts = str_bulk_load(s, opts.node_size);
            dataset = opts.r + "|" + opts.s;
            params += ";M=" + std::to_string(opts.node_size);
        }
        outcome = sim_sync_traversal(tr, ts, cfg);
    } else if (opts.mode == "pbsm") {
        if (opts.r.empty() || opts.s.empty()) {
            throw std::invalid_argument("pbsm mode needs --r and --s");
        }
        const auto r = load_dataset(std::filesystem::path(opts.r));
        const auto s = load_dataset(std::filesystem::path(opts.s));
        const auto tiles = make_tiles(r, s, opts.grid.empty() ? std::string("32x32") : opts.grid,
                                      opts.grid.empty() ? opts.max_geomean : 0);
        dataset = opts.r + "|" + opts.s;
        params += opts.grid.empty() ? ";max_geomean=" + std::to_string(opts.max_geomean)
                                    : ";grid=" + opts.grid;
        outcome = sim_pbsm(tiles, cfg);
    } else {
        throw std::invalid_argument("sim mode must be 'sync' or 'pbsm'");
    }

    const std::string algorithm = opts.mode == "sync" ? "sim-sync" : "sim-pbsm";
    BenchReport report;
    auto add = [&](const std::string& metric, double value) {
        report.rows.push_back({"sim", dataset, algorithm, params, metric, value, opts.seed});
    };
    std::uint64_t evals = 0;
    for (const auto& level : outcome.stats.per_level) evals += level.predicate_evals;
    add("cycles", static_cast<double>(outcome.stats.total_cycles));
    add("latency_seconds", outcome.latency_seconds);
    add("transfer_seconds", outcome.transfer_seconds);
    add("predicate_evals", static_cast<double>(evals));
    add("result_count", static_cast<double>(outcome.result.size()));
    add("mem_read_cycles", static_cast<double>(outcome.stats.mem_read_cycles));
    add("mem_write_cycles", static_cast<double>(outcome.stats.mem_write_cycles));
    add("compute_cycles", static_cast<double>(outcome.stats.compute_cycles));
    add("stall_cycles", static_cast<double>(outcome.stats.stall_cycles));
    add("flush_count", static_cast<double>(outcome.stats.flush_count));
    write_stats_csv(report, std::filesystem::path(opts.out));

    if (!opts.result_out.empty()) {
        store_result(outcome.result, std::filesystem::path(opts.result_out));
    }
    std::cerr << "sim: " << outcome.stats.total_cycles << " cycles, " << outcome.result.size()
              << " pairs\n";
}

struct BenchOpts {
    std::string experiment;
    std::string out;
    std::uint64_t n = 100000;
    std::uint64_t seed = 1;
    std::string region = "0,0,10000,10000";
    std::string node_sizes = "8,16,32,64";
    std::string unit_counts = "1,2,4,8,16";
    std::string tile_sizes = "4,8,16,32,64,128";
    std::uint32_t tiles_per_batch = 256;
    unsigned workers = 16;
    std::uint32_t max_geomean = 16;
    std::uint32_t strips = 64;
    SimFlags flags;
};

void run_bench(const BenchOpts& opts) {
    ExperimentConfig cfg;
    cfg.n = opts.n;
    cfg.seed = opts.seed;
    cfg.region = parse_region(opts.region);
    cfg.node_sizes = parse_u32_list(opts.node_sizes, "node size");
    cfg.unit_counts = parse_u32_list(opts.unit_counts, "unit count");
    cfg.tile_sizes = parse_u32_list(opts.tile_sizes, "tile size");
    cfg.tiles_per_batch = opts.tiles_per_batch;
    cfg.workers = opts.workers;
    cfg.max_geomean = opts.max_geomean;
    cfg.strips = opts.strips;
    cfg.sim = to_sim_config(opts.flags);
    write_stats_csv(run_experiment(opts.experiment, cfg), std::filesystem::path(opts.out));
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
    CLI::App app{"spatial join engine with an accelerator cycle model"};
    app.require_subcommand(1);
    app.set_config("--config");
    int rc = 0;

    GenOpts gen_opts;
    auto* gen_cmd = app.add_subcommand("gen", "generate a uniform dataset CSV");
    gen_cmd->add_option("--n", gen_opts.n, "object count")->required();
    gen_cmd->add_option("--seed", gen_opts.seed, "generator seed");
    gen_cmd->add_option("--out", gen_opts.out, "output CSV path")->required();
    gen_cmd->add_option("--region", gen_opts.region, "map region xmin,ymin,xmax,ymax");
    gen_cmd->add_option("--obj-w", gen_opts.obj_w, "object width");
    gen_cmd->add_option("--obj-h", gen_opts.obj_h, "object height");
    gen_cmd->add_flag("--points", gen_opts.points, "generate points instead of rectangles");
    gen_cmd->callback([&] { run_gen(gen_opts); });

    IndexOpts index_opts;
    auto* index_cmd = app.add_subcommand("index", "bulk load an R-tree and serialize it");
    index_cmd->add_option("--in", index_opts.in, "dataset CSV")->required();
    index_cmd->add_option("--node-size", index_opts.node_size, "node capacity M");
    index_cmd->add_option("--out", index_opts.out, "output tree path")->required();
    index_cmd->callback([&] { run_index(index_opts); });

    ValidateOpts validate_opts;
    auto* validate_cmd = app.add_subcommand("validate", "check a serialized R-tree");
    validate_cmd->add_option("--tree", validate_opts.tree, "tree file")->required();
    validate_cmd->add_option("--data", validate_opts.data, "source dataset CSV (coverage check)");
    validate_cmd->add_option("--min-fill", validate_opts.min_fill,
                             "minimum entries per non-root node");
    validate_cmd->callback([&] { rc = run_validate(validate_opts); });

    PartitionOpts partition_opts;
    auto* partition_cmd = app.add_subcommand("partition", "partition two datasets into tiles");
    partition_cmd->add_option("--r", partition_opts.r, "dataset R CSV")->required();
    partition_cmd->add_option("--s", partition_opts.s, "dataset S CSV")->required();
    partition_cmd->add_option("--grid", partition_opts.grid, "uniform grid COLSxROWS");
    partition_cmd->add_option("--max-geomean", partition_opts.max_geomean,
                              "hierarchical workload bound (0 = flat grid)");
    partition_cmd->add_option("--out", partition_opts.out, "tile summary CSV")->required();
    partition_cmd->callback([&] { run_partition(partition_opts); });

    JoinOpts join_opts;
    auto* join_cmd = app.add_subcommand("join", "run a software spatial join");
    join_cmd
        ->add_option("--algo", join_opts.algo,
                     "nested-loop|plane-sweep|sync-dfs|sync-bfs|pbsm|pbsm-1d")
        ->required();
    join_cmd->add_option("--r", join_opts.r, "dataset R CSV")->required();
    join_cmd->add_option("--s", join_opts.s, "dataset S CSV")->required();
    join_cmd->add_option("--node-size", join_opts.node_size, "node capacity M");
    join_cmd->add_option("--workers", join_opts.workers, "worker threads");
    join_cmd->add_option("--policy", join_opts.policy, "scheduling policy: static|dynamic");
    join_cmd->add_option("--grid", join_opts.grid, "PBSM grid COLSxROWS");
    join_cmd->add_option("--max-geomean", join_opts.max_geomean,
                         "hierarchical PBSM bound (0 = flat grid)");
    join_cmd->add_option("--tile-joiner", join_opts.tile_joiner,
                         "PBSM tile joiner: nested-loop|plane-sweep");
    join_cmd->add_option("--strips", join_opts.strips, "1-D PBSM strip count");
    join_cmd->add_option("--out", join_opts.out, "result CSV path")->required();
    join_cmd->add_option("--stats", join_opts.stats_out, "stats CSV path");
    join_cmd->callback([&] { run_join(join_opts); });

    SimOpts sim_opts;
    auto* sim_cmd = app.add_subcommand("sim", "run the accelerator cycle model");
    sim_cmd->add_option("--mode", sim_opts.mode, "sync|pbsm")->required();
    sim_cmd->add_option("--r", sim_opts.r, "dataset R CSV");
    sim_cmd->add_option("--s", sim_opts.s, "dataset S CSV");
    sim_cmd->add_option("--tree-r", sim_opts.tree_r, "serialized R-tree for R");
    sim_cmd->add_option("--tree-s", sim_opts.tree_s, "serialized R-tree for S");
    sim_cmd->add_option("--node-size", sim_opts.node_size, "node capacity M (when building)");
    sim_cmd->add_option("--grid", sim_opts.grid, "PBSM grid COLSxROWS (flat partition)");
    sim_cmd->add_option("--max-geomean", sim_opts.max_geomean, "hierarchical PBSM bound");
    sim_cmd->add_option("--out", sim_opts.out, "stats CSV path")->required();
    sim_cmd->add_option("--result-out", sim_opts.result_out, "result CSV path");
    sim_cmd->add_option("--seed", sim_opts.seed, "seed label for the stats rows");
    add_sim_flags(sim_cmd, sim_opts.flags);
    sim_cmd->callback([&] { run_sim(sim_opts); });

    BenchOpts bench_opts;
    auto* bench_cmd = app.add_subcommand("bench", "run an experiment and emit a stats CSV");
    std::string experiments;
    for (const auto& name : experiment_names()) {
        experiments += experiments.empty() ? name : "|" + name;
    }
    bench_cmd->add_option("--experiment", bench_opts.experiment, experiments)->required();
    bench_cmd->add_option("--out", bench_opts.out, "stats CSV path")->required();
    bench_cmd->add_option("--n", bench_opts.n, "objects per dataset");
    bench_cmd->add_option("--seed", bench_opts.seed, "dataset seed");
    bench_cmd->add_option("--region", bench_opts.region, "map region");
    bench_cmd->add_option("--sizes", bench_opts.node_sizes, "node sizes, comma separated");
    bench_cmd->add_option("--unit-counts", bench_opts.unit_counts,
                          "join unit counts, comma separated");
    bench_cmd->add_option("--tile-sizes", bench_opts.tile_sizes, "tile sizes, comma separated");
    bench_cmd->add_option("--tiles-per-batch", bench_opts.tiles_per_batch,
                          "tiles per timed batch");
    bench_cmd->add_option("--workers", bench_opts.workers, "CPU worker threads");
    bench_cmd->add_option("--max-geomean", bench_opts.max_geomean, "hierarchical PBSM bound");
    bench_cmd->add_option("--strips", bench_opts.strips, "1-D PBSM strip count");
    add_sim_flags(bench_cmd, bench_opts.flags);
    bench_cmd->callback([&] { run_bench(bench_opts); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::logic_error& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return rc;
}

}  // namespace sjoin
