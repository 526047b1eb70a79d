#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "sjoin/bench.hpp"
#include "sjoin/cli.hpp"
#include "sjoin/dataset.hpp"
#include "sjoin/join_algos.hpp"
#include "test_util.hpp"

using namespace sjoin;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;

    TempDir() {
        static std::mt19937_64 rng(std::random_device{}());
        path = fs::temp_directory_path() / ("sjoin_test_" + std::to_string(rng()));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    std::string file(const char* name) const { return (path / name).string(); }
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

int run_cli(const std::vector<std::string>& args) {
    std::vector<std::string> full = {"sjoin"};
    full.insert(full.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    argv.reserve(full.size());
    for (const auto& arg : full) argv.push_back(arg.c_str());
    return cli_main(static_cast<int>(argv.size()), argv.data());
}

std::string store_to_string(const std::vector<SpatialObject>& objs) {
    std::ostringstream out(std::ios::binary);
    store_dataset(objs, out);
    return out.str();
}

}  // namespace

TEST_CASE("generation is a pure function of the spec") {
    DatasetSpec spec;
    spec.n = 1;
    spec.seed = 99;
    const auto a = gen_uniform(spec);
    const auto b = gen_uniform(spec);
    REQUIRE(a.size() == 1);
    CHECK(a[0].mbr == b[0].mbr);

    spec.n = 5000;
    const std::string bytes = store_to_string(gen_uniform(spec));
    CHECK(store_to_string(gen_uniform(spec)) == bytes);

    spec.seed = 100;
    CHECK(store_to_string(gen_uniform(spec)) != bytes);
}

TEST_CASE("generated objects stay inside the region") {
    DatasetSpec spec;
    spec.n = 20000;
    spec.seed = 5;
    for (const auto kind : {DatasetSpec::Kind::kUniformRect, DatasetSpec::Kind::kUniformPoint}) {
        spec.kind = kind;
        for (const auto& obj : gen_uniform(spec)) {
            CHECK(obj.mbr.valid());
            CHECK(contains(spec.region, obj.mbr));
            if (kind == DatasetSpec::Kind::kUniformPoint) {
                CHECK(obj.mbr.xmin == obj.mbr.xmax);
                CHECK(obj.mbr.ymin == obj.mbr.ymax);
            }
        }
    }
}

TEST_CASE("gen_uniform rejects invalid specs") {
    DatasetSpec spec;
    spec.n = 0;
    CHECK_THROWS_AS(gen_uniform(spec), std::invalid_argument);
    spec.n = 1;
    spec.obj_w = 20001.0f;
    CHECK_THROWS_AS(gen_uniform(spec), std::invalid_argument);
}

TEST_CASE("self-join cardinality tracks the uniform-density estimate") {
    DatasetSpec spec;
    spec.n = 100000;
    spec.seed = 42;
    const auto objs = gen_uniform(spec);

    // n identity pairs plus n(n-1) * P(two random unit squares overlap),
    // with P ~= (2/(L-1))^2 on an L x L map: about 400 off-diagonal pairs.
    const auto result = plane_sweep_join(objs, objs);
    const auto off_diagonal = static_cast<double>(result.size()) - static_cast<double>(spec.n);
    CHECK(off_diagonal >= 300.0);
    CHECK(off_diagonal <= 500.0);

    // Brute force over a subsample region agrees with the engine.
    std::vector<SpatialObject> sample;
    const Mbr window{0, 0, 2000, 2000};
    for (const auto& obj : objs) {
        if (contains(window, obj.mbr)) sample.push_back(obj);
    }
    REQUIRE(sample.size() > 1000);
    CHECK(test::brute_force_pairs(sample, sample) ==
          nested_loop_join(sample, sample).sorted_pairs());
}

TEST_CASE("dataset CSV round-trips exactly") {
    const auto objs = test::uniform_squares(10000, 7);
    std::stringstream buf(std::ios::in | std::ios::out | std::ios::binary);
    store_dataset(objs, buf);
    const auto loaded = load_dataset(buf, "buf");
    CHECK(loaded == objs);
}

TEST_CASE("dataset parser reports the offending line") {
    auto parse = [](const std::string& text) {
        std::istringstream in(text, std::ios::binary);
        return load_dataset(in, "test");
    };

    CHECK(parse("id,xmin,ymin,xmax,ymax\n5,0.0,0.0,1.5,2.0\n")[0].id == 5);
    CHECK(parse("id,xmin,ymin,xmax,ymax\n5,0.0,0.0,1.5,2.0\n")[0].mbr ==
          Mbr{0.0f, 0.0f, 1.5f, 2.0f});

    const struct {
        const char* text;
        std::size_t line;
    } cases[] = {
        {"id,xmin\n", 1},
        {"id,xmin,ymin,xmax,ymax\n1,0,0,1\n", 2},
        {"id,xmin,ymin,xmax,ymax\n1,0,0,1,1\n2,3,0,1,1\n", 3},      // xmax < xmin
        {"id,xmin,ymin,xmax,ymax\n1,0,0,1,1\n2,0,3,1,1\n", 3},      // ymax < ymin
        {"id,xmin,ymin,xmax,ymax\n1,a,0,1,1\n", 2},                 // bad float
        {"id,xmin,ymin,xmax,ymax\n1,0,0,1,1\n1,2,2,3,3\n", 3},      // duplicate id
    };
    for (const auto& c : cases) {
        try {
            parse(c.text);
            FAIL("expected CsvError for: ", c.text);
        } catch (const CsvError& e) {
            CHECK(e.line() == c.line);
        }
    }
}

TEST_CASE("result CSV is sorted and diff-stable") {
    JoinResult result;
    result.pairs = {{10, 2}, {2, 30}, {2, 4}, {10, 1}};
    std::ostringstream out(std::ios::binary);
    store_result(result, out);
    CHECK(out.str() == "id_r,id_s\n2,4\n2,30\n10,1\n10,2\n");
}

TEST_CASE("experiment reports are consistent") {
    SUBCASE("unknown experiment") {
        CHECK_THROWS_AS(run_experiment("no-such-thing", ExperimentConfig{}),
                        std::invalid_argument);
    }
    SUBCASE("cycles-per-predicate carries the efficiency band") {
        ExperimentConfig cfg;
        const BenchReport report = run_experiment("cycles-per-predicate", cfg);
        REQUIRE_FALSE(report.rows.empty());
        for (const auto& row : report.rows) {
            CHECK(row.experiment == "cycles-per-predicate");
            if (row.metric != "cycles_per_predicate") continue;
            CHECK(row.value >= 1.0);
            if (row.params.find("node_size=1;") != std::string::npos ||
                row.params.find("node_size=2;") != std::string::npos ||
                row.params.find("node_size=4;") != std::string::npos) {
                CHECK(row.value >= 1.5);
            } else {
                CHECK(row.value <= 1.35);
            }
        }
    }
    SUBCASE("e2e-compare agrees on the result count across engines") {
        ExperimentConfig cfg;
        cfg.n = 2000;
        cfg.workers = 4;
        const BenchReport report = run_experiment("e2e-compare", cfg);
        double count = -1.0;
        int count_rows = 0;
        for (const auto& row : report.rows) {
            if (row.metric != "result_count") continue;
            ++count_rows;
            if (count < 0) count = row.value;
            CHECK(row.value == count);
        }
        CHECK(count_rows >= 8);
    }
}

TEST_CASE("stats CSV has the documented shape") {
    BenchReport report;
    report.rows.push_back({"exp", "data", "algo", "M=16", "cycles", 1047.0, 7});
    std::ostringstream out(std::ios::binary);
    write_stats_csv(report, out);
    CHECK(out.str() == "experiment,dataset,algorithm,params,metric,value,seed\n"
                       "exp,data,algo,M=16,cycles,1047,7\n");
}

TEST_CASE("cli: gen is byte-deterministic and round-trips through index/validate") {
    TempDir dir;
    const auto a = dir.file("a.csv");
    const auto b = dir.file("b.csv");
    CHECK(run_cli({"gen", "--n", "1000", "--seed", "7", "--out", a}) == 0);
    CHECK(run_cli({"gen", "--n", "1000", "--seed", "7", "--out", b}) == 0);
    CHECK(read_file(a) == read_file(b));

    const auto tree = dir.file("a.ssrt");
    CHECK(run_cli({"index", "--in", a, "--node-size", "16", "--out", tree}) == 0);
    CHECK(run_cli({"validate", "--tree", tree, "--data", a}) == 0);
}

TEST_CASE("cli: all join algorithms write identical sorted result files") {
    TempDir dir;
    const auto a = dir.file("a.csv");
    const auto b = dir.file("b.csv");
    REQUIRE(run_cli({"gen", "--n", "1500", "--seed", "3", "--out", a}) == 0);
    REQUIRE(run_cli({"gen", "--n", "1500", "--seed", "4", "--out", b}) == 0);

    const auto bfs_out = dir.file("bfs.csv");
    REQUIRE(run_cli({"join", "--algo", "sync-bfs", "--r", a, "--s", b, "--node-size", "16",
                     "--workers", "8", "--out", bfs_out}) == 0);
    const auto pbsm_out = dir.file("pbsm.csv");
    REQUIRE(run_cli({"join", "--algo", "pbsm", "--r", a, "--s", b, "--grid", "32x32", "--out",
                     pbsm_out}) == 0);
    const auto strip_out = dir.file("1d.csv");
    REQUIRE(run_cli({"join", "--algo", "pbsm-1d", "--r", a, "--s", b, "--strips", "8", "--out",
                     strip_out}) == 0);

    const std::string expected = read_file(bfs_out);
    CHECK(read_file(pbsm_out) == expected);
    CHECK(read_file(strip_out) == expected);
}

TEST_CASE("cli: sim emits a stats CSV whose latency equals cycles over the clock") {
    TempDir dir;
    const auto a = dir.file("a.csv");
    const auto b = dir.file("b.csv");
    REQUIRE(run_cli({"gen", "--n", "800", "--seed", "5", "--out", a}) == 0);
    REQUIRE(run_cli({"gen", "--n", "800", "--seed", "6", "--out", b}) == 0);

    const auto stats = dir.file("stats.csv");
    const auto res = dir.file("res.csv");
    REQUIRE(run_cli({"sim", "--mode", "pbsm", "--r", a, "--s", b, "--units", "4", "--out", stats,
                     "--result-out", res}) == 0);

    double cycles = -1.0;
    double latency = -1.0;
    std::istringstream in(read_file(stats));
    std::string line;
    std::getline(in, line);
    CHECK(line == "experiment,dataset,algorithm,params,metric,value,seed");
    while (std::getline(in, line)) {
        const auto metric_pos = line.find(",cycles,");
        if (metric_pos != std::string::npos) {
            cycles = std::stod(line.substr(metric_pos + 8));
        }
        const auto lat_pos = line.find(",latency_seconds,");
        if (lat_pos != std::string::npos) {
            latency = std::stod(line.substr(lat_pos + 17));
        }
    }
    REQUIRE(cycles > 0.0);
    REQUIRE(latency > 0.0);
    CHECK(latency == cycles / 2e8);

    // The sim's result file matches the software join byte for byte.
    const auto sw = dir.file("sw.csv");
    REQUIRE(run_cli({"join", "--algo", "plane-sweep", "--r", a, "--s", b, "--out", sw}) == 0);
    CHECK(read_file(res) == read_file(sw));
}

TEST_CASE("cli: user errors exit with code 1") {
    TempDir dir;
    CHECK(run_cli({"bench", "--experiment", "nope", "--out", dir.file("x.csv")}) == 1);
    CHECK(run_cli({"gen", "--n", "10"}) == 1);                      // missing --out
    CHECK(run_cli({"join", "--algo", "warp", "--r", dir.file("missing.csv"), "--s",
                   dir.file("missing.csv"), "--out", dir.file("o.csv")}) == 1);
    CHECK(run_cli({"nonsense"}) == 1);
}
