#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <omp.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "sjoin/rtree.hpp"
#include "test_util.hpp"

using namespace sjoin;

namespace {

std::string serialize_to_string(const RTree& tree) {
    std::ostringstream out(std::ios::binary);
    save_rtree(tree, out);
    return out.str();
}

std::uint64_t total_leaf_entries(const RTree& tree) {
    std::uint64_t total = 0;
    for (const auto& node : tree.nodes) {
        if (node.is_leaf) total += node.count();
    }
    return total;
}

}  // namespace

TEST_CASE("a single object yields a height-1 tree whose root is a leaf") {
    const std::vector<SpatialObject> objs = {{42, {1, 2, 3, 4}}};
    const RTree tree = str_bulk_load(objs, 16);
    CHECK(tree.height == 1);
    CHECK(tree.node_count() == 1);
    CHECK(tree.root().is_leaf);
    CHECK(tree.root().count() == 1);
    CHECK(tree.root().entries[0].ref == 42);
    CHECK(validate(tree, objs).ok());
}

TEST_CASE("17 identical squares overflow one node into a 16+1 split") {
    std::vector<SpatialObject> objs;
    for (std::uint32_t i = 0; i < 17; ++i) objs.push_back({i, {5, 5, 6, 6}});
    const RTree tree = str_bulk_load(objs, 16);
    CHECK(tree.height == 2);
    CHECK(tree.node_count() == 3);
    std::vector<std::uint32_t> leaf_counts;
    for (const auto& node : tree.nodes) {
        if (node.is_leaf) leaf_counts.push_back(node.count());
    }
    std::sort(leaf_counts.begin(), leaf_counts.end());
    CHECK(leaf_counts == std::vector<std::uint32_t>{1, 16});
    CHECK_FALSE(tree.root().is_leaf);
    CHECK(tree.root().count() == 2);
    CHECK(validate(tree, objs).ok());
}

TEST_CASE("a 16x16 lattice packs into 16 full leaves under one root") {
    std::vector<SpatialObject> objs;
    for (std::uint32_t y = 0; y < 16; ++y) {
        for (std::uint32_t x = 0; x < 16; ++x) {
            const auto fx = static_cast<float>(x * 10);
            const auto fy = static_cast<float>(y * 10);
            objs.push_back({y * 16 + x, {fx, fy, fx + 1, fy + 1}});
        }
    }
    const RTree tree = str_bulk_load(objs, 16);
    CHECK(tree.height == 2);
    std::uint32_t leaves = 0;
    for (std::uint32_t i = 0; i < tree.node_count(); ++i) {
        if (!tree.nodes[i].is_leaf) continue;
        ++leaves;
        CHECK(tree.nodes[i].count() == 16);
    }
    CHECK(leaves == 16);
    // Every leaf MBR is contained in (indeed equals) its parent entry's MBR.
    for (const auto& entry : tree.root().entries) {
        CHECK(contains(entry.mbr, tree.nodes[entry.ref].bounds));
    }
    CHECK(validate(tree, objs).ok());
    CHECK(total_leaf_entries(tree) == objs.size());
}

TEST_CASE("bulk load is valid over randomized datasets") {
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<std::uint64_t> n_dist(1, 3000);
    for (const std::uint32_t m : {4u, 8u, 16u, 64u}) {
        for (int round = 0; round < 5; ++round) {
            const auto objs = test::uniform_squares(n_dist(rng), rng(), {0, 0, 1000, 1000}, 5, 5);
            const RTree tree = str_bulk_load(objs, m);
            const ValidationReport report = validate(tree, objs);
            CAPTURE(report.violations);
            CHECK(report.ok());
            CHECK(total_leaf_entries(tree) == objs.size());
        }
    }
}

TEST_CASE("bulk load rejects bad inputs") {
    CHECK_THROWS_AS(str_bulk_load({}, 16), std::invalid_argument);
    const std::vector<SpatialObject> objs = {{0, {0, 0, 1, 1}}};
    CHECK_THROWS_AS(str_bulk_load(objs, 3), std::invalid_argument);
}

TEST_CASE("validate flags forced violations by node index") {
    const auto objs = test::uniform_squares(300, 3);
    RTree tree = str_bulk_load(objs, 8);

    SUBCASE("leaf truncated to zero entries") {
        for (auto& node : tree.nodes) {
            if (node.is_leaf) {
                node.entries.clear();
                break;
            }
        }
        const ValidationReport report = validate(tree, objs);
        CHECK_FALSE(report.ok());
        bool found = false;
        for (const auto& v : report.violations) {
            if (v.find("entry count 0") != std::string::npos) found = true;
        }
        CHECK(found);
    }

    SUBCASE("parent entry shrunk below the tight union") {
        RTreeNode& root = tree.nodes[tree.root_index];
        REQUIRE_FALSE(root.is_leaf);
        root.entries[0].mbr.xmax -= 1.0f;
        const std::string child = std::to_string(root.entries[0].ref);
        const ValidationReport report = validate(tree, objs);
        REQUIRE_FALSE(report.ok());
        bool names_child = false;
        for (const auto& v : report.violations) {
            if (v.find("tight union") != std::string::npos &&
                v.find("child " + child) != std::string::npos) {
                names_child = true;
            }
        }
        CHECK(names_child);
    }
}

TEST_CASE("construction is deterministic across runs, input order, and thread counts") {
    const auto objs = test::uniform_squares(2000, 77);
    const std::string once = serialize_to_string(str_bulk_load(objs, 16));

    CHECK(serialize_to_string(str_bulk_load(objs, 16)) == once);

    auto shuffled = objs;
    std::mt19937_64 rng(5);
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    CHECK(serialize_to_string(str_bulk_load(shuffled, 16)) == once);

    const int saved = omp_get_max_threads();
    omp_set_num_threads(1);
    const std::string serial = serialize_to_string(str_bulk_load(objs, 16));
    omp_set_num_threads(saved);
    CHECK(serial == once);
}

TEST_CASE("serialize round-trips node for node") {
    for (const std::uint64_t n : {1ull, 17ull, 1000ull}) {
        const auto objs = test::uniform_squares(n, n);
        const RTree tree = str_bulk_load(objs, 8);
        std::stringstream buf(std::ios::in | std::ios::out | std::ios::binary);
        save_rtree(tree, buf);
        const RTree loaded = load_rtree(buf);
        CHECK(loaded == tree);
    }
}

TEST_CASE("malformed tree files fail with a byte offset") {
    const auto objs = test::uniform_squares(100, 1);
    const RTree tree = str_bulk_load(objs, 8);
    const std::string bytes = serialize_to_string(tree);

    SUBCASE("truncated file") {
        std::istringstream in(bytes.substr(0, bytes.size() / 2), std::ios::binary);
        CHECK_THROWS_AS(load_rtree(in), TreeFormatError);
    }
    SUBCASE("zero node count") {
        std::string broken = bytes;
        for (int i = 16; i < 20; ++i) broken[i] = 0;
        std::istringstream in(broken, std::ios::binary);
        try {
            load_rtree(in);
            FAIL("expected TreeFormatError");
        } catch (const TreeFormatError& e) {
            CHECK(e.offset() == 16);
        }
    }
    SUBCASE("bad magic") {
        std::string broken = bytes;
        broken[0] = 'X';
        std::istringstream in(broken, std::ios::binary);
        CHECK_THROWS_AS(load_rtree(in), TreeFormatError);
    }
    SUBCASE("trailing bytes") {
        std::istringstream in(bytes + "x", std::ios::binary);
        CHECK_THROWS_AS(load_rtree(in), TreeFormatError);
    }
}

TEST_CASE("window queries match a brute-force scan") {
    std::mt19937_64 rng(21);
    const auto objs = test::uniform_squares(2000, 13, {0, 0, 500, 500}, 3, 3);
    const RTree tree = str_bulk_load(objs, 16);
    for (int round = 0; round < 200; ++round) {
        const Mbr window = test::random_mbr(rng, 0.0f, 500.0f, 120.0f);
        auto got = window_query(tree, window);
        std::sort(got.begin(), got.end());
        std::vector<std::uint32_t> expected;
        for (const auto& obj : objs) {
            if (test::oracle_intersects(obj.mbr, window)) expected.push_back(obj.id);
        }
        CHECK(got == expected);
    }
}
