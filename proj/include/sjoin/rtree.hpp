#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sjoin/geom.hpp"

namespace sjoin {

// Serialized footprint of one node slot: 4 x f32 coordinates + u32 ref.
inline constexpr std::uint32_t kEntryBytes = 20;

// One node slot. ref is a child-node index in directory nodes and an object
// id in leaf nodes.
struct RTreeEntry {
    Mbr mbr;
    std::uint32_t ref = 0;

    bool operator==(const RTreeEntry&) const = default;
};

struct RTreeNode {
    bool is_leaf = true;
    std::vector<RTreeEntry> entries;
    // Tight union of the entries. Derived, not serialized; rebuilt on load.
    Mbr bounds;

    std::uint32_t count() const { return static_cast<std::uint32_t>(entries.size()); }

    bool operator==(const RTreeNode&) const = default;
};

struct RTree {
    std::vector<RTreeNode> nodes;
    std::uint32_t root_index = 0;
    std::uint32_t height = 0;       // 1 when the root is a leaf
    std::uint32_t max_entries = 0;  // node capacity M

    const RTreeNode& root() const { return nodes[root_index]; }
    const RTreeNode& node(std::uint32_t i) const { return nodes[i]; }
    std::uint32_t node_count() const { return static_cast<std::uint32_t>(nodes.size()); }

    bool operator==(const RTree&) const = default;
};

// Sort-Tile-Recursive bulk load. Sorts by MBR center-x (ties: center-y, then
// id), cuts into ceil(sqrt(n/M)) slices of at most ceil(sqrt(n/M))*M objects,
// sorts each slice by center-y, packs runs of M, and repeats on the node
// centers until a single root remains. Deterministic for any input order.
// Throws std::invalid_argument on an empty input or max_entries < 4.
RTree str_bulk_load(std::span<const SpatialObject> objects, std::uint32_t max_entries);

struct ValidationReport {
    std::vector<std::string> violations;
    bool ok() const { return violations.empty(); }
};

// Structural checks: entry-count bounds, uniform leaf depth, exact parent-MBR
// tightness, and object coverage when the source objects are supplied.
// min_fill matters only for trees imported from external files; bulk-loaded
// trees legitimately end a level with a single entry, so it defaults to 1.
ValidationReport validate(const RTree& tree, std::span<const SpatialObject> source = {},
                          std::uint32_t min_fill = 1);

// Pruned root-to-leaf descent; returns ids of objects whose MBR intersects
// the window, in traversal order.
std::vector<std::uint32_t> window_query(const RTree& tree, const Mbr& window);

class TreeFormatError : public std::runtime_error {
public:
    TreeFormatError(const std::string& what, std::uint64_t offset);
    std::uint64_t offset() const { return offset_; }

private:
    std::uint64_t offset_;
};

// Flat little-endian node array:
//   header: magic "SSRT", version u32, M u32, height u32, node_count u32,
//           root_index u32
//   per node: is_leaf u8, 3 pad bytes, count u32, M slots of 20 bytes each
//             (xmin, ymin, xmax, ymax as f32, ref u32); unused slots zeroed.
void save_rtree(const RTree& tree, std::ostream& out);
void save_rtree(const RTree& tree, const std::filesystem::path& path);
RTree load_rtree(std::istream& in);
RTree load_rtree(const std::filesystem::path& path);

std::uint64_t serialized_tree_bytes(const RTree& tree);

}  // namespace sjoin
