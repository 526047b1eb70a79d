#include "sjoin/rtree.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <tuple>
#include <unordered_map>
#include <unordered_set>

namespace sjoin {

namespace {

struct LevelItem {
    Mbr mbr;
    std::uint32_t ref;  // object id at the leaf level, node index above
    float cx;
    float cy;
};

LevelItem make_item(const Mbr& mbr, std::uint32_t ref) {
    return {mbr, ref, (mbr.xmin + mbr.xmax) * 0.5f, (mbr.ymin + mbr.ymax) * 0.5f};
}

// Smallest s with s*s*M >= n, i.e. ceil(sqrt(n/M)).
std::uint32_t slice_count(std::uint64_t n, std::uint64_t m) {
    auto s = static_cast<std::uint64_t>(std::ceil(std::sqrt(static_cast<double>(n) / m)));
    if (s == 0) s = 1;
    while (s * s * m < n) ++s;
    while (s > 1 && (s - 1) * (s - 1) * m >= n) --s;
    return static_cast<std::uint32_t>(s);
}

Mbr entries_union(const std::vector<RTreeEntry>& entries) {
    Mbr out = entries.front().mbr;
    for (std::size_t i = 1; i < entries.size(); ++i) out = merge(out, entries[i].mbr);
    return out;
}

// Packs one level of items into nodes, appending them to tree.nodes.
// Returns the [begin, end) node-index range of the new level.
std::pair<std::uint32_t, std::uint32_t> pack_level(RTree& tree, std::vector<LevelItem>& items,
                                                   bool is_leaf) {
    const std::uint64_t m = tree.max_entries;
    const std::uint32_t slices = slice_count(items.size(), m);
    const std::uint64_t slice_cap = static_cast<std::uint64_t>(slices) * m;

    std::sort(items.begin(), items.end(), [](const LevelItem& a, const LevelItem& b) {
        return std::tie(a.cx, a.cy, a.ref) < std::tie(b.cx, b.cy, b.ref);
    });

    const auto first_node = tree.node_count();
    for (std::size_t lo = 0; lo < items.size(); lo += slice_cap) {
        const std::size_t hi = std::min(items.size(), lo + slice_cap);
        std::sort(items.begin() + lo, items.begin() + hi,
                  [](const LevelItem& a, const LevelItem& b) {
                      return std::tie(a.cy, a.cx, a.ref) < std::tie(b.cy, b.cx, b.ref);
                  });
        for (std::size_t run = lo; run < hi; run += m) {
            RTreeNode node;
            node.is_leaf = is_leaf;
            const std::size_t end = std::min(hi, run + m);
            node.entries.reserve(end - run);
            for (std::size_t i = run; i < end; ++i) {
                node.entries.push_back({items[i].mbr, items[i].ref});
            }
            node.bounds = entries_union(node.entries);
            tree.nodes.push_back(std::move(node));
        }
    }
    return {first_node, tree.node_count()};
}

void write_u32(std::ostream& out, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

void write_f32(std::ostream& out, float v) { write_u32(out, std::bit_cast<std::uint32_t>(v)); }

class Reader {
public:
    explicit Reader(std::istream& in) : in_(in) {}

    std::uint64_t offset() const { return offset_; }

    void bytes(void* dst, std::size_t n) {
        in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
        if (in_.gcount() != static_cast<std::streamsize>(n)) {
            throw TreeFormatError("unexpected end of file", offset_);
        }
        offset_ += n;
    }

    std::uint32_t u32() {
        unsigned char b[4];
        bytes(b, 4);
        return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
               (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    }

    float f32() { return std::bit_cast<float>(u32()); }

    std::uint8_t u8() {
        unsigned char b;
        bytes(&b, 1);
        return b;
    }

    bool at_eof() { return in_.peek() == std::char_traits<char>::eof(); }

private:
    std::istream& in_;
    std::uint64_t offset_ = 0;
};

constexpr char kMagic[4] = {'S', 'S', 'R', 'T'};
constexpr std::uint32_t kFormatVersion = 1;

}  // namespace

RTree str_bulk_load(std::span<const SpatialObject> objects, std::uint32_t max_entries) {
    if (objects.empty()) {
        throw std::invalid_argument("str_bulk_load: empty input");
    }
    if (max_entries < 4) {
        throw std::invalid_argument("str_bulk_load: node capacity must be at least 4");
    }
    for (const auto& obj : objects) {
        if (!obj.mbr.valid()) {
            throw std::invalid_argument("str_bulk_load: invalid MBR for object id " +
                                        std::to_string(obj.id));
        }
    }

    RTree tree;
    tree.max_entries = max_entries;

    std::vector<LevelItem> items;
    items.reserve(objects.size());
    for (const auto& obj : objects) items.push_back(make_item(obj.mbr, obj.id));

    auto [begin, end] = pack_level(tree, items, /*is_leaf=*/true);
    tree.height = 1;
    while (end - begin > 1) {
        items.clear();
        for (std::uint32_t i = begin; i < end; ++i) {
            items.push_back(make_item(tree.nodes[i].bounds, i));
        }
        std::tie(begin, end) = pack_level(tree, items, /*is_leaf=*/false);
        ++tree.height;
    }
    tree.root_index = begin;
    return tree;
}

ValidationReport validate(const RTree& tree, std::span<const SpatialObject> source,
                          std::uint32_t min_fill) {
    ValidationReport report;
    auto flag = [&report](std::string msg) { report.violations.push_back(std::move(msg)); };

    if (tree.nodes.empty()) {
        flag("tree has no nodes");
        return report;
    }
    if (tree.root_index >= tree.node_count()) {
        flag("root index " + std::to_string(tree.root_index) + " out of range");
        return report;
    }
    if (tree.height < 1) flag("height must be at least 1");
    if (tree.max_entries < 1) flag("node capacity must be at least 1");

    std::vector<std::int64_t> depth(tree.nodes.size(), -1);
    std::vector<std::uint32_t> stack = {tree.root_index};
    depth[tree.root_index] = 0;
    std::uint32_t reached = 0;
    std::unordered_map<std::uint32_t, std::uint32_t> leaf_refs;

    while (!stack.empty()) {
        const std::uint32_t idx = stack.back();
        stack.pop_back();
        ++reached;
        const RTreeNode& node = tree.nodes[idx];
        const bool is_root = idx == tree.root_index;

        if (node.count() < 1 || node.count() > tree.max_entries) {
            flag("node " + std::to_string(idx) + ": entry count " + std::to_string(node.count()) +
                 " outside [1, " + std::to_string(tree.max_entries) + "]");
        } else if (!is_root && node.count() < min_fill) {
            flag("node " + std::to_string(idx) + ": entry count " + std::to_string(node.count()) +
                 " below minimum fill " + std::to_string(min_fill));
        }
        for (const auto& entry : node.entries) {
            if (!entry.mbr.valid()) {
                flag("node " + std::to_string(idx) + ": invalid entry MBR");
            }
        }
        if (node.is_leaf) {
            if (depth[idx] != static_cast<std::int64_t>(tree.height) - 1) {
                flag("node " + std::to_string(idx) + ": leaf at depth " +
                     std::to_string(depth[idx]) + ", expected " + std::to_string(tree.height - 1));
            }
            for (const auto& entry : node.entries) ++leaf_refs[entry.ref];
        } else {
            for (const auto& entry : node.entries) {
                if (entry.ref >= tree.node_count()) {
                    flag("node " + std::to_string(idx) + ": child index " +
                         std::to_string(entry.ref) + " out of range");
                    continue;
                }
                if (depth[entry.ref] != -1) {
                    flag("node " + std::to_string(entry.ref) + " reached twice");
                    continue;
                }
                depth[entry.ref] = depth[idx] + 1;
                stack.push_back(entry.ref);
                if (!tree.nodes[entry.ref].entries.empty() &&
                    !(entries_union(tree.nodes[entry.ref].entries) == entry.mbr)) {
                    flag("node " + std::to_string(idx) + ": entry for child " +
                         std::to_string(entry.ref) + " is not the tight union of its entries");
                }
            }
        }
    }

    if (reached != tree.node_count()) {
        flag(std::to_string(tree.node_count() - reached) + " nodes unreachable from the root");
    }

    if (!source.empty()) {
        for (const auto& obj : source) {
            auto it = leaf_refs.find(obj.id);
            if (it == leaf_refs.end()) {
                flag("object id " + std::to_string(obj.id) + " missing from the leaves");
            } else if (it->second != 1) {
                flag("object id " + std::to_string(obj.id) + " appears " +
                     std::to_string(it->second) + " times");
            }
        }
        if (leaf_refs.size() > source.size()) {
            std::unordered_set<std::uint32_t> ids;
            for (const auto& obj : source) ids.insert(obj.id);
            for (const auto& [ref, n] : leaf_refs) {
                if (!ids.contains(ref)) {
                    flag("leaf ref " + std::to_string(ref) + " does not name a source object");
                }
            }
        }
    }
    return report;
}

std::vector<std::uint32_t> window_query(const RTree& tree, const Mbr& window) {
    std::vector<std::uint32_t> out;
    std::vector<std::uint32_t> stack = {tree.root_index};
    while (!stack.empty()) {
        const RTreeNode& node = tree.nodes[stack.back()];
        stack.pop_back();
        for (const auto& entry : node.entries) {
            if (!intersects(entry.mbr, window)) continue;
            if (node.is_leaf) {
                out.push_back(entry.ref);
            } else {
                stack.push_back(entry.ref);
            }
        }
    }
    return out;
}

TreeFormatError::TreeFormatError(const std::string& what, std::uint64_t offset)
    : std::runtime_error(what + " (byte offset " + std::to_string(offset) + ")"),
      offset_(offset) {}

void save_rtree(const RTree& tree, std::ostream& out) {
    out.write(kMagic, 4);
    write_u32(out, kFormatVersion);
    write_u32(out, tree.max_entries);
    write_u32(out, tree.height);
    write_u32(out, tree.node_count());
    write_u32(out, tree.root_index);
    for (const auto& node : tree.nodes) {
        const char flags[4] = {node.is_leaf ? char(1) : char(0), 0, 0, 0};
        out.write(flags, 4);
        write_u32(out, node.count());
        for (const auto& entry : node.entries) {
            write_f32(out, entry.mbr.xmin);
            write_f32(out, entry.mbr.ymin);
            write_f32(out, entry.mbr.xmax);
            write_f32(out, entry.mbr.ymax);
            write_u32(out, entry.ref);
        }
        const std::vector<char> pad(kEntryBytes * (tree.max_entries - node.count()), 0);
        out.write(pad.data(), static_cast<std::streamsize>(pad.size()));
    }
    if (!out) {
        throw std::runtime_error("save_rtree: write failed");
    }
}

void save_rtree(const RTree& tree, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("save_rtree: cannot open " + path.string());
    }
    save_rtree(tree, out);
}

RTree load_rtree(std::istream& in) {
    Reader reader(in);

    char magic[4];
    reader.bytes(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) {
        throw TreeFormatError("bad magic", 0);
    }
    const std::uint32_t version = reader.u32();
    if (version != kFormatVersion) {
        throw TreeFormatError("unsupported version " + std::to_string(version), 4);
    }

    RTree tree;
    tree.max_entries = reader.u32();
    tree.height = reader.u32();
    const std::uint32_t node_count = reader.u32();
    tree.root_index = reader.u32();

    if (tree.max_entries == 0) throw TreeFormatError("node capacity is zero", 8);
    if (tree.height == 0) throw TreeFormatError("height is zero", 12);
    if (node_count == 0) throw TreeFormatError("node count is zero", 16);
    if (tree.root_index >= node_count) throw TreeFormatError("root index out of range", 20);

    tree.nodes.reserve(node_count);
    for (std::uint32_t n = 0; n < node_count; ++n) {
        const std::uint64_t node_offset = reader.offset();
        RTreeNode node;
        const std::uint8_t leaf_flag = reader.u8();
        if (leaf_flag > 1) {
            throw TreeFormatError("node " + std::to_string(n) + ": bad leaf flag", node_offset);
        }
        node.is_leaf = leaf_flag == 1;
        std::uint8_t pad[3];
        reader.bytes(pad, 3);
        const std::uint32_t count = reader.u32();
        if (count > tree.max_entries) {
            throw TreeFormatError("node " + std::to_string(n) + ": entry count exceeds capacity",
                                  node_offset + 4);
        }
        node.entries.reserve(count);
        for (std::uint32_t e = 0; e < tree.max_entries; ++e) {
            Mbr mbr;
            mbr.xmin = reader.f32();
            mbr.ymin = reader.f32();
            mbr.xmax = reader.f32();
            mbr.ymax = reader.f32();
            const std::uint32_t ref = reader.u32();
            if (e < count) node.entries.push_back({mbr, ref});
        }
        if (!node.entries.empty()) node.bounds = entries_union(node.entries);
        tree.nodes.push_back(std::move(node));
    }
    if (!reader.at_eof()) {
        throw TreeFormatError("trailing bytes after last node", reader.offset());
    }
    return tree;
}

RTree load_rtree(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("load_rtree: cannot open " + path.string());
    }
    return load_rtree(in);
}

std::uint64_t serialized_tree_bytes(const RTree& tree) {
    return 24 + static_cast<std::uint64_t>(tree.node_count()) *
                    (8 + std::uint64_t{kEntryBytes} * tree.max_entries);
}

}  // namespace sjoin
