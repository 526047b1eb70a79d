#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sjoin/geom.hpp"
#include "sjoin/join_result.hpp"

namespace sjoin {

struct DatasetSpec {
    enum class Kind { kUniformRect, kUniformPoint, kFile };

    Kind kind = Kind::kUniformRect;
    std::uint64_t n = 1;
    Mbr region{0.0f, 0.0f, 10000.0f, 10000.0f};
    float obj_w = 1.0f;
    float obj_h = 1.0f;
    std::uint64_t seed = 0;
    std::string path;  // kFile only
};

// Uniformly distributed rectangles: min corners drawn from
// [xmin, xmax-obj_w] x [ymin, ymax-obj_h], ids 0..n-1. Each object is drawn
// from its own splitmix64 stream, so generation is a pure function of the
// spec and stays deterministic under any parallelization.
std::vector<SpatialObject> gen_uniform(const DatasetSpec& spec);

class CsvError : public std::runtime_error {
public:
    CsvError(const std::string& what, std::size_t line);
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

// Dataset CSV: header "id,xmin,ymin,xmax,ymax", one object per line, decimal
// floats (shortest round-trip form), LF line endings.
std::vector<SpatialObject> load_dataset(const std::filesystem::path& path);
std::vector<SpatialObject> load_dataset(std::istream& in, const std::string& name = "<stream>");
void store_dataset(std::span<const SpatialObject> objects, const std::filesystem::path& path);
void store_dataset(std::span<const SpatialObject> objects, std::ostream& out);

// Result CSV: header "id_r,id_s", rows sorted by (id_r, id_s) so the same
// pair set always serializes to identical bytes.
void store_result(const JoinResult& result, const std::filesystem::path& path);
void store_result(const JoinResult& result, std::ostream& out);

// Resolves a spec to objects (generates or loads).
std::vector<SpatialObject> materialize(const DatasetSpec& spec);

}  // namespace sjoin
