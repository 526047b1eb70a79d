#include "sjoin/dataset.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_set>

namespace sjoin {

namespace {

// k-th draw of the stream seeded by `seed` (splitmix64 output function).
std::uint64_t splitmix64_at(std::uint64_t seed, std::uint64_t k) {
    std::uint64_t z = seed + (k + 1) * 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

double unit_real(std::uint64_t bits) {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

void append_float(std::string& out, float v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, res.ptr);
}

void append_u32(std::string& out, std::uint32_t v) {
    char buf[16];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, res.ptr);
}

float parse_float_field(std::string_view field, std::size_t line, const char* what) {
    float value = 0.0f;
    const auto res = std::from_chars(field.data(), field.data() + field.size(), value);
    if (res.ec != std::errc{} || res.ptr != field.data() + field.size() ||
        !std::isfinite(value)) {
        throw CsvError(std::string("bad ") + what + " value '" + std::string(field) + "'", line);
    }
    return value;
}

}  // namespace

std::vector<SpatialObject> gen_uniform(const DatasetSpec& spec) {
    if (spec.kind == DatasetSpec::Kind::kFile) {
        throw std::invalid_argument("gen_uniform: spec names a file, not a distribution");
    }
    if (spec.n < 1) throw std::invalid_argument("gen_uniform: n must be at least 1");
    if (!spec.region.valid()) throw std::invalid_argument("gen_uniform: invalid region");
    const float obj_w = spec.kind == DatasetSpec::Kind::kUniformPoint ? 0.0f : spec.obj_w;
    const float obj_h = spec.kind == DatasetSpec::Kind::kUniformPoint ? 0.0f : spec.obj_h;
    if (!(obj_w >= 0.0f) || !(obj_h >= 0.0f)) {
        throw std::invalid_argument("gen_uniform: object extents must be non-negative");
    }
    const double span_x = static_cast<double>(spec.region.xmax) - spec.region.xmin - obj_w;
    const double span_y = static_cast<double>(spec.region.ymax) - spec.region.ymin - obj_h;
    if (span_x < 0 || span_y < 0) {
        throw std::invalid_argument("gen_uniform: objects do not fit in the region");
    }

    std::vector<SpatialObject> objects(spec.n);
    for (std::uint64_t i = 0; i < spec.n; ++i) {
        const double x = spec.region.xmin + unit_real(splitmix64_at(spec.seed, 2 * i)) * span_x;
        const double y =
            spec.region.ymin + unit_real(splitmix64_at(spec.seed, 2 * i + 1)) * span_y;
        SpatialObject& obj = objects[i];
        obj.id = static_cast<std::uint32_t>(i);
        obj.mbr = {static_cast<float>(x), static_cast<float>(y), static_cast<float>(x + obj_w),
                   static_cast<float>(y + obj_h)};
    }
    return objects;
}

CsvError::CsvError(const std::string& what, std::size_t line)
    : std::runtime_error(what + " (line " + std::to_string(line) + ")"), line_(line) {}

std::vector<SpatialObject> load_dataset(std::istream& in, const std::string& name) {
    std::string line;
    if (!std::getline(in, line)) {
        throw CsvError(name + ": missing header", 1);
    }
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "id,xmin,ymin,xmax,ymax") {
        throw CsvError(name + ": bad header '" + line + "'", 1);
    }

    std::vector<SpatialObject> objects;
    std::unordered_set<std::uint32_t> seen;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;

        std::string_view fields[5];
        std::string_view rest = line;
        for (int f = 0; f < 5; ++f) {
            const std::size_t comma = rest.find(',');
            if (f < 4) {
                if (comma == std::string_view::npos) {
                    throw CsvError("expected 5 fields", line_no);
                }
                fields[f] = rest.substr(0, comma);
                rest.remove_prefix(comma + 1);
            } else {
                if (comma != std::string_view::npos) {
                    throw CsvError("expected 5 fields", line_no);
                }
                fields[f] = rest;
            }
        }

        SpatialObject obj;
        {
            const auto res = std::from_chars(fields[0].data(),
                                             fields[0].data() + fields[0].size(), obj.id);
            if (res.ec != std::errc{} || res.ptr != fields[0].data() + fields[0].size()) {
                throw CsvError("bad id value '" + std::string(fields[0]) + "'", line_no);
            }
        }
        obj.mbr.xmin = parse_float_field(fields[1], line_no, "xmin");
        obj.mbr.ymin = parse_float_field(fields[2], line_no, "ymin");
        obj.mbr.xmax = parse_float_field(fields[3], line_no, "xmax");
        obj.mbr.ymax = parse_float_field(fields[4], line_no, "ymax");
        if (obj.mbr.xmax < obj.mbr.xmin) {
            throw CsvError("xmax is less than xmin", line_no);
        }
        if (obj.mbr.ymax < obj.mbr.ymin) {
            throw CsvError("ymax is less than ymin", line_no);
        }
        if (!seen.insert(obj.id).second) {
            throw CsvError("duplicate object id " + std::to_string(obj.id), line_no);
        }
        objects.push_back(obj);
    }
    return objects;
}

std::vector<SpatialObject> load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("load_dataset: cannot open " + path.string());
    }
    return load_dataset(in, path.string());
}

void store_dataset(std::span<const SpatialObject> objects, std::ostream& out) {
    std::string buf = "id,xmin,ymin,xmax,ymax\n";
    for (const auto& obj : objects) {
        append_u32(buf, obj.id);
        buf.push_back(',');
        append_float(buf, obj.mbr.xmin);
        buf.push_back(',');
        append_float(buf, obj.mbr.ymin);
        buf.push_back(',');
        append_float(buf, obj.mbr.xmax);
        buf.push_back(',');
        append_float(buf, obj.mbr.ymax);
        buf.push_back('\n');
        if (buf.size() > 1 << 20) {
            out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
            buf.clear();
        }
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw std::runtime_error("store_dataset: write failed");
}

void store_dataset(std::span<const SpatialObject> objects, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("store_dataset: cannot open " + path.string());
    }
    store_dataset(objects, out);
}

void store_result(const JoinResult& result, std::ostream& out) {
    std::string buf = "id_r,id_s\n";
    for (const auto& [id_r, id_s] : result.sorted_pairs()) {
        append_u32(buf, id_r);
        buf.push_back(',');
        append_u32(buf, id_s);
        buf.push_back('\n');
        if (buf.size() > 1 << 20) {
            out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
            buf.clear();
        }
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw std::runtime_error("store_result: write failed");
}

void store_result(const JoinResult& result, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("store_result: cannot open " + path.string());
    }
    store_result(result, out);
}

std::vector<SpatialObject> materialize(const DatasetSpec& spec) {
    if (spec.kind == DatasetSpec::Kind::kFile) {
        return load_dataset(spec.path);
    }
    return gen_uniform(spec);
}

}  // namespace sjoin
