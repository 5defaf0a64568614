#include "evomerge/checkpoint_io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

static_assert(std::endian::native == std::endian::little, "little-endian host required");

namespace evomerge {

using json = nlohmann::json;

std::size_t dtype_size(DType dtype) {
    switch (dtype) {
        case DType::f64: return 8;
        case DType::f32: return 4;
        case DType::f16:
        case DType::bf16: return 2;
    }
    return 0;
}

std::string_view dtype_name(DType dtype) {
    switch (dtype) {
        case DType::f64: return "F64";
        case DType::f32: return "F32";
        case DType::f16: return "F16";
        case DType::bf16: return "BF16";
    }
    return "?";
}

std::optional<DType> parse_dtype(std::string_view name) {
    if (name == "F64") return DType::f64;
    if (name == "F32") return DType::f32;
    if (name == "F16") return DType::f16;
    if (name == "BF16") return DType::bf16;
    return std::nullopt;
}

std::uint64_t element_count(const Shape& shape) {
    std::uint64_t n = 1;
    for (auto extent : shape) n *= extent;
    return n;
}

std::string shape_string(const Shape& shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

std::vector<double> Tensor::to_f64() const {
    const auto n = static_cast<std::size_t>(numel());
    std::vector<double> out(n);
    const std::uint8_t* src = data.data();
    switch (dtype) {
        case DType::f64:
            std::memcpy(out.data(), src, n * sizeof(double));
            break;
        case DType::f32:
            for (std::size_t i = 0; i < n; ++i) {
                float v;
                std::memcpy(&v, src + 4 * i, 4);
                out[i] = v;
            }
            break;
        case DType::f16:
        case DType::bf16:
            for (std::size_t i = 0; i < n; ++i) {
                std::uint16_t bits;
                std::memcpy(&bits, src + 2 * i, 2);
                out[i] = dtype == DType::f16 ? f16_to_f32(bits) : bf16_to_f32(bits);
            }
            break;
    }
    return out;
}

Tensor Tensor::from_f64(DType dtype, Shape shape, std::span<const double> values) {
    Tensor t;
    t.dtype = dtype;
    t.shape = std::move(shape);
    const auto n = static_cast<std::size_t>(t.numel());
    if (values.size() != n) {
        throw std::invalid_argument("Tensor::from_f64: " + std::to_string(values.size()) +
                                    " values for shape " + shape_string(t.shape));
    }
    t.data.resize(n * dtype_size(dtype));
    std::uint8_t* dst = t.data.data();
    switch (dtype) {
        case DType::f64:
            std::memcpy(dst, values.data(), n * sizeof(double));
            break;
        case DType::f32:
            for (std::size_t i = 0; i < n; ++i) {
                const float v = static_cast<float>(values[i]);
                std::memcpy(dst + 4 * i, &v, 4);
            }
            break;
        case DType::f16:
        case DType::bf16:
            for (std::size_t i = 0; i < n; ++i) {
                const float v = static_cast<float>(values[i]);
                const std::uint16_t bits = dtype == DType::f16 ? f32_to_f16(v) : f32_to_bf16(v);
                std::memcpy(dst + 2 * i, &bits, 2);
            }
            break;
    }
    return t;
}

const Tensor& TensorMap::at(const std::string& name) const {
    auto it = entries.find(name);
    if (it == entries.end()) {
        throw CheckpointError(CheckpointErrc::invalid_map, name, "no tensor named '" + name + "'");
    }
    return it->second;
}

std::string_view to_string(CheckpointErrc code) {
    switch (code) {
        case CheckpointErrc::io: return "io";
        case CheckpointErrc::truncated: return "truncated";
        case CheckpointErrc::header_too_large: return "header_too_large";
        case CheckpointErrc::header_out_of_bounds: return "header_out_of_bounds";
        case CheckpointErrc::malformed_header: return "malformed_header";
        case CheckpointErrc::unknown_dtype: return "unknown_dtype";
        case CheckpointErrc::size_mismatch: return "size_mismatch";
        case CheckpointErrc::bad_offsets: return "bad_offsets";
        case CheckpointErrc::invalid_map: return "invalid_map";
    }
    return "?";
}

CheckpointError::CheckpointError(CheckpointErrc code, std::string tensor, const std::string& message)
    : std::runtime_error(tensor.empty() ? message : message + " (tensor '" + tensor + "')"),
      code_(code),
      tensor_(std::move(tensor)) {}

namespace {

struct RawEntry {
    std::string name;
    DType dtype;
    Shape shape;
    std::uint64_t begin;
    std::uint64_t end;
};

[[noreturn]] void fail(CheckpointErrc code, const std::string& tensor, const std::string& message) {
    throw CheckpointError(code, tensor, message);
}

RawEntry parse_entry(const std::string& name, const json& value) {
    if (name.empty()) fail(CheckpointErrc::malformed_header, name, "empty tensor name");
    if (!value.is_object()) fail(CheckpointErrc::malformed_header, name, "tensor entry is not an object");

    auto dt = value.find("dtype");
    auto sh = value.find("shape");
    auto off = value.find("data_offsets");
    if (dt == value.end() || sh == value.end() || off == value.end()) {
        fail(CheckpointErrc::malformed_header, name, "entry needs dtype, shape and data_offsets");
    }
    if (!dt->is_string()) fail(CheckpointErrc::malformed_header, name, "dtype is not a string");
    auto dtype = parse_dtype(dt->get<std::string>());
    if (!dtype) fail(CheckpointErrc::unknown_dtype, name, "unknown dtype '" + dt->get<std::string>() + "'");

    if (!sh->is_array()) fail(CheckpointErrc::malformed_header, name, "shape is not an array");
    Shape shape;
    for (const auto& extent : *sh) {
        if (!extent.is_number_unsigned()) fail(CheckpointErrc::malformed_header, name, "shape extent is not a non-negative integer");
        shape.push_back(extent.get<std::uint64_t>());
    }
    if (!off->is_array() || off->size() != 2 || !(*off)[0].is_number_unsigned() || !(*off)[1].is_number_unsigned()) {
        fail(CheckpointErrc::malformed_header, name, "data_offsets must be two non-negative integers");
    }
    return RawEntry{name, *dtype, std::move(shape), (*off)[0].get<std::uint64_t>(), (*off)[1].get<std::uint64_t>()};
}

}  // namespace

TensorMap parse_checkpoint(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 8) fail(CheckpointErrc::truncated, "", "file shorter than the 8-byte header length");
    std::uint64_t header_len;
    std::memcpy(&header_len, bytes.data(), 8);
    if (header_len > kMaxHeaderBytes) {
        fail(CheckpointErrc::header_too_large, "", "header length " + std::to_string(header_len) + " exceeds limit");
    }
    if (header_len > bytes.size() - 8) {
        fail(CheckpointErrc::header_out_of_bounds, "",
             "header length " + std::to_string(header_len) + " exceeds file size " + std::to_string(bytes.size()));
    }

    const auto* header_begin = reinterpret_cast<const char*>(bytes.data() + 8);
    json header;
    try {
        header = json::parse(header_begin, header_begin + header_len);
    } catch (const json::parse_error& e) {
        fail(CheckpointErrc::malformed_header, "", std::string("header is not valid JSON: ") + e.what());
    }
    if (!header.is_object()) fail(CheckpointErrc::malformed_header, "", "header is not a JSON object");

    TensorMap map;
    std::vector<RawEntry> raw;
    for (auto it = header.begin(); it != header.end(); ++it) {
        if (it.key() == "__metadata__") {
            if (!it->is_object()) fail(CheckpointErrc::malformed_header, "", "__metadata__ is not an object");
            for (auto m = it->begin(); m != it->end(); ++m) {
                if (!m->is_string()) fail(CheckpointErrc::malformed_header, "", "__metadata__ value for '" + m.key() + "' is not a string");
                map.metadata.emplace(m.key(), m->get<std::string>());
            }
            continue;
        }
        raw.push_back(parse_entry(it.key(), *it));
    }

    const std::uint64_t buffer_len = bytes.size() - 8 - header_len;
    const std::uint8_t* buffer = bytes.data() + 8 + header_len;

    for (const auto& e : raw) {
        if (e.begin > e.end || e.end > buffer_len) {
            fail(CheckpointErrc::bad_offsets, e.name,
                 "data_offsets [" + std::to_string(e.begin) + "," + std::to_string(e.end) + "] outside buffer of " +
                     std::to_string(buffer_len) + " bytes");
        }
        const std::uint64_t expected = element_count(e.shape) * dtype_size(e.dtype);
        if (e.end - e.begin != expected) {
            fail(CheckpointErrc::size_mismatch, e.name,
                 "shape " + shape_string(e.shape) + " needs " + std::to_string(expected) + " bytes, offsets span " +
                     std::to_string(e.end - e.begin));
        }
    }

    // Buffers must tile [0, buffer_len) exactly: no gaps, no overlaps.
    std::vector<const RawEntry*> order;
    for (const auto& e : raw) order.push_back(&e);
    std::sort(order.begin(), order.end(), [](const RawEntry* a, const RawEntry* b) {
        return a->begin != b->begin ? a->begin < b->begin : a->end < b->end;
    });
    std::uint64_t cursor = 0;
    for (const RawEntry* e : order) {
        if (e->begin < cursor) fail(CheckpointErrc::bad_offsets, e->name, "data overlaps the previous tensor");
        if (e->begin > cursor) fail(CheckpointErrc::bad_offsets, e->name, "gap before tensor data");
        cursor = e->end;
    }
    if (cursor != buffer_len) {
        fail(CheckpointErrc::bad_offsets, order.empty() ? "" : order.back()->name,
             std::to_string(buffer_len - cursor) + " trailing bytes after the last tensor");
    }

    for (auto& e : raw) {
        Tensor t;
        t.dtype = e.dtype;
        t.shape = std::move(e.shape);
        t.data.assign(buffer + e.begin, buffer + e.end);
        map.entries.emplace(e.name, std::move(t));
    }
    return map;
}

void check_tensor_map(const TensorMap& map) {
    for (const auto& [name, t] : map.entries) {
        if (name.empty()) fail(CheckpointErrc::invalid_map, name, "empty tensor name");
        if (name == "__metadata__") fail(CheckpointErrc::invalid_map, name, "reserved tensor name");
        if (t.data.size() != t.numel() * dtype_size(t.dtype)) {
            fail(CheckpointErrc::invalid_map, name,
                 "data holds " + std::to_string(t.data.size()) + " bytes for shape " + shape_string(t.shape));
        }
    }
}

std::vector<std::uint8_t> serialize_checkpoint(const TensorMap& map) {
    check_tensor_map(map);

    // nlohmann::json objects are std::map-backed, so keys come out sorted.
    json header = json::object();
    std::uint64_t offset = 0;
    for (const auto& [name, t] : map.entries) {
        header[name] = {
            {"dtype", dtype_name(t.dtype)},
            {"shape", t.shape},
            {"data_offsets", {offset, offset + t.data.size()}},
        };
        offset += t.data.size();
    }
    if (!map.metadata.empty()) header["__metadata__"] = map.metadata;

    std::string text = header.dump();
    text.append((8 - text.size() % 8) % 8, ' ');

    std::vector<std::uint8_t> out(8 + text.size() + offset);
    const std::uint64_t header_len = text.size();
    for (int b = 0; b < 8; ++b) out[b] = static_cast<std::uint8_t>(header_len >> (8 * b));
    std::copy(text.begin(), text.end(), out.begin() + 8);
    auto pos = out.begin() + 8 + static_cast<std::ptrdiff_t>(text.size());
    for (const auto& [name, t] : map.entries) pos = std::copy(t.data.begin(), t.data.end(), pos);
    return out;
}

TensorMap read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(CheckpointErrc::io, "", "cannot open '" + path.string() + "'");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) fail(CheckpointErrc::io, "", "read failed for '" + path.string() + "'");
    try {
        return parse_checkpoint(bytes);
    } catch (const CheckpointError& e) {
        throw CheckpointError(e.code(), e.tensor(), path.string() + ": " + e.what());
    }
}

void write_checkpoint(const TensorMap& map, const std::filesystem::path& path) {
    const auto bytes = serialize_checkpoint(map);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(CheckpointErrc::io, "", "cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.close();
    if (!out) fail(CheckpointErrc::io, "", "write failed for '" + path.string() + "'");
}

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t seed) {
    std::uint64_t h = seed;
    for (auto b : bytes) {
        h ^= b;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string hex64(std::uint64_t value) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[value & 0xf];
        value >>= 4;
    }
    return out;
}

std::string checkpoint_hash(const TensorMap& map) {
    return hex64(fnv1a64(serialize_checkpoint(map)));
}

CompatReport validate_compat(std::span<const TensorMap* const> maps) {
    if (maps.size() < 2) throw std::invalid_argument("validate_compat needs at least 2 checkpoints");

    std::map<std::string, std::size_t> all_keys;
    for (const auto* m : maps) {
        for (const auto& [name, t] : m->entries) ++all_keys[name];
    }

    CompatReport report;
    report.missing_keys.resize(maps.size());
    for (const auto& [name, count] : all_keys) {
        std::vector<Shape> shapes;
        std::vector<DType> dtypes;
        for (std::size_t i = 0; i < maps.size(); ++i) {
            auto it = maps[i]->entries.find(name);
            if (it == maps[i]->entries.end()) {
                report.missing_keys[i].push_back(name);
                continue;
            }
            shapes.push_back(it->second.shape);
            dtypes.push_back(it->second.dtype);
        }
        if (std::adjacent_find(shapes.begin(), shapes.end(), std::not_equal_to<>()) != shapes.end()) {
            report.shape_mismatches.push_back({name, std::move(shapes)});
        }
        if (std::adjacent_find(dtypes.begin(), dtypes.end(), std::not_equal_to<>()) != dtypes.end()) {
            report.dtype_mismatches.push_back({name, std::move(dtypes)});
        }
    }
    const bool any_missing = std::any_of(report.missing_keys.begin(), report.missing_keys.end(),
                                         [](const auto& keys) { return !keys.empty(); });
    report.compatible = !any_missing && report.shape_mismatches.empty() && report.dtype_mismatches.empty();
    return report;
}

CompatReport validate_compat(std::span<const TensorMap> maps) {
    std::vector<const TensorMap*> ptrs;
    for (const auto& m : maps) ptrs.push_back(&m);
    return validate_compat(std::span<const TensorMap* const>(ptrs));
}

std::string CompatReport::describe() const {
    if (compatible) return "compatible";
    std::ostringstream os;
    for (std::size_t i = 0; i < missing_keys.size(); ++i) {
        for (const auto& k : missing_keys[i]) os << "checkpoint " << i << " is missing '" << k << "'; ";
    }
    for (const auto& s : shape_mismatches) {
        os << "shape mismatch on '" << s.name << "':";
        for (const auto& sh : s.shapes) os << ' ' << shape_string(sh);
        os << "; ";
    }
    for (const auto& d : dtype_mismatches) {
        os << "dtype mismatch on '" << d.name << "':";
        for (auto dt : d.dtypes) os << ' ' << dtype_name(dt);
        os << "; ";
    }
    std::string out = os.str();
    if (out.size() >= 2) out.resize(out.size() - 2);
    return out;
}

}  // namespace evomerge
