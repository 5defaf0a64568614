#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace evomerge {

enum class DType : std::uint8_t { f64, f32, f16, bf16 };

std::size_t dtype_size(DType dtype);
std::string_view dtype_name(DType dtype);  // "F64", "F32", "F16", "BF16"
std::optional<DType> parse_dtype(std::string_view name);

using Shape = std::vector<std::uint64_t>;

std::uint64_t element_count(const Shape& shape);
std::string shape_string(const Shape& shape);

// A dense tensor kept in its storage encoding. Raw bytes are the source of
// truth so that read/write round-trips are exact; arithmetic goes through
// to_f64()/from_f64().
struct Tensor {
    DType dtype = DType::f32;
    Shape shape;
    std::vector<std::uint8_t> data;  // little-endian elements

    std::uint64_t numel() const { return element_count(shape); }

    std::vector<double> to_f64() const;
    static Tensor from_f64(DType dtype, Shape shape, std::span<const double> values);

    bool operator==(const Tensor&) const = default;
};

// A model checkpoint. Entries are ordered lexicographically by name, which is
// also the on-disk order.
struct TensorMap {
    std::map<std::string, Tensor> entries;
    std::map<std::string, std::string> metadata;  // "__metadata__", never interpreted

    const Tensor& at(const std::string& name) const;
    bool contains(const std::string& name) const { return entries.contains(name); }
    std::size_t size() const { return entries.size(); }

    bool operator==(const TensorMap&) const = default;
};

enum class CheckpointErrc {
    io,
    truncated,
    header_too_large,
    header_out_of_bounds,
    malformed_header,
    unknown_dtype,
    size_mismatch,
    bad_offsets,
    invalid_map,
};

std::string_view to_string(CheckpointErrc code);

class CheckpointError : public std::runtime_error {
public:
    CheckpointError(CheckpointErrc code, std::string tensor, const std::string& message);

    CheckpointErrc code() const noexcept { return code_; }
    // Offending tensor name; empty when the error is not tied to one tensor.
    const std::string& tensor() const noexcept { return tensor_; }

private:
    CheckpointErrc code_;
    std::string tensor_;
};

inline constexpr std::uint64_t kMaxHeaderBytes = 100ull * 1000 * 1000;

TensorMap parse_checkpoint(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> serialize_checkpoint(const TensorMap& map);

TensorMap read_checkpoint(const std::filesystem::path& path);
void write_checkpoint(const TensorMap& map, const std::filesystem::path& path);

// Throws CheckpointError(invalid_map) on empty names or data/shape disagreement.
void check_tensor_map(const TensorMap& map);

// FNV-1a over the serialized bytes, as 16 lowercase hex digits.
std::string checkpoint_hash(const TensorMap& map);
std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t seed = 0xcbf29ce484222325ull);
std::string hex64(std::uint64_t value);

struct ShapeMismatch {
    std::string name;
    std::vector<Shape> shapes;  // one per map containing the tensor, in map order
    bool operator==(const ShapeMismatch&) const = default;
};

struct DTypeMismatch {
    std::string name;
    std::vector<DType> dtypes;
    bool operator==(const DTypeMismatch&) const = default;
};

struct CompatReport {
    bool compatible = true;
    std::vector<std::vector<std::string>> missing_keys;  // per map
    std::vector<ShapeMismatch> shape_mismatches;
    std::vector<DTypeMismatch> dtype_mismatches;

    std::string describe() const;
};

// Checks key, shape and dtype agreement. Mismatches are reported, never thrown.
// Throws std::invalid_argument for fewer than two maps.
CompatReport validate_compat(std::span<const TensorMap* const> maps);
CompatReport validate_compat(std::span<const TensorMap> maps);

// f16 / bf16 codecs (round to nearest even).
std::uint16_t f32_to_f16(float value);
float f16_to_f32(std::uint16_t bits);
std::uint16_t f32_to_bf16(float value);
float bf16_to_f32(std::uint16_t bits);

}  // namespace evomerge
