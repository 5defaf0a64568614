#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "evomerge/bounds.hpp"
#include "evomerge/checkpoint_io.hpp"

namespace evomerge {

enum class MergeMethod { linear, slerp, task_arithmetic, ties, dare_linear, dare_ties };

std::string_view to_string(MergeMethod method);
std::optional<MergeMethod> parse_merge_method(std::string_view name);

// Task-vector methods merge deltas against a base checkpoint.
bool needs_base(MergeMethod method);

inline constexpr MergeMethod kAllMergeMethods[] = {
    MergeMethod::linear, MergeMethod::slerp,       MergeMethod::task_arithmetic,
    MergeMethod::ties,   MergeMethod::dare_linear, MergeMethod::dare_ties,
};

inline constexpr double kDefaultDensity = 0.5;
inline constexpr double kDefaultDropRate = 0.5;

struct MergeRecipe {
    MergeMethod method = MergeMethod::task_arithmetic;
    std::optional<std::string> base;  // checkpoint references, for reports
    std::vector<std::string> endpoints;
    std::vector<double> weights;  // per endpoint; slerp holds [t]
    double density = kDefaultDensity;
    double drop_rate = kDefaultDropRate;
    std::uint64_t seed = 0;

    bool operator==(const MergeRecipe&) const = default;
};

// Which genes exist and how they are bounded.
struct GenotypeSpec {
    MergeMethod method = MergeMethod::task_arithmetic;
    std::size_t n_endpoints = 1;
    bool evolve_density = false;
    bool evolve_drop_rate = false;
    Bounds bounds;  // one per gene
    double default_density = kDefaultDensity;
    double default_drop_rate = kDefaultDropRate;
    std::uint64_t seed = 0;

    std::size_t weight_genes() const { return method == MergeMethod::slerp ? 1 : n_endpoints; }
    std::size_t gene_count() const {
        return weight_genes() + (evolve_density ? 1 : 0) + (evolve_drop_rate ? 1 : 0);
    }
    void validate() const;
};

MergeRecipe decode_genotype(std::span<const double> genes, const GenotypeSpec& spec);

// Merge inputs failed validate_compat.
class CompatError : public std::runtime_error {
public:
    explicit CompatError(CompatReport report)
        : std::runtime_error("incompatible checkpoints: " + report.describe()), report_(std::move(report)) {}
    const CompatReport& report() const noexcept { return report_; }

private:
    CompatReport report_;
};

using MapRefs = std::span<const TensorMap* const>;

// Normalized weighted average: sum(w_i * theta_i) / sum(w_i).
TensorMap lerp_merge(MapRefs maps, std::span<const double> weights);

// Per-tensor spherical interpolation; falls back to lerp when the angle is
// degenerate (sin(omega) < 1e-8).
TensorMap slerp_merge(const TensorMap& a, const TensorMap& b, double t);

// base + sum(lambda_i * (theta_i - base)).
TensorMap task_arithmetic_merge(const TensorMap& base, MapRefs endpoints, std::span<const double> lambdas);

// theta - base, stored as F64.
TensorMap task_vector(const TensorMap& endpoint, const TensorMap& base);

// Drop each element with probability drop_rate and rescale survivors by
// 1 / (1 - drop_rate). The mask is keyed by (seed, stream_id, tensor name,
// element index), so it does not depend on evaluation order or thread count.
TensorMap dare_sparsify(const TensorMap& task_vector, double drop_rate, std::uint64_t seed, std::string_view stream_id);

struct DarePreprocess {
    double drop_rate = kDefaultDropRate;
    std::uint64_t seed = 0;
};

// Trim / elect sign / disjoint weighted mean, optionally on DARE-sparsified
// task vectors (dare_ties).
TensorMap ties_merge(const TensorMap& base, MapRefs endpoints, std::span<const double> weights, double density,
                     std::optional<DarePreprocess> preprocess = std::nullopt);

// base + sum(w_i * dare(tau_i)) / sum(w_i), no sign election.
TensorMap dare_linear_merge(const TensorMap& base, MapRefs endpoints, std::span<const double> weights,
                            DarePreprocess dare);

// Dispatches on recipe.method. base may be null for linear and slerp.
TensorMap apply_recipe(const MergeRecipe& recipe, const TensorMap* base, MapRefs endpoints);

// DARE stream id used for endpoint i inside ties/dare merges.
std::string dare_stream_id(std::size_t endpoint_index);

// Number of entries kept by TIES trimming of an n-element task vector.
std::size_t ties_keep_count(std::size_t n, double density);

namespace kernels {

// Deterministic blocked dot product: fixed block partition, serial reduction
// of block partials, so the result is independent of the thread count.
double dot(std::span<const double> a, std::span<const double> b);

void slerp(std::span<const double> a, std::span<const double> b, double t, std::span<double> out);

// out = sum_i scale_i * inputs[i]
void weighted_sum(std::span<const std::span<const double>> inputs, std::span<const double> scales, std::span<double> out);

void dare_mask(std::span<double> values, double drop_rate, std::uint64_t seed, std::uint64_t stream_key);

// Zero all but the ties_keep_count largest-magnitude entries. Equal
// magnitudes keep the lower flat index first.
void trim_top_k(std::span<double> values, double density);

// Sign election and disjoint weighted mean over trimmed task vectors.
void ties_combine(std::span<const std::span<const double>> taus, std::span<const double> weights,
                  std::span<double> out);

}  // namespace kernels

}  // namespace evomerge
