#pragma once

// Straightforward serial implementations used as test oracles and benchmark
// baselines. They share no code with the parallel kernels beyond tensor I/O
// and the Philox generator.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "evomerge/checkpoint_io.hpp"
#include "evomerge/merge.hpp"

namespace evomerge::reference {

TensorMap lerp(MapRefs maps, std::span<const double> weights);
TensorMap slerp(const TensorMap& a, const TensorMap& b, double t);
TensorMap task_arithmetic(const TensorMap& base, MapRefs endpoints, std::span<const double> lambdas);
TensorMap ties(const TensorMap& base, MapRefs endpoints, std::span<const double> weights, double density,
               std::optional<DarePreprocess> preprocess = std::nullopt);
TensorMap dare_linear(const TensorMap& base, MapRefs endpoints, std::span<const double> weights, DarePreprocess dare);

// Keeps element i iff fewer than k elements outrank it (larger magnitude, or
// equal magnitude and lower index). O(n^2).
std::vector<double> trim_top_k(const std::vector<double>& values, double density);
std::vector<double> dare_mask(const std::vector<double>& values, double drop_rate, std::uint64_t seed,
                              std::uint64_t stream_key);
double dot(const std::vector<double>& a, const std::vector<double>& b);

// Peels fronts by checking every pair against every remaining point. O(n^3).
std::vector<std::vector<std::size_t>> nondominated_sort(const std::vector<std::vector<double>>& objectives);

char mlp_forward(const TensorMap& model, const std::vector<double>& features);
std::vector<char> mlp_forward_batch(const TensorMap& model, const std::vector<std::vector<double>>& features);

}  // namespace evomerge::reference
