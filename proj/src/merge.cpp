#include "evomerge/merge.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "evomerge/philox.hpp"

namespace evomerge {

namespace {

// Below this many elements the OpenMP fork/join costs more than it saves.
constexpr std::size_t kParallelThreshold = std::size_t{1} << 14;
constexpr std::size_t kDotBlock = 4096;

void require_compat(std::vector<const TensorMap*> maps) {
    if (maps.size() < 2) return;
    auto report = validate_compat(std::span<const TensorMap* const>(maps));
    if (!report.compatible) throw CompatError(std::move(report));
}

std::vector<const TensorMap*> with_base(const TensorMap& base, MapRefs endpoints) {
    std::vector<const TensorMap*> all{&base};
    all.insert(all.end(), endpoints.begin(), endpoints.end());
    return all;
}

// Validates non-negative finite weights with a positive sum; returns the sum.
double checked_weight_sum(std::span<const double> weights, std::size_t expected, const char* what) {
    if (weights.size() != expected) {
        throw std::invalid_argument(std::string(what) + ": " + std::to_string(weights.size()) + " weights for " +
                                    std::to_string(expected) + " checkpoints");
    }
    double sum = 0.0;
    for (double w : weights) {
        if (!std::isfinite(w) || w < 0.0) throw std::invalid_argument(std::string(what) + ": weights must be finite and >= 0");
        sum += w;
    }
    if (!(sum > 0.0)) throw std::invalid_argument(std::string(what) + ": weights sum to zero");
    return sum;
}

void check_density(double density) {
    if (!(density > 0.0 && density <= 1.0)) throw std::invalid_argument("density must lie in (0, 1]");
}

void check_drop_rate(double drop_rate) {
    if (!(drop_rate >= 0.0 && drop_rate < 1.0)) throw std::invalid_argument("drop_rate must lie in [0, 1)");
}

std::uint64_t dare_stream_key(std::string_view stream_id, const std::string& tensor_name) {
    return hash_combine(hash_string(stream_id), hash_string(tensor_name));
}

std::vector<std::vector<double>> endpoint_deltas(const std::string& name, const std::vector<double>& base,
                                                 MapRefs endpoints) {
    std::vector<std::vector<double>> taus;
    taus.reserve(endpoints.size());
    for (const auto* ep : endpoints) {
        auto tau = ep->at(name).to_f64();
        const std::size_t n = tau.size();
#pragma omp parallel for schedule(static) if (n > kParallelThreshold)
        for (std::size_t i = 0; i < n; ++i) tau[i] -= base[i];
        taus.push_back(std::move(tau));
    }
    return taus;
}

std::vector<std::span<const double>> as_spans(const std::vector<std::vector<double>>& vs) {
    return {vs.begin(), vs.end()};
}

TensorMap with_metadata_of(const TensorMap& like) {
    TensorMap out;
    out.metadata = like.metadata;
    return out;
}

}  // namespace

std::string_view to_string(MergeMethod method) {
    switch (method) {
        case MergeMethod::linear: return "linear";
        case MergeMethod::slerp: return "slerp";
        case MergeMethod::task_arithmetic: return "task_arithmetic";
        case MergeMethod::ties: return "ties";
        case MergeMethod::dare_linear: return "dare_linear";
        case MergeMethod::dare_ties: return "dare_ties";
    }
    return "?";
}

std::optional<MergeMethod> parse_merge_method(std::string_view name) {
    for (auto m : kAllMergeMethods) {
        if (to_string(m) == name) return m;
    }
    return std::nullopt;
}

bool needs_base(MergeMethod method) {
    return method != MergeMethod::linear && method != MergeMethod::slerp;
}

std::string dare_stream_id(std::size_t endpoint_index) {
    return "endpoint:" + std::to_string(endpoint_index);
}

std::size_t ties_keep_count(std::size_t n, double density) {
    if (n == 0) return 0;
    // The small slack keeps products like 0.3 * 10 from rounding up to 4.
    const double k = std::ceil(density * static_cast<double>(n) - 1e-9);
    return std::clamp<std::size_t>(static_cast<std::size_t>(std::max(k, 0.0)), 1, n);
}

namespace kernels {

double dot(std::span<const double> a, std::span<const double> b) {
    const std::size_t n = a.size();
    const std::size_t blocks = (n + kDotBlock - 1) / kDotBlock;
    std::vector<double> partial(blocks, 0.0);
#pragma omp parallel for schedule(static) if (n > kParallelThreshold)
    for (std::size_t blk = 0; blk < blocks; ++blk) {
        const std::size_t lo = blk * kDotBlock;
        const std::size_t hi = std::min(n, lo + kDotBlock);
        double s = 0.0;
        for (std::size_t i = lo; i < hi; ++i) s += a[i] * b[i];
        partial[blk] = s;
    }
    double total = 0.0;
    for (double p : partial) total += p;
    return total;
}

void slerp(std::span<const double> a, std::span<const double> b, double t, std::span<double> out) {
    const std::size_t n = a.size();
    const double na = std::sqrt(dot(a, a));
    const double nb = std::sqrt(dot(b, b));

    double ca = 1.0 - t;
    double cb = t;
    if (na > 0.0 && nb > 0.0) {
        const double cosine = std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
        const double omega = std::acos(cosine);
        const double s = std::sin(omega);
        if (s >= 1e-8) {
            ca = std::sin((1.0 - t) * omega) / s;
            cb = std::sin(t * omega) / s;
        }
    }
#pragma omp parallel for schedule(static) if (n > kParallelThreshold)
    for (std::size_t i = 0; i < n; ++i) out[i] = ca * a[i] + cb * b[i];
}

void weighted_sum(std::span<const std::span<const double>> inputs, std::span<const double> scales,
                  std::span<double> out) {
    const std::size_t n = out.size();
    const std::size_t k = inputs.size();
#pragma omp parallel for schedule(static) if (n > kParallelThreshold)
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < k; ++j) s += scales[j] * inputs[j][i];
        out[i] = s;
    }
}

void dare_mask(std::span<double> values, double drop_rate, std::uint64_t seed, std::uint64_t stream_key) {
    const double keep = 1.0 - drop_rate;
    const double rescale = 1.0 / keep;
    const std::size_t n = values.size();
#pragma omp parallel for schedule(static) if (n > kParallelThreshold)
    for (std::size_t i = 0; i < n; ++i) {
        const bool kept = to_unit(philox_at(seed, stream_key, i)) < keep;
        values[i] = kept ? values[i] * rescale : 0.0;
    }
}

void trim_top_k(std::span<double> values, double density) {
    const std::size_t n = values.size();
    const std::size_t k = ties_keep_count(n, density);
    if (k >= n) return;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                     [&](std::size_t x, std::size_t y) {
                         const double ax = std::fabs(values[x]);
                         const double ay = std::fabs(values[y]);
                         return ax != ay ? ax > ay : x < y;
                     });
    for (std::size_t r = k; r < n; ++r) values[order[r]] = 0.0;
}

void ties_combine(std::span<const std::span<const double>> taus, std::span<const double> weights,
                  std::span<double> out) {
    const std::size_t n = out.size();
    const std::size_t k = taus.size();
#pragma omp parallel for schedule(static) if (n > kParallelThreshold)
    for (std::size_t i = 0; i < n; ++i) {
        double elect = 0.0;
        for (std::size_t j = 0; j < k; ++j) elect += weights[j] * taus[j][i];
        const bool positive = elect >= 0.0;
        double num = 0.0;
        double den = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            const double v = taus[j][i];
            if ((positive && v > 0.0) || (!positive && v < 0.0)) {
                num += weights[j] * v;
                den += weights[j];
            }
        }
        out[i] = den > 0.0 ? num / den : 0.0;
    }
}

}  // namespace kernels

TensorMap lerp_merge(MapRefs maps, std::span<const double> weights) {
    if (maps.empty()) throw std::invalid_argument("lerp_merge: no checkpoints");
    const double sum = checked_weight_sum(weights, maps.size(), "lerp_merge");
    require_compat({maps.begin(), maps.end()});

    std::vector<double> scales(weights.begin(), weights.end());
    for (double& s : scales) s /= sum;

    TensorMap out = with_metadata_of(*maps[0]);
    for (const auto& [name, first] : maps[0]->entries) {
        std::vector<std::vector<double>> values;
        for (const auto* m : maps) values.push_back(m->at(name).to_f64());
        std::vector<double> merged(values[0].size());
        kernels::weighted_sum(as_spans(values), scales, merged);
        out.entries.emplace(name, Tensor::from_f64(first.dtype, first.shape, merged));
    }
    return out;
}

TensorMap slerp_merge(const TensorMap& a, const TensorMap& b, double t) {
    if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("slerp_merge: t must lie in [0, 1]");
    require_compat({&a, &b});

    TensorMap out = with_metadata_of(a);
    for (const auto& [name, ta] : a.entries) {
        const auto va = ta.to_f64();
        const auto vb = b.at(name).to_f64();
        std::vector<double> merged(va.size());
        kernels::slerp(va, vb, t, merged);
        out.entries.emplace(name, Tensor::from_f64(ta.dtype, ta.shape, merged));
    }
    return out;
}

TensorMap task_arithmetic_merge(const TensorMap& base, MapRefs endpoints, std::span<const double> lambdas) {
    if (endpoints.empty()) throw std::invalid_argument("task_arithmetic_merge: no endpoints");
    if (lambdas.size() != endpoints.size()) {
        throw std::invalid_argument("task_arithmetic_merge: " + std::to_string(lambdas.size()) + " lambdas for " +
                                    std::to_string(endpoints.size()) + " endpoints");
    }
    for (double l : lambdas) {
        if (!std::isfinite(l)) throw std::invalid_argument("task_arithmetic_merge: lambdas must be finite");
    }
    require_compat(with_base(base, endpoints));

    TensorMap out = with_metadata_of(base);
    for (const auto& [name, tb] : base.entries) {
        const auto vb = tb.to_f64();
        std::vector<std::vector<double>> eps;
        for (const auto* ep : endpoints) eps.push_back(ep->at(name).to_f64());
        const std::size_t n = vb.size();
        std::vector<double> merged(n);
#pragma omp parallel for schedule(static) if (n > kParallelThreshold)
        for (std::size_t i = 0; i < n; ++i) {
            double delta = 0.0;
            for (std::size_t j = 0; j < eps.size(); ++j) delta += lambdas[j] * (eps[j][i] - vb[i]);
            merged[i] = vb[i] + delta;
        }
        out.entries.emplace(name, Tensor::from_f64(tb.dtype, tb.shape, merged));
    }
    return out;
}

TensorMap task_vector(const TensorMap& endpoint, const TensorMap& base) {
    require_compat({&base, &endpoint});
    TensorMap out;
    for (const auto& [name, tb] : base.entries) {
        const TensorMap* one[] = {&endpoint};
        auto taus = endpoint_deltas(name, tb.to_f64(), one);
        out.entries.emplace(name, Tensor::from_f64(DType::f64, tb.shape, taus[0]));
    }
    return out;
}

TensorMap dare_sparsify(const TensorMap& tv, double drop_rate, std::uint64_t seed, std::string_view stream_id) {
    check_drop_rate(drop_rate);
    TensorMap out = with_metadata_of(tv);
    for (const auto& [name, t] : tv.entries) {
        auto values = t.to_f64();
        kernels::dare_mask(values, drop_rate, seed, dare_stream_key(stream_id, name));
        out.entries.emplace(name, Tensor::from_f64(t.dtype, t.shape, values));
    }
    return out;
}

TensorMap ties_merge(const TensorMap& base, MapRefs endpoints, std::span<const double> weights, double density,
                     std::optional<DarePreprocess> preprocess) {
    if (endpoints.empty()) throw std::invalid_argument("ties_merge: no endpoints");
    checked_weight_sum(weights, endpoints.size(), "ties_merge");
    check_density(density);
    if (preprocess) check_drop_rate(preprocess->drop_rate);
    require_compat(with_base(base, endpoints));

    TensorMap out = with_metadata_of(base);
    for (const auto& [name, tb] : base.entries) {
        const auto vb = tb.to_f64();
        auto taus = endpoint_deltas(name, vb, endpoints);
        for (std::size_t j = 0; j < taus.size(); ++j) {
            if (preprocess) {
                kernels::dare_mask(taus[j], preprocess->drop_rate, preprocess->seed,
                                   dare_stream_key(dare_stream_id(j), name));
            }
            kernels::trim_top_k(taus[j], density);
        }
        std::vector<double> merged(vb.size());
        kernels::ties_combine(as_spans(taus), weights, merged);
        const std::size_t n = merged.size();
#pragma omp parallel for schedule(static) if (n > kParallelThreshold)
        for (std::size_t i = 0; i < n; ++i) merged[i] += vb[i];
        out.entries.emplace(name, Tensor::from_f64(tb.dtype, tb.shape, merged));
    }
    return out;
}

TensorMap dare_linear_merge(const TensorMap& base, MapRefs endpoints, std::span<const double> weights,
                            DarePreprocess dare) {
    if (endpoints.empty()) throw std::invalid_argument("dare_linear_merge: no endpoints");
    const double sum = checked_weight_sum(weights, endpoints.size(), "dare_linear_merge");
    check_drop_rate(dare.drop_rate);
    require_compat(with_base(base, endpoints));

    std::vector<double> scales(weights.begin(), weights.end());
    for (double& s : scales) s /= sum;

    TensorMap out = with_metadata_of(base);
    for (const auto& [name, tb] : base.entries) {
        const auto vb = tb.to_f64();
        auto taus = endpoint_deltas(name, vb, endpoints);
        for (std::size_t j = 0; j < taus.size(); ++j) {
            kernels::dare_mask(taus[j], dare.drop_rate, dare.seed, dare_stream_key(dare_stream_id(j), name));
        }
        std::vector<double> merged(vb.size());
        kernels::weighted_sum(as_spans(taus), scales, merged);
        const std::size_t n = merged.size();
#pragma omp parallel for schedule(static) if (n > kParallelThreshold)
        for (std::size_t i = 0; i < n; ++i) merged[i] += vb[i];
        out.entries.emplace(name, Tensor::from_f64(tb.dtype, tb.shape, merged));
    }
    return out;
}

TensorMap apply_recipe(const MergeRecipe& recipe, const TensorMap* base, MapRefs endpoints) {
    if (needs_base(recipe.method) && base == nullptr) {
        throw std::invalid_argument(std::string(to_string(recipe.method)) + " needs a base checkpoint");
    }
    switch (recipe.method) {
        case MergeMethod::linear:
            return lerp_merge(endpoints, recipe.weights);
        case MergeMethod::slerp:
            if (endpoints.size() != 2 || recipe.weights.size() != 1) {
                throw std::invalid_argument("slerp needs exactly 2 checkpoints and one coefficient t");
            }
            return slerp_merge(*endpoints[0], *endpoints[1], recipe.weights[0]);
        case MergeMethod::task_arithmetic:
            return task_arithmetic_merge(*base, endpoints, recipe.weights);
        case MergeMethod::ties:
            return ties_merge(*base, endpoints, recipe.weights, recipe.density);
        case MergeMethod::dare_ties:
            return ties_merge(*base, endpoints, recipe.weights, recipe.density,
                              DarePreprocess{recipe.drop_rate, recipe.seed});
        case MergeMethod::dare_linear:
            return dare_linear_merge(*base, endpoints, recipe.weights, DarePreprocess{recipe.drop_rate, recipe.seed});
    }
    throw std::logic_error("unhandled merge method");
}

void GenotypeSpec::validate() const {
    if (n_endpoints == 0) throw std::invalid_argument("genotype needs at least one endpoint");
    if (method == MergeMethod::slerp && n_endpoints != 2) {
        throw std::invalid_argument("slerp needs exactly 2 endpoints");
    }
    if (bounds.size() != gene_count()) {
        throw std::invalid_argument("genotype has " + std::to_string(gene_count()) + " genes but " +
                                    std::to_string(bounds.size()) + " bounds");
    }
    for (const auto& b : bounds) {
        if (!std::isfinite(b.lo) || !std::isfinite(b.hi)) throw std::invalid_argument("gene bounds must be finite");
    }
    check_bounds(bounds);
    check_density(default_density);
    check_drop_rate(default_drop_rate);
}

MergeRecipe decode_genotype(std::span<const double> genes, const GenotypeSpec& spec) {
    if (genes.size() != spec.gene_count()) {
        throw std::invalid_argument("decode_genotype: expected " + std::to_string(spec.gene_count()) + " genes, got " +
                                    std::to_string(genes.size()));
    }
    MergeRecipe recipe;
    recipe.method = spec.method;
    recipe.seed = spec.seed;
    const std::size_t nw = spec.weight_genes();
    recipe.weights.assign(genes.begin(), genes.begin() + static_cast<std::ptrdiff_t>(nw));
    std::size_t next = nw;
    recipe.density = spec.evolve_density ? genes[next++] : spec.default_density;
    recipe.drop_rate = spec.evolve_drop_rate ? genes[next++] : spec.default_drop_rate;
    return recipe;
}

}  // namespace evomerge
