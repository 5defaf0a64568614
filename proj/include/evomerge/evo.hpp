#pragma once

#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "evomerge/bounds.hpp"
#include "evomerge/philox.hpp"

namespace evomerge {

// Minimization throughout. Maximized quantities are negated by the caller.
struct Individual {
    std::vector<double> genotype;
    std::vector<double> objectives;
    std::optional<std::size_t> rank;
    std::optional<double> crowding;
};

struct EvoParams {
    std::size_t pop_size = 25;
    std::size_t generations = 7;
    double eta_c = 15.0;
    double eta_m = 20.0;
    std::optional<double> p_mut;  // default 1 / n_genes
    std::size_t tournament_size = 2;
    double de_F = 0.8;
    double de_CR = 0.9;
    std::uint64_t seed = 0;
    // Optional seeding of the first generation; the remainder is sampled
    // uniformly within bounds.
    std::vector<std::vector<double>> initial_population;

    double mutation_probability(std::size_t n_genes) const {
        return p_mut ? *p_mut : 1.0 / static_cast<double>(n_genes);
    }

    bool operator==(const EvoParams&) const = default;
};

enum class Algorithm { ga, de, nsga2 };

std::string_view to_string(Algorithm algorithm);
std::optional<Algorithm> parse_algorithm(std::string_view name);
inline bool is_multi_objective(Algorithm a) { return a == Algorithm::nsga2; }

void validate_params(const EvoParams& params, Algorithm algorithm);

struct GenerationStats {
    std::size_t generation = 0;
    std::vector<double> best;  // per-objective minimum over the population
    std::vector<double> mean;
};

struct ParetoResult {
    std::vector<Individual> front;  // single objective: {best}
    std::vector<Individual> population;
    std::vector<GenerationStats> history;
    std::size_t evaluations = 0;
};

struct EvalContext {
    std::size_t generation = 0;
    std::size_t index = 0;  // position within the generation's batch
};

class Problem {
public:
    virtual ~Problem() = default;

    virtual const Bounds& bounds() const = 0;
    virtual std::size_t n_objectives() const = 0;
    virtual std::vector<double> evaluate(std::span<const double> genes, const EvalContext& ctx) = 0;

    // True when evaluate() may run concurrently for different individuals.
    virtual bool evaluation_safe() const { return false; }

    // Called once per generation (including generation 0) after survival.
    virtual void on_generation_end(std::size_t /*generation*/, std::span<const Individual> /*population*/) {}

    std::size_t n_genes() const { return bounds().size(); }
};

// Wraps a plain function. Mostly for tests and benchmarks.
class FunctionProblem : public Problem {
public:
    using Fn = std::function<std::vector<double>(std::span<const double>)>;

    FunctionProblem(Bounds bounds, std::size_t n_objectives, Fn fn, bool evaluation_safe = true)
        : bounds_(std::move(bounds)), n_obj_(n_objectives), fn_(std::move(fn)), safe_(evaluation_safe) {}

    const Bounds& bounds() const override { return bounds_; }
    std::size_t n_objectives() const override { return n_obj_; }
    std::vector<double> evaluate(std::span<const double> genes, const EvalContext&) override { return fn_(genes); }
    bool evaluation_safe() const override { return safe_; }

private:
    Bounds bounds_;
    std::size_t n_obj_;
    Fn fn_;
    bool safe_;
};

// An evaluation threw; carries the offending genotype.
class EvaluationError : public std::runtime_error {
public:
    EvaluationError(std::vector<double> genotype, const std::string& message);
    const std::vector<double>& genotype() const noexcept { return genotype_; }

private:
    std::vector<double> genotype_;
};

template <class G>
concept UniformSource = requires(G& g) {
    { g.uniform() } -> std::convertible_to<double>;
};

// SBX. Each gene is recombined with probability 0.5 (first draw), using
// spread factor beta from a second draw; otherwise the parents' genes are
// copied. Children are clipped to bounds.
template <UniformSource Rng>
std::pair<std::vector<double>, std::vector<double>> sbx_crossover(std::span<const double> p1,
                                                                  std::span<const double> p2, double eta_c,
                                                                  std::span<const Bound> bounds, Rng& rng) {
    if (p1.size() != p2.size() || p1.size() != bounds.size()) {
        throw std::invalid_argument("sbx_crossover: parent/bounds length mismatch");
    }
    std::vector<double> c1(p1.begin(), p1.end());
    std::vector<double> c2(p2.begin(), p2.end());
    const double exponent = 1.0 / (eta_c + 1.0);
    for (std::size_t i = 0; i < p1.size(); ++i) {
        if (rng.uniform() >= 0.5) continue;
        const double u = rng.uniform();
        if (p1[i] == p2[i]) continue;
        const double beta = u <= 0.5 ? std::pow(2.0 * u, exponent) : std::pow(1.0 / (2.0 * (1.0 - u)), exponent);
        c1[i] = bounds[i].clip(0.5 * ((1.0 + beta) * p1[i] + (1.0 - beta) * p2[i]));
        c2[i] = bounds[i].clip(0.5 * ((1.0 - beta) * p1[i] + (1.0 + beta) * p2[i]));
    }
    return {std::move(c1), std::move(c2)};
}

// Polynomial mutation: each gene mutates with probability p_mut.
template <UniformSource Rng>
std::vector<double> polynomial_mutation(std::span<const double> genes, double eta_m, double p_mut,
                                        std::span<const Bound> bounds, Rng& rng) {
    if (genes.size() != bounds.size()) throw std::invalid_argument("polynomial_mutation: length mismatch");
    std::vector<double> out(genes.begin(), genes.end());
    const double exponent = 1.0 / (eta_m + 1.0);
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (!(rng.uniform() < p_mut)) continue;
        const double u = rng.uniform();
        const double delta = u < 0.5 ? std::pow(2.0 * u, exponent) - 1.0 : 1.0 - std::pow(2.0 * (1.0 - u), exponent);
        out[i] = bounds[i].clip(out[i] + delta * bounds[i].width());
    }
    return out;
}

// a dominates b: a <= b everywhere and a < b somewhere.
bool dominates(std::span<const double> a, std::span<const double> b);

// Deb's fast non-dominated sort. Each front lists indices in ascending order.
std::vector<std::vector<std::size_t>> fast_nondominated_sort(std::span<const std::vector<double>> objectives);

std::vector<double> crowding_distance(std::span<const std::vector<double>> front_objectives);

// rand/1/bin trial vector for target i.
template <UniformSource Rng>
std::vector<double> de_trial(std::span<const std::vector<double>> population, std::size_t target, double F, double CR,
                             std::span<const Bound> bounds, Rng& rng);

ParetoResult run_ga(Problem& problem, const EvoParams& params);
ParetoResult run_de(Problem& problem, const EvoParams& params);
ParetoResult run_nsga2(Problem& problem, const EvoParams& params);
ParetoResult run_algorithm(Algorithm algorithm, Problem& problem, const EvoParams& params);

// RNG stream for one (generation, individual, operator) triple.
enum class StreamOp : std::uint64_t { init = 1, select = 2, crossover = 3, mutate = 4, de = 5 };

constexpr std::uint64_t stream_for(std::size_t generation, std::size_t individual, StreamOp op) {
    return hash_combine(hash_combine(generation, individual), static_cast<std::uint64_t>(op));
}

template <UniformSource Rng>
std::vector<double> de_trial(std::span<const std::vector<double>> population, std::size_t target, double F, double CR,
                             std::span<const Bound> bounds, Rng& rng) {
    const std::size_t np = population.size();
    if (np < 4) throw std::invalid_argument("de_trial: population must have at least 4 members");
    auto pick = [&](std::initializer_list<std::size_t> taken) {
        for (;;) {
            const auto r = static_cast<std::size_t>(rng.uniform() * static_cast<double>(np));
            bool clash = r >= np;
            for (auto t : taken) clash = clash || r == t;
            if (!clash) return r;
        }
    };
    const std::size_t r1 = pick({target});
    const std::size_t r2 = pick({target, r1});
    const std::size_t r3 = pick({target, r1, r2});

    const auto& x = population[target];
    const std::size_t n = x.size();
    const auto forced = std::min(n - 1, static_cast<std::size_t>(rng.uniform() * static_cast<double>(n)));
    std::vector<double> trial(x.begin(), x.end());
    for (std::size_t j = 0; j < n; ++j) {
        const bool cross = rng.uniform() < CR;
        if (cross || j == forced) {
            const double v = population[r1][j] + F * (population[r2][j] - population[r3][j]);
            trial[j] = bounds[j].clip(v);
        }
    }
    return trial;
}

}  // namespace evomerge
