#include "evomerge/evo.hpp"

#include <algorithm>
#include <exception>
#include <limits>
#include <numeric>

namespace evomerge {

std::string_view to_string(Algorithm algorithm) {
    switch (algorithm) {
        case Algorithm::ga: return "ga";
        case Algorithm::de: return "de";
        case Algorithm::nsga2: return "nsga2";
    }
    return "?";
}

std::optional<Algorithm> parse_algorithm(std::string_view name) {
    if (name == "ga") return Algorithm::ga;
    if (name == "de") return Algorithm::de;
    if (name == "nsga2") return Algorithm::nsga2;
    return std::nullopt;
}

void validate_params(const EvoParams& params, [[maybe_unused]] Algorithm algorithm) {
    if (params.pop_size < 4) throw std::invalid_argument("pop_size must be at least 4");
    if (!(params.eta_c >= 0.0) || !(params.eta_m >= 0.0)) throw std::invalid_argument("distribution indices must be >= 0");
    if (params.p_mut && !(*params.p_mut >= 0.0 && *params.p_mut <= 1.0)) {
        throw std::invalid_argument("p_mut must lie in [0, 1]");
    }
    if (params.tournament_size < 1) throw std::invalid_argument("tournament_size must be >= 1");
    if (!(params.de_CR >= 0.0 && params.de_CR <= 1.0)) throw std::invalid_argument("de_CR must lie in [0, 1]");
    if (!std::isfinite(params.de_F)) throw std::invalid_argument("de_F must be finite");
    if (params.initial_population.size() > params.pop_size) {
        throw std::invalid_argument("initial_population larger than pop_size");
    }
}

EvaluationError::EvaluationError(std::vector<double> genotype, const std::string& message)
    : std::runtime_error(message), genotype_(std::move(genotype)) {}

bool dominates(std::span<const double> a, std::span<const double> b) {
    bool strictly = false;
    for (std::size_t k = 0; k < a.size(); ++k) {
        if (a[k] > b[k]) return false;
        if (a[k] < b[k]) strictly = true;
    }
    return strictly;
}

std::vector<std::vector<std::size_t>> fast_nondominated_sort(std::span<const std::vector<double>> objectives) {
    const std::size_t n = objectives.size();
    if (n == 0) return {};
    const std::size_t m = objectives[0].size();
    for (const auto& o : objectives) {
        if (o.size() != m) throw std::invalid_argument("fast_nondominated_sort: ragged objective vectors");
    }

    std::vector<std::vector<std::size_t>> dominated(n);
    std::vector<std::size_t> domination_count(n, 0);
    for (std::size_t p = 0; p < n; ++p) {
        for (std::size_t q = p + 1; q < n; ++q) {
            if (dominates(objectives[p], objectives[q])) {
                dominated[p].push_back(q);
                ++domination_count[q];
            } else if (dominates(objectives[q], objectives[p])) {
                dominated[q].push_back(p);
                ++domination_count[p];
            }
        }
    }

    std::vector<std::vector<std::size_t>> fronts;
    std::vector<std::size_t> current;
    for (std::size_t p = 0; p < n; ++p) {
        if (domination_count[p] == 0) current.push_back(p);
    }
    while (!current.empty()) {
        std::vector<std::size_t> next;
        for (auto p : current) {
            for (auto q : dominated[p]) {
                if (--domination_count[q] == 0) next.push_back(q);
            }
        }
        std::sort(next.begin(), next.end());
        fronts.push_back(std::move(current));
        current = std::move(next);
    }
    return fronts;
}

std::vector<double> crowding_distance(std::span<const std::vector<double>> front) {
    const std::size_t n = front.size();
    constexpr double inf = std::numeric_limits<double>::infinity();
    if (n <= 2) return std::vector<double>(n, inf);

    std::vector<double> distance(n, 0.0);
    const std::size_t m = front[0].size();
    std::vector<std::size_t> order(n);
    for (std::size_t k = 0; k < m; ++k) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return front[a][k] < front[b][k]; });
        distance[order.front()] = inf;
        distance[order.back()] = inf;
        const double range = front[order.back()][k] - front[order.front()][k];
        if (!(range > 0.0) || !std::isfinite(range)) continue;
        for (std::size_t r = 1; r + 1 < n; ++r) {
            distance[order[r]] += (front[order[r + 1]][k] - front[order[r - 1]][k]) / range;
        }
    }
    return distance;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<double> sanitize(std::vector<double> objectives, std::size_t expected, std::span<const double> genes) {
    if (objectives.size() != expected) {
        throw EvaluationError({genes.begin(), genes.end()},
                              "evaluation returned " + std::to_string(objectives.size()) + " objectives, expected " +
                                  std::to_string(expected));
    }
    for (double& v : objectives) {
        if (std::isnan(v)) v = kInf;
    }
    return objectives;
}

// Evaluates a batch. Results never depend on the execution mode because
// selection only runs after the whole batch is done.
void evaluate_batch(Problem& problem, std::vector<Individual>& batch, std::size_t generation, std::size_t& counter) {
    const std::size_t n_obj = problem.n_objectives();
    const auto eval_one = [&](std::size_t i) {
        EvalContext ctx{generation, i};
        try {
            batch[i].objectives = sanitize(problem.evaluate(batch[i].genotype, ctx), n_obj, batch[i].genotype);
        } catch (const EvaluationError&) {
            throw;
        } catch (const std::exception& e) {
            throw EvaluationError(batch[i].genotype, e.what());
        }
    };

    if (problem.evaluation_safe()) {
        std::exception_ptr first_error;
        const auto n = static_cast<std::ptrdiff_t>(batch.size());
#pragma omp parallel for schedule(dynamic)
        for (std::ptrdiff_t i = 0; i < n; ++i) {
            try {
                eval_one(static_cast<std::size_t>(i));
            } catch (...) {
#pragma omp critical(evomerge_eval_error)
                if (!first_error) first_error = std::current_exception();
            }
        }
        if (first_error) std::rethrow_exception(first_error);
    } else {
        for (std::size_t i = 0; i < batch.size(); ++i) eval_one(i);
    }
    counter += batch.size();
}

std::vector<Individual> initial_population(const Problem& problem, const EvoParams& params) {
    const auto& bounds = problem.bounds();
    std::vector<Individual> pop(params.pop_size);
    for (std::size_t i = 0; i < params.pop_size; ++i) {
        if (i < params.initial_population.size()) {
            const auto& g = params.initial_population[i];
            if (g.size() != bounds.size()) throw std::invalid_argument("initial_population genotype has the wrong length");
            pop[i].genotype = g;
            clip_to(pop[i].genotype, bounds);
            continue;
        }
        StreamRng rng(params.seed, stream_for(0, i, StreamOp::init));
        pop[i].genotype.resize(bounds.size());
        for (std::size_t j = 0; j < bounds.size(); ++j) {
            pop[i].genotype[j] = bounds[j].lo + rng.uniform() * bounds[j].width();
        }
    }
    return pop;
}

GenerationStats stats_of(std::size_t generation, const std::vector<Individual>& pop, std::size_t n_obj) {
    GenerationStats s;
    s.generation = generation;
    s.best.assign(n_obj, kInf);
    s.mean.assign(n_obj, 0.0);
    for (const auto& ind : pop) {
        for (std::size_t k = 0; k < n_obj; ++k) {
            s.best[k] = std::min(s.best[k], ind.objectives[k]);
            s.mean[k] += ind.objectives[k];
        }
    }
    for (auto& m : s.mean) m /= static_cast<double>(pop.size());
    return s;
}

void require_objectives(const Problem& problem, bool multi, const char* name) {
    const std::size_t m = problem.n_objectives();
    if (multi && m < 2) throw std::invalid_argument(std::string(name) + " needs at least 2 objectives");
    if (!multi && m != 1) throw std::invalid_argument(std::string(name) + " needs exactly 1 objective");
    check_bounds(problem.bounds());
    if (problem.bounds().empty()) throw std::invalid_argument(std::string(name) + ": problem has no genes");
}

// k-way tournament; lower `better` wins, earlier draw wins ties.
template <class Better>
std::size_t tournament(std::size_t pop_size, std::size_t k, StreamRng& rng, Better better) {
    std::size_t winner = rng.below(pop_size);
    for (std::size_t t = 1; t < k; ++t) {
        const std::size_t challenger = rng.below(pop_size);
        if (better(challenger, winner)) winner = challenger;
    }
    return winner;
}

template <class Better>
std::vector<Individual> make_offspring(const std::vector<Individual>& pop, const Problem& problem,
                                       const EvoParams& params, std::size_t generation, Better better) {
    const auto& bounds = problem.bounds();
    const double p_mut = params.mutation_probability(bounds.size());
    std::vector<Individual> children(pop.size());
    // odd sizes: the last pair contributes only its first child
    for (std::size_t pair = 0; 2 * pair < pop.size(); ++pair) {
        StreamRng sel(params.seed, stream_for(generation, pair, StreamOp::select));
        const std::size_t a = tournament(pop.size(), params.tournament_size, sel, better);
        const std::size_t b = tournament(pop.size(), params.tournament_size, sel, better);

        StreamRng cx(params.seed, stream_for(generation, pair, StreamOp::crossover));
        auto [c1, c2] = sbx_crossover(pop[a].genotype, pop[b].genotype, params.eta_c, bounds, cx);

        StreamRng m1(params.seed, stream_for(generation, 2 * pair, StreamOp::mutate));
        children[2 * pair].genotype = polynomial_mutation(c1, params.eta_m, p_mut, bounds, m1);
        if (2 * pair + 1 == pop.size()) break;
        StreamRng m2(params.seed, stream_for(generation, 2 * pair + 1, StreamOp::mutate));
        children[2 * pair + 1].genotype = polynomial_mutation(c2, params.eta_m, p_mut, bounds, m2);
    }
    return children;
}

void assign_rank_and_crowding(std::vector<Individual>& pop) {
    std::vector<std::vector<double>> objs;
    objs.reserve(pop.size());
    for (const auto& ind : pop) objs.push_back(ind.objectives);
    const auto fronts = fast_nondominated_sort(objs);
    for (std::size_t r = 0; r < fronts.size(); ++r) {
        std::vector<std::vector<double>> fobj;
        for (auto i : fronts[r]) fobj.push_back(objs[i]);
        const auto cd = crowding_distance(fobj);
        for (std::size_t j = 0; j < fronts[r].size(); ++j) {
            pop[fronts[r][j]].rank = r;
            pop[fronts[r][j]].crowding = cd[j];
        }
    }
}

std::vector<Individual> rank_zero(const std::vector<Individual>& pop) {
    std::vector<Individual> front;
    for (const auto& ind : pop) {
        if (ind.rank && *ind.rank == 0) front.push_back(ind);
    }
    return front;
}

}  // namespace

ParetoResult run_ga(Problem& problem, const EvoParams& params) {
    validate_params(params, Algorithm::ga);
    require_objectives(problem, false, "run_ga");

    ParetoResult result;
    auto pop = initial_population(problem, params);
    evaluate_batch(problem, pop, 0, result.evaluations);
    const auto by_fitness = [](const Individual& a, const Individual& b) { return a.objectives[0] < b.objectives[0]; };
    std::stable_sort(pop.begin(), pop.end(), by_fitness);
    result.history.push_back(stats_of(0, pop, 1));
    problem.on_generation_end(0, pop);

    for (std::size_t gen = 1; gen <= params.generations; ++gen) {
        auto children = make_offspring(pop, problem, params, gen, [&](std::size_t x, std::size_t y) {
            return pop[x].objectives[0] < pop[y].objectives[0];
        });
        evaluate_batch(problem, children, gen, result.evaluations);

        // (mu + lambda): parents first so they win ties.
        pop.insert(pop.end(), std::make_move_iterator(children.begin()), std::make_move_iterator(children.end()));
        std::stable_sort(pop.begin(), pop.end(), by_fitness);
        pop.resize(params.pop_size);
        result.history.push_back(stats_of(gen, pop, 1));
        problem.on_generation_end(gen, pop);
    }

    for (auto& ind : pop) ind.rank.reset();
    pop.front().rank = 0;
    result.front = {pop.front()};
    result.population = std::move(pop);
    return result;
}

ParetoResult run_de(Problem& problem, const EvoParams& params) {
    validate_params(params, Algorithm::de);
    require_objectives(problem, false, "run_de");
    const auto& bounds = problem.bounds();

    ParetoResult result;
    auto pop = initial_population(problem, params);
    evaluate_batch(problem, pop, 0, result.evaluations);
    result.history.push_back(stats_of(0, pop, 1));
    problem.on_generation_end(0, pop);

    std::vector<std::vector<double>> genomes(pop.size());
    for (std::size_t gen = 1; gen <= params.generations; ++gen) {
        for (std::size_t i = 0; i < pop.size(); ++i) genomes[i] = pop[i].genotype;
        std::vector<Individual> trials(pop.size());
        for (std::size_t i = 0; i < pop.size(); ++i) {
            StreamRng rng(params.seed, stream_for(gen, i, StreamOp::de));
            trials[i].genotype = de_trial(std::span<const std::vector<double>>(genomes), i, params.de_F, params.de_CR,
                                          bounds, rng);
        }
        evaluate_batch(problem, trials, gen, result.evaluations);
        for (std::size_t i = 0; i < pop.size(); ++i) {
            if (trials[i].objectives[0] <= pop[i].objectives[0]) pop[i] = std::move(trials[i]);
        }
        result.history.push_back(stats_of(gen, pop, 1));
        problem.on_generation_end(gen, pop);
    }

    const auto best = std::min_element(pop.begin(), pop.end(), [](const Individual& a, const Individual& b) {
        return a.objectives[0] < b.objectives[0];
    });
    Individual winner = *best;
    winner.rank = 0;
    result.front = {winner};
    result.population = std::move(pop);
    return result;
}

ParetoResult run_nsga2(Problem& problem, const EvoParams& params) {
    validate_params(params, Algorithm::nsga2);
    require_objectives(problem, true, "run_nsga2");
    const std::size_t n_obj = problem.n_objectives();

    ParetoResult result;
    auto pop = initial_population(problem, params);
    evaluate_batch(problem, pop, 0, result.evaluations);
    assign_rank_and_crowding(pop);
    result.history.push_back(stats_of(0, pop, n_obj));
    problem.on_generation_end(0, pop);

    for (std::size_t gen = 1; gen <= params.generations; ++gen) {
        auto children = make_offspring(pop, problem, params, gen, [&](std::size_t x, std::size_t y) {
            if (*pop[x].rank != *pop[y].rank) return *pop[x].rank < *pop[y].rank;
            return *pop[x].crowding > *pop[y].crowding;
        });
        evaluate_batch(problem, children, gen, result.evaluations);

        std::vector<Individual> combined = std::move(pop);
        combined.insert(combined.end(), std::make_move_iterator(children.begin()),
                        std::make_move_iterator(children.end()));
        std::vector<std::vector<double>> objs;
        for (const auto& ind : combined) objs.push_back(ind.objectives);
        const auto fronts = fast_nondominated_sort(objs);

        pop.clear();
        for (const auto& front : fronts) {
            if (pop.size() + front.size() <= params.pop_size) {
                for (auto i : front) pop.push_back(combined[i]);
                if (pop.size() == params.pop_size) break;
                continue;
            }
            std::vector<std::vector<double>> fobj;
            for (auto i : front) fobj.push_back(objs[i]);
            const auto cd = crowding_distance(fobj);
            std::vector<std::size_t> order(front.size());
            std::iota(order.begin(), order.end(), std::size_t{0});
            std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return cd[a] > cd[b]; });
            for (std::size_t r = 0; pop.size() < params.pop_size; ++r) pop.push_back(combined[front[order[r]]]);
            break;
        }
        assign_rank_and_crowding(pop);
        result.history.push_back(stats_of(gen, pop, n_obj));
        problem.on_generation_end(gen, pop);
    }

    result.front = rank_zero(pop);
    result.population = std::move(pop);
    return result;
}

ParetoResult run_algorithm(Algorithm algorithm, Problem& problem, const EvoParams& params) {
    switch (algorithm) {
        case Algorithm::ga: return run_ga(problem, params);
        case Algorithm::de: return run_de(problem, params);
        case Algorithm::nsga2: return run_nsga2(problem, params);
    }
    throw std::logic_error("unhandled algorithm");
}

}  // namespace evomerge
