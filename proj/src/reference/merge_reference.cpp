#include <cmath>
#include <stdexcept>

#include "evomerge/philox.hpp"
#include "evomerge/reference.hpp"

namespace evomerge::reference {

namespace {

std::uint64_t stream_key(std::size_t endpoint, const std::string& tensor) {
    return hash_combine(hash_string(dare_stream_id(endpoint)), hash_string(tensor));
}

std::vector<std::vector<double>> deltas(const TensorMap& base, MapRefs endpoints, const std::string& name) {
    const auto vb = base.at(name).to_f64();
    std::vector<std::vector<double>> out;
    for (const auto* ep : endpoints) {
        auto v = ep->at(name).to_f64();
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = v[i] - vb[i];
        out.push_back(v);
    }
    return out;
}

}  // namespace

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

TensorMap lerp(MapRefs maps, std::span<const double> weights) {
    double sum = 0.0;
    for (double w : weights) sum += w;
    TensorMap out;
    out.metadata = maps[0]->metadata;
    for (const auto& [name, t] : maps[0]->entries) {
        std::vector<double> acc(element_count(t.shape), 0.0);
        for (std::size_t m = 0; m < maps.size(); ++m) {
            const auto v = maps[m]->at(name).to_f64();
            for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += weights[m] / sum * v[i];
        }
        out.entries.emplace(name, Tensor::from_f64(t.dtype, t.shape, acc));
    }
    return out;
}

TensorMap slerp(const TensorMap& a, const TensorMap& b, double t) {
    TensorMap out;
    out.metadata = a.metadata;
    for (const auto& [name, ta] : a.entries) {
        const auto va = ta.to_f64();
        const auto vb = b.at(name).to_f64();
        const double na = std::sqrt(dot(va, va));
        const double nb = std::sqrt(dot(vb, vb));
        std::vector<double> r(va.size());
        double omega = 0.0;
        if (na > 0.0 && nb > 0.0) {
            double c = dot(va, vb) / (na * nb);
            c = c > 1.0 ? 1.0 : (c < -1.0 ? -1.0 : c);
            omega = std::acos(c);
        }
        for (std::size_t i = 0; i < r.size(); ++i) {
            if (std::sin(omega) < 1e-8) {
                r[i] = (1.0 - t) * va[i] + t * vb[i];
            } else {
                r[i] = (std::sin((1.0 - t) * omega) * va[i] + std::sin(t * omega) * vb[i]) / std::sin(omega);
            }
        }
        out.entries.emplace(name, Tensor::from_f64(ta.dtype, ta.shape, r));
    }
    return out;
}

TensorMap task_arithmetic(const TensorMap& base, MapRefs endpoints, std::span<const double> lambdas) {
    TensorMap out;
    out.metadata = base.metadata;
    for (const auto& [name, tb] : base.entries) {
        auto r = tb.to_f64();
        const auto taus = deltas(base, endpoints, name);
        for (std::size_t i = 0; i < r.size(); ++i) {
            double d = 0.0;
            for (std::size_t j = 0; j < taus.size(); ++j) d += lambdas[j] * taus[j][i];
            r[i] += d;
        }
        out.entries.emplace(name, Tensor::from_f64(tb.dtype, tb.shape, r));
    }
    return out;
}

std::vector<double> trim_top_k(const std::vector<double>& values, double density) {
    const std::size_t n = values.size();
    const std::size_t k = ties_keep_count(n, density);
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t outranked_by = 0;
        for (std::size_t j = 0; j < n; ++j) {
            const double aj = std::fabs(values[j]);
            const double ai = std::fabs(values[i]);
            if (aj > ai || (aj == ai && j < i)) ++outranked_by;
        }
        if (outranked_by < k) out[i] = values[i];
    }
    return out;
}

std::vector<double> dare_mask(const std::vector<double>& values, double drop_rate, std::uint64_t seed,
                              std::uint64_t key) {
    std::vector<double> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double u = to_unit(philox_at(seed, key, i));
        out[i] = u < 1.0 - drop_rate ? values[i] / (1.0 - drop_rate) : 0.0;
    }
    return out;
}

TensorMap ties(const TensorMap& base, MapRefs endpoints, std::span<const double> weights, double density,
               std::optional<DarePreprocess> preprocess) {
    TensorMap out;
    out.metadata = base.metadata;
    for (const auto& [name, tb] : base.entries) {
        auto r = tb.to_f64();
        auto taus = deltas(base, endpoints, name);
        for (std::size_t j = 0; j < taus.size(); ++j) {
            if (preprocess) taus[j] = dare_mask(taus[j], preprocess->drop_rate, preprocess->seed, stream_key(j, name));
            taus[j] = trim_top_k(taus[j], density);
        }
        for (std::size_t i = 0; i < r.size(); ++i) {
            double elect = 0.0;
            for (std::size_t j = 0; j < taus.size(); ++j) elect += weights[j] * taus[j][i];
            const double sign = elect >= 0.0 ? 1.0 : -1.0;
            double num = 0.0;
            double den = 0.0;
            for (std::size_t j = 0; j < taus.size(); ++j) {
                if (taus[j][i] * sign > 0.0) {
                    num += weights[j] * taus[j][i];
                    den += weights[j];
                }
            }
            if (den > 0.0) r[i] += num / den;
        }
        out.entries.emplace(name, Tensor::from_f64(tb.dtype, tb.shape, r));
    }
    return out;
}

TensorMap dare_linear(const TensorMap& base, MapRefs endpoints, std::span<const double> weights, DarePreprocess dare) {
    double sum = 0.0;
    for (double w : weights) sum += w;
    TensorMap out;
    out.metadata = base.metadata;
    for (const auto& [name, tb] : base.entries) {
        auto r = tb.to_f64();
        auto taus = deltas(base, endpoints, name);
        for (std::size_t j = 0; j < taus.size(); ++j) {
            const auto masked = dare_mask(taus[j], dare.drop_rate, dare.seed, stream_key(j, name));
            for (std::size_t i = 0; i < r.size(); ++i) r[i] += weights[j] / sum * masked[i];
        }
        out.entries.emplace(name, Tensor::from_f64(tb.dtype, tb.shape, r));
    }
    return out;
}

}  // namespace evomerge::reference
