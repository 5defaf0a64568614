#include <string>

#include "evomerge/reference.hpp"

namespace evomerge::reference {

char mlp_forward(const TensorMap& model, const std::vector<double>& features) {
    std::vector<double> act = features;
    std::size_t layer = 0;
    while (model.contains("layers." + std::to_string(layer) + ".weight")) {
        const auto& wt = model.at("layers." + std::to_string(layer) + ".weight");
        const auto w = wt.to_f64();
        const auto b = model.at("layers." + std::to_string(layer) + ".bias").to_f64();
        const std::size_t out = wt.shape[0];
        const std::size_t in = wt.shape[1];
        std::vector<double> next(out);
        for (std::size_t o = 0; o < out; ++o) {
            double s = b[o];
            for (std::size_t i = 0; i < in; ++i) s += w[o * in + i] * act[i];
            next[o] = s;
        }
        ++layer;
        if (model.contains("layers." + std::to_string(layer) + ".weight")) {
            for (double& v : next) v = v > 0.0 ? v : 0.0;
        }
        act = next;
    }
    std::size_t best = 0;
    for (std::size_t o = 1; o < act.size(); ++o) {
        if (act[o] > act[best]) best = o;
    }
    return static_cast<char>('A' + best);
}

std::vector<char> mlp_forward_batch(const TensorMap& model, const std::vector<std::vector<double>>& features) {
    std::vector<char> out;
    out.reserve(features.size());
    for (const auto& f : features) out.push_back(mlp_forward(model, f));
    return out;
}

}  // namespace evomerge::reference
