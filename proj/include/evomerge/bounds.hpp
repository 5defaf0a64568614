#pragma once

#include <algorithm>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace evomerge {

struct Bound {
    double lo = 0.0;
    double hi = 1.0;

    double clip(double x) const { return std::clamp(x, lo, hi); }
    double width() const { return hi - lo; }
    bool operator==(const Bound&) const = default;
};

using Bounds = std::vector<Bound>;

inline void check_bounds(std::span<const Bound> bounds) {
    for (std::size_t i = 0; i < bounds.size(); ++i) {
        if (!(bounds[i].lo < bounds[i].hi)) {
            throw std::invalid_argument("bound " + std::to_string(i) + " needs lo < hi");
        }
    }
}

inline void clip_to(std::span<double> genes, std::span<const Bound> bounds) {
    for (std::size_t i = 0; i < genes.size(); ++i) genes[i] = bounds[i].clip(genes[i]);
}

inline bool within(std::span<const double> genes, std::span<const Bound> bounds) {
    for (std::size_t i = 0; i < genes.size(); ++i) {
        if (genes[i] < bounds[i].lo || genes[i] > bounds[i].hi) return false;
    }
    return true;
}

}  // namespace evomerge
