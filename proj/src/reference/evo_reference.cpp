#include "evomerge/reference.hpp"

namespace evomerge::reference {

namespace {

bool dom(const std::vector<double>& a, const std::vector<double>& b) {
    bool strictly = false;
    for (std::size_t k = 0; k < a.size(); ++k) {
        if (a[k] > b[k]) return false;
        if (a[k] < b[k]) strictly = true;
    }
    return strictly;
}

}  // namespace

std::vector<std::vector<std::size_t>> nondominated_sort(const std::vector<std::vector<double>>& objectives) {
    std::vector<std::vector<std::size_t>> fronts;
    std::vector<bool> assigned(objectives.size(), false);
    std::size_t left = objectives.size();
    while (left > 0) {
        std::vector<std::size_t> front;
        for (std::size_t i = 0; i < objectives.size(); ++i) {
            if (assigned[i]) continue;
            bool dominated = false;
            for (std::size_t j = 0; j < objectives.size() && !dominated; ++j) {
                if (!assigned[j] && j != i && dom(objectives[j], objectives[i])) dominated = true;
            }
            if (!dominated) front.push_back(i);
        }
        for (auto i : front) assigned[i] = true;
        left -= front.size();
        fronts.push_back(std::move(front));
    }
    return fronts;
}

}  // namespace evomerge::reference
