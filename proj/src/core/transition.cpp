#include "dhmbpo/core/transition.hpp"

#include <cmath>

namespace dhmbpo {

bool is_finite(const Transition& t) {
    auto all = [](const std::vector<double>& v) {
        for (double x : v)
            if (!std::isfinite(x)) return false;
        return true;
    };
    return all(t.state) && all(t.action) && all(t.next_state) && std::isfinite(t.reward);
}

}  // namespace dhmbpo
