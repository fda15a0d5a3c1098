#pragma once

#include <cstdint>
#include <vector>

namespace dhmbpo {

// One environment or model step. `state` and `next_state` are the
// agent-visible observation vectors.
struct Transition {
    std::vector<double> state;
    std::vector<double> action;
    double reward = 0;
    std::vector<double> next_state;
    bool terminated = false;
    bool truncated = false;
};

bool is_finite(const Transition& t);

}  // namespace dhmbpo
