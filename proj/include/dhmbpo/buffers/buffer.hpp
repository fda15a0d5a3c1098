#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "dhmbpo/core/rng.hpp"
#include "dhmbpo/core/transition.hpp"

namespace dhmbpo::buffers {

// Where a stored transition came from; carried into every sampled batch.
enum class Provenance : std::uint8_t { environment = 0, model = 1 };

const char* provenance_name(Provenance p);

// Row-major packed batch of transitions.
struct Batch {
    std::size_t size = 0, state_dim = 0, action_dim = 0;
    std::vector<double> states, actions, rewards, next_states;
    std::vector<std::uint8_t> terminated, truncated;
    std::vector<std::uint64_t> sequence;
    std::vector<Provenance> provenance;

    std::span<const double> state(std::size_t i) const { return {states.data() + i * state_dim, state_dim}; }
    std::span<const double> action(std::size_t i) const { return {actions.data() + i * action_dim, action_dim}; }
    std::span<const double> next_state(std::size_t i) const {
        return {next_states.data() + i * state_dim, state_dim};
    }
};

// Fixed-capacity ring of transitions with strict FIFO eviction. Every push
// gets the next sequence number, so eviction order is observable.
class TransitionBuffer {
public:
    TransitionBuffer() = default;
    TransitionBuffer(std::size_t state_dim, std::size_t action_dim, std::size_t capacity, Provenance tag);

    // Rejects non-finite or mis-shaped transitions with ContractViolation.
    void push(const Transition& t);
    void clear();

    std::size_t size() const { return count_; }
    std::size_t capacity() const { return capacity_; }
    bool empty() const { return count_ == 0; }
    std::size_t state_dim() const { return state_dim_; }
    std::size_t action_dim() const { return action_dim_; }
    Provenance provenance() const { return tag_; }
    std::uint64_t pushed() const { return next_sequence_; }

    // i-th stored item, oldest first.
    Transition at(std::size_t i) const;
    std::uint64_t sequence_at(std::size_t i) const;
    Batch all() const;

    // I.i.d. uniform with replacement; empty buffer is a contract violation.
    Batch sample_uniform(std::size_t batch, Rng& rng) const;

    void dump(const std::filesystem::path& path) const;
    static TransitionBuffer restore(const std::filesystem::path& path);

    friend bool operator==(const TransitionBuffer& a, const TransitionBuffer& b);

private:
    std::size_t slot(std::size_t i) const;
    void append_slot(Batch& b, std::size_t slot) const;

    std::size_t state_dim_ = 0, action_dim_ = 0, capacity_ = 0;
    std::size_t count_ = 0, cursor_ = 0;
    std::uint64_t next_sequence_ = 0;
    Provenance tag_ = Provenance::environment;
    std::vector<double> states_, actions_, rewards_, next_states_;
    std::vector<std::uint8_t> terminated_, truncated_;
    std::vector<std::uint64_t> sequence_;
};

// D_e: real environment transitions.
inline TransitionBuffer make_replay_buffer(std::size_t state_dim, std::size_t action_dim,
                                           std::size_t capacity = 1'000'000) {
    return TransitionBuffer(state_dim, action_dim, capacity, Provenance::environment);
}

// D_m^D: model-generated transitions, cleared on every distribution-rollout refresh.
inline TransitionBuffer make_model_buffer(std::size_t state_dim, std::size_t action_dim, std::size_t capacity) {
    return TransitionBuffer(state_dim, action_dim, capacity, Provenance::model);
}

Batch concat(const Batch& a, const Batch& b);

}  // namespace dhmbpo::buffers
