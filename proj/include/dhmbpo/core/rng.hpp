#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace dhmbpo {

// Deterministic random stream. Every distribution used by the library goes
// through these members so that the complete stream state (including the
// cached Box-Muller variate) can be serialized and restored bit-exactly.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0);

    // Uniform on [0, 1).
    double uniform();
    double uniform(double low, double high);
    // Uniform integer on [0, n). n must be positive.
    std::uint64_t uniform_index(std::uint64_t n);
    double normal();
    double exponential(double rate = 1.0);

    // Derives an independent child stream; advances this stream.
    Rng split();

    std::string serialize() const;
    static Rng deserialize(const std::string& text);

    std::mt19937_64& engine() { return engine_; }

    friend bool operator==(const Rng& a, const Rng& b);

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// SplitMix64 finalizer; used to derive well-separated seeds from (seed, index).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace dhmbpo
