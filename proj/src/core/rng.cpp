#include "dhmbpo/core/rng.hpp"

#include <cmath>
#include <cstring>
#include <limits>
#include <numbers>
#include <sstream>

#include "dhmbpo/core/error.hpp"

namespace dhmbpo {

Rng::Rng(std::uint64_t seed) : engine_(mix_seed(seed, 0x5eed)) {}

double Rng::uniform() {
    // 53 random bits -> [0, 1)
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double low, double high) { return low + (high - low) * uniform(); }

std::uint64_t Rng::uniform_index(std::uint64_t n) {
    require(n > 0, "uniform_index: n must be positive");
    // Rejection sampling keeps the draw exactly uniform.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t value = engine_();
    while (value >= limit) value = engine_();
    return value % n;
}

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
}

double Rng::exponential(double rate) {
    require(rate > 0.0, "exponential: rate must be positive");
    double u = uniform();
    return -std::log1p(-u) / rate;
}

Rng Rng::split() {
    Rng child(0);
    child.engine_.seed(mix_seed(engine_(), 0xc0ffee));
    return child;
}

std::string Rng::serialize() const {
    std::ostringstream out;
    std::uint64_t bits = 0;
    std::memcpy(&bits, &spare_, sizeof bits);
    out << (has_spare_ ? 1 : 0) << ' ' << bits << ' ' << engine_;
    return out.str();
}

Rng Rng::deserialize(const std::string& text) {
    std::istringstream in(text);
    Rng rng(0);
    int spare_flag = 0;
    std::uint64_t bits = 0;
    in >> spare_flag >> bits >> rng.engine_;
    if (!in) throw IoError("Rng::deserialize: malformed state");
    rng.has_spare_ = spare_flag != 0;
    std::memcpy(&rng.spare_, &bits, sizeof bits);
    return rng;
}

bool operator==(const Rng& a, const Rng& b) {
    return a.engine_ == b.engine_ && a.has_spare_ == b.has_spare_ &&
           (!a.has_spare_ || a.spare_ == b.spare_);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace dhmbpo
