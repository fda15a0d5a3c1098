#include "dhmbpo/buffers/buffer.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "dhmbpo/core/error.hpp"

namespace dhmbpo::buffers {

static_assert(std::endian::native == std::endian::little, "buffer dumps assume a little-endian host");

const char* provenance_name(Provenance p) { return p == Provenance::environment ? "environment" : "model"; }

TransitionBuffer::TransitionBuffer(std::size_t state_dim, std::size_t action_dim, std::size_t capacity, Provenance tag)
    : state_dim_(state_dim), action_dim_(action_dim), capacity_(capacity), tag_(tag) {
    require(state_dim > 0 && action_dim > 0, "TransitionBuffer: dimensions must be positive");
    require(capacity > 0, "TransitionBuffer: capacity must be positive");
}

std::size_t TransitionBuffer::slot(std::size_t i) const {
    require(i < count_, "TransitionBuffer: index out of range");
    return count_ < capacity_ ? i : (cursor_ + i) % capacity_;
}

void TransitionBuffer::push(const Transition& t) {
    require(t.state.size() == state_dim_ && t.next_state.size() == state_dim_ && t.action.size() == action_dim_,
            "TransitionBuffer::push: dimension mismatch");
    require(is_finite(t), "TransitionBuffer::push: non-finite transition rejected");
    if (count_ < capacity_) {
        // Grow storage lazily so a 1M-capacity buffer costs only what it holds.
        states_.insert(states_.end(), t.state.begin(), t.state.end());
        actions_.insert(actions_.end(), t.action.begin(), t.action.end());
        rewards_.push_back(t.reward);
        next_states_.insert(next_states_.end(), t.next_state.begin(), t.next_state.end());
        terminated_.push_back(t.terminated);
        truncated_.push_back(t.truncated);
        sequence_.push_back(next_sequence_);
        ++count_;
        cursor_ = count_ % capacity_;
    } else {
        const std::size_t s = cursor_;
        std::copy(t.state.begin(), t.state.end(), states_.begin() + s * state_dim_);
        std::copy(t.action.begin(), t.action.end(), actions_.begin() + s * action_dim_);
        rewards_[s] = t.reward;
        std::copy(t.next_state.begin(), t.next_state.end(), next_states_.begin() + s * state_dim_);
        terminated_[s] = t.terminated;
        truncated_[s] = t.truncated;
        sequence_[s] = next_sequence_;
        cursor_ = (cursor_ + 1) % capacity_;
    }
    ++next_sequence_;
}

void TransitionBuffer::clear() {
    states_.clear();
    actions_.clear();
    rewards_.clear();
    next_states_.clear();
    terminated_.clear();
    truncated_.clear();
    sequence_.clear();
    count_ = cursor_ = 0;
}

Transition TransitionBuffer::at(std::size_t i) const {
    const std::size_t s = slot(i);
    Transition t;
    t.state.assign(states_.begin() + s * state_dim_, states_.begin() + (s + 1) * state_dim_);
    t.action.assign(actions_.begin() + s * action_dim_, actions_.begin() + (s + 1) * action_dim_);
    t.reward = rewards_[s];
    t.next_state.assign(next_states_.begin() + s * state_dim_, next_states_.begin() + (s + 1) * state_dim_);
    t.terminated = terminated_[s];
    t.truncated = truncated_[s];
    return t;
}

std::uint64_t TransitionBuffer::sequence_at(std::size_t i) const { return sequence_[slot(i)]; }

void TransitionBuffer::append_slot(Batch& b, std::size_t s) const {
    b.states.insert(b.states.end(), states_.begin() + s * state_dim_, states_.begin() + (s + 1) * state_dim_);
    b.actions.insert(b.actions.end(), actions_.begin() + s * action_dim_, actions_.begin() + (s + 1) * action_dim_);
    b.rewards.push_back(rewards_[s]);
    b.next_states.insert(b.next_states.end(), next_states_.begin() + s * state_dim_,
                         next_states_.begin() + (s + 1) * state_dim_);
    b.terminated.push_back(terminated_[s]);
    b.truncated.push_back(truncated_[s]);
    b.sequence.push_back(sequence_[s]);
    b.provenance.push_back(tag_);
    ++b.size;
}

Batch TransitionBuffer::all() const {
    Batch b;
    b.state_dim = state_dim_;
    b.action_dim = action_dim_;
    for (std::size_t i = 0; i < count_; ++i) append_slot(b, slot(i));
    return b;
}

Batch TransitionBuffer::sample_uniform(std::size_t batch, Rng& rng) const {
    require(count_ > 0, "TransitionBuffer::sample_uniform: buffer is empty");
    Batch b;
    b.state_dim = state_dim_;
    b.action_dim = action_dim_;
    b.states.reserve(batch * state_dim_);
    b.next_states.reserve(batch * state_dim_);
    b.actions.reserve(batch * action_dim_);
    for (std::size_t k = 0; k < batch; ++k) append_slot(b, static_cast<std::size_t>(rng.uniform_index(count_)));
    return b;
}

bool operator==(const TransitionBuffer& a, const TransitionBuffer& b) {
    return a.state_dim_ == b.state_dim_ && a.action_dim_ == b.action_dim_ && a.capacity_ == b.capacity_ &&
           a.count_ == b.count_ && a.cursor_ == b.cursor_ && a.next_sequence_ == b.next_sequence_ &&
           a.tag_ == b.tag_ && a.states_ == b.states_ && a.actions_ == b.actions_ && a.rewards_ == b.rewards_ &&
           a.next_states_ == b.next_states_ && a.terminated_ == b.terminated_ && a.truncated_ == b.truncated_ &&
           a.sequence_ == b.sequence_;
}

namespace {

constexpr char kMagic[8] = {'D', 'H', 'M', 'B', 'P', 'O', 'B', '1'};

template <class T>
void write_pod(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw IoError("buffer dump: truncated file");
    return v;
}

}  // namespace

void TransitionBuffer::dump(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write buffer dump " + path.string());
    out.write(kMagic, 8);
    write_pod<std::uint64_t>(out, state_dim_);
    write_pod<std::uint64_t>(out, action_dim_);
    write_pod<std::uint64_t>(out, capacity_);
    write_pod<std::uint64_t>(out, count_);
    write_pod<std::uint64_t>(out, cursor_);
    write_pod<std::uint64_t>(out, next_sequence_);
    write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(tag_));
    // Packed records in storage-slot order.
    for (std::size_t s = 0; s < count_; ++s) {
        out.write(reinterpret_cast<const char*>(states_.data() + s * state_dim_), state_dim_ * sizeof(double));
        out.write(reinterpret_cast<const char*>(actions_.data() + s * action_dim_), action_dim_ * sizeof(double));
        write_pod(out, rewards_[s]);
        out.write(reinterpret_cast<const char*>(next_states_.data() + s * state_dim_), state_dim_ * sizeof(double));
        write_pod(out, terminated_[s]);
        write_pod(out, truncated_[s]);
        write_pod(out, sequence_[s]);
    }
    if (!out) throw IoError("failed writing buffer dump " + path.string());
}

TransitionBuffer TransitionBuffer::restore(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read buffer dump " + path.string());
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0) throw IoError("not a buffer dump: " + path.string());
    const auto sd = read_pod<std::uint64_t>(in);
    const auto ad = read_pod<std::uint64_t>(in);
    const auto cap = read_pod<std::uint64_t>(in);
    TransitionBuffer b(sd, ad, cap, Provenance::environment);
    b.count_ = read_pod<std::uint64_t>(in);
    b.cursor_ = read_pod<std::uint64_t>(in);
    b.next_sequence_ = read_pod<std::uint64_t>(in);
    b.tag_ = static_cast<Provenance>(read_pod<std::uint8_t>(in));
    if (b.count_ > cap || b.cursor_ >= cap) throw IoError("buffer dump: inconsistent header");
    b.states_.resize(b.count_ * sd);
    b.actions_.resize(b.count_ * ad);
    b.rewards_.resize(b.count_);
    b.next_states_.resize(b.count_ * sd);
    b.terminated_.resize(b.count_);
    b.truncated_.resize(b.count_);
    b.sequence_.resize(b.count_);
    for (std::size_t s = 0; s < b.count_; ++s) {
        in.read(reinterpret_cast<char*>(b.states_.data() + s * sd), sd * sizeof(double));
        in.read(reinterpret_cast<char*>(b.actions_.data() + s * ad), ad * sizeof(double));
        b.rewards_[s] = read_pod<double>(in);
        in.read(reinterpret_cast<char*>(b.next_states_.data() + s * sd), sd * sizeof(double));
        b.terminated_[s] = read_pod<std::uint8_t>(in);
        b.truncated_[s] = read_pod<std::uint8_t>(in);
        b.sequence_[s] = read_pod<std::uint64_t>(in);
    }
    return b;
}

Batch concat(const Batch& a, const Batch& b) {
    if (a.size == 0) return b;
    if (b.size == 0) return a;
    require(a.state_dim == b.state_dim && a.action_dim == b.action_dim, "concat: batch layouts differ");
    Batch c = a;
    c.size += b.size;
    c.states.insert(c.states.end(), b.states.begin(), b.states.end());
    c.actions.insert(c.actions.end(), b.actions.begin(), b.actions.end());
    c.rewards.insert(c.rewards.end(), b.rewards.begin(), b.rewards.end());
    c.next_states.insert(c.next_states.end(), b.next_states.begin(), b.next_states.end());
    c.terminated.insert(c.terminated.end(), b.terminated.begin(), b.terminated.end());
    c.truncated.insert(c.truncated.end(), b.truncated.begin(), b.truncated.end());
    c.sequence.insert(c.sequence.end(), b.sequence.begin(), b.sequence.end());
    c.provenance.insert(c.provenance.end(), b.provenance.begin(), b.provenance.end());
    return c;
}

}  // namespace dhmbpo::buffers
