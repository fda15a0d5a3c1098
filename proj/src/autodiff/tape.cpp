#include "dhmbpo/autodiff/tape.hpp"

#include <atomic>

#include "dhmbpo/core/error.hpp"

namespace dhmbpo::ad {

namespace {
std::atomic<std::uint64_t> next_tape_id{1};
thread_local Tape* active_tape = nullptr;
}  // namespace

Tape::Tape() : id_(next_tape_id.fetch_add(1)) {}

Tape::~Tape() {
    if (active_tape == this) active_tape = nullptr;
}

void Tape::record(std::shared_ptr<Node> output, BackwardFn backward) {
    require(!consumed_, "tape: recording onto a consumed tape");
    output->tape_id = id_;
    entries_.push_back({std::move(output), std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
    require(!consumed_, "tape: backward on a consumed tape");
    require(loss.defined() && loss.numel() == 1,
            "tape: backward needs a scalar loss, got shape " + shape_string(loss.shape()));
    require(loss.node()->tape_id == id_, "tape: loss was not produced on this tape");
    consumed_ = true;
    if (active_tape == this) active_tape = nullptr;

    loss.node()->grad_buffer()[0] += Scalar(1);
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
        if (it->output->grad.empty()) continue;  // not on a path to the loss
        it->backward(*it->output);
    }
    entries_.clear();
    entries_.shrink_to_fit();
}

TapeScope::TapeScope(Tape& tape) : previous_(active_tape) {
    require(!tape.consumed(), "tape: cannot record onto a consumed tape");
    active_tape = &tape;
}

TapeScope::~TapeScope() { active_tape = previous_; }

NoGradScope::NoGradScope() : previous_(active_tape) { active_tape = nullptr; }

NoGradScope::~NoGradScope() { active_tape = previous_; }

Tape* current_tape() {
    if (active_tape && active_tape->consumed()) return nullptr;
    return active_tape;
}

Tensor make_result(Shape shape, std::vector<Scalar> values, std::span<const Tensor> inputs,
                   BackwardFn backward) {
    Tensor out = Tensor::from_values(std::move(shape), std::move(values));
    Tape* tape = current_tape();
    if (!tape) return out;
    bool tracked = false;
    for (const Tensor& in : inputs) tracked = tracked || in.requires_grad();
    if (!tracked) return out;
    out.node()->requires_grad = true;
    tape->record(out.node_ptr(), std::move(backward));
    return out;
}

}  // namespace dhmbpo::ad
