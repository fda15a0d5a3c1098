#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "dhmbpo/autodiff/tensor.hpp"

namespace dhmbpo::ad {

// Receives the finished output node (its value and accumulated grad).
using BackwardFn = std::function<void(const Node& output)>;

// Ordered record of differentiable operations. Operations record onto the
// tape made current by a TapeScope on the calling thread; with no current
// tape they compute values only. A tape supports exactly one backward pass.
class Tape {
public:
    Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;
    ~Tape();

    std::uint64_t id() const { return id_; }
    bool consumed() const { return consumed_; }
    std::size_t size() const { return entries_.size(); }

    void record(std::shared_ptr<Node> output, BackwardFn backward);

    // Seeds d(loss)/d(loss) = 1 and replays the record in reverse, adding
    // into the gradient buffers of every reachable requires_grad tensor.
    void backward(const Tensor& loss);

private:
    struct Entry {
        std::shared_ptr<Node> output;
        BackwardFn backward;
    };
    std::uint64_t id_;
    bool consumed_ = false;
    std::vector<Entry> entries_;
};

// Makes `tape` the recording target of this thread for the scope lifetime.
class TapeScope {
public:
    explicit TapeScope(Tape& tape);
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;
    ~TapeScope();

private:
    Tape* previous_;
};

// Suspends recording for the scope lifetime.
class NoGradScope {
public:
    NoGradScope();
    NoGradScope(const NoGradScope&) = delete;
    NoGradScope& operator=(const NoGradScope&) = delete;
    ~NoGradScope();

private:
    Tape* previous_;
};

Tape* current_tape();

// Builds the result of a custom differentiable operation. When recording is
// active and any input requires a gradient, the result is tracked and
// `backward` is recorded; it must add into the inputs' grad buffers (see
// Node::grad_buffer) only for inputs with requires_grad set.
Tensor make_result(Shape shape, std::vector<Scalar> values, std::span<const Tensor> inputs,
                   BackwardFn backward);

}  // namespace dhmbpo::ad
