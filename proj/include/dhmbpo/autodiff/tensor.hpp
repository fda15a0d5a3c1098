#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace dhmbpo::ad {

#ifdef DHMBPO_FLOAT32
using Scalar = float;
#else
using Scalar = double;
#endif

using Shape = std::vector<std::size_t>;

std::size_t element_count(const Shape& shape);
std::string shape_string(const Shape& shape);

// Storage behind a Tensor handle. Values are written once by the producing
// operation (or by an optimizer, for leaf parameters).
struct Node {
    Shape shape;
    std::vector<Scalar> value;
    std::vector<Scalar> grad;  // empty until something accumulates into it
    bool requires_grad = false;
    std::uint64_t tape_id = 0;  // producing tape; 0 for leaves

    // Zero-initialized gradient buffer, allocated on first use.
    std::span<Scalar> grad_buffer();
};

// Shared handle to a dense row-major array.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, Scalar value);
    static Tensor from_values(Shape shape, std::vector<Scalar> values);
    static Tensor scalar(Scalar value);
    // Leaf that accumulates gradients.
    static Tensor parameter(Shape shape, std::vector<Scalar> values);

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const;

    std::span<const Scalar> values() const;
    // Mutable access is reserved for leaves (parameters, optimizer updates).
    std::span<Scalar> mutable_values();
    Scalar item() const;
    Scalar operator[](std::size_t flat_index) const { return values()[flat_index]; }

    bool requires_grad() const;
    void set_requires_grad(bool flag);
    bool has_grad() const;
    std::span<const Scalar> grad() const;
    std::span<Scalar> mutable_grad();
    void zero_grad();

    // Same values, no gradient tracking.
    Tensor detach() const;

    Node* node() const { return node_.get(); }
    const std::shared_ptr<Node>& node_ptr() const { return node_; }

private:
    std::shared_ptr<Node> node_;
};

}  // namespace dhmbpo::ad
