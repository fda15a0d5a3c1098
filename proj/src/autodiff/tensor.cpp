#include "dhmbpo/autodiff/tensor.hpp"

#include <sstream>

#include "dhmbpo/core/error.hpp"

namespace dhmbpo::ad {

std::size_t element_count(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

std::string shape_string(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "," : "") << shape[i];
    out << ']';
    return out.str();
}

std::span<Scalar> Node::grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), Scalar(0));
    return grad;
}

static std::shared_ptr<Node> new_node(Shape shape, std::vector<Scalar> values) {
    require(values.size() == element_count(shape),
            "tensor: " + std::to_string(values.size()) + " values for shape " + shape_string(shape));
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    return node;
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), Scalar(0)); }

Tensor Tensor::full(Shape shape, Scalar value) {
    const std::size_t n = element_count(shape);
    return Tensor(new_node(std::move(shape), std::vector<Scalar>(n, value)));
}

Tensor Tensor::from_values(Shape shape, std::vector<Scalar> values) {
    return Tensor(new_node(std::move(shape), std::move(values)));
}

Tensor Tensor::scalar(Scalar value) { return from_values({}, {value}); }

Tensor Tensor::parameter(Shape shape, std::vector<Scalar> values) {
    Tensor t = from_values(std::move(shape), std::move(values));
    t.node_->requires_grad = true;
    return t;
}

const Shape& Tensor::shape() const {
    require(defined(), "tensor: undefined handle");
    return node_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
    require(axis < rank(), "tensor: axis out of range");
    return node_->shape[axis];
}

std::size_t Tensor::numel() const { return node_ ? node_->value.size() : 0; }

std::span<const Scalar> Tensor::values() const {
    require(defined(), "tensor: undefined handle");
    return node_->value;
}

std::span<Scalar> Tensor::mutable_values() {
    require(defined(), "tensor: undefined handle");
    require(node_->tape_id == 0, "tensor: values of operation results are immutable");
    return node_->value;
}

Scalar Tensor::item() const {
    require(numel() == 1, "tensor: item() needs exactly one element, shape " + shape_string(shape()));
    return node_->value[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::set_requires_grad(bool flag) {
    require(defined(), "tensor: undefined handle");
    node_->requires_grad = flag;
}

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const Scalar> Tensor::grad() const {
    require(defined(), "tensor: undefined handle");
    return node_->grad;
}

std::span<Scalar> Tensor::mutable_grad() {
    require(defined(), "tensor: undefined handle");
    return node_->grad_buffer();
}

void Tensor::zero_grad() {
    if (node_) node_->grad.clear();
}

Tensor Tensor::detach() const { return from_values(shape(), node_->value); }

}  // namespace dhmbpo::ad
