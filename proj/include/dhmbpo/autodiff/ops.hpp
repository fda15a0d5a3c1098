#pragma once

#include <cstdint>
#include <span>

#include "dhmbpo/autodiff/tape.hpp"
#include "dhmbpo/autodiff/tensor.hpp"
#include "dhmbpo/core/rng.hpp"

// Differentiable primitives. Binary elementwise operations accept a second
// operand whose shape is a suffix of the first operand's shape (or a single
// element), broadcasting it over the leading axes. "Rows" are slices along
// axis 0.
namespace dhmbpo::ad {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, Scalar factor);
Tensor add_scalar(const Tensor& a, Scalar offset);
Tensor neg(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, Scalar c) { return scale(a, c); }
inline Tensor operator*(Scalar c, const Tensor& a) { return scale(a, c); }
inline Tensor operator+(const Tensor& a, Scalar c) { return add_scalar(a, c); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor silu(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor square(const Tensor& a);
// The gradient passes only where low <= a <= high.
Tensor clamp(const Tensor& a, Scalar low, Scalar high);
// log(1 - tanh(u)^2), evaluated without cancellation for large |u|.
Tensor log1m_tanh_sq(const Tensor& u);

Tensor sum(const Tensor& a);   // scalar
Tensor mean(const Tensor& a);  // scalar
Tensor sum_last(const Tensor& a);      // drops the last axis
Tensor mean_leading(const Tensor& a);  // averages over axis 0

Tensor reshape(const Tensor& a, Shape shape);
Tensor concat_last(const Tensor& a, const Tensor& b);
Tensor slice_last(const Tensor& a, std::size_t begin, std::size_t end);
Tensor index_rows(const Tensor& a, std::span<const std::size_t> rows);
// [..] -> [count, ..]
Tensor broadcast_leading(const Tensor& a, std::size_t count);
// Zeroes rows whose keep flag is 0; those rows pass no gradient.
Tensor mask_rows(const Tensor& a, std::span<const std::uint8_t> keep);

// [B,in] x [in,out]
Tensor matmul(const Tensor& x, const Tensor& w);
// [B,in] x [in,out] + [out]
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
// Independent affine map per ensemble member: x [M,B,in] (or [B,in], shared
// by all members), w [M,in,out], b [M,out] -> [M,B,out].
Tensor ensemble_linear(const Tensor& x, const Tensor& w, const Tensor& b);
// Row-wise member routing: row i of x [B,in] goes through member members[i].
Tensor routed_linear(const Tensor& x, const Tensor& w, const Tensor& b,
                     std::span<const std::uint32_t> members);

// Normalizes over the last axis, then applies gain/bias. gain and bias have
// shape [H], or [M,H] for an ensemble input [M,B,H].
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, Scalar eps = Scalar(1e-5));

// Inverted dropout: survivors are scaled by 1/(1-p) so evaluation is identity.
Tensor dropout(const Tensor& x, double p, bool training, Rng& rng);

}  // namespace dhmbpo::ad
