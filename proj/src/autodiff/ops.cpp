#include "dhmbpo/autodiff/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "dhmbpo/core/error.hpp"

namespace dhmbpo::ad {

namespace {

using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatrixMap = Eigen::Map<const Matrix>;

ConstMatrixMap cmap(const Scalar* data, std::size_t rows, std::size_t cols) {
    return ConstMatrixMap(data, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

// Eigen's vectorized kernels choose their peeling from pointer alignment, so
// products over std::vector storage are not bitwise reproducible. Every product
// runs on Eigen-owned copies instead.
Matrix load(const Scalar* data, std::size_t rows, std::size_t cols) {
    return cmap(data, rows, cols);
}

void accumulate(Scalar* dst, const Matrix& src) {
    const Scalar* p = src.data();
    const auto n = static_cast<std::size_t>(src.size());
    for (std::size_t i = 0; i < n; ++i) dst[i] += p[i];
}

void store(Scalar* dst, const Matrix& src) {
    std::copy_n(src.data(), static_cast<std::size_t>(src.size()), dst);
}

void add_bias(Scalar* y, const Scalar* b, std::size_t rows, std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) y[r * cols + c] += b[c];
}

void accumulate_column_sums(Scalar* dst, const Scalar* dy, std::size_t rows, std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) dst[c] += dy[r * cols + c];
}

// Gradients of y = x w for row-major x [rows,in], w [in,out].
void dense_backward(const Tensor& x, const Tensor& w, const Scalar* dy_data, std::size_t rows, std::size_t in,
                    std::size_t out_dim, std::size_t xoff, std::size_t woff) {
    if (!x.requires_grad() && !w.requires_grad()) return;
    const Matrix dy = load(dy_data, rows, out_dim);
    if (x.requires_grad()) {
        const Matrix wm = load(w.node()->value.data() + woff, in, out_dim);
        const Matrix dx = dy * wm.transpose();
        accumulate(x.node()->grad_buffer().data() + xoff, dx);
    }
    if (w.requires_grad()) {
        const Matrix xm = load(x.node()->value.data() + xoff, rows, in);
        const Matrix dw = xm.transpose() * dy;
        accumulate(w.node()->grad_buffer().data() + woff, dw);
    }
}

Tensor result(Shape shape, std::vector<Scalar> values, std::initializer_list<Tensor> inputs,
              BackwardFn backward) {
    return make_result(std::move(shape), std::move(values),
                       std::span<const Tensor>(inputs.begin(), inputs.size()), std::move(backward));
}

// Checks that b broadcasts over a and returns b's element count.
std::size_t broadcast_width(const Tensor& a, const Tensor& b, const char* op) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (b.numel() == 1) return 1;
    bool ok = sb.size() <= sa.size() && std::equal(sb.rbegin(), sb.rend(), sa.rbegin());
    require(ok, std::string(op) + ": cannot broadcast " + shape_string(sb) + " onto " + shape_string(sa));
    return b.numel();
}

template <class Forward, class Derivative>
Tensor unary(const Tensor& a, Forward f, Derivative df) {
    const auto x = a.values();
    std::vector<Scalar> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
    return result(a.shape(), std::move(y), {a}, [a, df](const Node& out) {
        auto ga = a.node()->grad_buffer();
        const auto& x = a.node()->value;
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += out.grad[i] * df(x[i], out.value[i]);
    });
}

std::size_t row_count(const Tensor& a) {
    require(a.rank() >= 1, "row operation on a rank-0 tensor");
    return a.dim(0);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    const std::size_t w = broadcast_width(a, b, "add");
    const auto x = a.values();
    const auto z = b.values();
    std::vector<Scalar> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] + z[i % w];
    return result(a.shape(), std::move(y), {a, b}, [a, b, w](const Node& out) {
        if (a.requires_grad()) {
            auto ga = a.node()->grad_buffer();
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += out.grad[i];
        }
        if (b.requires_grad()) {
            auto gb = b.node()->grad_buffer();
            for (std::size_t i = 0; i < out.grad.size(); ++i) gb[i % w] += out.grad[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    const std::size_t w = broadcast_width(a, b, "sub");
    const auto x = a.values();
    const auto z = b.values();
    std::vector<Scalar> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] - z[i % w];
    return result(a.shape(), std::move(y), {a, b}, [a, b, w](const Node& out) {
        if (a.requires_grad()) {
            auto ga = a.node()->grad_buffer();
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += out.grad[i];
        }
        if (b.requires_grad()) {
            auto gb = b.node()->grad_buffer();
            for (std::size_t i = 0; i < out.grad.size(); ++i) gb[i % w] -= out.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    const std::size_t w = broadcast_width(a, b, "mul");
    const auto x = a.values();
    const auto z = b.values();
    std::vector<Scalar> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * z[i % w];
    return result(a.shape(), std::move(y), {a, b}, [a, b, w](const Node& out) {
        const auto& x = a.node()->value;
        const auto& z = b.node()->value;
        if (a.requires_grad()) {
            auto ga = a.node()->grad_buffer();
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += out.grad[i] * z[i % w];
        }
        if (b.requires_grad()) {
            auto gb = b.node()->grad_buffer();
            for (std::size_t i = 0; i < out.grad.size(); ++i) gb[i % w] += out.grad[i] * x[i];
        }
    });
}

Tensor scale(const Tensor& a, Scalar factor) {
    return unary(a, [factor](Scalar x) { return x * factor; },
                 [factor](Scalar, Scalar) { return factor; });
}

Tensor add_scalar(const Tensor& a, Scalar offset) {
    return unary(a, [offset](Scalar x) { return x + offset; }, [](Scalar, Scalar) { return Scalar(1); });
}

Tensor neg(const Tensor& a) { return scale(a, Scalar(-1)); }

Tensor exp(const Tensor& a) {
    return unary(a, [](Scalar x) { return std::exp(x); }, [](Scalar, Scalar y) { return y; });
}

Tensor log(const Tensor& a) {
    return unary(a, [](Scalar x) { return std::log(x); }, [](Scalar x, Scalar) { return Scalar(1) / x; });
}

Tensor tanh(const Tensor& a) {
    return unary(a, [](Scalar x) { return std::tanh(x); },
                 [](Scalar, Scalar y) { return Scalar(1) - y * y; });
}

Tensor sigmoid(const Tensor& a) {
    return unary(a, [](Scalar x) { return Scalar(1) / (Scalar(1) + std::exp(-x)); },
                 [](Scalar, Scalar y) { return y * (Scalar(1) - y); });
}

Tensor silu(const Tensor& a) {
    return unary(
        a, [](Scalar x) { return x / (Scalar(1) + std::exp(-x)); },
        [](Scalar x, Scalar) {
            const Scalar s = Scalar(1) / (Scalar(1) + std::exp(-x));
            return s * (Scalar(1) + x * (Scalar(1) - s));
        });
}

Tensor relu(const Tensor& a) {
    return unary(a, [](Scalar x) { return x > 0 ? x : Scalar(0); },
                 [](Scalar x, Scalar) { return x > 0 ? Scalar(1) : Scalar(0); });
}

Tensor square(const Tensor& a) {
    return unary(a, [](Scalar x) { return x * x; }, [](Scalar x, Scalar) { return Scalar(2) * x; });
}

Tensor clamp(const Tensor& a, Scalar low, Scalar high) {
    require(low <= high, "clamp: low > high");
    return unary(a, [low, high](Scalar x) { return std::clamp(x, low, high); },
                 [low, high](Scalar x, Scalar) { return (x >= low && x <= high) ? Scalar(1) : Scalar(0); });
}

Tensor log1m_tanh_sq(const Tensor& u) {
    // log(1 - tanh^2 u) = 2 (log 2 - u - softplus(-2u))
    return unary(
        u,
        [](Scalar x) {
            const Scalar m = -2 * x;
            const Scalar softplus = m > 0 ? m + std::log1p(std::exp(-m)) : std::log1p(std::exp(m));
            return Scalar(2) * (std::log(Scalar(2)) - x - softplus);
        },
        [](Scalar x, Scalar) { return Scalar(-2) * std::tanh(x); });
}

Tensor sum(const Tensor& a) {
    const auto x = a.values();
    const Scalar total = std::accumulate(x.begin(), x.end(), Scalar(0));
    return result({}, {total}, {a}, [a](const Node& out) {
        auto ga = a.node()->grad_buffer();
        for (auto& g : ga) g += out.grad[0];
    });
}

Tensor mean(const Tensor& a) {
    require(a.numel() > 0, "mean: empty tensor");
    return scale(sum(a), Scalar(1) / static_cast<Scalar>(a.numel()));
}

Tensor sum_last(const Tensor& a) {
    require(a.rank() >= 1, "sum_last: rank-0 tensor");
    const std::size_t width = a.shape().back();
    const std::size_t rows = a.numel() / std::max<std::size_t>(width, 1);
    Shape shape(a.shape().begin(), a.shape().end() - 1);
    const auto x = a.values();
    std::vector<Scalar> y(rows, Scalar(0));
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < width; ++c) y[r] += x[r * width + c];
    return result(std::move(shape), std::move(y), {a}, [a, width, rows](const Node& out) {
        auto ga = a.node()->grad_buffer();
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < width; ++c) ga[r * width + c] += out.grad[r];
    });
}

Tensor mean_leading(const Tensor& a) {
    const std::size_t count = row_count(a);
    require(count > 0, "mean_leading: empty leading axis");
    const std::size_t width = a.numel() / count;
    Shape shape(a.shape().begin() + 1, a.shape().end());
    const auto x = a.values();
    std::vector<Scalar> y(width, Scalar(0));
    for (std::size_t m = 0; m < count; ++m)
        for (std::size_t i = 0; i < width; ++i) y[i] += x[m * width + i];
    const Scalar inv = Scalar(1) / static_cast<Scalar>(count);
    for (auto& v : y) v *= inv;
    return result(std::move(shape), std::move(y), {a}, [a, count, width, inv](const Node& out) {
        auto ga = a.node()->grad_buffer();
        for (std::size_t m = 0; m < count; ++m)
            for (std::size_t i = 0; i < width; ++i) ga[m * width + i] += out.grad[i] * inv;
    });
}

Tensor reshape(const Tensor& a, Shape shape) {
    require(element_count(shape) == a.numel(),
            "reshape: " + shape_string(a.shape()) + " -> " + shape_string(shape));
    std::vector<Scalar> y(a.values().begin(), a.values().end());
    return result(std::move(shape), std::move(y), {a}, [a](const Node& out) {
        auto ga = a.node()->grad_buffer();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += out.grad[i];
    });
}

Tensor concat_last(const Tensor& a, const Tensor& b) {
    require(a.rank() >= 1 && a.rank() == b.rank(), "concat_last: rank mismatch");
    require(std::equal(a.shape().begin(), a.shape().end() - 1, b.shape().begin()),
            "concat_last: leading shapes differ " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
    const std::size_t wa = a.shape().back();
    const std::size_t wb = b.shape().back();
    const std::size_t rows = a.numel() / std::max<std::size_t>(wa, 1);
    Shape shape = a.shape();
    shape.back() = wa + wb;
    const auto x = a.values();
    const auto z = b.values();
    std::vector<Scalar> y(rows * (wa + wb));
    for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(x.begin() + r * wa, wa, y.begin() + r * (wa + wb));
        std::copy_n(z.begin() + r * wb, wb, y.begin() + r * (wa + wb) + wa);
    }
    return result(std::move(shape), std::move(y), {a, b}, [a, b, wa, wb, rows](const Node& out) {
        if (a.requires_grad()) {
            auto ga = a.node()->grad_buffer();
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < wa; ++c) ga[r * wa + c] += out.grad[r * (wa + wb) + c];
        }
        if (b.requires_grad()) {
            auto gb = b.node()->grad_buffer();
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < wb; ++c) gb[r * wb + c] += out.grad[r * (wa + wb) + wa + c];
        }
    });
}

Tensor slice_last(const Tensor& a, std::size_t begin, std::size_t end) {
    require(a.rank() >= 1, "slice_last: rank-0 tensor");
    const std::size_t width = a.shape().back();
    require(begin <= end && end <= width, "slice_last: bad range");
    const std::size_t rows = a.numel() / std::max<std::size_t>(width, 1);
    const std::size_t w = end - begin;
    Shape shape = a.shape();
    shape.back() = w;
    const auto x = a.values();
    std::vector<Scalar> y(rows * w);
    for (std::size_t r = 0; r < rows; ++r) std::copy_n(x.begin() + r * width + begin, w, y.begin() + r * w);
    return result(std::move(shape), std::move(y), {a}, [a, begin, width, rows, w](const Node& out) {
        auto ga = a.node()->grad_buffer();
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < w; ++c) ga[r * width + begin + c] += out.grad[r * w + c];
    });
}

Tensor index_rows(const Tensor& a, std::span<const std::size_t> rows) {
    const std::size_t n = row_count(a);
    const std::size_t width = n ? a.numel() / n : 0;
    Shape shape = a.shape();
    shape[0] = rows.size();
    const auto x = a.values();
    std::vector<Scalar> y(rows.size() * width);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        require(rows[i] < n, "index_rows: row out of range");
        std::copy_n(x.begin() + rows[i] * width, width, y.begin() + i * width);
    }
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    return result(std::move(shape), std::move(y), {a}, [a, idx = std::move(idx), width](const Node& out) {
        auto ga = a.node()->grad_buffer();
        for (std::size_t i = 0; i < idx.size(); ++i)
            for (std::size_t c = 0; c < width; ++c) ga[idx[i] * width + c] += out.grad[i * width + c];
    });
}

Tensor broadcast_leading(const Tensor& a, std::size_t count) {
    Shape shape{count};
    shape.insert(shape.end(), a.shape().begin(), a.shape().end());
    const auto x = a.values();
    std::vector<Scalar> y(count * x.size());
    for (std::size_t m = 0; m < count; ++m) std::copy(x.begin(), x.end(), y.begin() + m * x.size());
    return result(std::move(shape), std::move(y), {a}, [a, count](const Node& out) {
        auto ga = a.node()->grad_buffer();
        for (std::size_t m = 0; m < count; ++m)
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += out.grad[m * ga.size() + i];
    });
}

Tensor mask_rows(const Tensor& a, std::span<const std::uint8_t> keep) {
    const std::size_t n = row_count(a);
    require(keep.size() == n, "mask_rows: mask length mismatch");
    const std::size_t width = n ? a.numel() / n : 0;
    std::vector<Scalar> y(a.values().begin(), a.values().end());
    for (std::size_t r = 0; r < n; ++r)
        if (!keep[r]) std::fill_n(y.begin() + r * width, width, Scalar(0));
    std::vector<std::uint8_t> flags(keep.begin(), keep.end());
    return result(a.shape(), std::move(y), {a}, [a, flags = std::move(flags), width](const Node& out) {
        auto ga = a.node()->grad_buffer();
        for (std::size_t r = 0; r < flags.size(); ++r) {
            if (!flags[r]) continue;
            for (std::size_t c = 0; c < width; ++c) ga[r * width + c] += out.grad[r * width + c];
        }
    });
}

Tensor matmul(const Tensor& x, const Tensor& w) {
    require(x.rank() == 2 && w.rank() == 2 && x.dim(1) == w.dim(0),
            "matmul: " + shape_string(x.shape()) + " x " + shape_string(w.shape()));
    const std::size_t rows = x.dim(0), in = x.dim(1), out_dim = w.dim(1);
    std::vector<Scalar> y(rows * out_dim);
    const Matrix ym = load(x.values().data(), rows, in) * load(w.values().data(), in, out_dim);
    store(y.data(), ym);
    return result({rows, out_dim}, std::move(y), {x, w}, [x, w, rows, in, out_dim](const Node& out) {
        dense_backward(x, w, out.grad.data(), rows, in, out_dim, 0, 0);
    });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    require(x.rank() == 2 && w.rank() == 2 && x.dim(1) == w.dim(0),
            "linear: " + shape_string(x.shape()) + " x " + shape_string(w.shape()));
    require(b.rank() == 1 && b.dim(0) == w.dim(1), "linear: bias shape " + shape_string(b.shape()));
    const std::size_t rows = x.dim(0), in = x.dim(1), out_dim = w.dim(1);
    std::vector<Scalar> y(rows * out_dim);
    const Matrix ym = load(x.values().data(), rows, in) * load(w.values().data(), in, out_dim);
    store(y.data(), ym);
    add_bias(y.data(), b.values().data(), rows, out_dim);
    return result({rows, out_dim}, std::move(y), {x, w, b}, [x, w, b, rows, in, out_dim](const Node& out) {
        dense_backward(x, w, out.grad.data(), rows, in, out_dim, 0, 0);
        if (b.requires_grad())
            accumulate_column_sums(b.node()->grad_buffer().data(), out.grad.data(), rows, out_dim);
    });
}

Tensor ensemble_linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    require(w.rank() == 3, "ensemble_linear: weights must be [M,in,out], got " + shape_string(w.shape()));
    const std::size_t members = w.dim(0), in = w.dim(1), out_dim = w.dim(2);
    require(b.rank() == 2 && b.dim(0) == members && b.dim(1) == out_dim,
            "ensemble_linear: bias must be [M,out], got " + shape_string(b.shape()));
    const bool shared = x.rank() == 2;
    require((shared && x.dim(1) == in) || (x.rank() == 3 && x.dim(0) == members && x.dim(2) == in),
            "ensemble_linear: input " + shape_string(x.shape()) + " vs weights " + shape_string(w.shape()));
    const std::size_t rows = shared ? x.dim(0) : x.dim(1);
    std::vector<Scalar> y(members * rows * out_dim);
    Matrix xm;
    if (shared) xm = load(x.values().data(), rows, in);
    for (std::size_t m = 0; m < members; ++m) {
        if (!shared) xm = load(x.values().data() + m * rows * in, rows, in);
        const Matrix ym = xm * load(w.values().data() + m * in * out_dim, in, out_dim);
        Scalar* dst = y.data() + m * rows * out_dim;
        store(dst, ym);
        add_bias(dst, b.values().data() + m * out_dim, rows, out_dim);
    }
    return result({members, rows, out_dim}, std::move(y), {x, w, b},
                  [x, w, b, shared, members, rows, in, out_dim](const Node& out) {
                      for (std::size_t m = 0; m < members; ++m) {
                          const Scalar* dy = out.grad.data() + m * rows * out_dim;
                          dense_backward(x, w, dy, rows, in, out_dim, shared ? 0 : m * rows * in, m * in * out_dim);
                          if (b.requires_grad())
                              accumulate_column_sums(b.node()->grad_buffer().data() + m * out_dim, dy, rows, out_dim);
                      }
                  });
}

Tensor routed_linear(const Tensor& x, const Tensor& w, const Tensor& b, std::span<const std::uint32_t> members) {
    require(w.rank() == 3 && b.rank() == 2 && b.dim(0) == w.dim(0) && b.dim(1) == w.dim(2),
            "routed_linear: weights/bias shapes " + shape_string(w.shape()) + " " + shape_string(b.shape()));
    const std::size_t count = w.dim(0), in = w.dim(1), out_dim = w.dim(2);
    require(x.rank() == 2 && x.dim(1) == in, "routed_linear: input " + shape_string(x.shape()));
    const std::size_t rows = x.dim(0);
    require(members.size() == rows, "routed_linear: one member index per row required");

    // Group rows by member so each member runs one dense product.
    std::vector<std::vector<std::size_t>> groups(count);
    for (std::size_t r = 0; r < rows; ++r) {
        require(members[r] < count, "routed_linear: member index out of range");
        groups[members[r]].push_back(r);
    }
    const auto xv = x.values();
    std::vector<Scalar> y(rows * out_dim);
    Matrix xg, yg;
    for (std::size_t m = 0; m < count; ++m) {
        const auto& g = groups[m];
        if (g.empty()) continue;
        xg.resize(static_cast<Eigen::Index>(g.size()), static_cast<Eigen::Index>(in));
        for (std::size_t i = 0; i < g.size(); ++i)
            std::copy_n(xv.begin() + g[i] * in, in, xg.data() + i * in);
        yg.noalias() = xg * load(w.values().data() + m * in * out_dim, in, out_dim);
        add_bias(yg.data(), b.values().data() + m * out_dim, g.size(), out_dim);
        for (std::size_t i = 0; i < g.size(); ++i)
            std::copy_n(yg.data() + i * out_dim, out_dim, y.begin() + g[i] * out_dim);
    }
    return result({rows, out_dim}, std::move(y), {x, w, b},
                  [x, w, b, groups = std::move(groups), in, out_dim](const Node& out) {
                      Matrix xg, dyg, dxg, dwg;
                      for (std::size_t m = 0; m < groups.size(); ++m) {
                          const auto& g = groups[m];
                          if (g.empty()) continue;
                          const auto n = static_cast<Eigen::Index>(g.size());
                          dyg.resize(n, static_cast<Eigen::Index>(out_dim));
                          for (std::size_t i = 0; i < g.size(); ++i)
                              std::copy_n(out.grad.begin() + g[i] * out_dim, out_dim, dyg.data() + i * out_dim);
                          if (x.requires_grad()) {
                              dxg.noalias() = dyg * load(w.node()->value.data() + m * in * out_dim, in, out_dim).transpose();
                              auto gx = x.node()->grad_buffer();
                              for (std::size_t i = 0; i < g.size(); ++i)
                                  for (std::size_t c = 0; c < in; ++c) gx[g[i] * in + c] += dxg.data()[i * in + c];
                          }
                          if (w.requires_grad()) {
                              xg.resize(n, static_cast<Eigen::Index>(in));
                              for (std::size_t i = 0; i < g.size(); ++i)
                                  std::copy_n(x.node()->value.begin() + g[i] * in, in, xg.data() + i * in);
                              dwg.noalias() = xg.transpose() * dyg;
                              accumulate(w.node()->grad_buffer().data() + m * in * out_dim, dwg);
                          }
                          if (b.requires_grad())
                              accumulate_column_sums(b.node()->grad_buffer().data() + m * out_dim, dyg.data(),
                                                     g.size(), out_dim);
                      }
                  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, Scalar eps) {
    require(x.rank() >= 1 && x.numel() > 0, "layer_norm: empty input");
    const std::size_t width = x.shape().back();
    const std::size_t rows = x.numel() / width;
    // Rows per affine slot: all rows share a [H] gain; [M,H] gains apply per
    // member of an [M,B,H] input.
    std::size_t rows_per_slot = rows;
    if (gain.rank() == 2) {
        require(x.rank() == 3 && gain.dim(0) == x.dim(0), "layer_norm: [M,H] gain needs an [M,B,H] input");
        rows_per_slot = x.dim(1);
    }
    require(gain.shape().back() == width && gain.shape() == bias.shape(),
            "layer_norm: gain/bias " + shape_string(gain.shape()) + " do not match axis length " +
                std::to_string(width));
    const auto xv = x.values();
    const auto gv = gain.values();
    const auto bv = bias.values();
    std::vector<Scalar> y(xv.size());
    std::vector<Scalar> normalized(xv.size());
    std::vector<Scalar> inv_std(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const Scalar* row = xv.data() + r * width;
        Scalar mu = 0;
        for (std::size_t c = 0; c < width; ++c) mu += row[c];
        mu /= static_cast<Scalar>(width);
        Scalar var = 0;
        for (std::size_t c = 0; c < width; ++c) var += (row[c] - mu) * (row[c] - mu);
        var /= static_cast<Scalar>(width);
        inv_std[r] = Scalar(1) / std::sqrt(var + eps);
        const std::size_t slot = (r / rows_per_slot) * width;
        for (std::size_t c = 0; c < width; ++c) {
            const Scalar xhat = (row[c] - mu) * inv_std[r];
            normalized[r * width + c] = xhat;
            y[r * width + c] = xhat * gv[slot + c] + bv[slot + c];
        }
    }
    return result(x.shape(), std::move(y), {x, gain, bias},
                  [x, gain, bias, width, rows, rows_per_slot, normalized = std::move(normalized),
                   inv_std = std::move(inv_std)](const Node& out) {
                      const auto& gv = gain.node()->value;
                      std::span<Scalar> gx, gg, gb;
                      if (x.requires_grad()) gx = x.node()->grad_buffer();
                      if (gain.requires_grad()) gg = gain.node()->grad_buffer();
                      if (bias.requires_grad()) gb = bias.node()->grad_buffer();
                      for (std::size_t r = 0; r < rows; ++r) {
                          const std::size_t slot = (r / rows_per_slot) * width;
                          const Scalar* dy = out.grad.data() + r * width;
                          const Scalar* xhat = normalized.data() + r * width;
                          if (!gg.empty())
                              for (std::size_t c = 0; c < width; ++c) gg[slot + c] += dy[c] * xhat[c];
                          if (!gb.empty())
                              for (std::size_t c = 0; c < width; ++c) gb[slot + c] += dy[c];
                          if (gx.empty()) continue;
                          Scalar mean_d = 0, mean_dx = 0;
                          for (std::size_t c = 0; c < width; ++c) {
                              const Scalar d = dy[c] * gv[slot + c];
                              mean_d += d;
                              mean_dx += d * xhat[c];
                          }
                          mean_d /= static_cast<Scalar>(width);
                          mean_dx /= static_cast<Scalar>(width);
                          for (std::size_t c = 0; c < width; ++c) {
                              const Scalar d = dy[c] * gv[slot + c];
                              gx[r * width + c] += inv_std[r] * (d - mean_d - xhat[c] * mean_dx);
                          }
                      }
                  });
}

Tensor dropout(const Tensor& x, double p, bool training, Rng& rng) {
    require(p >= 0.0 && p < 1.0, "dropout: p must lie in [0, 1)");
    if (!training || p == 0.0) return x;
    const Scalar keep_scale = static_cast<Scalar>(1.0 / (1.0 - p));
    const auto xv = x.values();
    std::vector<Scalar> mask(xv.size());
    std::vector<Scalar> y(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) {
        mask[i] = rng.uniform() < p ? Scalar(0) : keep_scale;
        y[i] = xv[i] * mask[i];
    }
    return result(x.shape(), std::move(y), {x}, [x, mask = std::move(mask)](const Node& out) {
        auto gx = x.node()->grad_buffer();
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += out.grad[i] * mask[i];
    });
}

}  // namespace dhmbpo::ad
