#include "maxmin/tensor.hpp"

#include <algorithm>
#include <array>
#include <functional>
#include <numeric>
#include <sstream>

namespace maxmin {

std::string to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
    if (shape_size(shape_) != data_.size()) {
        throw ShapeError("tensor shape " + to_string(shape_) + " does not match " +
                         std::to_string(data_.size()) + " elements");
    }
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const& {
    return Tensor(*this).reshaped(std::move(shape));
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) && {
    if (shape_size(shape) != data_.size()) {
        throw ShapeError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
    }
    shape_ = std::move(shape);
    return std::move(*this);
}

template <typename T>
void Tensor<T>::fill(T value) {
    std::fill(data_.begin(), data_.end(), value);
}

namespace {

void require_rank(const Shape& s, std::size_t rank, const char* what) {
    if (s.size() != rank) {
        throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " +
                         to_string(s));
    }
}

}  // namespace

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    require_rank(a.shape(), 4, "concat_channels");
    require_rank(b.shape(), 4, "concat_channels");
    if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
        throw ShapeError("concat_channels: incompatible shapes " + to_string(a.shape()) + " and " +
                         to_string(b.shape()));
    }
    const std::size_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1);
    const std::size_t plane = a.dim(2) * a.dim(3);
    Tensor<T> out({n, ca + cb, a.dim(2), a.dim(3)});
    auto dst = out.data().begin();
    for (std::size_t i = 0; i < n; ++i) {
        dst = std::copy_n(a.data().begin() + i * ca * plane, ca * plane, dst);
        dst = std::copy_n(b.data().begin() + i * cb * plane, cb * plane, dst);
    }
    return out;
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, std::size_t begin, std::size_t count) {
    require_rank(x.shape(), 4, "slice_channels");
    if (begin + count > x.dim(1)) {
        throw ShapeError("slice_channels: range [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") outside " + to_string(x.shape()));
    }
    const std::size_t n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
    Tensor<T> out({n, count, x.dim(2), x.dim(3)});
    for (std::size_t i = 0; i < n; ++i) {
        std::copy_n(x.data().begin() + (i * c + begin) * plane, count * plane,
                    out.data().begin() + i * count * plane);
    }
    return out;
}

template <typename T>
Tensor<T> negate(const Tensor<T>& x) {
    Tensor<T> out(x.shape());
    std::transform(x.data().begin(), x.data().end(), out.data().begin(),
                   [](T v) { return -v; });
    return out;
}

// Register-blocked kernel: an MR x NR tile of C lives in registers while k
// runs from 0 to K, so each element sees exactly the naive summation order.
template <typename T>
void gemm(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,
          std::size_t k, std::size_t n, bool accumulate) {
    constexpr std::size_t MR = 4;
    constexpr std::size_t NR = 32;
    std::vector<T> panel(k * NR);
    for (std::size_t j0 = 0; j0 < n; j0 += NR) {
        const std::size_t nj = std::min(NR, n - j0);
        for (std::size_t kk = 0; kk < k; ++kk) {
            T* dst = panel.data() + kk * NR;
            const T* src = b.data() + kk * n + j0;
            std::copy_n(src, nj, dst);
            std::fill(dst + nj, dst + NR, T{0});
        }
        std::size_t i = 0;
        for (; i + MR <= m; i += MR) {
            T acc[MR][NR] = {};
            const T* arow = a.data() + i * k;
            for (std::size_t kk = 0; kk < k; ++kk) {
                const T* p = panel.data() + kk * NR;
                for (std::size_t r = 0; r < MR; ++r) {
                    const T av = arow[r * k + kk];
                    for (std::size_t j = 0; j < NR; ++j) acc[r][j] += av * p[j];
                }
            }
            for (std::size_t r = 0; r < MR; ++r) {
                T* crow = c.data() + (i + r) * n + j0;
                if (accumulate) {
                    for (std::size_t j = 0; j < nj; ++j) crow[j] += acc[r][j];
                } else {
                    std::copy_n(acc[r], nj, crow);
                }
            }
        }
        for (; i < m; ++i) {
            T acc[NR] = {};
            const T* arow = a.data() + i * k;
            for (std::size_t kk = 0; kk < k; ++kk) {
                const T av = arow[kk];
                const T* p = panel.data() + kk * NR;
                for (std::size_t j = 0; j < NR; ++j) acc[j] += av * p[j];
            }
            T* crow = c.data() + i * n + j0;
            if (accumulate) {
                for (std::size_t j = 0; j < nj; ++j) crow[j] += acc[j];
            } else {
                std::copy_n(acc, nj, crow);
            }
        }
    }
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    require_rank(a.shape(), 2, "matmul");
    require_rank(b.shape(), 2, "matmul");
    if (a.dim(1) != b.dim(0)) {
        throw ShapeError("matmul: inner dimensions differ in " + to_string(a.shape()) + " x " +
                         to_string(b.shape()));
    }
    Tensor<T> out({a.dim(0), b.dim(1)});
    gemm<T>(a.data(), b.data(), out.data(), a.dim(0), a.dim(1), b.dim(1));
    return out;
}

template <typename T>
void transpose(std::span<const T> in, std::span<T> out, std::size_t rows, std::size_t cols) {
    constexpr std::size_t B = 32;
    for (std::size_t r0 = 0; r0 < rows; r0 += B) {
        for (std::size_t c0 = 0; c0 < cols; c0 += B) {
            const std::size_t r1 = std::min(rows, r0 + B), c1 = std::min(cols, c0 + B);
            for (std::size_t r = r0; r < r1; ++r) {
                for (std::size_t c = c0; c < c1; ++c) out[c * rows + r] = in[r * cols + c];
            }
        }
    }
}

std::size_t ConvGeometry::out_h(std::size_t h) const {
    if (kernel_h == 0 || kernel_w == 0 || stride == 0) {
        throw ConfigError("kernel and stride must be positive");
    }
    if (h + 2 * pad < kernel_h) {
        throw ConfigError("kernel height " + std::to_string(kernel_h) + " exceeds padded input " +
                          std::to_string(h + 2 * pad));
    }
    if ((h + 2 * pad - kernel_h) % stride != 0) {
        throw ConfigError("non-integral output height for input " + std::to_string(h) +
                          ", kernel " + std::to_string(kernel_h) + ", stride " +
                          std::to_string(stride) + ", pad " + std::to_string(pad));
    }
    return (h + 2 * pad - kernel_h) / stride + 1;
}

std::size_t ConvGeometry::out_w(std::size_t w) const {
    ConvGeometry flipped{kernel_w, kernel_h, stride, pad};
    return flipped.out_h(w);
}

template <typename T>
void im2col_image(std::span<const T> image, std::size_t channels, std::size_t h, std::size_t w,
                  const ConvGeometry& g, std::span<T> cols) {
    const std::size_t oh = g.out_h(h), ow = g.out_w(w);
    const std::size_t positions = oh * ow;
    for (std::size_t c = 0; c < channels; ++c) {
        const T* plane = image.data() + c * h * w;
        for (std::size_t i = 0; i < g.kernel_h; ++i) {
            for (std::size_t j = 0; j < g.kernel_w; ++j) {
                T* row = cols.data() + ((c * g.kernel_h + i) * g.kernel_w + j) * positions;
                for (std::size_t y = 0; y < oh; ++y) {
                    const long iy = static_cast<long>(y * g.stride + i) - static_cast<long>(g.pad);
                    T* dst = row + y * ow;
                    if (iy < 0 || iy >= static_cast<long>(h)) {
                        std::fill_n(dst, ow, T{0});
                        continue;
                    }
                    const T* src = plane + static_cast<std::size_t>(iy) * w;
                    for (std::size_t x = 0; x < ow; ++x) {
                        const long ix =
                            static_cast<long>(x * g.stride + j) - static_cast<long>(g.pad);
                        dst[x] = (ix < 0 || ix >= static_cast<long>(w))
                                     ? T{0}
                                     : src[static_cast<std::size_t>(ix)];
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im_image(std::span<const T> cols, std::size_t channels, std::size_t h, std::size_t w,
                  const ConvGeometry& g, std::span<T> image) {
    const std::size_t oh = g.out_h(h), ow = g.out_w(w);
    const std::size_t positions = oh * ow;
    for (std::size_t c = 0; c < channels; ++c) {
        T* plane = image.data() + c * h * w;
        for (std::size_t i = 0; i < g.kernel_h; ++i) {
            for (std::size_t j = 0; j < g.kernel_w; ++j) {
                const T* row = cols.data() + ((c * g.kernel_h + i) * g.kernel_w + j) * positions;
                for (std::size_t y = 0; y < oh; ++y) {
                    const long iy = static_cast<long>(y * g.stride + i) - static_cast<long>(g.pad);
                    if (iy < 0 || iy >= static_cast<long>(h)) continue;
                    T* dst = plane + static_cast<std::size_t>(iy) * w;
                    const T* src = row + y * ow;
                    for (std::size_t x = 0; x < ow; ++x) {
                        const long ix =
                            static_cast<long>(x * g.stride + j) - static_cast<long>(g.pad);
                        if (ix >= 0 && ix < static_cast<long>(w)) {
                            dst[static_cast<std::size_t>(ix)] += src[x];
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
Tensor<T> im2col(const Tensor<T>& x, const ConvGeometry& g) {
    require_rank(x.shape(), 4, "im2col");
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t positions = g.out_h(h) * g.out_w(w);
    const std::size_t rows = c * g.kernel_h * g.kernel_w;
    Tensor<T> out({rows, n * positions});
    std::vector<T> scratch(rows * positions);
    for (std::size_t i = 0; i < n; ++i) {
        im2col_image<T>(x.data().subspan(i * c * h * w, c * h * w), c, h, w, g, scratch);
        for (std::size_t r = 0; r < rows; ++r) {
            std::copy_n(scratch.begin() + r * positions, positions,
                        out.data().begin() + r * n * positions + i * positions);
        }
    }
    return out;
}

template <typename T>
Tensor<T> col2im(const Tensor<T>& cols, const Shape& shape, const ConvGeometry& g) {
    require_rank(shape, 4, "col2im");
    const std::size_t n = shape[0], c = shape[1], h = shape[2], w = shape[3];
    const std::size_t positions = g.out_h(h) * g.out_w(w);
    const std::size_t rows = c * g.kernel_h * g.kernel_w;
    if (cols.shape() != Shape{rows, n * positions}) {
        throw ShapeError("col2im: columns " + to_string(cols.shape()) + " do not match image " +
                         to_string(shape));
    }
    Tensor<T> out(shape);
    std::vector<T> scratch(rows * positions);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t r = 0; r < rows; ++r) {
            std::copy_n(cols.data().begin() + r * n * positions + i * positions, positions,
                        scratch.begin() + r * positions);
        }
        col2im_image<T>(scratch, c, h, w, g, out.data().subspan(i * c * h * w, c * h * w));
    }
    return out;
}

#define MAXMIN_INSTANTIATE(T)                                                                    \
    template class Tensor<T>;                                                                    \
    template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);                      \
    template Tensor<T> slice_channels(const Tensor<T>&, std::size_t, std::size_t);               \
    template Tensor<T> negate(const Tensor<T>&);                                                 \
    template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                               \
    template void gemm(std::span<const T>, std::span<const T>, std::span<T>, std::size_t,       \
                       std::size_t, std::size_t, bool);                                          \
    template void transpose(std::span<const T>, std::span<T>, std::size_t, std::size_t);        \
    template Tensor<T> im2col(const Tensor<T>&, const ConvGeometry&);                            \
    template Tensor<T> col2im(const Tensor<T>&, const Shape&, const ConvGeometry&);              \
    template void im2col_image(std::span<const T>, std::size_t, std::size_t, std::size_t,       \
                               const ConvGeometry&, std::span<T>);                               \
    template void col2im_image(std::span<const T>, std::size_t, std::size_t, std::size_t,       \
                               const ConvGeometry&, std::span<T>);

MAXMIN_INSTANTIATE(float)
MAXMIN_INSTANTIATE(double)

#undef MAXMIN_INSTANTIATE

}  // namespace maxmin
