#pragma once

// Dense NCHW tensors and the bulk operations the layers are built from.

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "maxmin/errors.hpp"

namespace maxmin {

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

/// Dense row-major array. 4-D tensors use the N, C, H, W layout with W
/// varying fastest; matrices are 2-D [rows, cols].
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;
    explicit Tensor(Shape shape, T fill = T{0});
    Tensor(Shape shape, std::vector<T> values);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<T> data() noexcept { return data_; }
    std::span<const T> data() const noexcept { return data_; }
    T* raw() noexcept { return data_.data(); }
    const T* raw() const noexcept { return data_.data(); }

    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) noexcept {
        return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }
    const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const noexcept {
        return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }

    /// Same data under a new shape with an equal element count.
    Tensor reshaped(Shape shape) const&;
    Tensor reshaped(Shape shape) &&;

    void fill(T value);

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> out(data_.begin(), data_.end());
        return Tensor<U>(shape_, std::move(out));
    }

    bool operator==(const Tensor& other) const = default;

private:
    Shape shape_;
    std::vector<T> data_;
};

/// Stacks b's channels after a's. Both must be 4-D with equal N, H, W.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);

/// Channels [begin, begin + count) of a 4-D tensor.
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, std::size_t begin, std::size_t count);

template <typename T>
Tensor<T> negate(const Tensor<T>& x);

/// [M,K] x [K,P] -> [M,P]. Every output element is accumulated over k in
/// ascending order starting from zero, so results are bit-reproducible and
/// equal to a naive triple loop.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// Raw GEMM on row-major buffers: c[M,N] = a[M,K] * b[K,N], or c += a*b when
/// accumulate is set (the product is formed first and then added).
template <typename T>
void gemm(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,
          std::size_t k, std::size_t n, bool accumulate = false);

/// Row-major transpose of a [rows, cols] buffer into out[cols, rows].
template <typename T>
void transpose(std::span<const T> in, std::span<T> out, std::size_t rows, std::size_t cols);

/// Geometry of a sliding kernel over an H x W plane.
struct ConvGeometry {
    std::size_t kernel_h = 1;
    std::size_t kernel_w = 1;
    std::size_t stride = 1;
    std::size_t pad = 0;

    /// Throws ConfigError when the window does not tile the padded input
    /// into an integral number of positions.
    std::size_t out_h(std::size_t h) const;
    std::size_t out_w(std::size_t w) const;
};

/// Lowers x[N,C,H,W] into columns [C*kh*kw, N*Ho*Wo]; column index is
/// (n*Ho + oh)*Wo + ow, row index is (c*kh + i)*kw + j. Padding reads zero.
template <typename T>
Tensor<T> im2col(const Tensor<T>& x, const ConvGeometry& g);

/// Adjoint of im2col: scatter-adds columns back into an image of `shape`.
template <typename T>
Tensor<T> col2im(const Tensor<T>& cols, const Shape& shape, const ConvGeometry& g);

/// Single-image variants used by the convolution layer to bound memory.
template <typename T>
void im2col_image(std::span<const T> image, std::size_t channels, std::size_t h, std::size_t w,
                  const ConvGeometry& g, std::span<T> cols);
template <typename T>
void col2im_image(std::span<const T> cols, std::size_t channels, std::size_t h, std::size_t w,
                  const ConvGeometry& g, std::span<T> image);

}  // namespace maxmin
