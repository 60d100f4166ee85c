#include <algorithm>

#include "maxmin/layers.hpp"

namespace maxmin {

template <typename T>
Conv2d<T>::Conv2d(std::size_t in_channels, std::size_t filters, std::size_t kernel,
                  std::size_t stride, std::size_t pad)
    : in_channels_(in_channels), filters_(filters), geometry_{kernel, kernel, stride, pad} {
    if (in_channels == 0 || filters == 0 || kernel == 0 || stride == 0) {
        throw ConfigError("conv: channels, filters, kernel and stride must be positive");
    }
    const Shape wshape{filters, in_channels, kernel, kernel};
    weight_ = {"weight", Tensor<T>(wshape), Tensor<T>(wshape)};
    bias_ = {"bias", Tensor<T>({filters}), Tensor<T>({filters})};
}

template <typename T>
Shape Conv2d<T>::output_shape(const Shape& input) const {
    if (input.size() != 4) throw ShapeError("conv: expected NCHW input, got " + to_string(input));
    if (input[1] != in_channels_) {
        throw ShapeError("conv: input has " + std::to_string(input[1]) + " channels, weights expect " +
                         std::to_string(in_channels_));
    }
    return {input[0], filters_, geometry_.out_h(input[2]), geometry_.out_w(input[3])};
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x, Mode) {
    const Shape oshape = output_shape(x.shape());
    const std::size_t n = x.dim(0), h = x.dim(2), w = x.dim(3);
    const std::size_t positions = oshape[2] * oshape[3];
    const std::size_t patch = in_channels_ * geometry_.kernel_h * geometry_.kernel_w;
    const std::size_t image = in_channels_ * h * w;

    Tensor<T> out(oshape);
    std::vector<T> cols(patch * positions);
    for (std::size_t i = 0; i < n; ++i) {
        im2col_image<T>(x.data().subspan(i * image, image), in_channels_, h, w, geometry_, cols);
        auto dst = out.data().subspan(i * filters_ * positions, filters_ * positions);
        gemm<T>(weight_.value.data(), cols, dst, filters_, patch, positions);
        for (std::size_t f = 0; f < filters_; ++f) {
            const T b = bias_.value[f];
            for (std::size_t p = 0; p < positions; ++p) dst[f * positions + p] += b;
        }
    }
    input_ = x;
    has_input_ = true;
    return out;
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& grad_out) {
    if (!has_input_) throw UsageError("conv: backward called before forward");
    const Shape oshape = output_shape(input_.shape());
    if (grad_out.shape() != oshape) {
        throw ShapeError("conv: gradient shape " + to_string(grad_out.shape()) +
                         " does not match output " + to_string(oshape));
    }
    const std::size_t n = input_.dim(0), h = input_.dim(2), w = input_.dim(3);
    const std::size_t positions = oshape[2] * oshape[3];
    const std::size_t patch = in_channels_ * geometry_.kernel_h * geometry_.kernel_w;
    const std::size_t image = in_channels_ * h * w;

    std::vector<T> weight_t(patch * filters_);
    transpose<T>(weight_.value.data(), weight_t, filters_, patch);

    Tensor<T> grad_in(input_.shape());
    std::vector<T> cols(patch * positions);
    std::vector<T> cols_t(positions * patch);
    for (std::size_t i = 0; i < n; ++i) {
        auto g = grad_out.data().subspan(i * filters_ * positions, filters_ * positions);
        im2col_image<T>(input_.data().subspan(i * image, image), in_channels_, h, w, geometry_,
                        cols);
        transpose<T>(cols, cols_t, patch, positions);
        gemm<T>(g, cols_t, weight_.grad.data(), filters_, positions, patch, true);
        for (std::size_t f = 0; f < filters_; ++f) {
            T sum{0};
            for (std::size_t p = 0; p < positions; ++p) sum += g[f * positions + p];
            bias_.grad[f] += sum;
        }
        gemm<T>(weight_t, g, cols, patch, filters_, positions);
        col2im_image<T>(cols, in_channels_, h, w, geometry_,
                        grad_in.data().subspan(i * image, image));
    }
    return grad_in;
}

template class Conv2d<float>;
template class Conv2d<double>;

}  // namespace maxmin
