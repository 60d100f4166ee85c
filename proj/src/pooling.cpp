#include <algorithm>

#include "maxmin/layers.hpp"

namespace maxmin {

std::size_t PoolGeometry::out_size(std::size_t extent) const {
    if (window == 0 || stride == 0) throw ConfigError("pool: window and stride must be positive");
    if (stride > window) {
        throw ConfigError("pool: stride " + std::to_string(stride) + " exceeds window " +
                          std::to_string(window));
    }
    if (extent < window) {
        throw ConfigError("pool: window " + std::to_string(window) + " larger than input extent " +
                          std::to_string(extent));
    }
    return (extent - window + stride - 1) / stride + 1;
}

template <typename T>
Tensor<T> maxpool_forward(const Tensor<T>& x, const PoolGeometry& g,
                          std::vector<std::size_t>* argmax) {
    if (x.rank() != 4) throw ShapeError("maxpool: expected NCHW input, got " + to_string(x.shape()));
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t oh = g.out_size(h), ow = g.out_size(w);
    Tensor<T> out({n, c, oh, ow});
    if (argmax) argmax->assign(out.size(), 0);
    std::size_t o = 0;
    for (std::size_t plane = 0; plane < n * c; ++plane) {
        const std::size_t base = plane * h * w;
        for (std::size_t y = 0; y < oh; ++y) {
            const std::size_t y0 = y * g.stride, y1 = std::min(h, y0 + g.window);
            for (std::size_t xo = 0; xo < ow; ++xo, ++o) {
                const std::size_t x0 = xo * g.stride, x1 = std::min(w, x0 + g.window);
                std::size_t best = base + y0 * w + x0;
                for (std::size_t yy = y0; yy < y1; ++yy) {
                    for (std::size_t xx = x0; xx < x1; ++xx) {
                        const std::size_t idx = base + yy * w + xx;
                        if (x[idx] > x[best]) best = idx;
                    }
                }
                out[o] = x[best];
                if (argmax) (*argmax)[o] = best;
            }
        }
    }
    return out;
}

template <typename T>
Tensor<T> maxpool_backward(const Tensor<T>& grad_out, const Shape& input_shape,
                           const std::vector<std::size_t>& argmax) {
    if (grad_out.size() != argmax.size()) {
        throw ShapeError("maxpool: gradient " + to_string(grad_out.shape()) +
                         " does not match recorded argmax");
    }
    Tensor<T> grad_in(input_shape);
    for (std::size_t o = 0; o < grad_out.size(); ++o) grad_in[argmax[o]] += grad_out[o];
    return grad_in;
}

template <typename T>
MaxPool<T>::MaxPool(std::size_t window, std::size_t stride) : geometry_{window, stride} {
    if (window == 0 || stride == 0 || stride > window) {
        throw ConfigError("pool: need 0 < stride <= window");
    }
}

template <typename T>
Shape MaxPool<T>::output_shape(const Shape& input) const {
    if (input.size() != 4) throw ShapeError("maxpool: expected NCHW input, got " + to_string(input));
    return {input[0], input[1], geometry_.out_size(input[2]), geometry_.out_size(input[3])};
}

template <typename T>
Tensor<T> MaxPool<T>::forward(const Tensor<T>& x, Mode) {
    auto out = maxpool_forward(x, geometry_, &argmax_);
    input_shape_ = x.shape();
    has_input_ = true;
    return out;
}

template <typename T>
std::uint64_t MaxPool<T>::branch() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const std::size_t i : argmax_) h = (h ^ i) * 0x100000001b3ULL;
    return h;
}

template <typename T>
Tensor<T> MaxPool<T>::backward(const Tensor<T>& grad_out) {
    if (!has_input_) throw UsageError("maxpool: backward called before forward");
    if (grad_out.shape() != output_shape(input_shape_)) {
        throw ShapeError("maxpool: gradient shape " + to_string(grad_out.shape()) +
                         " does not match output");
    }
    return maxpool_backward(grad_out, input_shape_, argmax_);
}

template Tensor<float> maxpool_forward(const Tensor<float>&, const PoolGeometry&,
                                       std::vector<std::size_t>*);
template Tensor<double> maxpool_forward(const Tensor<double>&, const PoolGeometry&,
                                        std::vector<std::size_t>*);
template Tensor<float> maxpool_backward(const Tensor<float>&, const Shape&,
                                        const std::vector<std::size_t>&);
template Tensor<double> maxpool_backward(const Tensor<double>&, const Shape&,
                                         const std::vector<std::size_t>&);
template class MaxPool<float>;
template class MaxPool<double>;

}  // namespace maxmin
