#include <algorithm>

#include "maxmin/layers.hpp"

namespace maxmin {

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    Tensor<T> out(x.shape());
    std::transform(x.data().begin(), x.data().end(), out.data().begin(),
                   [](T v) { return v > T{0} ? v : T{0}; });
    return out;
}

template <typename T>
Tensor<T> maxmin(const Tensor<T>& x) {
    return concat_channels(x, negate(x));
}

template <typename T>
Tensor<T> Relu<T>::forward(const Tensor<T>& x, Mode) {
    input_ = x;
    has_input_ = true;
    return relu(x);
}

template <typename T>
std::uint64_t Relu<T>::branch() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const T v : input_.data()) h = (h ^ static_cast<std::uint64_t>(v > T{0})) * 0x100000001b3ULL;
    return h;
}

template <typename T>
Tensor<T> Relu<T>::backward(const Tensor<T>& grad_out) {
    if (!has_input_) throw UsageError("relu: backward called before forward");
    if (grad_out.shape() != input_.shape()) {
        throw ShapeError("relu: gradient shape " + to_string(grad_out.shape()) +
                         " does not match input " + to_string(input_.shape()));
    }
    Tensor<T> grad_in(input_.shape());
    for (std::size_t i = 0; i < grad_in.size(); ++i) {
        grad_in[i] = input_[i] > T{0} ? grad_out[i] : T{0};
    }
    return grad_in;
}

template <typename T>
Shape MaxMin<T>::output_shape(const Shape& input) const {
    if (input.size() != 4) throw ShapeError("maxmin: expected NCHW input, got " + to_string(input));
    return {input[0], 2 * input[1], input[2], input[3]};
}

template <typename T>
Tensor<T> MaxMin<T>::forward(const Tensor<T>& x, Mode) {
    output_shape(x.shape());
    input_shape_ = x.shape();
    return maxmin(x);
}

template <typename T>
Tensor<T> MaxMin<T>::backward(const Tensor<T>& grad_out) {
    if (grad_out.rank() != 4 || grad_out.dim(1) % 2 != 0) {
        throw ShapeError("maxmin: gradient needs an even channel count, got " +
                         to_string(grad_out.shape()));
    }
    if (input_shape_.empty()) throw UsageError("maxmin: backward called before forward");
    if (grad_out.shape() != output_shape(input_shape_)) {
        throw ShapeError("maxmin: gradient shape " + to_string(grad_out.shape()) +
                         " does not match output for input " + to_string(input_shape_));
    }
    const std::size_t n = grad_out.dim(0), c = grad_out.dim(1) / 2;
    const std::size_t plane = grad_out.dim(2) * grad_out.dim(3);
    Tensor<T> grad_in(input_shape_);
    for (std::size_t i = 0; i < n; ++i) {
        const T* pos = grad_out.raw() + i * 2 * c * plane;
        const T* neg = pos + c * plane;
        T* dst = grad_in.raw() + i * c * plane;
        for (std::size_t j = 0; j < c * plane; ++j) dst[j] = pos[j] - neg[j];
    }
    return grad_in;
}

template <typename T>
Dropout<T>::Dropout(double p, std::uint64_t seed) : p_(p), rng_(seed) {
    if (!(p >= 0.0 && p < 1.0)) {
        throw ConfigError("dropout: probability must lie in [0, 1), got " + std::to_string(p));
    }
}

template <typename T>
Tensor<T> Dropout<T>::forward(const Tensor<T>& x, Mode mode) {
    has_input_ = true;
    if (mode == Mode::eval || p_ == 0.0) {
        identity_ = true;
        mask_ = Tensor<T>();
        return x;
    }
    identity_ = false;
    const T keep_scale = static_cast<T>(1.0 / (1.0 - p_));
    mask_ = Tensor<T>(x.shape());
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    Tensor<T> out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        mask_[i] = uniform(rng_) < p_ ? T{0} : keep_scale;
        out[i] = x[i] * mask_[i];
    }
    return out;
}

template <typename T>
Tensor<T> Dropout<T>::backward(const Tensor<T>& grad_out) {
    if (!has_input_) throw UsageError("dropout: backward called before forward");
    if (identity_) return grad_out;
    if (grad_out.shape() != mask_.shape()) {
        throw ShapeError("dropout: gradient shape " + to_string(grad_out.shape()) +
                         " does not match mask " + to_string(mask_.shape()));
    }
    Tensor<T> grad_in(grad_out.shape());
    for (std::size_t i = 0; i < grad_in.size(); ++i) grad_in[i] = grad_out[i] * mask_[i];
    return grad_in;
}

template Tensor<float> relu(const Tensor<float>&);
template Tensor<double> relu(const Tensor<double>&);
template Tensor<float> maxmin(const Tensor<float>&);
template Tensor<double> maxmin(const Tensor<double>&);
template class Relu<float>;
template class Relu<double>;
template class MaxMin<float>;
template class MaxMin<double>;
template class Dropout<float>;
template class Dropout<double>;

}  // namespace maxmin
