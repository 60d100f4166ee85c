#include <algorithm>
#include <cmath>

#include "maxmin/layers.hpp"

namespace maxmin {

template <typename T>
Lrn<T>::Lrn(LrnParams params) : params_(params) {
    if (!(params_.k > 0.0)) throw ConfigError("lrn: k must be positive");
    if (params_.alpha < 0.0) throw ConfigError("lrn: alpha must be non-negative");
    if (params_.groups == 0) throw ConfigError("lrn: groups must be positive");
}

template <typename T>
Shape Lrn<T>::output_shape(const Shape& input) const {
    if (input.size() != 4) throw ShapeError("lrn: expected NCHW input, got " + to_string(input));
    if (input[1] % params_.groups != 0) {
        throw ShapeError("lrn: " + std::to_string(input[1]) + " channels do not split into " +
                         std::to_string(params_.groups) + " groups");
    }
    return input;
}

namespace {

// Channel window of c within its group, as [lo, hi).
struct Window {
    std::size_t lo;
    std::size_t hi;
};

Window channel_window(std::size_t c, std::size_t group_size, std::size_t radius) {
    const std::size_t g0 = (c / group_size) * group_size;
    const std::size_t lo = c >= g0 + radius ? c - radius : g0;
    const std::size_t hi = std::min(g0 + group_size, c + radius + 1);
    return {lo, hi};
}

}  // namespace

template <typename T>
Tensor<T> Lrn<T>::forward(const Tensor<T>& x, Mode) {
    output_shape(x.shape());
    const std::size_t n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
    const std::size_t group_size = c / params_.groups;
    const T k = static_cast<T>(params_.k), alpha = static_cast<T>(params_.alpha);
    const T beta = static_cast<T>(params_.beta);

    scale_ = Tensor<T>(x.shape());
    Tensor<T> out(x.shape());
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t base = i * c * plane;
        for (std::size_t ch = 0; ch < c; ++ch) {
            const Window win = channel_window(ch, group_size, params_.radius);
            for (std::size_t p = 0; p < plane; ++p) {
                T sum{0};
                for (std::size_t j = win.lo; j < win.hi; ++j) {
                    const T v = x[base + j * plane + p];
                    sum += v * v;
                }
                const std::size_t idx = base + ch * plane + p;
                scale_[idx] = k + alpha * sum;
                out[idx] = x[idx] * std::pow(scale_[idx], -beta);
            }
        }
    }
    input_ = x;
    has_input_ = true;
    return out;
}

// d out_c / d x_j = [c == j] s_c^-beta - 2 alpha beta x_c x_j s_c^(-beta-1)
// for j in window(c); windows are symmetric so c ranges over window(j).
template <typename T>
Tensor<T> Lrn<T>::backward(const Tensor<T>& grad_out) {
    if (!has_input_) throw UsageError("lrn: backward called before forward");
    if (grad_out.shape() != input_.shape()) {
        throw ShapeError("lrn: gradient shape " + to_string(grad_out.shape()) +
                         " does not match input " + to_string(input_.shape()));
    }
    const std::size_t n = input_.dim(0), c = input_.dim(1), plane = input_.dim(2) * input_.dim(3);
    const std::size_t group_size = c / params_.groups;
    const T alpha = static_cast<T>(params_.alpha), beta = static_cast<T>(params_.beta);

    // ratio[c] = g_c x_c s_c^(-beta-1)
    Tensor<T> ratio(input_.shape());
    for (std::size_t i = 0; i < ratio.size(); ++i) {
        ratio[i] = grad_out[i] * input_[i] * std::pow(scale_[i], -beta - T{1});
    }
    Tensor<T> grad_in(input_.shape());
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t base = i * c * plane;
        for (std::size_t ch = 0; ch < c; ++ch) {
            const Window win = channel_window(ch, group_size, params_.radius);
            for (std::size_t p = 0; p < plane; ++p) {
                T acc{0};
                for (std::size_t j = win.lo; j < win.hi; ++j) acc += ratio[base + j * plane + p];
                const std::size_t idx = base + ch * plane + p;
                grad_in[idx] = grad_out[idx] * std::pow(scale_[idx], -beta) -
                               T{2} * alpha * beta * input_[idx] * acc;
            }
        }
    }
    return grad_in;
}

template class Lrn<float>;
template class Lrn<double>;

}  // namespace maxmin
