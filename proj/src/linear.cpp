#include <algorithm>
#include <cmath>
#include <limits>

#include "maxmin/layers.hpp"

namespace maxmin {

template <typename T>
Linear<T>::Linear(std::size_t inputs, std::size_t outputs) : inputs_(inputs), outputs_(outputs) {
    if (inputs == 0 || outputs == 0) throw ConfigError("fc: sizes must be positive");
    weight_ = {"weight", Tensor<T>({outputs, inputs}), Tensor<T>({outputs, inputs})};
    bias_ = {"bias", Tensor<T>({outputs}), Tensor<T>({outputs})};
}

template <typename T>
Shape Linear<T>::output_shape(const Shape& input) const {
    if (input.empty()) throw ShapeError("fc: empty input shape");
    const std::size_t features = shape_size(input) / std::max<std::size_t>(input[0], 1);
    if (features != inputs_) {
        throw ShapeError("fc: input " + to_string(input) + " flattens to " +
                         std::to_string(features) + " features, expected " +
                         std::to_string(inputs_));
    }
    return {input[0], outputs_};
}

template <typename T>
Tensor<T> Linear<T>::forward(const Tensor<T>& x, Mode) {
    const Shape oshape = output_shape(x.shape());
    const std::size_t n = oshape[0];
    std::vector<T> weight_t(inputs_ * outputs_);
    transpose<T>(weight_.value.data(), weight_t, outputs_, inputs_);
    Tensor<T> out(oshape);
    gemm<T>(x.data(), weight_t, out.data(), n, inputs_, outputs_);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t o = 0; o < outputs_; ++o) out[i * outputs_ + o] += bias_.value[o];
    }
    input_shape_ = x.shape();
    input_ = x.reshaped({n, inputs_});
    has_input_ = true;
    return out;
}

template <typename T>
Tensor<T> Linear<T>::backward(const Tensor<T>& grad_out) {
    if (!has_input_) throw UsageError("fc: backward called before forward");
    const std::size_t n = input_.dim(0);
    if (grad_out.shape() != Shape{n, outputs_}) {
        throw ShapeError("fc: gradient shape " + to_string(grad_out.shape()) +
                         " does not match output [" + std::to_string(n) + "x" +
                         std::to_string(outputs_) + "]");
    }
    std::vector<T> grad_t(outputs_ * n);
    transpose<T>(grad_out.data(), grad_t, n, outputs_);
    gemm<T>(grad_t, input_.data(), weight_.grad.data(), outputs_, n, inputs_, true);
    for (std::size_t o = 0; o < outputs_; ++o) {
        T sum{0};
        for (std::size_t i = 0; i < n; ++i) sum += grad_t[o * n + i];
        bias_.grad[o] += sum;
    }
    Tensor<T> grad_in(input_shape_);
    gemm<T>(grad_out.data(), weight_.value.data(), grad_in.data(), n, outputs_, inputs_);
    return grad_in;
}

template <typename T>
T SoftmaxCrossEntropy<T>::forward(const Tensor<T>& logits, std::span<const int> labels) {
    if (logits.rank() != 2) {
        throw ShapeError("softmax: expected [N,K] logits, got " + to_string(logits.shape()));
    }
    const std::size_t n = logits.dim(0), k = logits.dim(1);
    if (labels.size() != n) {
        throw ShapeError("softmax: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(n) + " rows");
    }
    probs_ = Tensor<T>(logits.shape());
    T loss{0};
    for (std::size_t i = 0; i < n; ++i) {
        const int label = labels[i];
        if (label < 0 || static_cast<std::size_t>(label) >= k) {
            throw ConfigError("softmax: label " + std::to_string(label) + " outside [0, " +
                              std::to_string(k) + ")");
        }
        const T* row = logits.raw() + i * k;
        T* prow = probs_.raw() + i * k;
        const T peak = *std::max_element(row, row + k);
        T total{0};
        for (std::size_t j = 0; j < k; ++j) {
            prow[j] = std::exp(row[j] - peak);
            total += prow[j];
        }
        for (std::size_t j = 0; j < k; ++j) prow[j] /= total;
        // log-sum-exp form keeps the loss finite when the label's prob underflows
        loss += std::log(total) - (row[label] - peak);
    }
    labels_.assign(labels.begin(), labels.end());
    return loss / static_cast<T>(n);
}

template <typename T>
Tensor<T> SoftmaxCrossEntropy<T>::backward() const {
    if (probs_.empty()) throw UsageError("softmax: backward called before forward");
    const std::size_t n = probs_.dim(0), k = probs_.dim(1);
    Tensor<T> grad = probs_;
    for (std::size_t i = 0; i < n; ++i) grad[i * k + static_cast<std::size_t>(labels_[i])] -= T{1};
    const T inv_n = T{1} / static_cast<T>(n);
    for (auto& v : grad.data()) v *= inv_n;
    return grad;
}

template class Linear<float>;
template class Linear<double>;
template class SoftmaxCrossEntropy<float>;
template class SoftmaxCrossEntropy<double>;

}  // namespace maxmin
