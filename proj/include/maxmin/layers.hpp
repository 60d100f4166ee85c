#pragma once

// Differentiable layers with explicit forward and backward passes.
//
// Every layer caches what its backward pass needs during forward. Calling
// backward without a preceding forward throws UsageError. Parameter
// gradients accumulate across backward calls until zero_grad().

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "maxmin/tensor.hpp"

namespace maxmin {

enum class Mode { train, eval };

template <typename T>
struct Parameter {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;
};

template <typename T>
class Layer {
public:
    virtual ~Layer() = default;

    virtual std::string kind() const = 0;
    /// Output shape for an input of `input` (batch dimension included).
    virtual Shape output_shape(const Shape& input) const = 0;
    virtual Tensor<T> forward(const Tensor<T>& x, Mode mode) = 0;
    virtual Tensor<T> backward(const Tensor<T>& grad_out) = 0;
    virtual std::vector<Parameter<T>*> parameters() { return {}; }
    /// Fingerprint of the piecewise branch taken by the last forward
    /// (ReLU signs, pooling argmax). Smooth layers return 0.
    virtual std::uint64_t branch() const { return 0; }

    void zero_grad() {
        for (auto* p : parameters()) p->grad.fill(T{0});
    }
};

/// 2-D cross-correlation (no kernel flip):
///   out[n,f,y,x] = bias[f] + sum_{c,i,j} in[n,c,y*s+i-p,x*s+j-p] * w[f,c,i,j]
/// lowered per image onto a GEMM over im2col columns.
template <typename T>
class Conv2d final : public Layer<T> {
public:
    Conv2d(std::size_t in_channels, std::size_t filters, std::size_t kernel,
           std::size_t stride = 1, std::size_t pad = 0);

    std::string kind() const override { return "conv"; }
    Shape output_shape(const Shape& input) const override;
    Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
    Tensor<T> backward(const Tensor<T>& grad_out) override;
    std::vector<Parameter<T>*> parameters() override { return {&weight_, &bias_}; }

    Parameter<T>& weight() { return weight_; }
    Parameter<T>& bias() { return bias_; }
    const ConvGeometry& geometry() const { return geometry_; }
    std::size_t in_channels() const { return in_channels_; }
    std::size_t filters() const { return filters_; }

private:
    std::size_t in_channels_;
    std::size_t filters_;
    ConvGeometry geometry_;
    Parameter<T> weight_;
    Parameter<T> bias_;
    Tensor<T> input_;
    bool has_input_ = false;
};

/// Concatenates each map with its negation: [x | -x] along channels.
template <typename T>
class MaxMin final : public Layer<T> {
public:
    std::string kind() const override { return "maxmin"; }
    Shape output_shape(const Shape& input) const override;
    Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
    /// grad_in = grad_out[:, :C] - grad_out[:, C:].
    Tensor<T> backward(const Tensor<T>& grad_out) override;

private:
    Shape input_shape_;
};

/// max(x, 0); the subgradient at exactly 0 is 0.
template <typename T>
class Relu final : public Layer<T> {
public:
    std::string kind() const override { return "relu"; }
    Shape output_shape(const Shape& input) const override { return input; }
    Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
    Tensor<T> backward(const Tensor<T>& grad_out) override;
    std::uint64_t branch() const override;

private:
    Tensor<T> input_;
    bool has_input_ = false;
};

/// Pooling geometry with edge clamping: there are ceil((H - window) / stride) + 1
/// outputs per axis and the last window is truncated at the input border
/// instead of reading padding. Requires window <= H and stride <= window.
struct PoolGeometry {
    std::size_t window = 3;
    std::size_t stride = 2;

    std::size_t out_size(std::size_t extent) const;
};

/// Max over each window. argmax (when non-null) receives the flat input
/// index that won each output; ties go to the first element in row-major
/// scan order.
template <typename T>
Tensor<T> maxpool_forward(const Tensor<T>& x, const PoolGeometry& g,
                          std::vector<std::size_t>* argmax = nullptr);

/// Routes each output gradient to its recorded argmax.
template <typename T>
Tensor<T> maxpool_backward(const Tensor<T>& grad_out, const Shape& input_shape,
                           const std::vector<std::size_t>& argmax);

template <typename T>
class MaxPool final : public Layer<T> {
public:
    explicit MaxPool(std::size_t window = 3, std::size_t stride = 2);

    std::string kind() const override { return "maxpool"; }
    Shape output_shape(const Shape& input) const override;
    Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
    Tensor<T> backward(const Tensor<T>& grad_out) override;
    std::uint64_t branch() const override;

    const PoolGeometry& geometry() const { return geometry_; }

private:
    PoolGeometry geometry_;
    Shape input_shape_;
    std::vector<std::size_t> argmax_;
    bool has_input_ = false;
};

/// Cross-channel local response normalisation:
///   out[c] = x[c] / (k + alpha * sum_{c' in window(c)} x[c']^2)^beta
/// with window(c) = [c - radius, c + radius] clipped to the channel group
/// containing c. Channels are split into `groups` equal contiguous groups;
/// after a MaxMin block groups = 2 keeps the original and negated halves
/// from normalising each other.
struct LrnParams {
    std::size_t radius = 2;
    double k = 1.0;
    double alpha = 1e-4;
    double beta = 0.75;
    std::size_t groups = 1;
};

template <typename T>
class Lrn final : public Layer<T> {
public:
    explicit Lrn(LrnParams params = {});

    std::string kind() const override { return "lrn"; }
    Shape output_shape(const Shape& input) const override;
    Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
    Tensor<T> backward(const Tensor<T>& grad_out) override;

    const LrnParams& params() const { return params_; }

private:
    LrnParams params_;
    Tensor<T> input_;
    Tensor<T> scale_;  // k + alpha * window sum, per element
    bool has_input_ = false;
};

/// Fully connected layer on the flattened input: out = x W^T + b with
/// W of shape [outputs, inputs]. Output is [N, outputs].
template <typename T>
class Linear final : public Layer<T> {
public:
    Linear(std::size_t inputs, std::size_t outputs);

    std::string kind() const override { return "fc"; }
    Shape output_shape(const Shape& input) const override;
    Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
    Tensor<T> backward(const Tensor<T>& grad_out) override;
    std::vector<Parameter<T>*> parameters() override { return {&weight_, &bias_}; }

    Parameter<T>& weight() { return weight_; }
    Parameter<T>& bias() { return bias_; }
    std::size_t inputs() const { return inputs_; }
    std::size_t outputs() const { return outputs_; }

private:
    std::size_t inputs_;
    std::size_t outputs_;
    Parameter<T> weight_;
    Parameter<T> bias_;
    Tensor<T> input_;  // flattened [N, inputs]
    Shape input_shape_;
    bool has_input_ = false;
};

/// Inverted dropout: in train mode each element is zeroed with probability p
/// and survivors are scaled by 1/(1-p); eval mode is the identity.
template <typename T>
class Dropout final : public Layer<T> {
public:
    Dropout(double p, std::uint64_t seed);

    std::string kind() const override { return "dropout"; }
    Shape output_shape(const Shape& input) const override { return input; }
    Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
    Tensor<T> backward(const Tensor<T>& grad_out) override;

    double probability() const { return p_; }
    void reseed(std::uint64_t seed) { rng_.seed(seed); }

private:
    double p_;
    std::mt19937_64 rng_;
    Tensor<T> mask_;  // 0 or 1/(1-p); empty after an eval-mode forward
    bool has_input_ = false;
    bool identity_ = true;
};

/// Softmax followed by mean cross-entropy. The softmax subtracts each row's
/// max before exponentiating.
template <typename T>
class SoftmaxCrossEntropy {
public:
    /// logits [N, K]; labels in [0, K). Returns the batch-mean loss.
    T forward(const Tensor<T>& logits, std::span<const int> labels);
    /// (probs - onehot) / N.
    Tensor<T> backward() const;

    const Tensor<T>& probabilities() const { return probs_; }

private:
    Tensor<T> probs_;
    std::vector<int> labels_;
};

template <typename T>
Tensor<T> relu(const Tensor<T>& x);

/// [x | -x] along channels.
template <typename T>
Tensor<T> maxmin(const Tensor<T>& x);

}  // namespace maxmin
