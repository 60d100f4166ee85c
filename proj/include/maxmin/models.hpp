#pragma once

// Sequential network composition, the MNIST/CIFAR-10 presets, parameter
// accounting and the binary weight file.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "maxmin/layers.hpp"

namespace maxmin {

enum class Arch { baseline, maxmin };

std::string to_string(Arch arch);
Arch parse_arch(const std::string& text);

enum class LayerKind { conv, maxmin, relu, maxpool, lrn, dropout, fc };

std::string to_string(LayerKind kind);

/// One entry of a NetworkSpec. Only the fields relevant to `kind` are read.
struct LayerDesc {
    LayerKind kind = LayerKind::relu;
    std::size_t units = 0;   // conv filters, fc outputs
    std::size_t kernel = 0;  // conv kernel, pool window
    std::size_t stride = 1;
    std::size_t pad = 0;
    LrnParams lrn{};
    double dropout = 0.0;

    static LayerDesc conv(std::size_t filters, std::size_t kernel, std::size_t stride,
                          std::size_t pad);
    static LayerDesc fc(std::size_t outputs);
    static LayerDesc pool(std::size_t window, std::size_t stride);
    static LayerDesc norm(LrnParams params);
    static LayerDesc drop(double p);
    static LayerDesc simple(LayerKind kind);
};

struct NetworkSpec {
    std::string name;
    Shape input;  // C, H, W
    std::size_t classes = 10;
    std::vector<LayerDesc> layers;

    /// Text form covering every architectural field; two specs build
    /// interchangeable networks iff their canonical forms are equal.
    std::string canonical() const;
    /// 64-bit FNV-1a of canonical().
    std::uint64_t hash() const;
};

/// Shape after each layer for a batch of `batch` inputs. Throws ConfigError
/// or ShapeError when the layers do not chain.
std::vector<Shape> trace_shapes(const NetworkSpec& spec, std::size_t batch = 1);

/// Learnable scalars (weights + biases) of the architecture.
std::size_t param_count(const NetworkSpec& spec);

/// Per-layer learnable scalar counts, parallel to spec.layers.
std::vector<std::size_t> layer_param_counts(const NetworkSpec& spec);

/// Layer names as used in reports and weight files: conv1, maxmin1, relu1, ...
std::vector<std::string> layer_names(const NetworkSpec& spec);

template <typename T>
class Network {
public:
    /// Instantiates `spec`. Conv and fc weights are drawn i.i.d. from
    /// N(0, init_stddev^2) in layer order from a generator seeded with `seed`;
    /// biases start at zero. Dropout layers get seeds derived from `seed`.
    static Network build(const NetworkSpec& spec, std::uint64_t seed, double init_stddev = 0.01);

    Network(Network&&) noexcept = default;
    Network& operator=(Network&&) noexcept = default;

    /// x is [N, C, H, W]; returns logits [N, classes].
    Tensor<T> forward(const Tensor<T>& x, Mode mode);
    /// Backpropagates d loss / d logits, accumulating parameter gradients.
    Tensor<T> backward(const Tensor<T>& grad_logits);
    void zero_grad();

    /// Every parameter in layer order (weight before bias).
    std::vector<Parameter<T>*> parameters();
    /// "conv1.weight", "conv1.bias", ... parallel to parameters().
    std::vector<std::string> parameter_names() const;

    std::size_t num_layers() const { return layers_.size(); }
    /// Combined branch fingerprint of every layer after the last forward.
    std::uint64_t branch() const;
    Layer<T>& layer(std::size_t i) { return *layers_.at(i); }
    const std::string& layer_name(std::size_t i) const { return names_.at(i); }

    const NetworkSpec& spec() const { return spec_; }
    std::uint64_t seed() const { return seed_; }
    std::size_t param_count() const;

private:
    Network() = default;

    NetworkSpec spec_;
    std::uint64_t seed_ = 0;
    std::vector<std::unique_ptr<Layer<T>>> layers_;
    std::vector<std::string> names_;
};

/// Copies every parameter value between networks of identical architecture,
/// converting precision when needed.
template <typename To, typename From>
void copy_parameters(Network<From>& from, Network<To>& to);

// --- presets -------------------------------------------------------------

using Filters = std::array<std::size_t, 3>;

inline constexpr Filters kMnistFilters{64, 64, 64};
inline constexpr Filters kCifarFilters{32, 32, 64};

/// MNIST net: [conv5x5 -> (maxmin) -> relu -> pool3/2 -> lrn] x3 -> fc(10) on
/// 1x32x32 inputs. Convolutions pad by 2 so maps go 32 -> 16 -> 8 -> 4.
NetworkSpec mnist_spec(Arch arch, Filters filters = kMnistFilters);

struct CifarOptions {
    bool boost = false;          // lrn after each pool, dropout before each fc
    std::size_t hidden = 64;     // width of the first fc layer
    double dropout = 0.5;
};

/// CIFAR-10 net: [conv5x5 -> (maxmin) -> relu -> pool3/2] x3 -> fc(hidden) ->
/// relu -> fc(10) on 3x32x32 inputs.
NetworkSpec cifar_spec(Arch arch, Filters filters = kCifarFilters, CifarOptions options = {});

/// Maxmin filter counts for a parameter-matched comparison against a
/// baseline with `baseline` filters: among the counts obtained by halving
/// any subset of the baseline layers, the one whose total parameter count is
/// closest to the baseline's (ties prefer fewer filters). The fc widths
/// are the same in both nets.
Filters matched_maxmin_filters(const Filters& baseline, const CifarOptions& options = {});

/// Same matching rule for any preset family produced by `make`.
Filters matched_maxmin_filters(const std::function<NetworkSpec(Arch, const Filters&)>& make,
                               const Filters& baseline);

template <typename T>
Network<T> build_mnist(Arch arch, Filters filters = kMnistFilters, std::uint64_t seed = 1) {
    return Network<T>::build(mnist_spec(arch, filters), seed);
}

template <typename T>
Network<T> build_cifar(Arch arch, Filters filters = kCifarFilters, CifarOptions options = {},
                       std::uint64_t seed = 1) {
    return Network<T>::build(cifar_spec(arch, filters, options), seed);
}

// --- weight file ---------------------------------------------------------
//
// Little-endian: the 8 ASCII bytes "MAXMIN01", the spec hash as uint64,
// then for each parameter in network order: rank (uint32), each dim
// (uint64), and the values as IEEE-754 doubles. Nothing follows the last
// tensor.

template <typename T>
void save_weights(Network<T>& net, const std::filesystem::path& path);

/// Builds `spec` and fills it from `path`. Throws FormatError on a bad
/// magic, spec-hash mismatch, shape mismatch, truncation or trailing bytes.
template <typename T>
Network<T> load_weights(const NetworkSpec& spec, const std::filesystem::path& path);

}  // namespace maxmin
