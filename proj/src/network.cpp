#include <map>
#include <random>
#include <sstream>

#include "maxmin/models.hpp"

namespace maxmin {

std::string to_string(Arch arch) { return arch == Arch::baseline ? "baseline" : "maxmin"; }

Arch parse_arch(const std::string& text) {
    if (text == "baseline") return Arch::baseline;
    if (text == "maxmin") return Arch::maxmin;
    throw ConfigError("unknown architecture '" + text + "' (expected baseline or maxmin)");
}

std::string to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::conv: return "conv";
        case LayerKind::maxmin: return "maxmin";
        case LayerKind::relu: return "relu";
        case LayerKind::maxpool: return "pool";
        case LayerKind::lrn: return "lrn";
        case LayerKind::dropout: return "dropout";
        case LayerKind::fc: return "fc";
    }
    return "?";
}

LayerDesc LayerDesc::conv(std::size_t filters, std::size_t kernel, std::size_t stride,
                          std::size_t pad) {
    LayerDesc d;
    d.kind = LayerKind::conv;
    d.units = filters;
    d.kernel = kernel;
    d.stride = stride;
    d.pad = pad;
    return d;
}

LayerDesc LayerDesc::fc(std::size_t outputs) {
    LayerDesc d;
    d.kind = LayerKind::fc;
    d.units = outputs;
    return d;
}

LayerDesc LayerDesc::pool(std::size_t window, std::size_t stride) {
    LayerDesc d;
    d.kind = LayerKind::maxpool;
    d.kernel = window;
    d.stride = stride;
    return d;
}

LayerDesc LayerDesc::norm(LrnParams params) {
    LayerDesc d;
    d.kind = LayerKind::lrn;
    d.lrn = params;
    return d;
}

LayerDesc LayerDesc::drop(double p) {
    LayerDesc d;
    d.kind = LayerKind::dropout;
    d.dropout = p;
    return d;
}

LayerDesc LayerDesc::simple(LayerKind kind) {
    LayerDesc d;
    d.kind = kind;
    return d;
}

std::string NetworkSpec::canonical() const {
    std::ostringstream os;
    os.precision(17);
    os << "input=" << to_string(input) << ";classes=" << classes;
    for (const auto& l : layers) {
        os << ';' << to_string(l.kind);
        switch (l.kind) {
            case LayerKind::conv:
                os << '(' << l.units << ',' << l.kernel << ',' << l.stride << ',' << l.pad << ')';
                break;
            case LayerKind::fc: os << '(' << l.units << ')'; break;
            case LayerKind::maxpool: os << '(' << l.kernel << ',' << l.stride << ')'; break;
            case LayerKind::lrn:
                os << '(' << l.lrn.radius << ',' << l.lrn.k << ',' << l.lrn.alpha << ','
                   << l.lrn.beta << ',' << l.lrn.groups << ')';
                break;
            case LayerKind::dropout: os << '(' << l.dropout << ')'; break;
            default: break;
        }
    }
    return os.str();
}

std::uint64_t NetworkSpec::hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : canonical()) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace {

// Instantiates one layer for an input of shape `in`.
template <typename T>
std::unique_ptr<Layer<T>> make_layer(const LayerDesc& d, const Shape& in, std::uint64_t seed) {
    switch (d.kind) {
        case LayerKind::conv:
            if (in.size() != 4) throw ShapeError("conv needs a spatial input, got " + to_string(in));
            return std::make_unique<Conv2d<T>>(in[1], d.units, d.kernel, d.stride, d.pad);
        case LayerKind::maxmin: return std::make_unique<MaxMin<T>>();
        case LayerKind::relu: return std::make_unique<Relu<T>>();
        case LayerKind::maxpool: return std::make_unique<MaxPool<T>>(d.kernel, d.stride);
        case LayerKind::lrn: return std::make_unique<Lrn<T>>(d.lrn);
        case LayerKind::dropout: return std::make_unique<Dropout<T>>(d.dropout, seed);
        case LayerKind::fc: return std::make_unique<Linear<T>>(shape_size(in) / in[0], d.units);
    }
    throw ConfigError("unknown layer kind");
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    // splitmix64 finaliser
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace

std::vector<Shape> trace_shapes(const NetworkSpec& spec, std::size_t batch) {
    if (spec.input.size() != 3) {
        throw ShapeError("network input must be C,H,W, got " + to_string(spec.input));
    }
    Shape shape{batch, spec.input[0], spec.input[1], spec.input[2]};
    std::vector<Shape> shapes;
    for (const auto& d : spec.layers) {
        shape = make_layer<double>(d, shape, 0)->output_shape(shape);
        shapes.push_back(shape);
    }
    if (!spec.layers.empty() && shape != Shape{batch, spec.classes}) {
        throw ShapeError("network output " + to_string(shape) + " does not produce " +
                         std::to_string(spec.classes) + " class scores");
    }
    return shapes;
}

std::vector<std::size_t> layer_param_counts(const NetworkSpec& spec) {
    const auto shapes = trace_shapes(spec);
    std::vector<std::size_t> counts;
    Shape in{1, spec.input[0], spec.input[1], spec.input[2]};
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const auto& d = spec.layers[i];
        std::size_t count = 0;
        if (d.kind == LayerKind::conv) {
            count = d.units * (in[1] * d.kernel * d.kernel + 1);
        } else if (d.kind == LayerKind::fc) {
            count = d.units * (shape_size(in) + 1);
        }
        counts.push_back(count);
        in = shapes[i];
    }
    return counts;
}

std::size_t param_count(const NetworkSpec& spec) {
    std::size_t total = 0;
    for (auto c : layer_param_counts(spec)) total += c;
    return total;
}

std::vector<std::string> layer_names(const NetworkSpec& spec) {
    std::map<LayerKind, int> counters;
    std::vector<std::string> names;
    for (const auto& d : spec.layers) {
        names.push_back(to_string(d.kind) + std::to_string(++counters[d.kind]));
    }
    return names;
}

template <typename T>
Network<T> Network<T>::build(const NetworkSpec& spec, std::uint64_t seed, double init_stddev) {
    trace_shapes(spec);
    Network net;
    net.spec_ = spec;
    net.seed_ = seed;
    net.names_ = layer_names(spec);
    Shape shape{1, spec.input[0], spec.input[1], spec.input[2]};
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, init_stddev);
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        auto layer = make_layer<T>(spec.layers[i], shape, mix_seed(seed, i));
        for (auto* p : layer->parameters()) {
            if (p->name == "weight") {
                for (auto& v : p->value.data()) v = static_cast<T>(gauss(rng));
            }
        }
        shape = layer->output_shape(shape);
        net.layers_.push_back(std::move(layer));
    }
    return net;
}

template <typename T>
Tensor<T> Network<T>::forward(const Tensor<T>& x, Mode mode) {
    if (x.rank() != 4 || Shape(x.shape().begin() + 1, x.shape().end()) != spec_.input) {
        throw ShapeError("network expects [N" + to_string(spec_.input).replace(0, 1, ",") +
                         " input, got " + to_string(x.shape()));
    }
    Tensor<T> h = x;
    for (auto& layer : layers_) h = layer->forward(h, mode);
    return h;
}

template <typename T>
std::uint64_t Network<T>::branch() const {
    std::uint64_t h = 0;
    for (const auto& layer : layers_) h = h * 0x9e3779b97f4a7c15ULL + layer->branch();
    return h;
}

template <typename T>
Tensor<T> Network<T>::backward(const Tensor<T>& grad_logits) {
    Tensor<T> g = grad_logits;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
    return g;
}

template <typename T>
void Network<T>::zero_grad() {
    for (auto& layer : layers_) layer->zero_grad();
}

template <typename T>
std::vector<Parameter<T>*> Network<T>::parameters() {
    std::vector<Parameter<T>*> out;
    for (auto& layer : layers_) {
        for (auto* p : layer->parameters()) out.push_back(p);
    }
    return out;
}

template <typename T>
std::vector<std::string> Network<T>::parameter_names() const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        for (auto* p : layers_[i]->parameters()) out.push_back(names_[i] + "." + p->name);
    }
    return out;
}

template <typename T>
std::size_t Network<T>::param_count() const {
    std::size_t total = 0;
    for (const auto& layer : layers_) {
        for (auto* p : layer->parameters()) total += p->value.size();
    }
    return total;
}

template <typename To, typename From>
void copy_parameters(Network<From>& from, Network<To>& to) {
    if (from.spec().hash() != to.spec().hash()) {
        throw ShapeError("copy_parameters: architectures differ");
    }
    auto src = from.parameters();
    auto dst = to.parameters();
    for (std::size_t i = 0; i < src.size(); ++i) {
        for (std::size_t j = 0; j < src[i]->value.size(); ++j) {
            dst[i]->value[j] = static_cast<To>(src[i]->value[j]);
        }
    }
}

template class Network<float>;
template class Network<double>;
template void copy_parameters(Network<float>&, Network<float>&);
template void copy_parameters(Network<float>&, Network<double>&);
template void copy_parameters(Network<double>&, Network<float>&);
template void copy_parameters(Network<double>&, Network<double>&);

}  // namespace maxmin
