#include <cstdlib>
#include <limits>

#include "maxmin/models.hpp"

namespace maxmin {

namespace {

void check_filters(const Filters& filters) {
    for (auto f : filters) {
        if (f == 0) throw ConfigError("filter counts must be positive");
    }
}

// conv5x5/1 "same" -> [maxmin] -> relu -> pool 3/2 [-> lrn]
void append_block(NetworkSpec& spec, Arch arch, std::size_t filters, bool lrn) {
    spec.layers.push_back(LayerDesc::conv(filters, 5, 1, 2));
    if (arch == Arch::maxmin) spec.layers.push_back(LayerDesc::simple(LayerKind::maxmin));
    spec.layers.push_back(LayerDesc::simple(LayerKind::relu));
    spec.layers.push_back(LayerDesc::pool(3, 2));
    if (lrn) {
        LrnParams params;
        params.groups = arch == Arch::maxmin ? 2 : 1;
        spec.layers.push_back(LayerDesc::norm(params));
    }
}

}  // namespace

NetworkSpec mnist_spec(Arch arch, Filters filters) {
    check_filters(filters);
    NetworkSpec spec;
    spec.name = "mnist-" + to_string(arch);
    spec.input = {1, 32, 32};
    spec.classes = 10;
    for (auto f : filters) append_block(spec, arch, f, true);
    spec.layers.push_back(LayerDesc::fc(spec.classes));
    return spec;
}

NetworkSpec cifar_spec(Arch arch, Filters filters, CifarOptions options) {
    check_filters(filters);
    if (options.hidden == 0) throw ConfigError("fc hidden width must be positive");
    NetworkSpec spec;
    spec.name = "cifar10-" + to_string(arch) + (options.boost ? "-boost" : "");
    spec.input = {3, 32, 32};
    spec.classes = 10;
    for (auto f : filters) append_block(spec, arch, f, options.boost);
    if (options.boost) spec.layers.push_back(LayerDesc::drop(options.dropout));
    spec.layers.push_back(LayerDesc::fc(options.hidden));
    spec.layers.push_back(LayerDesc::simple(LayerKind::relu));
    if (options.boost) spec.layers.push_back(LayerDesc::drop(options.dropout));
    spec.layers.push_back(LayerDesc::fc(spec.classes));
    return spec;
}

Filters matched_maxmin_filters(const std::function<NetworkSpec(Arch, const Filters&)>& make,
                               const Filters& baseline) {
    check_filters(baseline);
    const auto target = static_cast<long long>(param_count(make(Arch::baseline, baseline)));
    Filters best = baseline;
    long long best_gap = std::numeric_limits<long long>::max();
    std::size_t best_total = 0;
    for (unsigned mask = 0; mask < 8; ++mask) {
        Filters candidate = baseline;
        for (std::size_t i = 0; i < 3; ++i) {
            if (mask & (1u << i)) candidate[i] = std::max<std::size_t>(1, baseline[i] / 2);
        }
        const auto count = static_cast<long long>(param_count(make(Arch::maxmin, candidate)));
        const long long gap = std::llabs(count - target);
        const std::size_t total = candidate[0] + candidate[1] + candidate[2];
        if (gap < best_gap || (gap == best_gap && total < best_total)) {
            best = candidate;
            best_gap = gap;
            best_total = total;
        }
    }
    return best;
}

Filters matched_maxmin_filters(const Filters& baseline, const CifarOptions& options) {
    return matched_maxmin_filters(
        [&](Arch arch, const Filters& f) { return cifar_spec(arch, f, options); }, baseline);
}

}  // namespace maxmin
