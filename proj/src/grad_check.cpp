#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "maxmin/train.hpp"

namespace maxmin {

std::string GradCheckReport::summary() const {
    std::ostringstream os;
    os << (passed ? "PASS" : "FAIL") << ": " << checked << " entries checked, " << kinks
       << " on kinks, max relative error " << max_rel_error << '\n';
    for (const auto& t : tensors) {
        os << "  " << t.name << ": checked " << t.checked << ", kinks " << t.kinks << ", max rel "
           << t.max_rel_error << '\n';
    }
    for (const auto& e : (failures.empty() ? worst : failures)) {
        os << "  " << (failures.empty() ? "worst " : "FAILED ") << e.tensor << '[' << e.index
           << "] analytic " << e.analytic << " numeric " << e.numeric << " rel " << e.rel_error
           << '\n';
    }
    return os.str();
}

namespace {

struct Target {
    std::string name;
    std::span<double> values;
    std::vector<double> analytic;
};

struct Probe {
    double change;  // loss minus the unperturbed loss
    std::uint64_t branch;
};

// Central differences on sampled entries of every target. probe(v, x)
// writes x into v and evaluates; `base` is the unperturbed branch.
using ProbeFn = std::function<Probe(double&, double)>;

GradCheckReport run_check(std::vector<Target>& targets, const ProbeFn& probe, std::uint64_t base,
                          const GradCheckOptions& options) {
    GradCheckReport report;
    const double h = options.step;
    std::mt19937_64 rng(options.seed);
    std::vector<GradCheckEntry> scored;

    for (auto& target : targets) {
        GradCheckTensor summary{target.name};
        std::vector<std::size_t> picks(target.values.size());
        std::iota(picks.begin(), picks.end(), std::size_t{0});
        if (picks.size() > options.samples) {
            for (std::size_t i = 0; i < options.samples; ++i) {
                std::uniform_int_distribution<std::size_t> pick(i, picks.size() - 1);
                std::swap(picks[i], picks[pick(rng)]);
            }
            picks.resize(options.samples);
        }
        double g_max = 0.0;
        for (double g : target.analytic) g_max = std::max(g_max, std::abs(g));
        const double floor = std::max(options.floor, options.relative_floor * g_max);
        for (std::size_t idx : picks) {
            double& v = target.values[idx];
            const double saved = v;
            const double up = saved + h, down = saved - h;
            const Probe plus = probe(v, up);
            const Probe minus = probe(v, down);
            v = saved;

            if (plus.branch != base || minus.branch != base) {
                ++summary.kinks;
                continue;
            }
            const double numeric = (plus.change - minus.change) / (up - down);
            const double analytic = target.analytic[idx];
            const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
            const double rel = std::abs(analytic - numeric) / scale;
            GradCheckEntry entry{target.name, idx, analytic, numeric, rel};
            summary.max_rel_error = std::max(summary.max_rel_error, rel);
            ++summary.checked;
            if (rel > options.tolerance) report.failures.push_back(entry);
            scored.push_back(std::move(entry));
        }
        report.checked += summary.checked;
        report.kinks += summary.kinks;
        report.max_rel_error = std::max(report.max_rel_error, summary.max_rel_error);
        report.tensors.push_back(std::move(summary));
    }

    std::sort(scored.begin(), scored.end(),
              [](const auto& a, const auto& b) { return a.rel_error > b.rel_error; });
    scored.resize(std::min(scored.size(), options.report_worst));
    report.worst = std::move(scored);

    const double total = static_cast<double>(report.checked + report.kinks);
    const bool too_many_kinks =
        total > 0 && static_cast<double>(report.kinks) > options.max_kink_fraction * total;
    report.passed = report.failures.empty() && !too_many_kinks && report.checked > 0;
    return report;
}

}  // namespace

GradCheckReport grad_check_layer(Layer<double>& layer, const Tensor<double>& input,
                                 const GradCheckOptions& options, Mode mode,
                                 const std::function<void()>& before_forward) {
    Tensor<double> x = input;
    const Shape out_shape = layer.output_shape(x.shape());
    Tensor<double> weights(out_shape);
    std::mt19937_64 rng(options.seed ^ 0x5eedULL);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (auto& w : weights.data()) w = gauss(rng);

    auto outputs = [&]() {
        if (before_forward) before_forward();
        return layer.forward(x, mode);
    };
    const auto base_out = outputs();
    const auto base = layer.branch();
    // Differencing outputs before weighting keeps unchanged outputs exact.
    auto probe = [&](double& v, double value) {
        v = value;
        const auto y = outputs();
        double total = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) total += weights[i] * (y[i] - base_out[i]);
        return Probe{total, layer.branch()};
    };

    outputs();
    layer.zero_grad();
    const auto grad_in = layer.backward(weights);

    std::vector<Target> targets;
    targets.push_back({"input", x.data(), {grad_in.data().begin(), grad_in.data().end()}});
    for (auto* p : layer.parameters()) {
        targets.push_back({layer.kind() + "." + p->name, p->value.data(),
                           {p->grad.data().begin(), p->grad.data().end()}});
    }
    return run_check(targets, probe, base, options);
}

GradCheckReport grad_check_network(Network<double>& net, const Tensor<double>& input,
                                   std::span<const int> labels, const GradCheckOptions& options) {
    Tensor<double> x = input;
    SoftmaxCrossEntropy<double> xent;
    auto loss = [&]() { return xent.forward(net.forward(x, Mode::eval), labels); };
    const double base_loss = loss();
    const auto base = net.branch();
    auto probe = [&](double& v, double value) {
        v = value;
        const double l = loss();
        return Probe{l - base_loss, net.branch()};
    };

    loss();
    net.zero_grad();
    const auto grad_in = net.backward(xent.backward());

    std::vector<Target> targets;
    const auto names = net.parameter_names();
    auto params = net.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
        targets.push_back({names[i], params[i]->value.data(),
                           {params[i]->grad.data().begin(), params[i]->grad.data().end()}});
    }
    targets.push_back({"input", x.data(), {grad_in.data().begin(), grad_in.data().end()}});
    return run_check(targets, probe, base, options);
}

void fan_in_init(Network<double>& net, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const auto names = net.parameter_names();
    auto params = net.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& value = params[i]->value;
        double stddev = 0.1;
        if (!names[i].ends_with(".bias")) {
            const auto fan_in = value.size() / value.shape()[0];
            stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
        }
        std::normal_distribution<double> gauss(0.0, stddev);
        for (auto& v : value.data()) v = gauss(rng);
    }
}

}  // namespace maxmin
