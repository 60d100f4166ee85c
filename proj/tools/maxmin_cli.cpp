// maxmin: train, evaluate and inspect baseline and MaxMin CNNs.
//
// Exit codes: 0 success, 1 failed gradient check, 2 configuration error,
// 3 data or file error, 4 divergence.

#include <CLI11.hpp>

#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>

#include "maxmin/experiment.hpp"

using namespace maxmin;

namespace {

enum ExitCode { kOk = 0, kCheckFailed = 1, kConfig = 2, kData = 3, kDivergence = 4 };

Filters parse_filters(const std::string& text, char sep) {
    Filters f{};
    std::stringstream ss(text);
    std::string item;
    std::size_t i = 0;
    while (std::getline(ss, item, sep)) {
        if (i == 3) throw ConfigError("filters need exactly three counts, got '" + text + "'");
        try {
            std::size_t used = 0;
            const long long v = std::stoll(item, &used);
            if (used != item.size() || v <= 0) throw std::invalid_argument(item);
            f[i++] = static_cast<std::size_t>(v);
        } catch (const std::exception&) {
            throw ConfigError("invalid filter count '" + item + "' in '" + text +
                              "' (counts must be positive integers)");
        }
    }
    if (i != 3) throw ConfigError("filters need exactly three counts, got '" + text + "'");
    return f;
}

std::string format_filters(const Filters& f) {
    return std::to_string(f[0]) + "," + std::to_string(f[1]) + "," + std::to_string(f[2]);
}

// Flags shared by the commands that build a preset.
struct PresetFlags {
    std::string dataset = "mnist";
    std::string arch = "baseline";
    std::string filters;
    bool boost = false;
    std::uint64_t seed = 1;
    std::size_t hidden = 64;
    double dropout = 0.5;

    void add_to(CLI::App& app) {
        app.add_option("--dataset", dataset, "mnist or cifar10")
            ->check(CLI::IsMember({"mnist", "cifar10"}));
        app.add_option("--arch", arch, "baseline or maxmin")
            ->check(CLI::IsMember({"baseline", "maxmin"}));
        app.add_option("--filters", filters, "filter counts per conv layer, e.g. 64,64,64");
        app.add_flag("--boost", boost,
                     "cifar10: augmentation, ZCA whitening, dropout and LRN after each pool");
        app.add_option("--seed", seed, "seed for initialisation, splits and data order");
        app.add_option("--hidden", hidden, "cifar10 hidden fc width");
        app.add_option("--dropout", dropout, "dropout probability for --boost");
    }

    ExperimentOptions resolve() const {
        ExperimentOptions o;
        o.dataset = parse_dataset(dataset);
        o.arch = parse_arch(arch);
        o.filters = filters.empty()
                        ? (o.dataset == DatasetKind::mnist ? kMnistFilters : kCifarFilters)
                        : parse_filters(filters, ',');
        o.boost = boost;
        o.seed = seed;
        o.hidden = hidden;
        o.dropout = dropout;
        o.validate();
        return o;
    }
};

struct DataFlags {
    std::optional<std::string> data_dir;
    std::size_t val_size = 5000;
    std::size_t train_limit = 0;
    std::size_t test_limit = 0;
    double zca_epsilon = 0.1;

    void add_to(CLI::App& app) {
        app.add_option("--data-dir", data_dir, "dataset root (default: $DATA_DIR, then ./data)");
        app.add_option("--val-size", val_size, "training images held out for validation");
        app.add_option("--train-limit", train_limit, "use only the first N training images (0 = all)");
        app.add_option("--test-limit", test_limit, "use only the first N test images (0 = all)");
        app.add_option("--zca-epsilon", zca_epsilon, "ZCA regulariser for --boost");
    }

    void apply(ExperimentOptions& o) const {
        o.val_size = val_size;
        o.train_limit = train_limit;
        o.test_limit = test_limit;
        o.zca_epsilon = zca_epsilon;
    }

    std::filesystem::path dir() const {
        return resolve_data_dir(data_dir ? std::optional<std::filesystem::path>(*data_dir)
                                         : std::nullopt);
    }
};

struct TrainFlags {
    std::optional<std::size_t> epochs;
    std::size_t batch_size = 64;
    double lr = 0.01;
    double momentum = 0.9;
    std::optional<double> weight_decay;
    double plateau_factor = 0.1;
    int plateau_patience = 3;
    int max_translate = 4;
    std::size_t checkpoint_every = 0;
    bool test_every_epoch = true;
    std::string precision = "float";

    void add_to(CLI::App& app) {
        app.add_option("--epochs", epochs, "training epochs (default 250 mnist, 60 cifar10)");
        app.add_option("--batch-size", batch_size, "minibatch size");
        app.add_option("--lr", lr, "initial learning rate");
        app.add_option("--momentum", momentum, "SGD momentum");
        app.add_option("--weight-decay", weight_decay, "L2 weight decay (default 1e-3 mnist, 1e-4 cifar10)");
        app.add_option("--plateau-factor", plateau_factor, "learning-rate factor on a plateau");
        app.add_option("--plateau-patience", plateau_patience, "evaluations without improvement");
        app.add_option("--max-translate", max_translate, "augmentation shift range in pixels");
        app.add_option("--checkpoint-every", checkpoint_every, "write epoch_<k>.weights every k epochs");
        app.add_option("--test-every-epoch", test_every_epoch, "score the test set after every epoch");
        app.add_option("--precision", precision, "float or double")
            ->check(CLI::IsMember({"float", "double"}));
    }

    TrainConfig resolve(const ExperimentOptions& o, const std::filesystem::path& out) const {
        TrainConfig c = default_train_config(o);
        if (epochs) c.epochs = *epochs;
        c.batch_size = batch_size;
        c.sgd.learning_rate = lr;
        c.sgd.momentum = momentum;
        if (weight_decay) c.sgd.weight_decay = *weight_decay;
        c.plateau_factor = plateau_factor;
        c.plateau_patience = plateau_patience;
        c.augment_options.max_translate = max_translate;
        c.checkpoint_every = checkpoint_every;
        c.test_every_epoch = test_every_epoch;
        c.out_dir = out;
        c.validate();
        return c;
    }
};

void print_config(const nlohmann::json& config) {
    std::cout << "resolved config: " << config.dump() << std::endl;
}

template <typename T>
std::optional<double> run_training(const ExperimentOptions& o, const TrainData& data,
                                   const TrainConfig& config, const nlohmann::json& provenance) {
    auto net = Network<T>::build(experiment_spec(o), o.seed);
    std::cout << net.spec().name << ": " << net.param_count() << " parameters" << std::endl;
    const auto result = train(net, data, config, &std::cout, provenance);
    if (result.metrics.empty()) return std::nullopt;
    return result.metrics.back().test_acc;
}

int cmd_train(const PresetFlags& pf, const DataFlags& df, const TrainFlags& tf,
              const std::string& out) {
    auto o = pf.resolve();
    df.apply(o);
    const auto config = tf.resolve(o, out);
    const auto dir = df.dir();
    print_config({{"command", "train"},
                  {"experiment", o.to_json()},
                  {"train", config.to_json()},
                  {"data_dir", dir.string()},
                  {"precision", tf.precision}});
    const auto data = prepare_data(load_dataset(o.dataset, dir), o);
    std::cout << "train " << data.train.data.size() << ", val "
              << (data.val ? data.val->data.size() : 0) << ", test " << data.test->data.size()
              << std::endl;
    const nlohmann::json provenance{{"experiment", o.to_json()}, {"precision", tf.precision}};
    if (tf.precision == "double") {
        run_training<double>(o, data, config, provenance);
    } else {
        run_training<float>(o, data, config, provenance);
    }
    return kOk;
}

template <typename T>
double run_eval(const ExperimentOptions& o, const TestSplit& test, const std::string& weights) {
    auto net = load_weights<T>(experiment_spec(o), weights);
    return evaluate(net, test.data);
}

int cmd_eval(const PresetFlags& pf, const DataFlags& df, const std::string& weights,
             const std::string& precision) {
    auto o = pf.resolve();
    df.apply(o);
    const auto dir = df.dir();
    print_config({{"command", "eval"},
                  {"experiment", o.to_json()},
                  {"weights", weights},
                  {"data_dir", dir.string()},
                  {"precision", precision}});
    const auto data = prepare_data(load_dataset(o.dataset, dir), o);
    const double acc = precision == "double" ? run_eval<double>(o, *data.test, weights)
                                             : run_eval<float>(o, *data.test, weights);
    std::cout << "test_acc " << std::setprecision(17) << acc << std::endl;
    return kOk;
}

int cmd_gradcheck(const PresetFlags& pf, double tolerance, std::size_t samples, std::size_t batch,
                  const std::string& init) {
    const auto o = pf.resolve();
    GradCheckOptions options;
    options.tolerance = tolerance;
    options.samples = samples;
    options.seed = o.seed;
    print_config({{"command", "gradcheck"},
                  {"experiment", o.to_json()},
                  {"tolerance", tolerance},
                  {"samples", samples},
                  {"batch", batch},
                  {"init", init},
                  {"step", options.step}});
    auto net = Network<double>::build(experiment_spec(o), o.seed);
    if (init == "fan-in") fan_in_init(net, o.seed);
    Shape shape{batch};
    shape.insert(shape.end(), net.spec().input.begin(), net.spec().input.end());
    Tensor<double> x(shape);
    std::mt19937_64 rng(o.seed);
    std::uniform_real_distribution<double> pixel(0.0, 1.0);
    for (auto& v : x.data()) v = pixel(rng);
    std::vector<int> labels(batch);
    std::uniform_int_distribution<int> label(0, static_cast<int>(net.spec().classes) - 1);
    for (auto& l : labels) l = label(rng);

    const auto report = grad_check_network(net, x, labels, options);
    std::cout << report.summary();
    return report.passed ? kOk : kCheckFailed;
}

int cmd_params(const PresetFlags& pf) {
    const auto o = pf.resolve();
    const auto spec = experiment_spec(o);
    print_config({{"command", "params"}, {"experiment", o.to_json()}});
    const auto names = layer_names(spec);
    const auto counts = layer_param_counts(spec);
    const auto shapes = trace_shapes(spec);
    std::cout << spec.name << '\n';
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (counts[i] == 0) continue;
        std::cout << std::left << std::setw(8) << names[i] << std::right << std::setw(10)
                  << counts[i] << "  -> " << to_string(shapes[i]) << '\n';
    }
    std::cout << std::left << std::setw(8) << "total" << std::right << std::setw(10)
              << param_count(spec) << std::endl;
    return kOk;
}

int cmd_compare(const PresetFlags& pf, const DataFlags& df, const TrainFlags& tf,
                const std::string& budgets_text, const std::string& out) {
    auto base = pf.resolve();
    df.apply(base);
    std::vector<Filters> budgets;
    {
        std::stringstream ss(budgets_text);
        std::string item;
        while (std::getline(ss, item, ',')) budgets.push_back(parse_filters(item, ':'));
        if (budgets.empty()) throw ConfigError("--budgets needs at least one a:b:c entry");
    }
    const auto dir = df.dir();
    const auto probe_config = tf.resolve(base, out);
    print_config({{"command", "compare"},
                  {"experiment", base.to_json()},
                  {"train", probe_config.to_json()},
                  {"budgets", budgets_text},
                  {"data_dir", dir.string()},
                  {"precision", tf.precision}});
    const auto raw = load_dataset(base.dataset, dir);
    const auto data = prepare_data(raw, base);

    auto make = [&](Arch arch, const Filters& f) {
        auto o = base;
        o.arch = arch;
        o.filters = f;
        return experiment_spec(o);
    };

    struct Row {
        std::size_t baseline_params, maxmin_params;
        double baseline_acc, maxmin_acc;
    };
    std::vector<Row> rows;
    for (const auto& budget : budgets) {
        const Filters matched = matched_maxmin_filters(make, budget);
        const std::size_t base_params = param_count(make(Arch::baseline, budget));
        const std::size_t mm_params = param_count(make(Arch::maxmin, matched));
        std::cout << "budget " << format_filters(budget) << ": baseline " << base_params
                  << " params, maxmin filters " << format_filters(matched) << " with " << mm_params
                  << " params" << std::endl;
        const nlohmann::json provenance{{"budget", format_filters(budget)},
                                        {"baseline_filters", format_filters(budget)},
                                        {"maxmin_filters", format_filters(matched)},
                                        {"baseline_param_count", base_params},
                                        {"maxmin_param_count", mm_params}};
        double acc[2] = {0.0, 0.0};
        for (int k = 0; k < 2; ++k) {
            auto o = base;
            o.arch = k == 0 ? Arch::baseline : Arch::maxmin;
            o.filters = k == 0 ? budget : matched;
            std::filesystem::path run_dir;
            if (!out.empty()) {
                run_dir = std::filesystem::path(out) /
                          (to_string(o.arch) + "_" + std::to_string(base_params));
            }
            const auto config = tf.resolve(o, run_dir);
            const auto test_acc =
                tf.precision == "double" ? run_training<double>(o, data, config, provenance)
                                         : run_training<float>(o, data, config, provenance);
            acc[k] = test_acc.value_or(0.0);
        }
        rows.push_back({base_params, mm_params, acc[0], acc[1]});
    }

    std::ostringstream table;
    table << "baseline_params,maxmin_params,baseline_acc,maxmin_acc\n" << std::setprecision(17);
    for (const auto& r : rows) {
        table << r.baseline_params << ',' << r.maxmin_params << ',' << r.baseline_acc << ','
              << r.maxmin_acc << '\n';
    }
    std::cout << table.str() << std::flush;
    if (!out.empty()) {
        std::filesystem::create_directories(out);
        std::ofstream(std::filesystem::path(out) / "compare.csv") << table.str();
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Baseline and MaxMin convolutional networks on MNIST and CIFAR-10"};
    app.require_subcommand(1);

    PresetFlags train_preset, eval_preset, grad_preset, params_preset, compare_preset;
    DataFlags train_data, eval_data, compare_data;
    TrainFlags train_flags, compare_flags;
    std::string train_out, compare_out, weights, eval_precision = "float", budgets = "16:16:32,32:32:64";
    double tolerance = 1e-4;
    std::size_t samples = 200, batch = 2;
    std::string grad_init = "fan-in";

    auto* train_cmd = app.add_subcommand("train", "train a preset network");
    train_preset.add_to(*train_cmd);
    train_data.add_to(*train_cmd);
    train_flags.add_to(*train_cmd);
    train_cmd->add_option("--out", train_out, "output directory for metrics and checkpoints")
        ->required();

    auto* eval_cmd = app.add_subcommand("eval", "score saved weights on the test set");
    eval_preset.add_to(*eval_cmd);
    eval_data.add_to(*eval_cmd);
    eval_cmd->add_option("--weights", weights, "weight file written by train")->required();
    eval_cmd->add_option("--precision", eval_precision, "float or double")
        ->check(CLI::IsMember({"float", "double"}));

    auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference check of a preset");
    grad_preset.add_to(*grad_cmd);
    grad_cmd->add_option("--tolerance", tolerance, "maximum relative error");
    grad_cmd->add_option("--samples", samples, "entries sampled per parameter tensor");
    grad_cmd->add_option("--batch", batch, "random images in the checked batch");
    grad_cmd->add_option("--init", grad_init, "weights to check at: fan-in or training")
        ->check(CLI::IsMember({"fan-in", "training"}));

    auto* params_cmd = app.add_subcommand("params", "print per-layer parameter counts");
    params_preset.add_to(*params_cmd);

    auto* compare_cmd = app.add_subcommand("compare", "parameter-matched baseline vs maxmin runs");
    compare_preset.dataset = "cifar10";
    compare_preset.add_to(*compare_cmd);
    compare_data.add_to(*compare_cmd);
    compare_flags.add_to(*compare_cmd);
    compare_cmd->add_option("--budgets", budgets,
                            "baseline filter counts per budget, a:b:c entries separated by commas");
    compare_cmd->add_option("--out", compare_out, "output directory for per-run metrics");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfig;
    }

    try {
        if (*train_cmd) return cmd_train(train_preset, train_data, train_flags, train_out);
        if (*eval_cmd) return cmd_eval(eval_preset, eval_data, weights, eval_precision);
        if (*grad_cmd) return cmd_gradcheck(grad_preset, tolerance, samples, batch, grad_init);
        if (*params_cmd) return cmd_params(params_preset);
        if (*compare_cmd) {
            return cmd_compare(compare_preset, compare_data, compare_flags, budgets, compare_out);
        }
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << std::endl;
        return kConfig;
    } catch (const ShapeError& e) {
        std::cerr << "configuration error: " << e.what() << std::endl;
        return kConfig;
    } catch (const DivergenceError& e) {
        std::cerr << "divergence: " << e.what() << std::endl;
        return kDivergence;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return kData;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return kData;
    }
    return kConfig;
}
