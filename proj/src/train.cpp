#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>

#include "maxmin/train.hpp"

namespace maxmin {

void TrainConfig::validate() const {
    if (batch_size == 0) throw ConfigError("batch size must be positive");
    if (!(sgd.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
    if (!(sgd.momentum >= 0.0 && sgd.momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
    if (!(sgd.weight_decay >= 0.0)) throw ConfigError("weight decay must be non-negative");
    if (!(plateau_factor > 0.0 && plateau_factor < 1.0)) {
        throw ConfigError("plateau factor must lie in (0, 1)");
    }
    if (plateau_patience < 1) throw ConfigError("plateau patience must be at least 1");
    if (augment_options.max_translate < 0) throw ConfigError("max translation must be non-negative");
    if (!(zca_epsilon > 0.0)) throw ConfigError("zca epsilon must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
}

nlohmann::json TrainConfig::to_json() const {
    return {
        {"epochs", epochs},
        {"batch_size", batch_size},
        {"seed", seed},
        {"learning_rate", sgd.learning_rate},
        {"momentum", sgd.momentum},
        {"weight_decay", sgd.weight_decay},
        {"plateau_factor", plateau_factor},
        {"plateau_patience", plateau_patience},
        {"augment", augment},
        {"max_translate", augment_options.max_translate},
        {"hflip", augment_options.hflip},
        {"zca", zca},
        {"zca_epsilon", zca_epsilon},
        {"dropout", dropout},
        {"checkpoint_every", checkpoint_every},
        {"out_dir", out_dir.string()},
        {"test_every_epoch", test_every_epoch},
    };
}

std::string to_csv_row(const EpochMetrics& m) {
    std::ostringstream os;
    os << std::setprecision(17);
    os << m.epoch << ',' << m.train_loss << ',' << m.train_acc << ',';
    if (m.val_acc) os << *m.val_acc;
    os << ',';
    if (m.test_acc) os << *m.test_acc;
    os << ',' << m.learning_rate << ',' << std::setprecision(6) << m.seconds;
    return os.str();
}

namespace {

template <typename T>
std::size_t argmax_row(const T* row, std::size_t k) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j) {
        if (row[j] > row[best]) best = j;
    }
    return best;
}

std::vector<std::size_t> iota_indices(std::size_t begin, std::size_t end) {
    std::vector<std::size_t> idx(end - begin);
    std::iota(idx.begin(), idx.end(), begin);
    return idx;
}

}  // namespace

template <typename T>
std::vector<int> predict(Network<T>& net, const LabeledImages& data, std::size_t batch_size) {
    std::vector<int> out;
    out.reserve(data.size());
    for (std::size_t b = 0; b < data.size(); b += batch_size) {
        const auto idx = iota_indices(b, std::min(data.size(), b + batch_size));
        const auto logits = net.forward(gather_images<T>(data, idx), Mode::eval);
        const std::size_t k = logits.dim(1);
        for (std::size_t i = 0; i < idx.size(); ++i) {
            out.push_back(static_cast<int>(argmax_row(logits.raw() + i * k, k)));
        }
    }
    return out;
}

template <typename T>
double evaluate(Network<T>& net, const LabeledImages& data, std::size_t batch_size) {
    if (data.size() == 0) return 0.0;
    const auto predictions = predict(net, data, batch_size);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) correct += predictions[i] == data.labels[i];
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

template <typename T>
double mean_loss(Network<T>& net, const LabeledImages& data, std::size_t count,
                 std::size_t batch_size) {
    count = std::min(count, data.size());
    if (count == 0) return 0.0;
    SoftmaxCrossEntropy<T> loss;
    double total = 0.0;
    for (std::size_t b = 0; b < count; b += batch_size) {
        const auto idx = iota_indices(b, std::min(count, b + batch_size));
        const auto logits = net.forward(gather_images<T>(data, idx), Mode::eval);
        const auto labels = gather_labels(data, idx);
        total += static_cast<double>(loss.forward(logits, labels)) * static_cast<double>(idx.size());
    }
    return total / static_cast<double>(count);
}

template <typename T>
TrainResult train(Network<T>& net, const TrainData& data, const TrainConfig& config,
                  std::ostream* log, const nlohmann::json& provenance) {
    config.validate();
    if (data.train.data.image_shape() != net.spec().input) {
        throw ShapeError("training images " + to_string(data.train.data.image_shape()) +
                         " do not match network input " + to_string(net.spec().input));
    }

    std::ofstream metrics_file;
    const bool writes = !config.out_dir.empty();
    if (writes) {
        std::filesystem::create_directories(config.out_dir);
        metrics_file.open(config.out_dir / "metrics.csv", std::ios::trunc);
        if (!metrics_file) throw DataError("cannot write " + (config.out_dir / "metrics.csv").string());
        metrics_file << "# config: " << config.to_json().dump() << '\n';
        metrics_file << "# network: " << nlohmann::json{{"spec", net.spec().name},
                                                          {"param_count", net.param_count()},
                                                          {"spec_hash", net.spec().hash()},
                                                          {"init_seed", net.seed()}}
                                             .dump()
                     << '\n';
        if (!provenance.is_null()) metrics_file << "# provenance: " << provenance.dump() << '\n';
        metrics_file << kMetricsHeader << '\n' << std::flush;
    }

    TrainResult result;
    Sgd<T> sgd(config.sgd);
    PlateauSchedule schedule(config.plateau_factor, config.plateau_patience);
    SoftmaxCrossEntropy<T> loss_fn;
    std::mt19937_64 rng(config.seed);
    const auto params = net.parameters();
    const auto names = net.parameter_names();
    const auto& train_set = data.train.data;
    const std::size_t n = train_set.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        const auto start = std::chrono::steady_clock::now();
        for (std::size_t i = n; i > 1; --i) {
            std::uniform_int_distribution<std::size_t> pick(0, i - 1);
            std::swap(order[i - 1], order[pick(rng)]);
        }
        double loss_sum = 0.0;
        std::size_t correct = 0;
        std::size_t batch_index = 0;
        for (std::size_t b = 0; b < n; b += config.batch_size, ++batch_index) {
            std::span<const std::size_t> idx(order.data() + b, std::min(config.batch_size, n - b));
            Tensor<T> x;
            if (config.augment) {
                x = augment(gather_images<float>(train_set, idx), rng, config.augment_options)
                        .template cast<T>();
            } else {
                x = gather_images<T>(train_set, idx);
            }
            const auto labels = gather_labels(train_set, idx);

            net.zero_grad();
            const auto logits = net.forward(x, Mode::train);
            const T loss = loss_fn.forward(logits, labels);
            if (!std::isfinite(loss)) {
                throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) +
                                      ", batch " + std::to_string(batch_index));
            }
            net.backward(loss_fn.backward());
            try {
                sgd.step(params, names);
            } catch (const DivergenceError& e) {
                throw DivergenceError(std::string(e.what()) + " at epoch " + std::to_string(epoch) +
                                      ", batch " + std::to_string(batch_index));
            }
            loss_sum += static_cast<double>(loss) * static_cast<double>(idx.size());
            const std::size_t k = logits.dim(1);
            for (std::size_t i = 0; i < idx.size(); ++i) {
                correct += static_cast<int>(argmax_row(logits.raw() + i * k, k)) == labels[i];
            }
        }

        EpochMetrics m;
        m.epoch = epoch;
        m.train_loss = n ? loss_sum / static_cast<double>(n) : 0.0;
        m.train_acc = n ? static_cast<double>(correct) / static_cast<double>(n) : 0.0;
        m.learning_rate = sgd.learning_rate();
        if (data.val) m.val_acc = evaluate(net, data.val->data);
        if (data.test && (config.test_every_epoch || epoch == config.epochs)) {
            m.test_acc = evaluate(net, data.test->data);
        }
        m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        result.metrics.push_back(m);

        if (m.val_acc && (!result.best_epoch || *m.val_acc > result.best_val_acc)) {
            result.best_epoch = epoch;
            result.best_val_acc = *m.val_acc;
            if (writes) save_weights(net, config.out_dir / "best.weights");
        }
        if (writes) {
            metrics_file << to_csv_row(m) << '\n' << std::flush;
            if (config.checkpoint_every && epoch % config.checkpoint_every == 0) {
                save_weights(net, config.out_dir / ("epoch_" + std::to_string(epoch) + ".weights"));
            }
        }
        if (log) {
            *log << "epoch " << epoch << " loss " << m.train_loss << " train_acc " << m.train_acc;
            if (m.val_acc) *log << " val_acc " << *m.val_acc;
            if (m.test_acc) *log << " test_acc " << *m.test_acc;
            *log << " lr " << m.learning_rate << " (" << m.seconds << "s)\n" << std::flush;
        }
        // the schedule follows validation accuracy, or training accuracy without one
        const double tracked = m.val_acc ? *m.val_acc : m.train_acc;
        sgd.set_learning_rate(schedule.observe(tracked, sgd.learning_rate()));
    }
    if (writes) save_weights(net, config.out_dir / "final.weights");
    return result;
}

template TrainResult train(Network<float>&, const TrainData&, const TrainConfig&, std::ostream*,
                           const nlohmann::json&);
template TrainResult train(Network<double>&, const TrainData&, const TrainConfig&, std::ostream*,
                           const nlohmann::json&);
template std::vector<int> predict(Network<float>&, const LabeledImages&, std::size_t);
template std::vector<int> predict(Network<double>&, const LabeledImages&, std::size_t);
template double evaluate(Network<float>&, const LabeledImages&, std::size_t);
template double evaluate(Network<double>&, const LabeledImages&, std::size_t);
template double mean_loss(Network<float>&, const LabeledImages&, std::size_t, std::size_t);
template double mean_loss(Network<double>&, const LabeledImages&, std::size_t, std::size_t);

}  // namespace maxmin
