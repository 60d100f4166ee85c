#pragma once

// Training loop, evaluation, metrics files and gradient checking.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "maxmin/data.hpp"
#include "maxmin/models.hpp"
#include "maxmin/optim.hpp"

namespace maxmin {

struct TrainConfig {
    std::size_t epochs = 60;
    std::size_t batch_size = 64;
    std::uint64_t seed = 1;
    SgdConfig sgd{};
    double plateau_factor = 0.1;
    int plateau_patience = 3;
    bool augment = false;
    AugmentOptions augment_options{};
    /// Recorded for provenance; whitening itself is applied to the data
    /// before train() is called.
    bool zca = false;
    double zca_epsilon = 0.1;
    double dropout = 0.0;
    /// Write epoch_<k>.weights every k epochs; 0 disables.
    std::size_t checkpoint_every = 0;
    /// Directory for metrics.csv and weight files; empty writes nothing.
    std::filesystem::path out_dir;
    /// When false the test split is only scored after the last epoch.
    bool test_every_epoch = true;

    void validate() const;
    nlohmann::json to_json() const;
};

struct EpochMetrics {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double train_acc = 0.0;
    std::optional<double> val_acc;
    std::optional<double> test_acc;
    double learning_rate = 0.0;
    double seconds = 0.0;
};

inline constexpr const char* kMetricsHeader = "epoch,train_loss,train_acc,val_acc,test_acc,lr,seconds";

/// One CSV row in kMetricsHeader order; missing accuracies are empty fields.
std::string to_csv_row(const EpochMetrics& m);

struct TrainData {
    TrainSplit train;
    std::optional<ValidationSplit> val{};
    std::optional<TestSplit> test{};
};

struct TrainResult {
    std::vector<EpochMetrics> metrics;
    std::optional<std::size_t> best_epoch;  // by validation accuracy
    double best_val_acc = 0.0;
};

/// Trains `net` in place with minibatch SGD. Everything random (shuffling,
/// augmentation, dropout) derives from config.seed and the network's own
/// seed, so identical inputs give bit-identical weights and metrics.
///
/// When out_dir is set, writes metrics.csv (leading '#' lines carry the
/// resolved config and `provenance`, then kMetricsHeader and one row per
/// epoch), best.weights at each new best validation accuracy, periodic
/// epoch_<k>.weights and final.weights.
///
/// Throws DivergenceError naming the epoch and batch on a non-finite loss.
template <typename T>
TrainResult train(Network<T>& net, const TrainData& data, const TrainConfig& config,
                  std::ostream* log = nullptr, const nlohmann::json& provenance = {});

/// Index of the largest logit in each row; ties go to the lowest index.
template <typename T>
std::vector<int> predict(Network<T>& net, const LabeledImages& data, std::size_t batch_size = 256);

/// Top-1 accuracy in eval mode.
template <typename T>
double evaluate(Network<T>& net, const LabeledImages& data, std::size_t batch_size = 256);

/// Mean cross-entropy of the first `count` samples in eval mode.
template <typename T>
double mean_loss(Network<T>& net, const LabeledImages& data, std::size_t count,
                 std::size_t batch_size = 256);

// --- gradient checking ---------------------------------------------------

struct GradCheckOptions {
    double tolerance = 1e-4;
    double step = 1e-5;
    /// Entries sampled per tensor (all entries when the tensor is smaller).
    std::size_t samples = 200;
    std::uint64_t seed = 7;
    /// Gradients small next to the tensor's largest analytic entry g_max are
    /// compared on an absolute scale:
    /// rel = |a - n| / max(|a|, |n|, floor, relative_floor * g_max).
    /// Central differences carry rounding noise of about eps * |loss| / step,
    /// so tiny entries cannot be resolved to a relative tolerance.
    double floor = 1e-7;
    double relative_floor = 1e-3;
    /// An entry sits on a kink when a step of +-step changes the branch
    /// taken by a ReLU or pooling window (see Layer::branch); such entries
    /// are counted but not scored.
    /// The check fails if more than this fraction of entries hit kinks.
    double max_kink_fraction = 0.1;
    std::size_t report_worst = 10;
};

struct GradCheckEntry {
    std::string tensor;
    std::size_t index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_error = 0.0;
};

struct GradCheckTensor {
    std::string name;
    std::size_t checked = 0;
    std::size_t kinks = 0;
    double max_rel_error = 0.0;
};

struct GradCheckReport {
    bool passed = true;
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    std::size_t kinks = 0;
    std::vector<GradCheckTensor> tensors;
    std::vector<GradCheckEntry> worst;  // largest relative errors first
    std::vector<GradCheckEntry> failures;

    std::string summary() const;
};

/// Checks a single layer under the scalar loss sum(r * layer(x)) with a fixed
/// Gaussian r. `before_forward` runs before every forward (e.g. to reseed
/// dropout so each evaluation draws the same mask).
GradCheckReport grad_check_layer(Layer<double>& layer, const Tensor<double>& input,
                                 const GradCheckOptions& options = {}, Mode mode = Mode::eval,
                                 const std::function<void()>& before_forward = {});

/// Checks every parameter tensor and the input of `net` under the softmax
/// cross-entropy of `labels`, in eval mode.
GradCheckReport grad_check_network(Network<double>& net, const Tensor<double>& input,
                                   std::span<const int> labels,
                                   const GradCheckOptions& options = {});

/// Redraws weights as N(0, 2 / fan_in) and biases as N(0, 0.01). At the
/// training init (stddev 0.01) the deep gradients of the presets sit near
/// the finite-difference noise floor, so full-network checks use this scale.
void fan_in_init(Network<double>& net, std::uint64_t seed);

}  // namespace maxmin
