#pragma once

#include <string>
#include <vector>

#include "maxmin/layers.hpp"

namespace maxmin {

struct SgdConfig {
    double learning_rate = 0.01;
    double momentum = 0.9;
    double weight_decay = 0.0;
};

/// SGD with momentum and L2 weight decay:
///   v <- momentum * v - lr * (g + weight_decay * p)
///   p <- p + v
/// Velocities start at zero and mirror the parameter shapes.
template <typename T>
class Sgd {
public:
    explicit Sgd(SgdConfig config);

    /// Applies one update to every parameter. Throws DivergenceError naming
    /// the parameter if any gradient is non-finite (parameters untouched).
    void step(const std::vector<Parameter<T>*>& params,
              const std::vector<std::string>& names = {});

    const SgdConfig& config() const { return config_; }
    double learning_rate() const { return config_.learning_rate; }
    void set_learning_rate(double lr);
    const std::vector<Tensor<T>>& velocities() const { return velocity_; }

private:
    SgdConfig config_;
    std::vector<Tensor<T>> velocity_;
};

/// Learning-rate reduction on a validation plateau: the rate is multiplied by
/// `factor` once the best accuracy seen so far has gone `patience`
/// consecutive evaluations without strictly improving; the counter restarts
/// after each reduction.
class PlateauSchedule {
public:
    PlateauSchedule(double factor = 0.1, int patience = 3);

    /// Records one validation accuracy and returns the (possibly reduced) rate.
    double observe(double accuracy, double learning_rate);

    int stale_evaluations() const { return stale_; }
    double best() const { return best_; }

private:
    double factor_;
    int patience_;
    double best_ = -1.0;
    int stale_ = 0;
};

/// Replays a whole accuracy history from `initial_lr`.
double plateau_schedule(const std::vector<double>& history, double initial_lr, int patience,
                        double factor);

}  // namespace maxmin
