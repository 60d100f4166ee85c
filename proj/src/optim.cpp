#include "maxmin/optim.hpp"

#include <cmath>

namespace maxmin {

template <typename T>
Sgd<T>::Sgd(SgdConfig config) : config_(config) {
    if (!(config.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
    if (!(config.momentum >= 0.0 && config.momentum < 1.0)) {
        throw ConfigError("momentum must lie in [0, 1)");
    }
    if (!(config.weight_decay >= 0.0)) throw ConfigError("weight decay must be non-negative");
}

template <typename T>
void Sgd<T>::set_learning_rate(double lr) {
    if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
    config_.learning_rate = lr;
}

template <typename T>
void Sgd<T>::step(const std::vector<Parameter<T>*>& params, const std::vector<std::string>& names) {
    if (velocity_.empty()) {
        for (auto* p : params) velocity_.emplace_back(p->value.shape());
    }
    if (velocity_.size() != params.size()) {
        throw ShapeError("sgd: parameter list changed size between steps");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& p = *params[i];
        const std::string name = i < names.size() ? names[i] : "parameter " + std::to_string(i);
        if (p.grad.shape() != p.value.shape() || velocity_[i].shape() != p.value.shape()) {
            throw ShapeError("sgd: shape mismatch for " + name);
        }
        for (T g : p.grad.data()) {
            if (!std::isfinite(g)) throw DivergenceError("sgd: non-finite gradient in " + name);
        }
    }
    const T lr = static_cast<T>(config_.learning_rate);
    const T momentum = static_cast<T>(config_.momentum);
    const T decay = static_cast<T>(config_.weight_decay);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto value = params[i]->value.data();
        auto grad = params[i]->grad.data();
        auto v = velocity_[i].data();
        for (std::size_t j = 0; j < value.size(); ++j) {
            v[j] = momentum * v[j] - lr * (grad[j] + decay * value[j]);
            value[j] += v[j];
        }
    }
}

PlateauSchedule::PlateauSchedule(double factor, int patience) : factor_(factor), patience_(patience) {
    if (!(factor > 0.0 && factor < 1.0)) throw ConfigError("plateau factor must lie in (0, 1)");
    if (patience < 1) throw ConfigError("plateau patience must be at least 1");
}

double PlateauSchedule::observe(double accuracy, double learning_rate) {
    if (accuracy > best_) {
        best_ = accuracy;
        stale_ = 0;
        return learning_rate;
    }
    if (++stale_ >= patience_) {
        stale_ = 0;
        return learning_rate * factor_;
    }
    return learning_rate;
}

double plateau_schedule(const std::vector<double>& history, double initial_lr, int patience,
                        double factor) {
    PlateauSchedule schedule(factor, patience);
    double lr = initial_lr;
    for (double acc : history) lr = schedule.observe(acc, lr);
    return lr;
}

template class Sgd<float>;
template class Sgd<double>;

}  // namespace maxmin
