#pragma once

#include <cstdlib>
#include <filesystem>
#include <random>

#include "maxmin/models.hpp"

namespace maxmin::test {

template <typename T = double>
Tensor<T> random_tensor(const Shape& shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(lo, hi);
    Tensor<T> t(shape);
    for (auto& v : t.data()) v = static_cast<T>(dist(rng));
    return t;
}

// Dataset root used by data-dependent tests: $DATA_DIR, else the directory
// configured at build time.
inline std::filesystem::path data_dir() {
    if (const char* env = std::getenv("DATA_DIR"); env && *env) return env;
    return MAXMIN_TEST_DATA_DIR;
}

inline bool have_mnist() {
    const auto root = data_dir();
    return std::filesystem::exists(root / "mnist" / "train-labels-idx1-ubyte") ||
           std::filesystem::exists(root / "train-labels-idx1-ubyte");
}

// Scratch directory removed at scope exit.
struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& tag) {
        path = std::filesystem::temp_directory_path() /
               ("maxmin_" + tag + "_" + std::to_string(std::random_device{}()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
};

// Gives `mm` the weights of `base` on the original half and zero on every
// weight that reads the negated half. Both nets must come from the same
// preset family with equal filter counts.
template <typename T>
void pair_with_baseline(Network<T>& base, Network<T>& mm) {
    auto pb = base.parameters();
    auto pm = mm.parameters();
    if (pb.size() != pm.size()) throw ShapeError("paired nets differ in parameter count");
    for (std::size_t i = 0; i < pb.size(); ++i) {
        const auto& vb = pb[i]->value;
        auto& vm = pm[i]->value;
        if (vb.shape() == vm.shape()) {
            vm = vb;
            continue;
        }
        const std::size_t rows = vb.dim(0);
        const std::size_t nb = vb.size() / rows, nm = vm.size() / rows;
        if (vm.dim(0) != rows || nm != 2 * nb) throw ShapeError("paired tensors do not pair");
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < nm; ++j) vm[r * nm + j] = j < nb ? vb[r * nb + j] : T{0};
    }
}

}  // namespace maxmin::test
