#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "maxmin/data.hpp"

namespace maxmin {

std::vector<std::size_t> split_permutation(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    for (std::size_t i = n; i > 1; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i - 1);
        std::swap(order[i - 1], order[pick(rng)]);
    }
    return order;
}

std::pair<TrainSplit, ValidationSplit> split_train_val(const LabeledImages& data,
                                                       double val_fraction, std::uint64_t seed) {
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
        throw ConfigError("validation fraction must lie in (0, 1)");
    }
    const auto order = split_permutation(data.size(), seed);
    const auto n_val = static_cast<std::size_t>(std::llround(data.size() * val_fraction));
    const std::size_t n_train = data.size() - n_val;
    std::span<const std::size_t> all(order);
    return {TrainSplit{subset(data, all.first(n_train))},
            ValidationSplit{subset(data, all.subspan(n_train))}};
}

Tensor<float> translate(const Tensor<float>& batch, int dy, int dx) {
    if (batch.rank() != 4) throw ShapeError("translate: expected NCHW, got " + to_string(batch.shape()));
    const long h = static_cast<long>(batch.dim(2)), w = static_cast<long>(batch.dim(3));
    const std::size_t planes = batch.dim(0) * batch.dim(1);
    Tensor<float> out(batch.shape());
    for (std::size_t p = 0; p < planes; ++p) {
        const float* src = batch.raw() + p * h * w;
        float* dst = out.raw() + p * h * w;
        for (long y = 0; y < h; ++y) {
            const long sy = y - dy;
            if (sy < 0 || sy >= h) continue;
            for (long x = 0; x < w; ++x) {
                const long sx = x - dx;
                if (sx >= 0 && sx < w) dst[y * w + x] = src[sy * w + sx];
            }
        }
    }
    return out;
}

Tensor<float> flip_horizontal(const Tensor<float>& batch) {
    if (batch.rank() != 4) throw ShapeError("flip: expected NCHW, got " + to_string(batch.shape()));
    const std::size_t w = batch.dim(3), rows = batch.size() / w;
    Tensor<float> out(batch.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        std::reverse_copy(batch.raw() + r * w, batch.raw() + (r + 1) * w, out.raw() + r * w);
    }
    return out;
}

Tensor<float> augment(const Tensor<float>& batch, std::mt19937_64& rng,
                      const AugmentOptions& options) {
    if (batch.rank() != 4) throw ShapeError("augment: expected NCHW, got " + to_string(batch.shape()));
    const std::size_t n = batch.dim(0);
    const Shape one{1, batch.dim(1), batch.dim(2), batch.dim(3)};
    const std::size_t stride = shape_size(one);
    std::uniform_int_distribution<int> shift(-options.max_translate, options.max_translate);
    std::bernoulli_distribution coin(0.5);
    Tensor<float> out(batch.shape());
    for (std::size_t i = 0; i < n; ++i) {
        Tensor<float> image(one, std::vector<float>(batch.raw() + i * stride,
                                                    batch.raw() + (i + 1) * stride));
        if (options.max_translate > 0) {
            const int dy = shift(rng);
            const int dx = shift(rng);
            image = translate(image, dy, dx);
        }
        if (options.hflip && coin(rng)) image = flip_horizontal(image);
        std::copy_n(image.raw(), stride, out.raw() + i * stride);
    }
    return out;
}

ZcaTransform ZcaTransform::fit(const TrainSplit& train, double epsilon) {
    if (!(epsilon > 0.0)) throw ConfigError("zca: epsilon must be positive");
    const auto& images = train.data.images;
    const std::size_t n = train.data.size();
    if (n < 2) throw DataError("zca: need at least two training images");
    const std::size_t d = images.size() / n;

    Eigen::MatrixXd x(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) x(j, i) = images[i * d + j];
    }
    const Eigen::VectorXd mean = x.rowwise().mean();
    x.colwise() -= mean;
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(x.rows(), x.rows());
    cov.selfadjointView<Eigen::Lower>().rankUpdate(x, 1.0 / static_cast<double>(n - 1));
    cov = cov.selfadjointView<Eigen::Lower>();
    if (cov.trace() <= 1e-12 * static_cast<double>(d)) {
        throw DataError("zca: degenerate covariance, training images carry no variation");
    }

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    if (eig.info() != Eigen::Success) throw DataError("zca: eigendecomposition failed");
    const Eigen::VectorXd lambda = eig.eigenvalues().cwiseMax(0.0);
    const Eigen::VectorXd inv_sqrt = (lambda.array() + epsilon).rsqrt();
    Eigen::MatrixXd w = eig.eigenvectors() * inv_sqrt.asDiagonal() * eig.eigenvectors().transpose();
    w = 0.5 * (w + w.transpose());

    ZcaTransform t;
    t.epsilon_ = epsilon;
    t.mean_.assign(mean.data(), mean.data() + mean.size());
    t.eigenvalues_.assign(eig.eigenvalues().data(), eig.eigenvalues().data() + d);
    t.matrix_.resize(d * d);
    for (std::size_t r = 0; r < d; ++r) {
        for (std::size_t c = 0; c < d; ++c) {
            t.matrix_[r * d + c] = w(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
        }
    }
    return t;
}

Tensor<float> ZcaTransform::apply(const Tensor<float>& images) const {
    const std::size_t d = mean_.size();
    if (images.rank() != 4 || images.size() % d != 0 || images.size() / images.dim(0) != d) {
        throw ShapeError("zca: images " + to_string(images.shape()) + " do not have dimension " +
                         std::to_string(d));
    }
    const std::size_t n = images.dim(0);
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> w(
        matrix_.data(), static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    Eigen::Map<const Eigen::VectorXd> mean(mean_.data(), static_cast<Eigen::Index>(d));
    Tensor<float> out(images.shape());
    constexpr std::size_t kChunk = 512;
    for (std::size_t i0 = 0; i0 < n; i0 += kChunk) {
        const std::size_t m = std::min(kChunk, n - i0);
        Eigen::MatrixXd x(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(m));
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < d; ++j) x(j, i) = images[(i0 + i) * d + j];
        }
        x.colwise() -= mean;
        const Eigen::MatrixXd y = w * x;
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < d; ++j) {
                out[(i0 + i) * d + j] =
                    static_cast<float>(y(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)));
            }
        }
    }
    return out;
}

LabeledImages ZcaTransform::apply(const LabeledImages& data) const {
    return {apply(data.images), data.labels};
}

}  // namespace maxmin
