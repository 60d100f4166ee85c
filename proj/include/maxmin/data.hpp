#pragma once

// Dataset ingestion (MNIST IDX, CIFAR-10 binary), deterministic splits,
// augmentation and ZCA whitening.

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "maxmin/tensor.hpp"

namespace maxmin {

/// Images [N,C,H,W] with pixels scaled to [0,1] and one label per image.
struct LabeledImages {
    Tensor<float> images;
    std::vector<int> labels;

    std::size_t size() const { return labels.size(); }
    Shape image_shape() const;  // C, H, W
};

/// Reads an IDX image file (magic 2051) and label file (magic 2049).
/// Images are zero-padded symmetrically to 32x32 and divided by 255.
LabeledImages load_mnist(const std::filesystem::path& images_path,
                         const std::filesystem::path& labels_path);

/// Reads CIFAR-10 binary batches: each record is one label byte followed by
/// 3072 pixel bytes, the red, green and blue 32x32 planes in order.
LabeledImages load_cifar10(const std::vector<std::filesystem::path>& batch_paths);

/// Writes `data` in the CIFAR-10 record layout (pixels rounded back to bytes).
void save_cifar10(const LabeledImages& data, const std::filesystem::path& path);

/// Copies of the images/labels at `indices`, in that order.
LabeledImages subset(const LabeledImages& data, std::span<const std::size_t> indices);

/// First `count` samples.
LabeledImages head(const LabeledImages& data, std::size_t count);

/// Images at `indices` converted to T as a batch [indices.size(), C, H, W].
template <typename T>
Tensor<T> gather_images(const LabeledImages& data, std::span<const std::size_t> indices);

std::vector<int> gather_labels(const LabeledImages& data, std::span<const std::size_t> indices);

enum class Role { train, validation, test };

/// A dataset tagged with the role it plays. Fitting preprocessing only
/// accepts Role::train, so evaluation data cannot leak into it.
template <Role R>
struct Split {
    LabeledImages data;
};

using TrainSplit = Split<Role::train>;
using ValidationSplit = Split<Role::validation>;
using TestSplit = Split<Role::test>;

/// Shuffles indices with a generator seeded by `seed` and holds out
/// round(N * val_fraction) of them. Both halves keep the shuffled order.
std::pair<TrainSplit, ValidationSplit> split_train_val(const LabeledImages& data,
                                                       double val_fraction, std::uint64_t seed);

/// Indices kept by split_train_val, for inspection: first the train part,
/// then the validation part.
std::vector<std::size_t> split_permutation(std::size_t n, std::uint64_t seed);

struct AugmentOptions {
    int max_translate = 4;
    bool hflip = true;
};

/// Shifts every image by (dy, dx) pixels with zero fill.
Tensor<float> translate(const Tensor<float>& batch, int dy, int dx);

/// Mirrors every image left to right.
Tensor<float> flip_horizontal(const Tensor<float>& batch);

/// Per image: a uniform integer shift in [-max_translate, max_translate]^2,
/// then a horizontal flip with probability 1/2 when enabled.
Tensor<float> augment(const Tensor<float>& batch, std::mt19937_64& rng,
                      const AugmentOptions& options = {});

/// ZCA whitening x -> W (x - mean) with W = U (Lambda + eps I)^(-1/2) U^T from
/// the eigendecomposition of the training covariance.
class ZcaTransform {
public:
    static ZcaTransform fit(const TrainSplit& train, double epsilon = 0.1);

    Tensor<float> apply(const Tensor<float>& images) const;
    LabeledImages apply(const LabeledImages& data) const;

    std::size_t dimension() const { return mean_.size(); }
    double epsilon() const { return epsilon_; }
    const std::vector<double>& mean() const { return mean_; }
    /// Row-major D x D whitening matrix.
    const std::vector<double>& matrix() const { return matrix_; }
    /// Covariance eigenvalues in ascending order.
    const std::vector<double>& eigenvalues() const { return eigenvalues_; }

private:
    ZcaTransform() = default;

    double epsilon_ = 0.0;
    std::vector<double> mean_;
    std::vector<double> matrix_;
    std::vector<double> eigenvalues_;
};

inline ZcaTransform zca_fit(const TrainSplit& train, double epsilon = 0.1) {
    return ZcaTransform::fit(train, epsilon);
}

}  // namespace maxmin
