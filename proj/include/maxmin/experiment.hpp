#pragma once

// Glue shared by the CLI and the acceptance suite: locating datasets on
// disk, building the train/validation/test splits for a preset, and the
// per-dataset training defaults.

#include <filesystem>
#include <optional>
#include <string>

#include "maxmin/train.hpp"

namespace maxmin {

enum class DatasetKind { mnist, cifar10 };

std::string to_string(DatasetKind kind);
DatasetKind parse_dataset(const std::string& text);

/// The explicit directory if given, else $DATA_DIR, else "./data".
std::filesystem::path resolve_data_dir(const std::optional<std::filesystem::path>& explicit_dir);

/// Where each dataset is expected below the data directory, plus how to
/// fetch it. Used in DataError messages.
std::string fetch_instructions(DatasetKind kind, const std::filesystem::path& data_dir);

struct RawDataset {
    LabeledImages train;
    LabeledImages test;
};

/// MNIST: <dir>/mnist/{train,t10k}-{images-idx3,labels-idx1}-ubyte (or the
/// same names directly in <dir>). CIFAR-10: <dir>/cifar-10-batches-bin/
/// data_batch_{1..5}.bin and test_batch.bin (or directly in <dir>).
RawDataset load_dataset(DatasetKind kind, const std::filesystem::path& data_dir);

struct ExperimentOptions {
    DatasetKind dataset = DatasetKind::mnist;
    Arch arch = Arch::baseline;
    Filters filters = kMnistFilters;
    bool boost = false;  // CIFAR-10 only: augmentation, ZCA, dropout, per-pool LRN
    std::size_t val_size = 5000;
    std::size_t train_limit = 0;  // 0 keeps the whole training split
    std::size_t test_limit = 0;   // 0 keeps the whole test set
    std::uint64_t seed = 1;
    double zca_epsilon = 0.1;
    double dropout = 0.5;
    std::size_t hidden = 64;

    void validate() const;
    nlohmann::json to_json() const;
};

NetworkSpec experiment_spec(const ExperimentOptions& options);

/// Holds out val_size training images (seeded split), applies the limits,
/// and for boosted CIFAR-10 fits ZCA on the training split and applies it to
/// all three.
TrainData prepare_data(const RawDataset& raw, const ExperimentOptions& options);

/// Defaults per dataset: MNIST 250 epochs with weight decay 1e-3, CIFAR-10
/// 60 epochs with 1e-4; momentum 0.9, lr 0.01, batch 64. Boosted runs turn
/// on augmentation (horizontal flips only for CIFAR-10).
TrainConfig default_train_config(const ExperimentOptions& options);

}  // namespace maxmin
