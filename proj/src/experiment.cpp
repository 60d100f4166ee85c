#include "maxmin/experiment.hpp"

#include <cstdlib>

namespace maxmin {

std::string to_string(DatasetKind kind) { return kind == DatasetKind::mnist ? "mnist" : "cifar10"; }

DatasetKind parse_dataset(const std::string& text) {
    if (text == "mnist") return DatasetKind::mnist;
    if (text == "cifar10") return DatasetKind::cifar10;
    throw ConfigError("unknown dataset '" + text + "' (expected mnist or cifar10)");
}

std::filesystem::path resolve_data_dir(const std::optional<std::filesystem::path>& explicit_dir) {
    if (explicit_dir) return *explicit_dir;
    if (const char* env = std::getenv("DATA_DIR"); env && *env) return env;
    return "data";
}

std::string fetch_instructions(DatasetKind kind, const std::filesystem::path& data_dir) {
    if (kind == DatasetKind::mnist) {
        return "expected MNIST IDX files train-images-idx3-ubyte, train-labels-idx1-ubyte, "
               "t10k-images-idx3-ubyte, t10k-labels-idx1-ubyte in " +
               (data_dir / "mnist").string() +
               " (download the four .gz files from the MNIST site and gunzip them there; "
               "set --data-dir or DATA_DIR to point elsewhere)";
    }
    return "expected CIFAR-10 binary batches data_batch_1.bin .. data_batch_5.bin and "
           "test_batch.bin in " +
           (data_dir / "cifar-10-batches-bin").string() +
           " (download cifar-10-binary.tar.gz from the CIFAR-10 site and extract it into " +
           data_dir.string() + "; set --data-dir or DATA_DIR to point elsewhere)";
}

namespace {

std::filesystem::path find_dir(const std::filesystem::path& root, const std::string& sub,
                               const std::string& probe) {
    if (std::filesystem::exists(root / sub / probe)) return root / sub;
    return root;
}

void require_files(const std::vector<std::filesystem::path>& files, DatasetKind kind,
                   const std::filesystem::path& data_dir) {
    for (const auto& f : files) {
        if (!std::filesystem::exists(f)) {
            throw DataError("missing " + f.string() + "; " + fetch_instructions(kind, data_dir));
        }
    }
}

}  // namespace

RawDataset load_dataset(DatasetKind kind, const std::filesystem::path& data_dir) {
    if (kind == DatasetKind::mnist) {
        const auto dir = find_dir(data_dir, "mnist", "train-images-idx3-ubyte");
        const std::vector<std::filesystem::path> files{
            dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte",
            dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte"};
        require_files(files, kind, data_dir);
        return {load_mnist(files[0], files[1]), load_mnist(files[2], files[3])};
    }
    const auto dir = find_dir(data_dir, "cifar-10-batches-bin", "test_batch.bin");
    std::vector<std::filesystem::path> train_files;
    for (int i = 1; i <= 5; ++i) train_files.push_back(dir / ("data_batch_" + std::to_string(i) + ".bin"));
    const std::vector<std::filesystem::path> test_files{dir / "test_batch.bin"};
    require_files(train_files, kind, data_dir);
    require_files(test_files, kind, data_dir);
    return {load_cifar10(train_files), load_cifar10(test_files)};
}

void ExperimentOptions::validate() const {
    for (auto f : filters) {
        if (f == 0) throw ConfigError("--filters entries must be positive");
    }
    if (boost && dataset != DatasetKind::cifar10) {
        throw ConfigError("--boost applies to cifar10 only");
    }
    if (!(zca_epsilon > 0.0)) throw ConfigError("zca epsilon must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
    if (hidden == 0) throw ConfigError("hidden width must be positive");
}

nlohmann::json ExperimentOptions::to_json() const {
    return {{"dataset", to_string(dataset)},
            {"arch", to_string(arch)},
            {"filters", filters},
            {"boost", boost},
            {"val_size", val_size},
            {"train_limit", train_limit},
            {"test_limit", test_limit},
            {"seed", seed},
            {"zca_epsilon", zca_epsilon},
            {"dropout", dropout},
            {"hidden", hidden}};
}

NetworkSpec experiment_spec(const ExperimentOptions& options) {
    options.validate();
    if (options.dataset == DatasetKind::mnist) return mnist_spec(options.arch, options.filters);
    return cifar_spec(options.arch, options.filters, {options.boost, options.hidden, options.dropout});
}

TrainData prepare_data(const RawDataset& raw, const ExperimentOptions& options) {
    options.validate();
    if (options.val_size >= raw.train.size()) {
        throw ConfigError("validation size " + std::to_string(options.val_size) +
                          " leaves no training images");
    }
    TrainData data;
    if (options.val_size > 0) {
        const double fraction =
            static_cast<double>(options.val_size) / static_cast<double>(raw.train.size());
        auto [train, val] = split_train_val(raw.train, fraction, options.seed);
        data.train = std::move(train);
        data.val = std::move(val);
    } else {
        data.train.data = raw.train;
    }
    if (options.train_limit) data.train.data = head(data.train.data, options.train_limit);
    data.test = TestSplit{options.test_limit ? head(raw.test, options.test_limit) : raw.test};

    if (options.boost) {
        const auto zca = zca_fit(data.train, options.zca_epsilon);
        data.train.data = zca.apply(data.train.data);
        if (data.val) data.val->data = zca.apply(data.val->data);
        data.test->data = zca.apply(data.test->data);
    }
    return data;
}

TrainConfig default_train_config(const ExperimentOptions& options) {
    TrainConfig config;
    const bool mnist = options.dataset == DatasetKind::mnist;
    config.epochs = mnist ? 250 : 60;
    config.batch_size = 64;
    config.seed = options.seed;
    config.sgd = {0.01, 0.9, mnist ? 1e-3 : 1e-4};
    config.augment = options.boost;
    config.augment_options.hflip = !mnist;
    config.zca = options.boost;
    config.zca_epsilon = options.zca_epsilon;
    config.dropout = options.boost ? options.dropout : 0.0;
    return config;
}

}  // namespace maxmin
