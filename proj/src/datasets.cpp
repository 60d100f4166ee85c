#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>

#include "maxmin/data.hpp"

namespace maxmin {

namespace {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw DataError("cannot open " + path.string());
    return std::string((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
}

std::uint32_t big_endian_u32(const std::string& bytes, std::size_t offset,
                             const std::filesystem::path& path) {
    if (bytes.size() < offset + 4) {
        throw DataError(path.string() + ": truncated IDX header at byte " + std::to_string(offset));
    }
    std::uint32_t v = 0;
    for (std::size_t i = 0; i < 4; ++i) {
        v = (v << 8) | static_cast<unsigned char>(bytes[offset + i]);
    }
    return v;
}

void require_payload(const std::string& bytes, std::size_t header, std::size_t payload,
                     const std::filesystem::path& path) {
    if (bytes.size() < header + payload) {
        throw DataError(path.string() + ": truncated payload, file ends at byte " +
                        std::to_string(bytes.size()) + " but data runs to byte " +
                        std::to_string(header + payload));
    }
}

constexpr std::uint32_t kIdxImages = 2051;
constexpr std::uint32_t kIdxLabels = 2049;
constexpr std::size_t kSide = 32;
constexpr std::size_t kCifarRecord = 1 + 3 * 32 * 32;

}  // namespace

Shape LabeledImages::image_shape() const {
    if (images.rank() != 4) return {};
    return {images.dim(1), images.dim(2), images.dim(3)};
}

LabeledImages load_mnist(const std::filesystem::path& images_path,
                         const std::filesystem::path& labels_path) {
    const std::string image_bytes = read_file(images_path);
    const std::string label_bytes = read_file(labels_path);

    if (auto magic = big_endian_u32(image_bytes, 0, images_path); magic != kIdxImages) {
        throw DataError(images_path.string() + ": bad IDX image magic " + std::to_string(magic));
    }
    if (auto magic = big_endian_u32(label_bytes, 0, labels_path); magic != kIdxLabels) {
        throw DataError(labels_path.string() + ": bad IDX label magic " + std::to_string(magic));
    }
    const std::size_t n = big_endian_u32(image_bytes, 4, images_path);
    const std::size_t rows = big_endian_u32(image_bytes, 8, images_path);
    const std::size_t cols = big_endian_u32(image_bytes, 12, images_path);
    const std::size_t n_labels = big_endian_u32(label_bytes, 4, labels_path);
    if (n != n_labels) {
        throw DataError("MNIST length mismatch: " + std::to_string(n) + " images vs " +
                        std::to_string(n_labels) + " labels");
    }
    if (rows > kSide || cols > kSide) {
        throw DataError(images_path.string() + ": images larger than 32x32");
    }
    require_payload(image_bytes, 16, n * rows * cols, images_path);
    require_payload(label_bytes, 8, n, labels_path);

    const std::size_t top = (kSide - rows) / 2, left = (kSide - cols) / 2;
    LabeledImages out{Tensor<float>({n, 1, kSide, kSide}), std::vector<int>(n)};
    for (std::size_t i = 0; i < n; ++i) {
        const auto* src = reinterpret_cast<const unsigned char*>(image_bytes.data()) + 16 +
                          i * rows * cols;
        for (std::size_t y = 0; y < rows; ++y) {
            for (std::size_t x = 0; x < cols; ++x) {
                out.images.at(i, 0, top + y, left + x) = static_cast<float>(src[y * cols + x]) / 255.0f;
            }
        }
        out.labels[i] = static_cast<unsigned char>(label_bytes[8 + i]);
        if (out.labels[i] > 9) {
            throw DataError(labels_path.string() + ": label " + std::to_string(out.labels[i]) +
                            " out of range at index " + std::to_string(i));
        }
    }
    return out;
}

LabeledImages load_cifar10(const std::vector<std::filesystem::path>& batch_paths) {
    std::vector<std::string> files;
    std::size_t total = 0;
    for (const auto& path : batch_paths) {
        files.push_back(read_file(path));
        if (files.back().size() % kCifarRecord != 0) {
            throw DataError(path.string() + ": size " + std::to_string(files.back().size()) +
                            " is not a multiple of " + std::to_string(kCifarRecord));
        }
        total += files.back().size() / kCifarRecord;
    }
    LabeledImages out{Tensor<float>({total, 3, kSide, kSide}), std::vector<int>(total)};
    std::size_t i = 0;
    for (std::size_t f = 0; f < files.size(); ++f) {
        const auto* bytes = reinterpret_cast<const unsigned char*>(files[f].data());
        const std::size_t records = files[f].size() / kCifarRecord;
        for (std::size_t r = 0; r < records; ++r, ++i) {
            const auto* rec = bytes + r * kCifarRecord;
            if (rec[0] > 9) {
                throw DataError(batch_paths[f].string() + ": label byte " + std::to_string(rec[0]) +
                                " > 9 in record " + std::to_string(r));
            }
            out.labels[i] = rec[0];
            float* dst = out.images.raw() + i * (kCifarRecord - 1);
            for (std::size_t p = 0; p < kCifarRecord - 1; ++p) {
                dst[p] = static_cast<float>(rec[1 + p]) / 255.0f;
            }
        }
    }
    return out;
}

void save_cifar10(const LabeledImages& data, const std::filesystem::path& path) {
    if (data.image_shape() != Shape{3, kSide, kSide}) {
        throw ShapeError("save_cifar10: images must be 3x32x32, got " + to_string(data.images.shape()));
    }
    std::string out;
    out.reserve(data.size() * kCifarRecord);
    for (std::size_t i = 0; i < data.size(); ++i) {
        out.push_back(static_cast<char>(data.labels[i]));
        const float* src = data.images.raw() + i * (kCifarRecord - 1);
        for (std::size_t p = 0; p < kCifarRecord - 1; ++p) {
            const float v = std::clamp(src[p], 0.0f, 1.0f);
            out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0f))));
        }
    }
    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) throw DataError("cannot open " + path.string() + " for writing");
    file.write(out.data(), static_cast<std::streamsize>(out.size()));
}

LabeledImages subset(const LabeledImages& data, std::span<const std::size_t> indices) {
    Shape shape = data.images.shape();
    shape[0] = indices.size();
    const std::size_t stride = data.images.size() / std::max<std::size_t>(data.size(), 1);
    LabeledImages out{Tensor<float>(shape), std::vector<int>(indices.size())};
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= data.size()) throw ShapeError("subset: index out of range");
        std::copy_n(data.images.raw() + indices[i] * stride, stride, out.images.raw() + i * stride);
        out.labels[i] = data.labels[indices[i]];
    }
    return out;
}

LabeledImages head(const LabeledImages& data, std::size_t count) {
    count = std::min(count, data.size());
    std::vector<std::size_t> idx(count);
    for (std::size_t i = 0; i < count; ++i) idx[i] = i;
    return subset(data, idx);
}

template <typename T>
Tensor<T> gather_images(const LabeledImages& data, std::span<const std::size_t> indices) {
    Shape shape = data.images.shape();
    shape[0] = indices.size();
    const std::size_t stride = data.images.size() / std::max<std::size_t>(data.size(), 1);
    Tensor<T> out(shape);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const float* src = data.images.raw() + indices[i] * stride;
        std::transform(src, src + stride, out.raw() + i * stride,
                       [](float v) { return static_cast<T>(v); });
    }
    return out;
}

std::vector<int> gather_labels(const LabeledImages& data, std::span<const std::size_t> indices) {
    std::vector<int> out(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) out[i] = data.labels.at(indices[i]);
    return out;
}

template Tensor<float> gather_images(const LabeledImages&, std::span<const std::size_t>);
template Tensor<double> gather_images(const LabeledImages&, std::span<const std::size_t>);

}  // namespace maxmin
