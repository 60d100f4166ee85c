#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "maxmin/models.hpp"

namespace maxmin {

namespace {

constexpr char kMagic[8] = {'M', 'A', 'X', 'M', 'I', 'N', '0', '1'};

static_assert(std::endian::native == std::endian::little,
              "weight files are little-endian; big-endian hosts need byte swapping");

template <typename V>
void put(std::string& out, V value) {
    char bytes[sizeof(V)];
    std::memcpy(bytes, &value, sizeof(V));
    out.append(bytes, sizeof(V));
}

class Reader {
public:
    Reader(const std::string& bytes, const std::filesystem::path& path)
        : bytes_(bytes), path_(path) {}

    template <typename V>
    V get(const char* what) {
        if (bytes_.size() - pos_ < sizeof(V)) {
            throw FormatError(path_.string() + ": truncated while reading " + what + " at byte " +
                              std::to_string(pos_));
        }
        V value;
        std::memcpy(&value, bytes_.data() + pos_, sizeof(V));
        pos_ += sizeof(V);
        return value;
    }

    bool at_end() const { return pos_ == bytes_.size(); }
    std::size_t position() const { return pos_; }

private:
    const std::string& bytes_;
    const std::filesystem::path& path_;
    std::size_t pos_ = 0;
};

}  // namespace

template <typename T>
void save_weights(Network<T>& net, const std::filesystem::path& path) {
    std::string out(kMagic, sizeof(kMagic));
    put<std::uint64_t>(out, net.spec().hash());
    for (auto* p : net.parameters()) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(p->value.rank()));
        for (auto d : p->value.shape()) put<std::uint64_t>(out, d);
        for (T v : p->value.data()) put<double>(out, static_cast<double>(v));
    }
    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) throw FormatError("cannot open " + path.string() + " for writing");
    file.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!file) throw FormatError("failed writing " + path.string());
}

template <typename T>
Network<T> load_weights(const NetworkSpec& spec, const std::filesystem::path& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw FormatError("cannot open weight file " + path.string());
    const std::string bytes((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());

    Reader in(bytes, path);
    char magic[8];
    for (char& c : magic) c = in.get<char>("magic");
    if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw FormatError(path.string() + ": not a weight file (bad magic)");
    }
    const auto hash = in.get<std::uint64_t>("spec hash");
    if (hash != spec.hash()) {
        throw FormatError(path.string() + ": spec hash mismatch, file was written for a different "
                                          "architecture than " + spec.name);
    }

    auto net = Network<T>::build(spec, 0);
    const auto names = net.parameter_names();
    auto params = net.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& value = params[i]->value;
        const auto rank = in.get<std::uint32_t>("rank");
        Shape shape(rank);
        for (auto& d : shape) d = static_cast<std::size_t>(in.get<std::uint64_t>("dims"));
        if (shape != value.shape()) {
            throw FormatError(path.string() + ": " + names[i] + " has shape " + to_string(shape) +
                              ", expected " + to_string(value.shape()));
        }
        for (auto& v : value.data()) v = static_cast<T>(in.get<double>("values"));
    }
    if (!in.at_end()) {
        throw FormatError(path.string() + ": unexpected trailing bytes at offset " +
                          std::to_string(in.position()));
    }
    return net;
}

template void save_weights(Network<float>&, const std::filesystem::path&);
template void save_weights(Network<double>&, const std::filesystem::path&);
template Network<float> load_weights(const NetworkSpec&, const std::filesystem::path&);
template Network<double> load_weights(const NetworkSpec&, const std::filesystem::path&);

}  // namespace maxmin
