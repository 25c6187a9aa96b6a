#include "regionlm/tensor_io.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace regionlm {

namespace {

constexpr char kTensorMagic[8] = {'R', 'L', 'T', 'E', 'N', 'S', 'R', '1'};
constexpr char kWeightMagic[8] = {'R', 'L', 'W', 'E', 'G', 'H', 'T', '1'};

void write_u64(std::ostream& os, uint64_t v) {
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(buf), 8);
}

uint64_t read_u64(std::istream& is) {
    unsigned char buf[8];
    is.read(reinterpret_cast<char*>(buf), 8);
    if (!is) throw std::runtime_error("tensor container: truncated integer");
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf[i]) << (8 * i);
    return v;
}

void write_f64(std::ostream& os, double d) {
    uint64_t bits;
    std::memcpy(&bits, &d, 8);
    write_u64(os, bits);
}

double read_f64(std::istream& is) {
    const uint64_t bits = read_u64(is);
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
}

}  // namespace

void write_tensor(std::ostream& os, const Tensor& t) {
    os.write(kTensorMagic, 8);
    write_u64(os, static_cast<uint64_t>(t.rank()));
    for (int64_t i = 0; i < t.rank(); ++i) write_u64(os, static_cast<uint64_t>(t.dim(i)));
    for (int64_t i = 0; i < t.numel(); ++i) write_f64(os, t[i]);
}

Tensor read_tensor(std::istream& is) {
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kTensorMagic, 8) != 0) {
        throw std::runtime_error("tensor container: bad magic");
    }
    const uint64_t rank = read_u64(is);
    if (rank > 16) throw std::runtime_error("tensor container: implausible rank");
    std::vector<int64_t> shape(rank);
    int64_t numel = 1;
    for (uint64_t i = 0; i < rank; ++i) {
        shape[i] = static_cast<int64_t>(read_u64(is));
        numel *= shape[i];
    }
    std::vector<double> data(static_cast<size_t>(numel));
    for (int64_t i = 0; i < numel; ++i) data[static_cast<size_t>(i)] = read_f64(is);
    return Tensor(std::move(shape), std::move(data));
}

void save_tensor(const std::string& path, const Tensor& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    write_tensor(os, t);
    if (!os) throw std::runtime_error("write failed: " + path);
}

Tensor load_tensor(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open: " + path);
    return read_tensor(is);
}

void save_weights(const std::string& path, const WeightMap& weights) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os.write(kWeightMagic, 8);
    write_u64(os, weights.size());
    for (const auto& [name, tensor] : weights) {
        write_u64(os, name.size());
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_tensor(os, tensor);
    }
    if (!os) throw std::runtime_error("write failed: " + path);
}

WeightMap load_weights(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open: " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kWeightMagic, 8) != 0) {
        throw std::runtime_error("weight bundle: bad magic in " + path);
    }
    const uint64_t count = read_u64(is);
    WeightMap weights;
    for (uint64_t i = 0; i < count; ++i) {
        const uint64_t len = read_u64(is);
        std::string name(len, '\0');
        is.read(name.data(), static_cast<std::streamsize>(len));
        if (!is) throw std::runtime_error("weight bundle: truncated name in " + path);
        weights.emplace(std::move(name), read_tensor(is));
    }
    return weights;
}

}  // namespace regionlm
