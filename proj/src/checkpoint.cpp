#include "aduw/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "aduw/io.hpp"

namespace aduw {

namespace {

constexpr char kMagic[5] = {'A', 'D', 'U', 'W', '1'};

void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw std::runtime_error("checkpoint: truncated file");
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void put_f32(std::ostream& os, float f) {
    uint32_t v;
    std::memcpy(&v, &f, 4);
    put_u32(os, v);
}

float get_f32(std::istream& is) {
    uint32_t v = get_u32(is);
    float f;
    std::memcpy(&f, &v, 4);
    return f;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& params) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("checkpoint: cannot open for write: " + path);
    os.write(kMagic, 5);
    for (const NamedTensor& p : params) {
        put_u32(os, static_cast<uint32_t>(p.name.size()));
        os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        put_u32(os, static_cast<uint32_t>(p.tensor.ndim()));
        for (int d : p.tensor.shape()) put_u32(os, static_cast<uint32_t>(d));
        for (float f : p.tensor.data()) put_f32(os, f);
    }
    if (!os) throw std::runtime_error("checkpoint: write failed: " + path);
}

std::vector<NamedTensor> load_checkpoint(const std::string& path) {
    std::ifstream is = open_input(path, std::ios::binary);
    char magic[5];
    is.read(magic, 5);
    if (!is || std::memcmp(magic, kMagic, 5) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);
    std::vector<NamedTensor> params;
    while (true) {
        is.peek();
        if (is.eof()) break;
        uint32_t name_len = get_u32(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        uint32_t rank = get_u32(is);
        std::vector<int> shape(rank);
        int64_t numel = 1;
        for (uint32_t i = 0; i < rank; ++i) {
            shape[i] = static_cast<int>(get_u32(is));
            numel *= shape[i];
        }
        std::vector<float> data(static_cast<size_t>(numel));
        for (int64_t i = 0; i < numel; ++i) data[static_cast<size_t>(i)] = get_f32(is);
        if (!is) throw std::runtime_error("checkpoint: truncated file: " + path);
        params.push_back({std::move(name), Tensor::from_data(std::move(shape), std::move(data))});
    }
    return params;
}

}  // namespace aduw
