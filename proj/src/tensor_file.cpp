// SPDX-License-Identifier: Apache-2.0
#include "segrefine/tensor_file.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <stdexcept>
#include <string>

namespace segrefine {

namespace {

constexpr std::uint8_t kMagic[4] = {'G', '4', 'T', 'N'};
constexpr std::size_t kHeaderSize = 8;

// Little-endian store; returns the next write position.
std::uint8_t* store_u32(std::uint8_t* p, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) *p++ = static_cast<std::uint8_t>(v >> (8 * i));
    return p;
}

std::uint32_t get_u32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

[[noreturn]] void fail(const std::string& what) {
    throw std::runtime_error("tensor file: " + what);
}

}  // namespace

std::size_t Tensor::element_count() const {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
}

Tensor read_tensor_file(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kHeaderSize) fail("truncated header");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) fail("bad magic");
    if (bytes[4] != kTensorFileVersion) fail("unsupported version " + std::to_string(bytes[4]));
    const std::size_t rank = bytes[5];
    if (rank > kTensorFileMaxRank) fail("rank " + std::to_string(rank) + " > 8");
    if (bytes[6] != 0 || bytes[7] != 0) fail("reserved bytes not zero");
    if (bytes.size() < kHeaderSize + 4 * rank) fail("truncated dims");

    Tensor t;
    t.dims.resize(rank);
    // Guard the product against overflow before trusting it as a size.
    unsigned __int128 count = 1;
    for (std::size_t i = 0; i < rank; ++i) {
        t.dims[i] = get_u32(bytes.data() + kHeaderSize + 4 * i);
        count *= t.dims[i];
    }
    const std::size_t payload_offset = kHeaderSize + 4 * rank;
    const std::size_t available = bytes.size() - payload_offset;
    if (count * 4 > available) fail("truncated payload");
    if (count * 4 < available) fail("trailing bytes after payload");

    const auto n = static_cast<std::size_t>(count);
    t.data.resize(n);
    const std::uint8_t* p = bytes.data() + payload_offset;
    for (std::size_t i = 0; i < n; ++i) t.data[i] = std::bit_cast<float>(get_u32(p + 4 * i));
    return t;
}

std::vector<std::uint8_t> write_tensor_file(const Tensor& tensor) {
    if (tensor.rank() > kTensorFileMaxRank) {
        throw std::invalid_argument("tensor file: rank " + std::to_string(tensor.rank()) + " > 8");
    }
    if (tensor.element_count() != tensor.data.size()) {
        throw std::invalid_argument("tensor file: payload length mismatch with dims");
    }
    std::vector<std::uint8_t> out(kHeaderSize + 4 * tensor.rank() + 4 * tensor.data.size(), 0);
    std::copy(std::begin(kMagic), std::end(kMagic), out.begin());
    out[4] = kTensorFileVersion;
    out[5] = static_cast<std::uint8_t>(tensor.rank());
    std::uint8_t* p = out.data() + kHeaderSize;
    for (auto d : tensor.dims) p = store_u32(p, d);
    for (float v : tensor.data) p = store_u32(p, std::bit_cast<std::uint32_t>(v));
    return out;
}

Tensor load_tensor(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    try {
        return read_tensor_file(bytes);
    } catch (const std::runtime_error& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
}

void save_tensor(const std::filesystem::path& path, const Tensor& tensor) {
    const auto bytes = write_tensor_file(tensor);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Tensor to_tensor(const ImageTensor& img) {
    Tensor t;
    t.dims = {static_cast<std::uint32_t>(img.height()), static_cast<std::uint32_t>(img.width()),
              static_cast<std::uint32_t>(img.channels())};
    t.data.assign(img.data().begin(), img.data().end());
    return t;
}

Tensor to_tensor(const SoftMask& mask) {
    Tensor t;
    t.dims = {static_cast<std::uint32_t>(mask.height()), static_cast<std::uint32_t>(mask.width())};
    t.data.assign(mask.values().begin(), mask.values().end());
    return t;
}

ImageTensor image_from_tensor(const Tensor& t) {
    if (t.rank() != 2 && t.rank() != 3) {
        throw std::invalid_argument("image tensor must have rank 2 or 3, got " + std::to_string(t.rank()));
    }
    const std::size_t c = t.rank() == 3 ? t.dims[2] : 1;
    return ImageTensor(t.dims[0], t.dims[1], c, std::vector<double>(t.data.begin(), t.data.end()));
}

SoftMask soft_mask_from_tensor(const Tensor& t) {
    if (t.rank() != 2 && !(t.rank() == 3 && t.dims[2] == 1)) {
        throw std::invalid_argument("soft mask tensor must be [H, W] or [H, W, 1]");
    }
    return SoftMask(t.dims[0], t.dims[1], t.data);
}

}  // namespace segrefine
