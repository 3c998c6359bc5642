#include "synkpar/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace synkpar {

namespace {

constexpr std::uint8_t kFormatVersion = 1;
constexpr char kMagic[4] = {'S', 'Y', 'N', 'K'};

void put_u64_le(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64_le(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

} // namespace

std::vector<std::uint8_t> tensor_to_bytes(const NdBuffer& buf) {
    std::vector<std::uint8_t> out;
    out.reserve(8 + buf.rank() * 8 + buf.byte_size());
    out.insert(out.end(), {std::uint8_t(kMagic[0]), std::uint8_t(kMagic[1]),
                           std::uint8_t(kMagic[2]), std::uint8_t(kMagic[3])});
    out.push_back(kFormatVersion);
    out.push_back(static_cast<std::uint8_t>(buf.dtype()));
    if (buf.rank() > 255) throw IoError("tensor rank exceeds format limit");
    out.push_back(static_cast<std::uint8_t>(buf.rank()));
    out.push_back(0); // pad header to 8 bytes
    for (std::size_t e : buf.shape()) put_u64_le(out, e);

    // Elements are written little-endian one by one so the file is portable.
    std::size_t n = buf.size();
    if (buf.dtype() == DType::Float32) {
        auto vals = buf.as<float>();
        for (std::size_t i = 0; i < n; ++i) {
            std::uint32_t bits = std::bit_cast<std::uint32_t>(vals[i]);
            for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
        }
    } else {
        auto vals = buf.as<double>();
        for (std::size_t i = 0; i < n; ++i) {
            std::uint64_t bits = std::bit_cast<std::uint64_t>(vals[i]);
            for (int b = 0; b < 8; ++b) out.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
        }
    }
    return out;
}

NdBuffer tensor_from_bytes(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 8) throw IoError("tensor file truncated: header incomplete");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw IoError("tensor file has wrong magic (expected SYNK)");
    }
    if (bytes[4] != kFormatVersion) {
        throw IoError("tensor file version " + std::to_string(bytes[4]) + " unsupported");
    }
    std::uint8_t dtc = bytes[5];
    if (dtc != 1 && dtc != 2) {
        throw IoError("tensor file dtype code " + std::to_string(dtc) + " unknown");
    }
    DType dt = static_cast<DType>(dtc);
    std::size_t rank = bytes[6];
    if (bytes.size() < 8 + rank * 8) throw IoError("tensor file truncated: extents incomplete");

    std::vector<std::size_t> shape(rank);
    for (std::size_t i = 0; i < rank; ++i) {
        shape[i] = static_cast<std::size_t>(get_u64_le(bytes.data() + 8 + i * 8));
    }
    std::size_t n = element_count(shape);
    std::size_t payload_at = 8 + rank * 8;
    std::size_t payload_bytes = n * dtype_size(dt);
    if (bytes.size() < payload_at + payload_bytes) {
        throw IoError("tensor file truncated: payload incomplete");
    }

    NdBuffer out = NdBuffer::zeros(std::move(shape), dt);
    const std::uint8_t* p = bytes.data() + payload_at;
    if (dt == DType::Float32) {
        auto vals = out.as_mut<float>();
        for (std::size_t i = 0; i < n; ++i) {
            std::uint32_t bits = 0;
            for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(p[i * 4 + b]) << (8 * b);
            vals[i] = std::bit_cast<float>(bits);
        }
    } else {
        auto vals = out.as_mut<double>();
        for (std::size_t i = 0; i < n; ++i) {
            vals[i] = std::bit_cast<double>(get_u64_le(p + i * 8));
        }
    }
    return out;
}

void save_tensor(std::ostream& out, const NdBuffer& buf) {
    std::vector<std::uint8_t> bytes = tensor_to_bytes(buf);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("tensor write failed");
}

void save_tensor(const std::string& path, const NdBuffer& buf) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path + " for writing");
    save_tensor(f, buf);
}

NdBuffer load_tensor(std::istream& in) {
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return tensor_from_bytes(bytes);
}

NdBuffer load_tensor(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path + " for reading");
    return load_tensor(f);
}

} // namespace synkpar
