#include "decfd/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <limits>

#include "decfd/errors.hpp"

namespace decfd::nn {

namespace {

constexpr char kMagic[4] = {'D', 'C', 'F', 'D'};

template <typename T>
void put_le(std::string& out, T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
}

template <typename T>
T get_le(const std::string& buf, std::size_t& pos) {
    if (pos + sizeof(T) > buf.size()) throw CheckpointError("checkpoint: truncated file");
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        v |= static_cast<T>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    }
    pos += sizeof(T);
    return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path,
                     const std::vector<NamedTensor>& tensors) {
    std::string buf;
    buf.append(kMagic, 4);
    put_le<std::uint32_t>(buf, kCheckpointVersion);
    put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(tensors.size()));
    for (const NamedTensor& nt : tensors) {
        if (nt.name.size() > std::numeric_limits<std::uint16_t>::max()) {
            throw CheckpointError("checkpoint: tensor name too long: " + nt.name);
        }
        put_le<std::uint16_t>(buf, static_cast<std::uint16_t>(nt.name.size()));
        buf.append(nt.name);
        const auto& shape = nt.tensor.shape();
        buf.push_back(static_cast<char>(shape.size()));
        for (std::size_t d : shape) put_le<std::uint64_t>(buf, d);
        buf.push_back(static_cast<char>(nt.dtype));
        const double* data = nt.tensor.data();
        if (nt.dtype == Dtype::f64) {
            for (std::size_t i = 0; i < nt.tensor.size(); ++i) {
                std::uint64_t bits;
                std::memcpy(&bits, &data[i], 8);
                put_le<std::uint64_t>(buf, bits);
            }
        } else {
            for (std::size_t i = 0; i < nt.tensor.size(); ++i) {
                const float f = static_cast<float>(data[i]);
                std::uint32_t bits;
                std::memcpy(&bits, &f, 4);
                put_le<std::uint32_t>(buf, bits);
            }
        }
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("checkpoint: cannot open for writing: " + path.string());
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw CheckpointError("checkpoint: write failed: " + path.string());
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("checkpoint: cannot open: " + path.string());
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    std::size_t pos = 0;
    if (buf.size() < 4 || std::memcmp(buf.data(), kMagic, 4) != 0) {
        throw CheckpointError("checkpoint: bad magic in " + path.string());
    }
    pos = 4;
    const auto version = get_le<std::uint32_t>(buf, pos);
    if (version != kCheckpointVersion) {
        throw CheckpointError("checkpoint: unsupported format version " +
                              std::to_string(version));
    }
    const auto count = get_le<std::uint32_t>(buf, pos);
    std::vector<NamedTensor> tensors;
    tensors.reserve(count);
    for (std::uint32_t t = 0; t < count; ++t) {
        const auto name_len = get_le<std::uint16_t>(buf, pos);
        if (pos + name_len > buf.size()) throw CheckpointError("checkpoint: truncated name");
        std::string name(buf, pos, name_len);
        pos += name_len;
        const auto rank = get_le<std::uint8_t>(buf, pos);
        std::vector<std::size_t> shape(rank);
        for (auto& d : shape) d = static_cast<std::size_t>(get_le<std::uint64_t>(buf, pos));
        const auto dtype_tag = get_le<std::uint8_t>(buf, pos);
        if (dtype_tag > 1) throw CheckpointError("checkpoint: unknown dtype tag");
        const Dtype dtype = static_cast<Dtype>(dtype_tag);
        Tensor tensor(shape);
        if (dtype == Dtype::f64) {
            for (std::size_t i = 0; i < tensor.size(); ++i) {
                const auto bits = get_le<std::uint64_t>(buf, pos);
                double v;
                std::memcpy(&v, &bits, 8);
                tensor[i] = v;
            }
        } else {
            for (std::size_t i = 0; i < tensor.size(); ++i) {
                const auto bits = get_le<std::uint32_t>(buf, pos);
                float v;
                std::memcpy(&v, &bits, 4);
                tensor[i] = static_cast<double>(v);
            }
        }
        tensors.push_back(NamedTensor{std::move(name), std::move(tensor), dtype});
    }
    if (pos != buf.size()) throw CheckpointError("checkpoint: trailing bytes in " + path.string());
    return tensors;
}

}  // namespace decfd::nn
