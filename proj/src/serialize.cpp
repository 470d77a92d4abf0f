#include "tempbev/serialize.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace tempbev::io {

namespace {

constexpr char kMagic[4] = {'T', 'B', 'T', 'C'};

template <typename T>
void write_pod(std::ofstream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& is, const std::string& path, const std::string& what) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw std::runtime_error(path + ": truncated while reading " + what);
    return v;
}

}  // namespace

void TensorFile::put(const std::string& name, Tensor t, DType dt) {
    auto it = index_.find(name);
    if (it != index_.end()) {
        entries_[it->second].second = {std::move(t), dt};
        return;
    }
    index_[name] = entries_.size();
    entries_.emplace_back(name, NamedTensor{std::move(t), dt});
}

bool TensorFile::has(const std::string& name) const { return index_.count(name) > 0; }

const Tensor& TensorFile::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("tensor file has no array: " + name);
    return entries_[it->second].second.tensor;
}

DType TensorFile::dtype(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("tensor file has no array: " + name);
    return entries_[it->second].second.dtype;
}

void TensorFile::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open for write: " + path);
    os.write(kMagic, 4);
    write_pod<std::uint32_t>(os, kFormatVersion);
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(entries_.size()));
    for (const auto& [name, nt] : entries_) {
        write_pod<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_pod<std::uint8_t>(os, static_cast<std::uint8_t>(nt.dtype));
        write_pod<std::uint8_t>(os, static_cast<std::uint8_t>(nt.tensor.ndim()));
        for (int d : nt.tensor.shape()) write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(d));
        const Tensor& t = nt.tensor;
        switch (nt.dtype) {
            case DType::f64:
                os.write(reinterpret_cast<const char*>(t.data()),
                         static_cast<std::streamsize>(t.numel() * 8));
                break;
            case DType::f32:
                for (std::int64_t i = 0; i < t.numel(); ++i)
                    write_pod<float>(os, static_cast<float>(t[i]));
                break;
            case DType::i32:
                for (std::int64_t i = 0; i < t.numel(); ++i)
                    write_pod<std::int32_t>(os, static_cast<std::int32_t>(t[i]));
                break;
            case DType::u8:
                for (std::int64_t i = 0; i < t.numel(); ++i)
                    write_pod<std::uint8_t>(os, static_cast<std::uint8_t>(t[i]));
                break;
        }
    }
    if (!os) throw std::runtime_error("write failed: " + path);
}

TensorFile TensorFile::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error(path + ": not a tensor container (bad magic)");
    const auto version = read_pod<std::uint32_t>(is, path, "version");
    if (version > kFormatVersion)
        throw std::runtime_error(path + ": format version " + std::to_string(version) +
                                 " is newer than supported " +
                                 std::to_string(kFormatVersion) +
                                 "; upgrade this tool to read it");
    const auto count = read_pod<std::uint32_t>(is, path, "array count");
    TensorFile tf;
    for (std::uint32_t a = 0; a < count; ++a) {
        const auto name_len = read_pod<std::uint16_t>(is, path, "name length");
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        if (!is) throw std::runtime_error(path + ": truncated while reading array name");
        const auto dt = static_cast<DType>(read_pod<std::uint8_t>(is, path, name));
        const auto ndim = read_pod<std::uint8_t>(is, path, name);
        std::vector<int> shape(ndim);
        for (auto& d : shape) d = static_cast<int>(read_pod<std::uint32_t>(is, path, name));
        Tensor t(shape);
        const std::int64_t n = t.numel();
        switch (dt) {
            case DType::f64:
                is.read(reinterpret_cast<char*>(t.data()),
                        static_cast<std::streamsize>(n * 8));
                break;
            case DType::f32:
                for (std::int64_t i = 0; i < n; ++i)
                    t[i] = read_pod<float>(is, path, name);
                break;
            case DType::i32:
                for (std::int64_t i = 0; i < n; ++i)
                    t[i] = read_pod<std::int32_t>(is, path, name);
                break;
            case DType::u8:
                for (std::int64_t i = 0; i < n; ++i)
                    t[i] = read_pod<std::uint8_t>(is, path, name);
                break;
            default:
                throw std::runtime_error(path + ": unknown element type in array " + name);
        }
        if (!is) throw std::runtime_error(path + ": truncated in array " + name);
        tf.put(name, std::move(t), dt);
    }
    return tf;
}

}  // namespace tempbev::io
