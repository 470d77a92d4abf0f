#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "tempbev/tensor.hpp"

namespace tempbev::io {

// Named-array container: magic "TBTC", little-endian, shape + element-type
// header per array. Elements are f64, f32, i32 or u8; everything surfaces as
// double-valued Tensor on load, with the stored dtype kept for round-trips.
enum class DType : std::uint8_t { f64 = 0, f32 = 1, i32 = 2, u8 = 3 };

struct NamedTensor {
    Tensor tensor;
    DType dtype = DType::f64;
};

class TensorFile {
public:
    void put(const std::string& name, Tensor t, DType dt = DType::f64);
    bool has(const std::string& name) const;
    const Tensor& get(const std::string& name) const;
    DType dtype(const std::string& name) const;
    const std::vector<std::pair<std::string, NamedTensor>>& entries() const {
        return entries_;
    }

    // Throws std::runtime_error naming the file (and array, when known) on
    // magic/version mismatch or truncation.
    void save(const std::string& path) const;
    static TensorFile load(const std::string& path);

    static constexpr std::uint32_t kFormatVersion = 1;

private:
    std::vector<std::pair<std::string, NamedTensor>> entries_;
    std::map<std::string, std::size_t> index_;
};

}  // namespace tempbev::io
