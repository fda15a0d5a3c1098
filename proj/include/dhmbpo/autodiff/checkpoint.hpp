#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dhmbpo/autodiff/tensor.hpp"

namespace dhmbpo::ad {

enum class DType : std::uint8_t { f64 = 0, f32 = 1 };

struct ArchiveRecord {
    Shape shape;
    DType dtype = DType::f64;
    std::vector<double> values;  // widened on load regardless of stored dtype
};

// Flat named-tensor container; the byte layout is given in docs/formats.md.
class TensorArchive {
public:
    void put(const std::string& name, const Shape& shape, std::span<const Scalar> values);
    void put(const std::string& name, const Tensor& tensor) { put(name, tensor.shape(), tensor.values()); }
    void put_scalar(const std::string& name, double value);

    bool contains(const std::string& name) const { return records_.count(name) != 0; }
    const ArchiveRecord& get(const std::string& name) const;
    double get_scalar(const std::string& name) const;
    // Copies a record into `out` after checking the shape.
    void read_into(const std::string& name, const Shape& shape, std::span<Scalar> out) const;

    const std::map<std::string, ArchiveRecord>& records() const { return records_; }

    void write(const std::filesystem::path& path) const;
    static TensorArchive read(const std::filesystem::path& path);

private:
    std::map<std::string, ArchiveRecord> records_;
};

}  // namespace dhmbpo::ad
