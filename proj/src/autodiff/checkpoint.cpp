#include "dhmbpo/autodiff/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "dhmbpo/core/error.hpp"

namespace dhmbpo::ad {

namespace {

constexpr std::array<char, 8> kMagic{'D', 'H', 'M', 'B', 'P', 'O', 'T', '1'};

constexpr DType native_dtype() { return sizeof(Scalar) == 8 ? DType::f64 : DType::f32; }

void put_u64(std::ostream& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u32(std::ostream& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_uint(std::istream& in, int bytes) {
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) {
        const int c = in.get();
        if (c == EOF) throw IoError("tensor archive: truncated file");
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
    }
    return v;
}

}  // namespace

void TensorArchive::put(const std::string& name, const Shape& shape, std::span<const Scalar> values) {
    require(element_count(shape) == values.size(), "tensor archive: shape/value mismatch for '" + name + "'");
    ArchiveRecord rec;
    rec.shape = shape;
    rec.dtype = native_dtype();
    rec.values.assign(values.begin(), values.end());
    records_[name] = std::move(rec);
}

void TensorArchive::put_scalar(const std::string& name, double value) {
    ArchiveRecord rec;
    rec.dtype = DType::f64;
    rec.values = {value};
    records_[name] = std::move(rec);
}

const ArchiveRecord& TensorArchive::get(const std::string& name) const {
    auto it = records_.find(name);
    if (it == records_.end()) throw IoError("tensor archive: missing entry '" + name + "'");
    return it->second;
}

double TensorArchive::get_scalar(const std::string& name) const {
    const auto& rec = get(name);
    if (rec.values.size() != 1) throw IoError("tensor archive: '" + name + "' is not a scalar");
    return rec.values[0];
}

void TensorArchive::read_into(const std::string& name, const Shape& shape, std::span<Scalar> out) const {
    const auto& rec = get(name);
    if (rec.shape != shape)
        throw IoError("tensor archive: '" + name + "' has shape " + shape_string(rec.shape) + ", expected " +
                      shape_string(shape));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<Scalar>(rec.values[i]);
}

void TensorArchive::write(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("tensor archive: cannot open '" + path.string() + "' for writing");
    out.write(kMagic.data(), kMagic.size());
    put_u32(out, static_cast<std::uint32_t>(records_.size()));
    for (const auto& [name, rec] : records_) {
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        out.put(static_cast<char>(rec.dtype));
        put_u32(out, static_cast<std::uint32_t>(rec.shape.size()));
        for (std::size_t d : rec.shape) put_u64(out, d);
        put_u64(out, rec.values.size());
        for (double v : rec.values) {
            if (rec.dtype == DType::f64)
                put_u64(out, std::bit_cast<std::uint64_t>(v));
            else
                put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
        }
    }
    if (!out) throw IoError("tensor archive: write failed for '" + path.string() + "'");
}

TensorArchive TensorArchive::read(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("tensor archive: cannot open '" + path.string() + "'");
    std::array<char, 8> magic{};
    in.read(magic.data(), magic.size());
    if (!in || magic != kMagic) throw IoError("tensor archive: bad magic in '" + path.string() + "'");
    TensorArchive archive;
    const auto count = get_uint(in, 4);
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto name_len = get_uint(in, 4);
        std::string name(name_len, '\0');
        in.read(name.data(), static_cast<std::streamsize>(name_len));
        ArchiveRecord rec;
        const auto dtype = get_uint(in, 1);
        if (dtype > 1) throw IoError("tensor archive: unknown dtype for '" + name + "'");
        rec.dtype = static_cast<DType>(dtype);
        const auto rank = get_uint(in, 4);
        for (std::uint64_t r = 0; r < rank; ++r) rec.shape.push_back(get_uint(in, 8));
        const auto n = get_uint(in, 8);
        if (n != element_count(rec.shape)) throw IoError("tensor archive: element count mismatch for '" + name + "'");
        rec.values.resize(n);
        for (auto& v : rec.values) {
            if (rec.dtype == DType::f64)
                v = std::bit_cast<double>(get_uint(in, 8));
            else
                v = std::bit_cast<float>(static_cast<std::uint32_t>(get_uint(in, 4)));
        }
        archive.records_[name] = std::move(rec);
    }
    return archive;
}

}  // namespace dhmbpo::ad
