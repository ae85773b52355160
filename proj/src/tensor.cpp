#include "mg/tensor.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace mg {

template class BasicTensor<float>;
template class BasicTensor<double>;

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ']';
    return os.str();
}

template <class T>
bool BasicTensor<T>::all_finite() const {
    for (T v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

namespace {

constexpr char kMagic[4] = {'M', 'G', 'T', '1'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
           std::uint32_t(p[3]) << 24;
}

}  // namespace

std::vector<std::uint8_t> encode_tensor(const Tensor& t) {
    std::vector<std::uint8_t> out;
    out.reserve(8 + 4 * t.rank() + 4 * t.size());
    out.insert(out.end(), kMagic, kMagic + 4);
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (float v : t.values()) put_u32(out, std::bit_cast<std::uint32_t>(v));
    return out;
}

Tensor decode_tensor(std::span<const std::uint8_t> bytes, const std::string& context) {
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw FormatError(context + ": bad magic (expected MGT1)");
    const std::uint32_t rank = get_u32(bytes.data() + 4);
    const std::size_t header = 8 + std::size_t{4} * rank;
    if (bytes.size() < header) throw FormatError(context + ": truncated header");
    Shape shape(rank);
    for (std::uint32_t i = 0; i < rank; ++i) shape[i] = get_u32(bytes.data() + 8 + 4 * i);
    const std::size_t n = shape_numel(shape);
    if (bytes.size() - header != 4 * n)
        throw FormatError(context + ": payload holds " + std::to_string((bytes.size() - header) / 4) +
                          " floats, shape " + shape_str(shape) + " declares " + std::to_string(n));
    std::vector<float> data(n);
    for (std::size_t i = 0; i < n; ++i) {
        data[i] = std::bit_cast<float>(get_u32(bytes.data() + header + 4 * i));
        if (!std::isfinite(data[i]))
            throw DataError(context + ": non-finite value at element " + std::to_string(i));
    }
    return Tensor(std::move(shape), std::move(data));
}

void save_tensor(const Tensor& t, const std::filesystem::path& path) {
    const auto bytes = encode_tensor(t);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + path.string() + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("write failed for " + path.string());
}

Tensor load_tensor(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode_tensor(bytes, path.string());
}

}  // namespace mg
