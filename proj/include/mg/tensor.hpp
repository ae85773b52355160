#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "mg/error.hpp"

namespace mg {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& s);

// Dense row-major array with an explicit shape. Storage is float for the
// public Tensor; the double instantiation is used where the network engine
// runs in f64 accumulation mode.
template <class T>
class BasicTensor {
public:
    using value_type = T;

    BasicTensor() = default;
    explicit BasicTensor(Shape shape, T fill = T{0})
        : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}
    BasicTensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (shape_numel(shape_) != data_.size())
            throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_str(shape_));
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    T* data() noexcept { return data_.data(); }
    const T* data() const noexcept { return data_.data(); }
    std::span<T> values() noexcept { return data_; }
    std::span<const T> values() const noexcept { return data_; }
    std::vector<T>& storage() noexcept { return data_; }
    const std::vector<T>& storage() const noexcept { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    // 2-D convenience accessors.
    T& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
    const T& at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

    BasicTensor reshaped(Shape s) const {
        if (shape_numel(s) != data_.size())
            throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(s));
        return BasicTensor(std::move(s), data_);
    }

    // Row block [begin, end) along the leading dimension.
    BasicTensor rows(std::size_t begin, std::size_t end) const {
        const std::size_t stride = shape_.empty() ? 0 : data_.size() / std::max<std::size_t>(shape_[0], 1);
        Shape s = shape_;
        s[0] = end - begin;
        return BasicTensor(std::move(s), std::vector<T>(data_.begin() + begin * stride, data_.begin() + end * stride));
    }

    template <class U>
    BasicTensor<U> cast() const {
        return BasicTensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
    }

    bool all_finite() const;

    friend bool operator==(const BasicTensor&, const BasicTensor&) = default;

private:
    Shape shape_;
    std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

extern template class BasicTensor<float>;
extern template class BasicTensor<double>;

// Gathers the given rows (leading-dimension indices) into a new tensor.
template <class T>
BasicTensor<T> gather_rows(const BasicTensor<T>& t, std::span<const std::size_t> idx) {
    const std::size_t stride = t.shape().empty() || t.dim(0) == 0 ? 0 : t.size() / t.dim(0);
    Shape s = t.shape();
    s[0] = idx.size();
    std::vector<T> out(idx.size() * stride);
    for (std::size_t i = 0; i < idx.size(); ++i)
        std::copy_n(t.data() + idx[i] * stride, stride, out.data() + i * stride);
    return BasicTensor<T>(std::move(s), std::move(out));
}

// MGT1 file format: "MGT1", u32 LE rank, rank x u32 LE dims, f32 LE payload.
void save_tensor(const Tensor& t, const std::filesystem::path& path);
Tensor load_tensor(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_tensor(const Tensor& t);
Tensor decode_tensor(std::span<const std::uint8_t> bytes, const std::string& context = "<memory>");

}  // namespace mg
