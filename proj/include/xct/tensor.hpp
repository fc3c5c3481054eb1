#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "xct/errors.hpp"

namespace xct {

using Shape = std::vector<int>;

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ")";
    return os.str();
}

// Dense row-major tensor, rank 0 (scalar) through 5.
template <typename T>
struct Tensor {
    Shape shape;
    std::vector<T> data;

    Tensor() = default;

    Tensor(Shape s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
        validate();
    }

    static Tensor zeros(Shape s) {
        Tensor t;
        t.shape = std::move(s);
        t.check_rank();
        t.data.assign(static_cast<size_t>(shape_numel(t.shape)), T(0));
        return t;
    }

    static Tensor full(Shape s, T v) {
        Tensor t = zeros(std::move(s));
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }

    static Tensor scalar(T v) { return Tensor({}, {v}); }

    int rank() const { return static_cast<int>(shape.size()); }
    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    bool is_scalar() const { return shape.empty(); }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    T& operator[](size_t i) { return data[i]; }
    const T& operator[](size_t i) const { return data[i]; }

    // Multi-index access; test/convenience paths only.
    template <typename... Ix>
    T& at(Ix... ix) {
        return data[flat_index({static_cast<int>(ix)...})];
    }
    template <typename... Ix>
    const T& at(Ix... ix) const {
        return data[flat_index({static_cast<int>(ix)...})];
    }

    size_t flat_index(std::initializer_list<int> ix) const {
        if (static_cast<int>(ix.size()) != rank())
            throw ContractError("tensor index rank mismatch for shape " + shape_str(shape));
        size_t flat = 0;
        int axis = 0;
        for (int i : ix) {
            if (i < 0 || i >= shape[axis])
                throw ContractError("tensor index out of range on axis " + std::to_string(axis));
            flat = flat * static_cast<size_t>(shape[axis]) + static_cast<size_t>(i);
            ++axis;
        }
        return flat;
    }

    bool all_finite() const {
        for (const T& v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out;
        out.shape = shape;
        out.data.resize(data.size());
        for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }

private:
    void check_rank() const {
        if (shape.size() > 5)
            throw ContractError("tensor rank > 5: " + shape_str(shape));
        for (int d : shape)
            if (d <= 0) throw ContractError("non-positive dimension in " + shape_str(shape));
    }

    void validate() const {
        check_rank();
        if (static_cast<int64_t>(data.size()) != shape_numel(shape))
            throw ContractError("tensor data length " + std::to_string(data.size()) +
                                " does not match shape " + shape_str(shape));
    }
};

using Tensor32 = Tensor<float>;
using Tensor64 = Tensor<double>;

} // namespace xct
