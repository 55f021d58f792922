#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "masa/errors.hpp"

namespace masa {

using Shape = std::vector<int>;

inline std::int64_t numel(const Shape& s) {
    std::int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        out += std::to_string(s[i]);
        if (i + 1 < s.size()) out += ", ";
    }
    return out + ")";
}

// Dense row-major n-dimensional array of 64-bit reals. `grad`, when present,
// has the same element count as `values`.
struct Tensor {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;
    bool requires_grad = false;

    Tensor() = default;

    static Tensor zeros(Shape s) {
        Tensor t;
        t.values.assign(static_cast<std::size_t>(numel(s)), 0.0);
        t.shape = std::move(s);
        return t;
    }

    static Tensor full(Shape s, double v) {
        Tensor t = zeros(std::move(s));
        for (double& x : t.values) x = v;
        return t;
    }

    static Tensor from(Shape s, std::vector<double> v) {
        if (numel(s) != static_cast<std::int64_t>(v.size()))
            throw DimensionError("tensor shape " + shape_str(s) + " does not match " +
                                 std::to_string(v.size()) + " values");
        Tensor t;
        t.shape = std::move(s);
        t.values = std::move(v);
        return t;
    }

    std::int64_t size() const { return static_cast<std::int64_t>(values.size()); }

    int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

    void ensure_grad() {
        if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
    }

    void zero_grad() {
        grad.assign(values.size(), 0.0);
    }
};

}  // namespace masa
