#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "rffi/common.hpp"

namespace rffi {

// Dense row-major tensor of doubles. Shapes are small (spectrograms,
// feature maps), so a plain vector with explicit indexing is enough.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> s, double fill = 0.0)
        : shape(std::move(s)), data(count_of(shape), fill) {}

    static std::size_t count_of(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (auto d : s) n *= d;
        return n;
    }

    std::size_t size() const { return data.size(); }
    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    double& at(std::size_t i) { return data[i]; }
    double at(std::size_t i) const { return data[i]; }

    // 2-D convenience (rows x cols)
    double& at(std::size_t r, std::size_t c) { return data[r * shape[1] + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * shape[1] + c]; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    double mean_sq() const {
        if (data.empty()) return 0.0;
        double acc = 0.0;
        for (double v : data) acc += v * v;
        return acc / double(data.size());
    }

    double linf_norm() const {
        double m = 0.0;
        for (double v : data) m = std::max(m, std::fabs(v));
        return m;
    }

    double l2_norm() const {
        double acc = 0.0;
        for (double v : data) acc += v * v;
        return std::sqrt(acc);
    }
};

inline Tensor operator+(const Tensor& a, const Tensor& b) {
    require(a.same_shape(b), ErrorKind::InvalidParams, "tensor shape mismatch");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += b.data[i];
    return out;
}

inline Tensor operator-(const Tensor& a, const Tensor& b) {
    require(a.same_shape(b), ErrorKind::InvalidParams, "tensor shape mismatch");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= b.data[i];
    return out;
}

inline Tensor operator*(const Tensor& a, double s) {
    Tensor out = a;
    for (auto& v : out.data) v *= s;
    return out;
}

}  // namespace rffi
