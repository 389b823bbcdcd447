#pragma once

#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "railseg/common.hpp"

namespace railseg {

// Dense row-major tensor of doubles. All network math runs in double; files
// store float32 (see checkpoint format).
struct Tensor {
    std::vector<int32_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int32_t> s) : shape(std::move(s)) {
        data.assign(size_t(count(shape)), 0.0);
    }

    static int64_t count(const std::vector<int32_t>& s) {
        int64_t n = 1;
        for (int32_t d : s) n *= d;
        return n;
    }

    int64_t size() const { return int64_t(data.size()); }
    double* begin() { return data.data(); }
    double* end() { return data.data() + data.size(); }
    const double* begin() const { return data.data(); }
    const double* end() const { return data.data() + data.size(); }

    void zero() { std::fill(data.begin(), data.end(), 0.0); }

    bool finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

// A trainable tensor with its gradient accumulator.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;

    Parameter() = default;
    Parameter(std::string n, std::vector<int32_t> shape)
        : name(std::move(n)), value(shape), grad(shape) {}

    void zero_grad() { grad.zero(); }
};

// Fan-in scaled uniform init, biases stay zero.
void init_uniform_fan_in(Parameter& p, int fan_in, Rng& rng);

}  // namespace railseg
