#pragma once

#include <cstdint>
#include <vector>

#include "gasfusion/errors.hpp"

namespace gasfusion {

// Dense row-major tensor of 64-bit reals, 1 to 4 dimensions, all extents
// positive. data.size() == product(shape) always holds for tensors built
// through the factory functions below. No views, no broadcasting; every
// shape change is an explicit reshape/copy.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;

    long size() const { return static_cast<long>(data.size()); }
    int ndim() const { return static_cast<int>(shape.size()); }
    int extent(int d) const { return shape[static_cast<std::size_t>(d)]; }

    double& operator[](long i) { return data[static_cast<std::size_t>(i)]; }
    double operator[](long i) const { return data[static_cast<std::size_t>(i)]; }

    double& at(int i) { return data[static_cast<std::size_t>(i)]; }
    double at(int i) const { return data[static_cast<std::size_t>(i)]; }
    double& at(int i, int j) { return data[static_cast<std::size_t>(i) * shape[1] + j]; }
    double at(int i, int j) const { return data[static_cast<std::size_t>(i) * shape[1] + j]; }
    double& at(int i, int j, int k) {
        return data[(static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + k];
    }
    double at(int i, int j, int k) const {
        return data[(static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + k];
    }
    double& at(int i, int j, int k, int l) {
        return data[((static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + k) * shape[3] + l];
    }
    double at(int i, int j, int k, int l) const {
        return data[((static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + k) * shape[3] + l];
    }
};

// Validates 1-4 dims with positive extents; throws InvalidShape otherwise.
long checked_size(const std::vector<int>& shape);

Tensor zeros(const std::vector<int>& shape);
Tensor full(const std::vector<int>& shape, double value);
Tensor from_data(const std::vector<int>& shape, std::vector<double> data);

Tensor matmul(const Tensor& a, const Tensor& b);

enum class EwiseOp { Add, Sub, Mul };
Tensor ewise(const Tensor& a, const Tensor& b, EwiseOp op);
inline Tensor add(const Tensor& a, const Tensor& b) { return ewise(a, b, EwiseOp::Add); }
inline Tensor sub(const Tensor& a, const Tensor& b) { return ewise(a, b, EwiseOp::Sub); }
inline Tensor mul(const Tensor& a, const Tensor& b) { return ewise(a, b, EwiseOp::Mul); }

Tensor reshape(const Tensor& t, const std::vector<int>& shape);

bool same_shape(const Tensor& a, const Tensor& b);
bool all_finite(const Tensor& t);

// Deterministic counter-free generator: splitmix64 expands the seed into
// xoshiro256++ state. Identical seed gives an identical draw sequence on
// every platform (the uniform integer/real path is pure integer math;
// normal() additionally goes through libm log/cos/sin).
struct Rng {
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();
    double next_double();                       // uniform in [0, 1)
    double normal(double mean, double sigma);   // Box-Muller, consumes 2 draws
    int next_int(int lo, int hi);               // uniform in [lo, hi)

    // Independent stream derived from the root seed (not the current state),
    // so stream(k) is stable no matter how much this generator has advanced.
    Rng stream(std::uint64_t id) const;

    std::uint64_t root_seed;
    std::uint64_t state[4];
};

Tensor uniform(Rng& rng, const std::vector<int>& shape, double lo, double hi);

} // namespace gasfusion
