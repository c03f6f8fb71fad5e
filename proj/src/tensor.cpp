#include "gasfusion/tensor.hpp"

#include <cmath>
#include <numbers>
#include <string>
#include <utility>

namespace gasfusion {

long checked_size(const std::vector<int>& shape) {
    if (shape.empty() || shape.size() > 4) {
        throw InvalidShape("tensor rank must be 1..4, got " + std::to_string(shape.size()));
    }
    long n = 1;
    for (int e : shape) {
        if (e <= 0) {
            throw InvalidShape("tensor extent must be positive, got " + std::to_string(e));
        }
        n *= e;
    }
    return n;
}

Tensor zeros(const std::vector<int>& shape) {
    const long n = checked_size(shape);
    Tensor t;
    t.shape = shape;
    t.data.assign(static_cast<std::size_t>(n), 0.0);
    return t;
}

Tensor full(const std::vector<int>& shape, double value) {
    const long n = checked_size(shape);
    Tensor t;
    t.shape = shape;
    t.data.assign(static_cast<std::size_t>(n), value);
    return t;
}

Tensor from_data(const std::vector<int>& shape, std::vector<double> data) {
    const long n = checked_size(shape);
    if (n != static_cast<long>(data.size())) {
        throw ShapeMismatch("data length " + std::to_string(data.size()) +
                            " does not match shape product " + std::to_string(n));
    }
    Tensor t;
    t.shape = shape;
    t.data = std::move(data);
    return t;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2) {
        throw ShapeMismatch("matmul expects two rank-2 tensors");
    }
    const int m = a.shape[0];
    const int k = a.shape[1];
    const int n = b.shape[1];
    if (b.shape[0] != k) {
        throw ShapeMismatch("matmul inner extents differ: " + std::to_string(k) + " vs " +
                            std::to_string(b.shape[0]));
    }
    Tensor out = zeros({m, n});
    for (int i = 0; i < m; ++i) {
        const double* arow = a.data.data() + static_cast<std::size_t>(i) * k;
        double* orow = out.data.data() + static_cast<std::size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = b.data.data() + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) {
                orow[j] += av * brow[j];
            }
        }
    }
    return out;
}

Tensor ewise(const Tensor& a, const Tensor& b, EwiseOp op) {
    if (!same_shape(a, b)) {
        throw ShapeMismatch("elementwise op on different shapes");
    }
    Tensor out = a;
    const std::size_t n = a.data.size();
    switch (op) {
    case EwiseOp::Add:
        for (std::size_t i = 0; i < n; ++i) out.data[i] += b.data[i];
        break;
    case EwiseOp::Sub:
        for (std::size_t i = 0; i < n; ++i) out.data[i] -= b.data[i];
        break;
    case EwiseOp::Mul:
        for (std::size_t i = 0; i < n; ++i) out.data[i] *= b.data[i];
        break;
    }
    return out;
}

Tensor reshape(const Tensor& t, const std::vector<int>& shape) {
    const long n = checked_size(shape);
    if (n != t.size()) {
        throw ShapeMismatch("reshape changes element count");
    }
    Tensor out;
    out.shape = shape;
    out.data = t.data;
    return out;
}

bool same_shape(const Tensor& a, const Tensor& b) { return a.shape == b.shape; }

bool all_finite(const Tensor& t) {
    for (double v : t.data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

} // namespace

Rng::Rng(std::uint64_t seed) : root_seed(seed) {
    std::uint64_t s = seed;
    for (auto& w : state) {
        w = splitmix64(s);
    }
}

std::uint64_t Rng::next_u64() {
    // xoshiro256++
    const std::uint64_t result = rotl(state[0] + state[3], 23) + state[0];
    const std::uint64_t t = state[1] << 17;
    state[2] ^= state[0];
    state[3] ^= state[1];
    state[1] ^= state[2];
    state[0] ^= state[3];
    state[2] ^= t;
    state[3] = rotl(state[3], 45);
    return result;
}

double Rng::next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::normal(double mean, double sigma) {
    // u1 in (0, 1] keeps the log argument positive.
    const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return mean + sigma * r * std::cos(2.0 * std::numbers::pi * u2);
}

int Rng::next_int(int lo, int hi) {
    if (lo >= hi) {
        throw InvalidRange("next_int needs lo < hi");
    }
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo);
    return lo + static_cast<int>(next_u64() % span);
}

Rng Rng::stream(std::uint64_t id) const {
    std::uint64_t s = root_seed;
    std::uint64_t mixed = splitmix64(s);
    std::uint64_t t = mixed ^ (id + 0x9E3779B97F4A7C15ULL);
    return Rng(splitmix64(t));
}

Tensor uniform(Rng& rng, const std::vector<int>& shape, double lo, double hi) {
    if (!(lo < hi)) {
        throw InvalidRange("uniform needs lo < hi");
    }
    Tensor t = zeros(shape);
    const double span = hi - lo;
    for (double& v : t.data) {
        v = lo + span * rng.next_double();
    }
    return t;
}

} // namespace gasfusion
