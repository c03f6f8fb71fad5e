#include <doctest.h>

#include <cmath>
#include <set>

#include "gasfusion/tensor.hpp"

using namespace gasfusion;

TEST_CASE("zeros fills the requested shape") {
    const Tensor a = zeros({2, 2});
    CHECK(a.shape == std::vector<int>{2, 2});
    for (double v : a.data) CHECK(v == 0.0);

    const Tensor b = zeros({3});
    CHECK(b.data == std::vector<double>{0.0, 0.0, 0.0});
}

TEST_CASE("degenerate shapes are rejected") {
    CHECK_THROWS_AS(zeros({0}), InvalidShape);
    CHECK_THROWS_AS(zeros({}), InvalidShape);
    CHECK_THROWS_AS(zeros({2, -1}), InvalidShape);
    CHECK_THROWS_AS(zeros({1, 1, 1, 1, 1}), InvalidShape);
    CHECK_THROWS_AS(from_data({2}, {1.0, 2.0, 3.0}), ShapeMismatch);
}

TEST_CASE("matmul identity and hand example") {
    const Tensor eye = from_data({2, 2}, {1, 0, 0, 1});
    const Tensor m = from_data({2, 2}, {1, 2, 3, 4});
    CHECK(matmul(eye, m).data == m.data);

    const Tensor row = from_data({1, 2}, {1, 2});
    const Tensor col = from_data({2, 1}, {3, 4});
    const Tensor prod = matmul(row, col);
    CHECK(prod.shape == std::vector<int>{1, 1});
    CHECK(prod[0] == doctest::Approx(11.0));  // 1*3 + 2*4

    CHECK_THROWS_AS(matmul(zeros({2, 3}), zeros({2, 3})), ShapeMismatch);
}

TEST_CASE("matmul associativity on random 3-chains") {
    Rng rng(123);
    for (int trial = 0; trial < 20; ++trial) {
        const int m = rng.next_int(1, 7), k = rng.next_int(1, 7);
        const int n = rng.next_int(1, 7), q = rng.next_int(1, 7);
        const Tensor a = uniform(rng, {m, k}, -1.0, 1.0);
        const Tensor b = uniform(rng, {k, n}, -1.0, 1.0);
        const Tensor c = uniform(rng, {n, q}, -1.0, 1.0);
        const Tensor left = matmul(matmul(a, b), c);
        const Tensor right = matmul(a, matmul(b, c));
        for (long i = 0; i < left.size(); ++i) {
            CHECK(left[i] == doctest::Approx(right[i]).epsilon(1e-9));
        }
    }
}

TEST_CASE("ewise examples and laws") {
    const Tensor a = from_data({2}, {1, 2});
    CHECK(add(a, zeros({2})).data == a.data);

    const Tensor m = mul(from_data({2}, {2, 3}), from_data({2}, {4, 5}));
    CHECK(m.data == std::vector<double>{8.0, 15.0});

    const Tensor x = from_data({3}, {1.5, -2.0, 0.25});
    CHECK(sub(x, x).data == std::vector<double>{0.0, 0.0, 0.0});

    CHECK_THROWS_AS(add(zeros({2}), zeros({3})), ShapeMismatch);

    Rng rng(9);
    const Tensor p = uniform(rng, {4, 3}, -2.0, 2.0);
    const Tensor q = uniform(rng, {4, 3}, -2.0, 2.0);
    const Tensor r = uniform(rng, {4, 3}, -2.0, 2.0);
    const Tensor comm1 = add(p, q), comm2 = add(q, p);
    for (long i = 0; i < comm1.size(); ++i) CHECK(comm1[i] == comm2[i]);
    const Tensor dist1 = mul(p, add(q, r));
    const Tensor dist2 = add(mul(p, q), mul(p, r));
    for (long i = 0; i < dist1.size(); ++i) {
        CHECK(dist1[i] == doctest::Approx(dist2[i]).epsilon(1e-9));
    }
}

TEST_CASE("finite in, finite out") {
    Rng rng(55);
    const Tensor a = uniform(rng, {3, 3}, -1e6, 1e6);
    const Tensor b = uniform(rng, {3, 3}, -1e6, 1e6);
    CHECK(all_finite(matmul(a, b)));
    CHECK(all_finite(mul(a, b)));
    CHECK(all_finite(add(a, b)));
    CHECK(all_finite(sub(a, b)));
}

TEST_CASE("uniform determinism and contract") {
    Rng a(42), b(42);
    const Tensor ta = uniform(a, {4, 4}, -1.0, 1.0);
    const Tensor tb = uniform(b, {4, 4}, -1.0, 1.0);
    CHECK(ta.data == tb.data);

    Rng c(42);
    CHECK_THROWS_AS(uniform(c, {2}, 0.5, 0.5), InvalidRange);

    for (double v : ta.data) {
        CHECK(v >= -1.0);
        CHECK(v < 1.0);
    }
}

TEST_CASE("uniform sample mean approaches the midpoint") {
    Rng rng(2024);
    const Tensor t = uniform(rng, {100000}, 0.0, 1.0);
    double mean = 0.0;
    for (double v : t.data) mean += v;
    mean /= static_cast<double>(t.size());
    CHECK(std::fabs(mean - 0.5) < 0.01);
}

TEST_CASE("different seeds give different streams") {
    std::set<std::uint64_t> firsts;
    for (std::uint64_t seed = 0; seed < 32; ++seed) {
        Rng rng(seed);
        std::uint64_t combined = 0;
        for (int i = 0; i < 16; ++i) combined ^= rng.next_u64() + 0x9E3779B9u * i;
        firsts.insert(combined);
    }
    CHECK(firsts.size() == 32);
}

TEST_CASE("derived streams are stable and distinct") {
    const Rng root(7);
    Rng a = root.stream(3);
    Rng consumed(7);
    consumed.next_u64();
    consumed.next_u64();
    Rng b = consumed.stream(3);
    CHECK(a.next_u64() == b.next_u64());

    Rng s0 = root.stream(0), s1 = root.stream(1);
    CHECK(s0.next_u64() != s1.next_u64());
}
