#include <doctest.h>

#include <cmath>

#include "gasfusion/optimizer.hpp"
#include "gradcheck.hpp"

using namespace gasfusion;

TEST_CASE("lr_at schedule") {
    TrainConfig cfg;
    CHECK(lr_at(cfg, 0) == doctest::Approx(0.001));
    CHECK(lr_at(cfg, 1000) == doctest::Approx(0.0005));  // 0.001 / (1 + 1e-3 * 1000)

    TrainConfig flat;
    flat.decay = 0.0;
    CHECK(lr_at(flat, 0) == 0.001);
    CHECK(lr_at(flat, 100000) == 0.001);
}

TEST_CASE("lr_at is monotone non-increasing") {
    TrainConfig cfg;
    double prev = lr_at(cfg, 0);
    for (long step = 1; step < 2000; step += 13) {
        const double cur = lr_at(cfg, step);
        CHECK(cur <= prev);
        prev = cur;
    }
}

TEST_CASE("adam zero gradient leaves params unchanged") {
    Tensor p = from_data({3}, {1.0, -2.0, 0.5});
    const Tensor before = p;
    std::vector<Tensor*> params{&p};
    AdamState st = make_adam_state({&p});
    TrainConfig cfg;
    adam_step(params, {zeros({3})}, st, cfg, 0);
    CHECK(p.data == before.data);
}

TEST_CASE("adam first step closed form") {
    Tensor p = from_data({1}, {1.0});
    std::vector<Tensor*> params{&p};
    AdamState st = make_adam_state({&p});
    TrainConfig cfg;  // lr0 = 0.001
    adam_step(params, {from_data({1}, {0.5})}, st, cfg, 0);
    CHECK(std::fabs(p[0] - 0.999) < 1e-6);  // first update ~ -lr * sign(g)
}

TEST_CASE("adam is deterministic") {
    auto run = [] {
        Tensor p = from_data({2}, {0.3, -0.7});
        std::vector<Tensor*> params{&p};
        AdamState st = make_adam_state({&p});
        TrainConfig cfg;
        for (long s = 0; s < 20; ++s) {
            adam_step(params, {from_data({2}, {0.1 * (s % 3), -0.2})}, st, cfg, s);
        }
        return p.data;
    };
    CHECK(run() == run());
}

TEST_CASE("adam per-step displacement stays within the learning rate") {
    Rng rng(71);
    Tensor p = gradcheck::rand_tensor(rng, {8});
    const Tensor g = gradcheck::rand_tensor(rng, {8}, 0.1, 1.0);
    std::vector<Tensor*> params{&p};
    AdamState st = make_adam_state({&p});
    TrainConfig cfg;
    for (long s = 0; s < 200; ++s) {
        const Tensor before = p;
        adam_step(params, {g}, st, cfg, s);
        const double bound = lr_at(cfg, s) * (1.0 + 1e-9);
        for (long i = 0; i < p.size(); ++i) {
            CHECK(std::fabs(p[i] - before[i]) <= bound);
        }
    }
}

TEST_CASE("adam shape mismatch is rejected") {
    Tensor p = zeros({2});
    std::vector<Tensor*> params{&p};
    AdamState st = make_adam_state({&p});
    TrainConfig cfg;
    CHECK_THROWS_AS(adam_step(params, {zeros({3})}, st, cfg, 0), ShapeMismatch);
}

TEST_CASE("regularization penalty and gradient") {
    const Tensor w = from_data({1}, {2.0});
    CHECK(reg_penalty(w, 0.0, 0.0) == 0.0);
    CHECK(reg_penalty(w, 0.005, 0.005) == doctest::Approx(0.03));  // 0.005*2 + 0.005*4

    Tensor grad = zeros({1});
    reg_grad_accum(w, 0.005, 0.005, grad);
    CHECK(grad[0] == doctest::Approx(0.025));  // 0.005 + 2*0.005*2

    Tensor grad0 = zeros({1});
    reg_grad_accum(w, 0.0, 0.0, grad0);
    CHECK(grad0[0] == 0.0);

    // sign(0) = 0
    Tensor gz = zeros({1});
    reg_grad_accum(zeros({1}), 0.5, 0.0, gz);
    CHECK(gz[0] == 0.0);
}

TEST_CASE("regularization gradient matches finite differences away from zero") {
    Rng rng(73);
    Tensor w = gradcheck::rand_tensor(rng, {16}, 0.2, 2.0);
    for (long i = 0; i < w.size(); ++i) {
        if (i % 2 == 0) w[i] = -w[i];
    }
    auto loss = [&]() { return reg_penalty(w, 0.005, 0.005); };
    Tensor analytic = zeros({16});
    reg_grad_accum(w, 0.005, 0.005, analytic);
    CHECK(gradcheck::check(w, analytic, loss, rng).max_err < 1e-6);
}

TEST_CASE("regularized weight with zero data gradient decays toward zero") {
    Tensor w = from_data({1}, {1.0});
    std::vector<Tensor*> params{&w};
    AdamState st = make_adam_state({&w});
    TrainConfig cfg;
    cfg.lr0 = 0.01;
    cfg.decay = 0.0;
    double prev = std::fabs(w[0]);
    for (long s = 0; s < 500; ++s) {
        Tensor g = zeros({1});
        reg_grad_accum(w, 0.005, 0.005, g);
        adam_step(params, {g}, st, cfg, s);
        const double cur = std::fabs(w[0]);
        if (prev > 10.0 * cfg.lr0) {
            CHECK(cur < prev);  // monotone until the step size dominates
        }
        prev = cur;
    }
    CHECK(std::fabs(w[0]) < 0.05);
}
