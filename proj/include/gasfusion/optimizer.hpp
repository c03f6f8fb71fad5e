#pragma once

#include <cstdint>
#include <vector>

#include "gasfusion/tensor.hpp"

namespace gasfusion {

struct TrainConfig {
    double lr0 = 0.001;
    double decay = 1e-3;  // inverse-time, applied per optimizer step
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int epochs = 300;
    int batch_size = 32;
    std::uint64_t seed = 7;
};

void validate(const TrainConfig& cfg);

// lr0 / (1 + decay * step); step counts optimizer updates from 0.
double lr_at(const TrainConfig& cfg, long step);

struct AdamState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    long t = 0;  // completed updates
};

AdamState make_adam_state(const std::vector<const Tensor*>& params);

// One Adam update over a parallel parameter/gradient list. Bias-corrected
// moments, learning rate lr_at(cfg, step).
void adam_step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads,
               AdamState& state, const TrainConfig& cfg, long step);

// penalty = sum(l1*|w| + l2*w^2); the matching gradient uses sign(0) = 0.
double reg_penalty(const Tensor& w, double l1, double l2);
// grad += l1*sign(w) + 2*l2*w
void reg_grad_accum(const Tensor& w, double l1, double l2, Tensor& grad);

} // namespace gasfusion
