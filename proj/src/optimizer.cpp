#include "gasfusion/optimizer.hpp"

#include <cmath>
#include <string>

namespace gasfusion {

void validate(const TrainConfig& cfg) {
    if (!(cfg.lr0 > 0.0)) throw InvalidConfig("lr0 must be positive");
    if (!(cfg.decay >= 0.0)) throw InvalidConfig("decay must be non-negative");
    if (!(cfg.beta1 > 0.0 && cfg.beta1 < 1.0)) throw InvalidConfig("beta1 must be in (0,1)");
    if (!(cfg.beta2 > 0.0 && cfg.beta2 < 1.0)) throw InvalidConfig("beta2 must be in (0,1)");
    if (!(cfg.eps > 0.0)) throw InvalidConfig("eps must be positive");
    if (cfg.epochs < 0) throw InvalidConfig("epochs must be >= 0");
    if (cfg.batch_size < 1) throw InvalidConfig("batch_size must be >= 1");
}

double lr_at(const TrainConfig& cfg, long step) {
    return cfg.lr0 / (1.0 + cfg.decay * static_cast<double>(step));
}

AdamState make_adam_state(const std::vector<const Tensor*>& params) {
    AdamState s;
    s.m.reserve(params.size());
    s.v.reserve(params.size());
    for (const Tensor* p : params) {
        s.m.push_back(zeros(p->shape));
        s.v.push_back(zeros(p->shape));
    }
    return s;
}

void adam_step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads,
               AdamState& state, const TrainConfig& cfg, long step) {
    if (params.size() != grads.size() || params.size() != state.m.size()) {
        throw ShapeMismatch("adam_step params/grads/state lists differ in length");
    }
    const double lr = lr_at(cfg, step);
    state.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));

    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor& p = *params[k];
        const Tensor& g = grads[k];
        Tensor& m = state.m[k];
        Tensor& v = state.v[k];
        if (!same_shape(p, g) || !same_shape(p, m)) {
            throw ShapeMismatch("adam_step tensor " + std::to_string(k) + " shape mismatch");
        }
        for (long i = 0; i < p.size(); ++i) {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

double reg_penalty(const Tensor& w, double l1, double l2) {
    double acc = 0.0;
    for (double v : w.data) {
        acc += l1 * std::fabs(v) + l2 * v * v;
    }
    return acc;
}

void reg_grad_accum(const Tensor& w, double l1, double l2, Tensor& grad) {
    if (!same_shape(w, grad)) {
        throw ShapeMismatch("reg_grad_accum weight/grad shape mismatch");
    }
    for (long i = 0; i < w.size(); ++i) {
        const double v = w[i];
        const double sign = v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
        grad[i] += l1 * sign + 2.0 * l2 * v;
    }
}

} // namespace gasfusion
