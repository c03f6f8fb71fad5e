#include "gasfusion/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace gasfusion {

namespace {

void require_rank(const Tensor& t, int rank, const char* what) {
    if (t.ndim() != rank) {
        throw ShapeMismatch(std::string(what) + " expects rank " + std::to_string(rank) +
                            ", got " + std::to_string(t.ndim()));
    }
}

} // namespace

// ---- conv2d ----------------------------------------------------------------

std::pair<Tensor, ConvTape> conv2d_forward(const Tensor& x, const ConvParams& p) {
    require_rank(x, 3, "conv2d input");
    require_rank(p.kernels, 4, "conv2d kernels");
    const int in_c = x.shape[0], h = x.shape[1], w = x.shape[2];
    const int out_c = p.kernels.shape[0], kc = p.kernels.shape[1];
    const int kh = p.kernels.shape[2], kw = p.kernels.shape[3];
    if (kc != in_c) {
        throw ShapeMismatch("conv2d channel mismatch: input " + std::to_string(in_c) +
                            ", kernels " + std::to_string(kc));
    }
    if (p.bias.ndim() != 1 || p.bias.shape[0] != out_c) {
        throw ShapeMismatch("conv2d bias must have one value per output channel");
    }
    if (p.stride < 1) {
        throw ShapeMismatch("conv2d stride must be >= 1");
    }
    if (kh > h || kw > w) {
        throw ShapeMismatch("conv2d kernel larger than input");
    }
    const int oh = (h - kh) / p.stride + 1;
    const int ow = (w - kw) / p.stride + 1;

    Tensor y = zeros({out_c, oh, ow});
    for (int o = 0; o < out_c; ++o) {
        double* ybase = y.data.data() + static_cast<std::size_t>(o) * oh * ow;
        const double bv = p.bias.at(o);
        for (long i = 0; i < static_cast<long>(oh) * ow; ++i) ybase[i] = bv;
        for (int c = 0; c < in_c; ++c) {
            const double* xch = x.data.data() + static_cast<std::size_t>(c) * h * w;
            const double* krow =
                p.kernels.data.data() + ((static_cast<std::size_t>(o) * in_c + c) * kh) * kw;
            for (int r = 0; r < kh; ++r) {
                for (int s = 0; s < kw; ++s) {
                    const double kv = krow[static_cast<std::size_t>(r) * kw + s];
                    if (p.stride == 1) {
                        // Contiguous inner loops: one shifted pass per kernel tap.
                        for (int oy = 0; oy < oh; ++oy) {
                            const double* xrow = xch + static_cast<std::size_t>(oy + r) * w + s;
                            double* yrow = ybase + static_cast<std::size_t>(oy) * ow;
                            for (int ox = 0; ox < ow; ++ox) {
                                yrow[ox] += kv * xrow[ox];
                            }
                        }
                    } else {
                        for (int oy = 0; oy < oh; ++oy) {
                            const double* xrow =
                                xch + static_cast<std::size_t>(oy * p.stride + r) * w + s;
                            double* yrow = ybase + static_cast<std::size_t>(oy) * ow;
                            for (int ox = 0; ox < ow; ++ox) {
                                yrow[ox] += kv * xrow[static_cast<std::size_t>(ox) * p.stride];
                            }
                        }
                    }
                }
            }
        }
    }
    ConvTape tape{x, {out_c, oh, ow}, p.stride};
    return {std::move(y), std::move(tape)};
}

ConvGrads conv2d_backward(const Tensor& dy, const ConvTape& tape, const ConvParams& p) {
    if (dy.shape != tape.out_shape) {
        throw TapeMismatch("conv2d_backward dy shape does not match the recorded forward");
    }
    if (tape.stride != p.stride || p.kernels.ndim() != 4 ||
        p.kernels.shape[0] != tape.out_shape[0] || p.kernels.shape[1] != tape.x.shape[0]) {
        throw TapeMismatch("conv2d_backward params do not match the recorded forward");
    }
    const Tensor& x = tape.x;
    const int in_c = x.shape[0], h = x.shape[1], w = x.shape[2];
    const int out_c = p.kernels.shape[0];
    const int kh = p.kernels.shape[2], kw = p.kernels.shape[3];
    const int oh = tape.out_shape[1], ow = tape.out_shape[2];
    const int stride = p.stride;

    ConvGrads g;
    g.dx = zeros(x.shape);
    g.dkernels = zeros(p.kernels.shape);
    g.dbias = zeros({out_c});

    for (int o = 0; o < out_c; ++o) {
        const double* dybase = dy.data.data() + static_cast<std::size_t>(o) * oh * ow;
        double acc = 0.0;
        for (long i = 0; i < static_cast<long>(oh) * ow; ++i) acc += dybase[i];
        g.dbias.at(o) = acc;

        for (int c = 0; c < in_c; ++c) {
            const double* xch = x.data.data() + static_cast<std::size_t>(c) * h * w;
            double* dxch = g.dx.data.data() + static_cast<std::size_t>(c) * h * w;
            double* dkrow =
                g.dkernels.data.data() + ((static_cast<std::size_t>(o) * in_c + c) * kh) * kw;
            const double* krow =
                p.kernels.data.data() + ((static_cast<std::size_t>(o) * in_c + c) * kh) * kw;
            for (int r = 0; r < kh; ++r) {
                for (int s = 0; s < kw; ++s) {
                    const double kv = krow[static_cast<std::size_t>(r) * kw + s];
                    double dk = 0.0;
                    for (int oy = 0; oy < oh; ++oy) {
                        const std::size_t xoff = static_cast<std::size_t>(oy * stride + r) * w + s;
                        const double* dyrow = dybase + static_cast<std::size_t>(oy) * ow;
                        const double* xrow = xch + xoff;
                        double* dxrow = dxch + xoff;
                        if (stride == 1) {
                            for (int ox = 0; ox < ow; ++ox) {
                                dk += dyrow[ox] * xrow[ox];
                                dxrow[ox] += kv * dyrow[ox];
                            }
                        } else {
                            for (int ox = 0; ox < ow; ++ox) {
                                const std::size_t xi = static_cast<std::size_t>(ox) * stride;
                                dk += dyrow[ox] * xrow[xi];
                                dxrow[xi] += kv * dyrow[ox];
                            }
                        }
                    }
                    dkrow[static_cast<std::size_t>(r) * kw + s] = dk;
                }
            }
        }
    }
    return g;
}

// ---- maxpool ----------------------------------------------------------------

std::pair<Tensor, PoolTape> maxpool2d_forward(const Tensor& x) {
    require_rank(x, 3, "maxpool2d input");
    const int c = x.shape[0], h = x.shape[1], w = x.shape[2];
    if (h % 2 != 0 || w % 2 != 0) {
        throw ShapeMismatch("maxpool2d needs even spatial extents, got " + std::to_string(h) +
                            "x" + std::to_string(w));
    }
    const int oh = h / 2, ow = w / 2;
    Tensor y = zeros({c, oh, ow});
    PoolTape tape;
    tape.in_shape = x.shape;
    tape.argmax.resize(static_cast<std::size_t>(y.size()));

    long oi = 0;
    for (int ch = 0; ch < c; ++ch) {
        const std::size_t chbase = static_cast<std::size_t>(ch) * h * w;
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                double best = -std::numeric_limits<double>::infinity();
                long best_idx = 0;
                for (int r = 0; r < 2; ++r) {
                    for (int s = 0; s < 2; ++s) {
                        const long idx = static_cast<long>(chbase) +
                                         static_cast<long>(2 * oy + r) * w + (2 * ox + s);
                        const double v = x[idx];
                        if (v > best) {  // strict: ties keep the first row-major max
                            best = v;
                            best_idx = idx;
                        }
                    }
                }
                y[oi] = best;
                tape.argmax[static_cast<std::size_t>(oi)] = best_idx;
                ++oi;
            }
        }
    }
    return {std::move(y), std::move(tape)};
}

Tensor maxpool2d_backward(const Tensor& dy, const PoolTape& tape) {
    const std::vector<int> expect{tape.in_shape[0], tape.in_shape[1] / 2, tape.in_shape[2] / 2};
    if (dy.shape != expect) {
        throw TapeMismatch("maxpool2d_backward dy shape does not match the recorded forward");
    }
    Tensor dx = zeros(tape.in_shape);
    for (long i = 0; i < dy.size(); ++i) {
        dx[tape.argmax[static_cast<std::size_t>(i)]] += dy[i];
    }
    return dx;
}

// ---- dense ----------------------------------------------------------------

std::pair<Tensor, DenseTape> dense_forward(const Tensor& x, const DenseParams& p) {
    require_rank(x, 1, "dense input");
    require_rank(p.weights, 2, "dense weights");
    const int in = p.weights.shape[0], out = p.weights.shape[1];
    if (x.shape[0] != in) {
        throw ShapeMismatch("dense input length " + std::to_string(x.shape[0]) +
                            " does not match weights " + std::to_string(in));
    }
    if (p.bias.ndim() != 1 || p.bias.shape[0] != out) {
        throw ShapeMismatch("dense bias length does not match output width");
    }
    Tensor y = p.bias;
    for (int i = 0; i < in; ++i) {
        const double xv = x.at(i);
        const double* wrow = p.weights.data.data() + static_cast<std::size_t>(i) * out;
        for (int j = 0; j < out; ++j) {
            y.at(j) += xv * wrow[j];
        }
    }
    return {std::move(y), DenseTape{x}};
}

DenseGrads dense_backward(const Tensor& dy, const DenseTape& tape, const DenseParams& p) {
    const int in = p.weights.shape[0], out = p.weights.shape[1];
    if (dy.ndim() != 1 || dy.shape[0] != out || tape.x.shape[0] != in) {
        throw TapeMismatch("dense_backward shapes do not match the recorded forward");
    }
    DenseGrads g;
    g.dx = zeros({in});
    g.dweights = zeros(p.weights.shape);
    g.dbias = dy;
    for (int i = 0; i < in; ++i) {
        const double xv = tape.x.at(i);
        const double* wrow = p.weights.data.data() + static_cast<std::size_t>(i) * out;
        double* dwrow = g.dweights.data.data() + static_cast<std::size_t>(i) * out;
        double acc = 0.0;
        for (int j = 0; j < out; ++j) {
            acc += wrow[j] * dy.at(j);
            dwrow[j] = xv * dy.at(j);
        }
        g.dx.at(i) = acc;
    }
    return g;
}

// ---- activations ------------------------------------------------------------

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

std::pair<Tensor, Tensor> relu_forward(const Tensor& x) {
    Tensor y = x;
    for (double& v : y.data) v = v > 0.0 ? v : 0.0;
    return {std::move(y), x};
}

Tensor relu_backward(const Tensor& dy, const Tensor& pre) {
    if (!same_shape(dy, pre)) {
        throw TapeMismatch("relu_backward shape mismatch");
    }
    Tensor dx = dy;
    for (long i = 0; i < dx.size(); ++i) {
        if (pre[i] <= 0.0) dx[i] = 0.0;
    }
    return dx;
}

std::pair<Tensor, Tensor> sigmoid_forward(const Tensor& x) {
    Tensor y = x;
    for (double& v : y.data) v = sigmoid(v);
    return {std::move(y), x};
}

Tensor sigmoid_backward(const Tensor& dy, const Tensor& pre) {
    if (!same_shape(dy, pre)) {
        throw TapeMismatch("sigmoid_backward shape mismatch");
    }
    Tensor dx = dy;
    for (long i = 0; i < dx.size(); ++i) {
        const double s = sigmoid(pre[i]);
        dx[i] *= s * (1.0 - s);
    }
    return dx;
}

std::pair<Tensor, Tensor> tanh_forward(const Tensor& x) {
    Tensor y = x;
    for (double& v : y.data) v = std::tanh(v);
    return {std::move(y), x};
}

Tensor tanh_backward(const Tensor& dy, const Tensor& pre) {
    if (!same_shape(dy, pre)) {
        throw TapeMismatch("tanh_backward shape mismatch");
    }
    Tensor dx = dy;
    for (long i = 0; i < dx.size(); ++i) {
        const double t = std::tanh(pre[i]);
        dx[i] *= 1.0 - t * t;
    }
    return dx;
}

// ---- dropout ------------------------------------------------------------------

std::pair<Tensor, DropoutTape> dropout_forward(const Tensor& x, double rate, bool training,
                                               Rng& rng) {
    if (!(rate >= 0.0 && rate < 1.0)) {
        throw InvalidRate("dropout rate must be in [0, 1), got " + std::to_string(rate));
    }
    if (!training || rate == 0.0) {
        return {x, DropoutTape{}};
    }
    const double keep = 1.0 - rate;
    const double scale = 1.0 / keep;
    DropoutTape tape;
    tape.identity = false;
    tape.mask = zeros(x.shape);
    Tensor y = x;
    for (long i = 0; i < x.size(); ++i) {
        const double m = rng.next_double() < rate ? 0.0 : scale;
        tape.mask[i] = m;
        y[i] *= m;
    }
    return {std::move(y), std::move(tape)};
}

Tensor dropout_backward(const Tensor& dy, const DropoutTape& tape) {
    if (tape.identity) {
        return dy;
    }
    if (!same_shape(dy, tape.mask)) {
        throw TapeMismatch("dropout_backward shape mismatch");
    }
    return mul(dy, tape.mask);
}

// ---- LSTM ---------------------------------------------------------------------

namespace {

void require_lstm_shapes(const LstmParams& p) {
    const int in = p.wi.shape[0], hid = p.wi.shape[1];
    auto check_w = [&](const Tensor& t) {
        return t.ndim() == 2 && t.shape[0] == in && t.shape[1] == hid;
    };
    auto check_u = [&](const Tensor& t) {
        return t.ndim() == 2 && t.shape[0] == hid && t.shape[1] == hid;
    };
    auto check_b = [&](const Tensor& t) { return t.ndim() == 1 && t.shape[0] == hid; };
    if (!check_w(p.wi) || !check_w(p.wf) || !check_w(p.wo) || !check_w(p.wg) || !check_u(p.ui) ||
        !check_u(p.uf) || !check_u(p.uo) || !check_u(p.ug) || !check_b(p.bi) || !check_b(p.bf) ||
        !check_b(p.bo) || !check_b(p.bg)) {
        throw ShapeMismatch("LSTM gate blocks must share [in,hidden]/[hidden,hidden]/[hidden]");
    }
}

// pre = x W + h U + b for one gate.
Tensor gate_pre(const Tensor& x, const Tensor& h, const Tensor& wxt, const Tensor& u,
                const Tensor& b) {
    const int in = wxt.shape[0], hid = wxt.shape[1];
    Tensor pre = b;
    for (int i = 0; i < in; ++i) {
        const double xv = x.at(i);
        const double* wrow = wxt.data.data() + static_cast<std::size_t>(i) * hid;
        for (int j = 0; j < hid; ++j) pre.at(j) += xv * wrow[j];
    }
    for (int i = 0; i < hid; ++i) {
        const double hv = h.at(i);
        const double* urow = u.data.data() + static_cast<std::size_t>(i) * hid;
        for (int j = 0; j < hid; ++j) pre.at(j) += hv * urow[j];
    }
    return pre;
}

// Accumulates the pieces of d(pre) into dW, dU, db, dx, dh for one gate.
void gate_backward(const Tensor& dpre, const Tensor& x, const Tensor& h, const Tensor& wxt,
                   const Tensor& u, Tensor& dw, Tensor& du, Tensor& db, Tensor& dx, Tensor& dh) {
    const int in = wxt.shape[0], hid = wxt.shape[1];
    for (int j = 0; j < hid; ++j) db.at(j) += dpre.at(j);
    for (int i = 0; i < in; ++i) {
        const double xv = x.at(i);
        double* dwrow = dw.data.data() + static_cast<std::size_t>(i) * hid;
        const double* wrow = wxt.data.data() + static_cast<std::size_t>(i) * hid;
        double acc = 0.0;
        for (int j = 0; j < hid; ++j) {
            dwrow[j] += xv * dpre.at(j);
            acc += wrow[j] * dpre.at(j);
        }
        dx.at(i) += acc;
    }
    for (int i = 0; i < hid; ++i) {
        const double hv = h.at(i);
        double* durow = du.data.data() + static_cast<std::size_t>(i) * hid;
        const double* urow = u.data.data() + static_cast<std::size_t>(i) * hid;
        double acc = 0.0;
        for (int j = 0; j < hid; ++j) {
            durow[j] += hv * dpre.at(j);
            acc += urow[j] * dpre.at(j);
        }
        dh.at(i) += acc;
    }
}

} // namespace

LstmStepOut lstm_step(const Tensor& x, const Tensor& h_prev, const Tensor& c_prev,
                      const LstmParams& p) {
    require_lstm_shapes(p);
    const int in = p.wi.shape[0], hid = p.wi.shape[1];
    if (x.ndim() != 1 || x.shape[0] != in || h_prev.ndim() != 1 || h_prev.shape[0] != hid ||
        c_prev.ndim() != 1 || c_prev.shape[0] != hid) {
        throw ShapeMismatch("lstm_step input/state shapes do not match the params");
    }

    Tensor i = sigmoid_forward(gate_pre(x, h_prev, p.wi, p.ui, p.bi)).first;
    Tensor f = sigmoid_forward(gate_pre(x, h_prev, p.wf, p.uf, p.bf)).first;
    Tensor o = sigmoid_forward(gate_pre(x, h_prev, p.wo, p.uo, p.bo)).first;
    Tensor g = tanh_forward(gate_pre(x, h_prev, p.wg, p.ug, p.bg)).first;

    Tensor c = add(mul(f, c_prev), mul(i, g));
    Tensor h = zeros({hid});
    for (int j = 0; j < hid; ++j) {
        h.at(j) = o.at(j) * std::tanh(c.at(j));
    }

    LstmStepOut out;
    out.tape = LstmStepTape{x, h_prev, c_prev, i, f, o, g, c};
    out.h = std::move(h);
    out.c = std::move(c);
    return out;
}

LstmParams lstm_zero_grads(const LstmParams& p) {
    LstmParams g;
    g.wi = zeros(p.wi.shape);
    g.wf = zeros(p.wf.shape);
    g.wo = zeros(p.wo.shape);
    g.wg = zeros(p.wg.shape);
    g.ui = zeros(p.ui.shape);
    g.uf = zeros(p.uf.shape);
    g.uo = zeros(p.uo.shape);
    g.ug = zeros(p.ug.shape);
    g.bi = zeros(p.bi.shape);
    g.bf = zeros(p.bf.shape);
    g.bo = zeros(p.bo.shape);
    g.bg = zeros(p.bg.shape);
    return g;
}

void lstm_step_backward(const Tensor& dh, const Tensor& dc_in, const LstmStepTape& tape,
                        const LstmParams& p, LstmStepGrads& out) {
    const int hid = p.wi.shape[1];
    if (dh.shape != std::vector<int>{hid} || dc_in.shape != std::vector<int>{hid}) {
        throw TapeMismatch("lstm_step_backward gradient shapes do not match the params");
    }

    Tensor dc = dc_in;
    Tensor di = zeros({hid}), df = zeros({hid}), do_ = zeros({hid}), dg = zeros({hid});
    for (int j = 0; j < hid; ++j) {
        const double tc = std::tanh(tape.c.at(j));
        // h = o * tanh(c)
        do_.at(j) = dh.at(j) * tc;
        dc.at(j) += dh.at(j) * tape.o.at(j) * (1.0 - tc * tc);
        // c = f*c_prev + i*g
        di.at(j) = dc.at(j) * tape.g.at(j);
        df.at(j) = dc.at(j) * tape.c_prev.at(j);
        dg.at(j) = dc.at(j) * tape.i.at(j);
        out.dc_prev.at(j) += dc.at(j) * tape.f.at(j);
        // through the gate nonlinearities, using the cached post-activations
        di.at(j) *= tape.i.at(j) * (1.0 - tape.i.at(j));
        df.at(j) *= tape.f.at(j) * (1.0 - tape.f.at(j));
        do_.at(j) *= tape.o.at(j) * (1.0 - tape.o.at(j));
        dg.at(j) *= 1.0 - tape.g.at(j) * tape.g.at(j);
    }

    gate_backward(di, tape.x, tape.h_prev, p.wi, p.ui, out.dparams.wi, out.dparams.ui,
                  out.dparams.bi, out.dx, out.dh_prev);
    gate_backward(df, tape.x, tape.h_prev, p.wf, p.uf, out.dparams.wf, out.dparams.uf,
                  out.dparams.bf, out.dx, out.dh_prev);
    gate_backward(do_, tape.x, tape.h_prev, p.wo, p.uo, out.dparams.wo, out.dparams.uo,
                  out.dparams.bo, out.dx, out.dh_prev);
    gate_backward(dg, tape.x, tape.h_prev, p.wg, p.ug, out.dparams.wg, out.dparams.ug,
                  out.dparams.bg, out.dx, out.dh_prev);
}

std::pair<Tensor, LstmTape> lstm_forward(const Tensor& xs, const LstmParams& p) {
    require_lstm_shapes(p);
    if (xs.ndim() != 2) {
        throw ShapeMismatch("lstm_forward expects xs as [T, inDim]");
    }
    const int t_len = xs.shape[0], in = xs.shape[1], hid = p.wi.shape[1];
    if (in != p.wi.shape[0]) {
        throw ShapeMismatch("lstm_forward input width does not match the params");
    }
    if (t_len < 1) {
        throw EmptySequence("lstm_forward needs at least one step");
    }

    Tensor h = zeros({hid});
    Tensor c = zeros({hid});
    LstmTape tape;
    tape.steps.reserve(static_cast<std::size_t>(t_len));
    for (int t = 0; t < t_len; ++t) {
        Tensor xt = zeros({in});
        for (int j = 0; j < in; ++j) xt.at(j) = xs.at(t, j);
        LstmStepOut step = lstm_step(xt, h, c, p);
        h = std::move(step.h);
        c = std::move(step.c);
        tape.steps.push_back(std::move(step.tape));
    }
    return {std::move(h), std::move(tape)};
}

LstmGrads lstm_backward(const Tensor& dh_last, const LstmTape& tape, const LstmParams& p) {
    if (tape.steps.empty()) {
        throw EmptySequence("lstm_backward on an empty tape");
    }
    const int t_len = static_cast<int>(tape.steps.size());
    const int in = p.wi.shape[0], hid = p.wi.shape[1];
    if (dh_last.shape != std::vector<int>{hid}) {
        throw TapeMismatch("lstm_backward dh shape does not match the params");
    }

    LstmGrads g;
    g.dxs = zeros({t_len, in});

    LstmStepGrads step;
    step.dparams = lstm_zero_grads(p);  // accumulates across all steps
    Tensor dh = dh_last;
    Tensor dc = zeros({hid});
    for (int t = t_len - 1; t >= 0; --t) {
        step.dx = zeros({in});
        step.dh_prev = zeros({hid});
        step.dc_prev = zeros({hid});
        lstm_step_backward(dh, dc, tape.steps[static_cast<std::size_t>(t)], p, step);
        for (int j = 0; j < in; ++j) g.dxs.at(t, j) = step.dx.at(j);
        dh = std::move(step.dh_prev);
        dc = std::move(step.dc_prev);
    }
    g.dparams = std::move(step.dparams);
    return g;
}

// ---- softmax ------------------------------------------------------------------

Tensor softmax(const Tensor& logits) {
    require_rank(logits, 1, "softmax input");
    Tensor probs = logits;
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : logits.data) mx = std::max(mx, v);
    double sum = 0.0;
    for (double& v : probs.data) {
        v = std::exp(v - mx);
        sum += v;
    }
    for (double& v : probs.data) v /= sum;
    return probs;
}

SoftmaxXent softmax_xent(const Tensor& logits, int label) {
    require_rank(logits, 1, "softmax_xent input");
    const int k = logits.shape[0];
    if (label < 0 || label >= k) {
        throw InvalidLabel("label " + std::to_string(label) + " out of range 0.." +
                           std::to_string(k - 1));
    }
    SoftmaxXent out;
    out.probs = softmax(logits);
    out.loss = -std::log(out.probs.at(label));
    out.dlogits = out.probs;
    out.dlogits.at(label) -= 1.0;
    return out;
}

} // namespace gasfusion
