#pragma once

#include <utility>
#include <vector>

#include "gasfusion/tensor.hpp"

namespace gasfusion {

// Every layer comes as a forward producing (output, tape) and an analytic
// backward consuming exactly one matching tape. Tapes own copies of the
// intermediates they need, so a tape outlives the call that produced it and
// concurrent forwards on shared read-only params stay safe.

// ---- 2-D convolution (valid padding, cross-correlation) --------------------

struct ConvParams {
    Tensor kernels;  // [outC, inC, kH, kW]
    Tensor bias;     // [outC]
    int stride = 1;
    double l1 = 0.0;
    double l2 = 0.0;
};

struct ConvTape {
    Tensor x;                    // input, needed for the kernel gradient
    std::vector<int> out_shape;  // [outC, H', W']
    int stride = 1;
};

struct ConvGrads {
    Tensor dx;
    Tensor dkernels;
    Tensor dbias;
};

// y[o] = sum_c x[c] (*) k[o,c] + bias[o], H' = (H - kH)/stride + 1.
std::pair<Tensor, ConvTape> conv2d_forward(const Tensor& x, const ConvParams& p);
ConvGrads conv2d_backward(const Tensor& dy, const ConvTape& tape, const ConvParams& p);

// ---- 2x2/2 max pooling ------------------------------------------------------

struct PoolTape {
    std::vector<int> in_shape;
    std::vector<long> argmax;  // flat input index per output element
};

// Requires even H and W. Ties go to the first maximum in row-major order.
std::pair<Tensor, PoolTape> maxpool2d_forward(const Tensor& x);
// Routes dy to the recorded argmax positions; sum(dx) == sum(dy) exactly.
Tensor maxpool2d_backward(const Tensor& dy, const PoolTape& tape);

// ---- dense ------------------------------------------------------------------

struct DenseParams {
    Tensor weights;  // [in, out]
    Tensor bias;     // [out]
    double l1 = 0.0;
    double l2 = 0.0;
};

struct DenseTape {
    Tensor x;  // [in]
};

struct DenseGrads {
    Tensor dx;
    Tensor dweights;
    Tensor dbias;
};

// y = x W + b on a rank-1 input.
std::pair<Tensor, DenseTape> dense_forward(const Tensor& x, const DenseParams& p);
DenseGrads dense_backward(const Tensor& dy, const DenseTape& tape, const DenseParams& p);

// ---- activations ------------------------------------------------------------

// Tapes are the cached pre-activations.
std::pair<Tensor, Tensor> relu_forward(const Tensor& x);
Tensor relu_backward(const Tensor& dy, const Tensor& pre);
std::pair<Tensor, Tensor> sigmoid_forward(const Tensor& x);
Tensor sigmoid_backward(const Tensor& dy, const Tensor& pre);
std::pair<Tensor, Tensor> tanh_forward(const Tensor& x);
Tensor tanh_backward(const Tensor& dy, const Tensor& pre);

double sigmoid(double v);

// ---- dropout ------------------------------------------------------------------

struct DropoutTape {
    Tensor mask;  // 0 or 1/(1-rate) per element; empty on the identity path
    bool identity = true;
};

// Inverted dropout: training zeroes each element with probability `rate` and
// scales survivors by 1/(1-rate); inference is exactly the identity.
std::pair<Tensor, DropoutTape> dropout_forward(const Tensor& x, double rate, bool training,
                                               Rng& rng);
Tensor dropout_backward(const Tensor& dy, const DropoutTape& tape);

// ---- LSTM ---------------------------------------------------------------------

struct LstmParams {
    // Input weights [inDim, hidden], recurrent weights [hidden, hidden],
    // biases [hidden], one block per gate: input, forget, output, candidate.
    Tensor wi, wf, wo, wg;
    Tensor ui, uf, uo, ug;
    Tensor bi, bf, bo, bg;
    double l2 = 0.0;
};

struct LstmStepTape {
    Tensor x, h_prev, c_prev;
    Tensor i, f, o, g;  // post-activation gate values
    Tensor c;           // new cell state
};

struct LstmStepOut {
    Tensor h;
    Tensor c;
    LstmStepTape tape;
};

// i = sig(xWi + hUi + bi), f/o likewise, g = tanh(xWg + hUg + bg);
// c = f*c_prev + i*g; h = o*tanh(c).
LstmStepOut lstm_step(const Tensor& x, const Tensor& h_prev, const Tensor& c_prev,
                      const LstmParams& p);

struct LstmStepGrads {
    Tensor dx, dh_prev, dc_prev;
    LstmParams dparams;  // gradient accumulator shaped like the params
};

LstmParams lstm_zero_grads(const LstmParams& p);
void lstm_step_backward(const Tensor& dh, const Tensor& dc, const LstmStepTape& tape,
                        const LstmParams& p, LstmStepGrads& out);

struct LstmTape {
    std::vector<LstmStepTape> steps;
};

struct LstmGrads {
    Tensor dxs;         // [T, inDim]
    LstmParams dparams;
};

// Runs the cell over xs[T, inDim] from zero initial state and returns the
// final hidden state. Backward is full BPTT seeded by dh_T.
std::pair<Tensor, LstmTape> lstm_forward(const Tensor& xs, const LstmParams& p);
LstmGrads lstm_backward(const Tensor& dh_last, const LstmTape& tape, const LstmParams& p);

// ---- softmax + cross-entropy ----------------------------------------------------

struct SoftmaxXent {
    Tensor probs;
    double loss = 0.0;
    Tensor dlogits;  // probs - onehot(label)
};

Tensor softmax(const Tensor& logits);
SoftmaxXent softmax_xent(const Tensor& logits, int label);

} // namespace gasfusion
