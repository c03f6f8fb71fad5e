#include "gasfusion/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>

#include "gasfusion/parallel.hpp"

namespace gasfusion {

namespace {

constexpr const char* kKindNames[3] = {"cnn", "lstm", "early-fusion"};

Tensor glorot(Rng& rng, const std::vector<int>& shape, int fan_in, int fan_out) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    return uniform(rng, shape, -limit, limit);
}

ConvParams init_conv(Rng& rng, int out_c, int in_c, int k, double l1, double l2) {
    ConvParams p;
    p.kernels = glorot(rng, {out_c, in_c, k, k}, in_c * k * k, out_c * k * k);
    p.bias = zeros({out_c});
    p.stride = 1;
    p.l1 = l1;
    p.l2 = l2;
    return p;
}

DenseParams init_dense(Rng& rng, int in, int out, double l1 = 0.0, double l2 = 0.0) {
    DenseParams p;
    p.weights = glorot(rng, {in, out}, in, out);
    p.bias = zeros({out});
    p.l1 = l1;
    p.l2 = l2;
    return p;
}

LstmParams init_lstm(Rng& rng, int in, int hidden, double l2) {
    LstmParams p;
    p.wi = glorot(rng, {in, hidden}, in, hidden);
    p.wf = glorot(rng, {in, hidden}, in, hidden);
    p.wo = glorot(rng, {in, hidden}, in, hidden);
    p.wg = glorot(rng, {in, hidden}, in, hidden);
    p.ui = glorot(rng, {hidden, hidden}, hidden, hidden);
    p.uf = glorot(rng, {hidden, hidden}, hidden, hidden);
    p.uo = glorot(rng, {hidden, hidden}, hidden, hidden);
    p.ug = glorot(rng, {hidden, hidden}, hidden, hidden);
    p.bi = zeros({hidden});
    p.bf = full({hidden}, 1.0);  // forget gate starts open
    p.bo = zeros({hidden});
    p.bg = zeros({hidden});
    p.l2 = l2;
    return p;
}

CnnBranch init_cnn_branch(Rng& rng, const CnnSpec& spec) {
    CnnBranch b;
    b.conv1 = init_conv(rng, spec.filters[0], spec.in_channels, spec.kernel, spec.reg_l1,
                        spec.reg_l2);
    b.conv2 = init_conv(rng, spec.filters[1], spec.filters[0], spec.kernel, spec.reg_l1,
                        spec.reg_l2);
    b.conv3 = init_conv(rng, spec.filters[2], spec.filters[1], spec.kernel, 0.0, 0.0);
    b.feature = init_dense(rng, flat_dim(spec), spec.feature_dim);
    return b;
}

LstmBranch init_lstm_branch(Rng& rng, const LstmSpec& spec) {
    LstmBranch b;
    b.lstm = init_lstm(rng, spec.in_dim, spec.hidden, spec.reg_l2);
    b.feature = init_dense(rng, spec.hidden, spec.feature_dim);
    return b;
}

} // namespace

const char* kind_name(ModelKind k) { return kKindNames[static_cast<int>(k)]; }

std::optional<ModelKind> kind_from_name(const std::string& name) {
    for (int i = 0; i < 3; ++i) {
        if (name == kKindNames[i]) return static_cast<ModelKind>(i);
    }
    return std::nullopt;
}

int flat_dim(const CnnSpec& spec) {
    int hw = spec.input_hw;
    for (int b = 0; b < 3; ++b) {
        hw = hw - spec.kernel + 1;
        if (hw <= 0 || hw % 2 != 0) {
            throw InvalidShape("cnn spec does not yield even pre-pool extents (input " +
                               std::to_string(spec.input_hw) + ")");
        }
        hw /= 2;
    }
    return spec.filters[2] * hw * hw;
}

ModelBundle init_bundle(ModelKind kind, std::uint64_t seed) {
    return init_bundle(kind, CnnSpec{}, LstmSpec{}, FusionSpec{}, seed);
}

ModelBundle init_bundle(ModelKind kind, const CnnSpec& cnn, const LstmSpec& lstm,
                        const FusionSpec& fusion, std::uint64_t seed) {
    if (cnn.feature_dim != lstm.feature_dim) {
        throw ShapeMismatch("branch feature dimensions must match before fusion");
    }
    ModelBundle bundle;
    bundle.kind = kind;
    bundle.cnn_spec = cnn;
    bundle.lstm_spec = lstm;
    bundle.fusion_spec = fusion;
    bundle.meta.seed = seed;
    Rng rng(seed);
    switch (kind) {
    case ModelKind::Cnn: {
        CnnModel m;
        m.branch = init_cnn_branch(rng, cnn);
        m.head = init_dense(rng, cnn.feature_dim, kNumClasses);
        bundle.model = std::move(m);
        break;
    }
    case ModelKind::Lstm: {
        LstmModel m;
        m.branch = init_lstm_branch(rng, lstm);
        m.head = init_dense(rng, lstm.feature_dim, kNumClasses);
        bundle.model = std::move(m);
        break;
    }
    case ModelKind::EarlyFusion: {
        FusionModel m;
        m.cnn = init_cnn_branch(rng, cnn);
        m.lstm = init_lstm_branch(rng, lstm);
        m.merge = init_dense(rng, cnn.feature_dim + lstm.feature_dim, fusion.merge_hidden);
        m.head = init_dense(rng, fusion.merge_hidden, kNumClasses);
        bundle.model = std::move(m);
        break;
    }
    }
    return bundle;
}

Sample to_sample(const LabeledSample& s) { return Sample{s.image, s.sensors}; }

Tensor image_input(const ThermalFrame& img, int hw) {
    if (img.height == hw && img.width == hw) {
        return to_unit_tensor(img);
    }
    return to_unit_tensor(resize_area(img, hw, hw));
}

Tensor sensor_sequence(const SensorFrame& frame) {
    Tensor t = zeros({kNumSensors, 1});
    for (int i = 0; i < kNumSensors; ++i) {
        t.at(i, 0) = frame.adc[static_cast<std::size_t>(i)] / static_cast<double>(kAdcMax);
    }
    return t;
}

// ---- branch forward/backward --------------------------------------------------

namespace {

struct CnnBranchTape {
    ConvTape c1, c2, c3;
    Tensor pre1, pre2, pre3;  // conv outputs (relu pre-activations)
    PoolTape p1, p2, p3;
    DropoutTape drop;
    DenseTape feat;
    Tensor feat_pre;
};

Tensor cnn_branch_train_forward(const CnnBranch& b, const CnnSpec& spec, const Tensor& img,
                                bool training, Rng& rng, CnnBranchTape& tape) {
    auto [y1, t1] = conv2d_forward(img, b.conv1);
    tape.c1 = std::move(t1);
    tape.pre1 = y1;
    auto [r1, tp1] = maxpool2d_forward(relu_forward(y1).first);
    tape.p1 = std::move(tp1);

    auto [y2, t2] = conv2d_forward(r1, b.conv2);
    tape.c2 = std::move(t2);
    tape.pre2 = y2;
    auto [r2, tp2] = maxpool2d_forward(relu_forward(y2).first);
    tape.p2 = std::move(tp2);

    auto [y3, t3] = conv2d_forward(r2, b.conv3);
    tape.c3 = std::move(t3);
    tape.pre3 = y3;
    auto [r3, tp3] = maxpool2d_forward(relu_forward(y3).first);
    tape.p3 = std::move(tp3);

    auto [dropped, dt] = dropout_forward(r3, spec.dropout_rate, training, rng);
    tape.drop = std::move(dt);

    const Tensor flat = reshape(dropped, {static_cast<int>(dropped.size())});
    auto [fpre, ft] = dense_forward(flat, b.feature);
    tape.feat = std::move(ft);
    tape.feat_pre = fpre;
    return relu_forward(fpre).first;
}

struct CnnBranchGrads {
    ConvGrads g1, g2, g3;
    DenseGrads gfeat;
};

void cnn_branch_backward(const CnnBranch& b, const CnnBranchTape& tape, const Tensor& dfeat,
                         CnnBranchGrads& out) {
    Tensor d = relu_backward(dfeat, tape.feat_pre);
    out.gfeat = dense_backward(d, tape.feat, b.feature);

    const std::vector<int> pooled3{tape.c3.out_shape[0], tape.c3.out_shape[1] / 2,
                                   tape.c3.out_shape[2] / 2};
    Tensor ddrop = dropout_backward(reshape(out.gfeat.dx, pooled3), tape.drop);
    Tensor d3 = maxpool2d_backward(ddrop, tape.p3);
    out.g3 = conv2d_backward(relu_backward(d3, tape.pre3), tape.c3, b.conv3);

    Tensor d2 = maxpool2d_backward(out.g3.dx, tape.p2);
    out.g2 = conv2d_backward(relu_backward(d2, tape.pre2), tape.c2, b.conv2);

    Tensor d1 = maxpool2d_backward(out.g2.dx, tape.p1);
    out.g1 = conv2d_backward(relu_backward(d1, tape.pre1), tape.c1, b.conv1);
}

struct LstmBranchTape {
    LstmTape lstm;
    DenseTape feat;
    Tensor feat_pre;
};

Tensor lstm_branch_train_forward(const LstmBranch& b, const Tensor& seq, LstmBranchTape& tape) {
    auto [h, lt] = lstm_forward(seq, b.lstm);
    tape.lstm = std::move(lt);
    auto [fpre, ft] = dense_forward(h, b.feature);
    tape.feat = std::move(ft);
    tape.feat_pre = fpre;
    return relu_forward(fpre).first;
}

struct LstmBranchGrads {
    LstmParams glstm;
    DenseGrads gfeat;
};

void lstm_branch_backward(const LstmBranch& b, const LstmBranchTape& tape, const Tensor& dfeat,
                          LstmBranchGrads& out) {
    Tensor d = relu_backward(dfeat, tape.feat_pre);
    out.gfeat = dense_backward(d, tape.feat, b.feature);
    out.glstm = lstm_backward(out.gfeat.dx, tape.lstm, b.lstm).dparams;
}

// Per-sample training pass: cross-entropy loss, predicted class, gradients in
// param_refs order.
struct SamplePass {
    double loss = 0.0;
    int pred = 0;
};

SamplePass cnn_train_pass(const CnnModel& m, const CnnSpec& spec, const Tensor& img, int label,
                          bool training, Rng& rng, std::vector<Tensor>& grads) {
    CnnBranchTape tape;
    Tensor feat = cnn_branch_train_forward(m.branch, spec, img, training, rng, tape);
    auto [logits, ht] = dense_forward(feat, m.head);
    SoftmaxXent sx = softmax_xent(logits, label);

    DenseGrads ghead = dense_backward(sx.dlogits, ht, m.head);
    CnnBranchGrads gb;
    cnn_branch_backward(m.branch, tape, ghead.dx, gb);

    grads = {std::move(gb.g1.dkernels), std::move(gb.g1.dbias),
             std::move(gb.g2.dkernels), std::move(gb.g2.dbias),
             std::move(gb.g3.dkernels), std::move(gb.g3.dbias),
             std::move(gb.gfeat.dweights), std::move(gb.gfeat.dbias),
             std::move(ghead.dweights), std::move(ghead.dbias)};
    return {sx.loss, static_cast<int>(predict_class(sx.probs))};
}

void append_lstm_grads(LstmParams& g, std::vector<Tensor>& grads) {
    grads.push_back(std::move(g.wi));
    grads.push_back(std::move(g.wf));
    grads.push_back(std::move(g.wo));
    grads.push_back(std::move(g.wg));
    grads.push_back(std::move(g.ui));
    grads.push_back(std::move(g.uf));
    grads.push_back(std::move(g.uo));
    grads.push_back(std::move(g.ug));
    grads.push_back(std::move(g.bi));
    grads.push_back(std::move(g.bf));
    grads.push_back(std::move(g.bo));
    grads.push_back(std::move(g.bg));
}

SamplePass lstm_train_pass(const LstmModel& m, const Tensor& seq, int label,
                           std::vector<Tensor>& grads) {
    LstmBranchTape tape;
    Tensor feat = lstm_branch_train_forward(m.branch, seq, tape);
    auto [logits, ht] = dense_forward(feat, m.head);
    SoftmaxXent sx = softmax_xent(logits, label);

    DenseGrads ghead = dense_backward(sx.dlogits, ht, m.head);
    LstmBranchGrads gb;
    lstm_branch_backward(m.branch, tape, ghead.dx, gb);

    grads.clear();
    append_lstm_grads(gb.glstm, grads);
    grads.push_back(std::move(gb.gfeat.dweights));
    grads.push_back(std::move(gb.gfeat.dbias));
    grads.push_back(std::move(ghead.dweights));
    grads.push_back(std::move(ghead.dbias));
    return {sx.loss, static_cast<int>(predict_class(sx.probs))};
}

SamplePass fusion_train_pass(const FusionModel& m, const CnnSpec& cnn_spec, const Tensor& img,
                             const Tensor& seq, int label, bool training, Rng& rng,
                             std::vector<Tensor>& grads) {
    CnnBranchTape ct;
    Tensor cf = cnn_branch_train_forward(m.cnn, cnn_spec, img, training, rng, ct);
    LstmBranchTape lt;
    Tensor lf = lstm_branch_train_forward(m.lstm, seq, lt);

    const int cd = cf.shape[0], ld = lf.shape[0];
    Tensor merged = zeros({cd + ld});
    for (int i = 0; i < cd; ++i) merged.at(i) = cf.at(i);
    for (int i = 0; i < ld; ++i) merged.at(cd + i) = lf.at(i);

    auto [mpre, mt] = dense_forward(merged, m.merge);
    Tensor mact = relu_forward(mpre).first;
    auto [logits, ht] = dense_forward(mact, m.head);
    SoftmaxXent sx = softmax_xent(logits, label);

    DenseGrads ghead = dense_backward(sx.dlogits, ht, m.head);
    DenseGrads gmerge = dense_backward(relu_backward(ghead.dx, mpre), mt, m.merge);

    Tensor dcf = zeros({cd}), dlf = zeros({ld});
    for (int i = 0; i < cd; ++i) dcf.at(i) = gmerge.dx.at(i);
    for (int i = 0; i < ld; ++i) dlf.at(i) = gmerge.dx.at(cd + i);

    CnnBranchGrads gc;
    cnn_branch_backward(m.cnn, ct, dcf, gc);
    LstmBranchGrads gl;
    lstm_branch_backward(m.lstm, lt, dlf, gl);

    grads = {std::move(gc.g1.dkernels), std::move(gc.g1.dbias),
             std::move(gc.g2.dkernels), std::move(gc.g2.dbias),
             std::move(gc.g3.dkernels), std::move(gc.g3.dbias),
             std::move(gc.gfeat.dweights), std::move(gc.gfeat.dbias)};
    append_lstm_grads(gl.glstm, grads);
    grads.push_back(std::move(gl.gfeat.dweights));
    grads.push_back(std::move(gl.gfeat.dbias));
    grads.push_back(std::move(gmerge.dweights));
    grads.push_back(std::move(gmerge.dbias));
    grads.push_back(std::move(ghead.dweights));
    grads.push_back(std::move(ghead.dbias));
    return {sx.loss, static_cast<int>(predict_class(sx.probs))};
}

} // namespace

// ---- inference ------------------------------------------------------------------

Tensor cnn_branch_features(const CnnBranch& branch, const CnnSpec& spec, const Tensor& img) {
    CnnBranchTape tape;
    Rng unused(0);
    return cnn_branch_train_forward(branch, spec, img, /*training=*/false, unused, tape);
}

Tensor lstm_branch_features(const LstmBranch& branch, const Tensor& seq) {
    LstmBranchTape tape;
    return lstm_branch_train_forward(branch, seq, tape);
}

Tensor fusion_head_probs(const FusionModel& m, const Tensor& cnn_feat, const Tensor& lstm_feat) {
    const int cd = cnn_feat.shape[0], ld = lstm_feat.shape[0];
    Tensor merged = zeros({cd + ld});
    for (int i = 0; i < cd; ++i) merged.at(i) = cnn_feat.at(i);
    for (int i = 0; i < ld; ++i) merged.at(cd + i) = lstm_feat.at(i);
    Tensor mact = relu_forward(dense_forward(merged, m.merge).first).first;
    return softmax(dense_forward(mact, m.head).first);
}

Tensor forward(const ModelBundle& bundle, const Sample& sample) {
    switch (bundle.kind) {
    case ModelKind::Cnn: {
        if (!sample.image) throw ModalityMissing("cnn model needs a thermal image");
        const auto& m = std::get<CnnModel>(bundle.model);
        Tensor feat = cnn_branch_features(m.branch, bundle.cnn_spec,
                                          image_input(*sample.image, bundle.cnn_spec.input_hw));
        return softmax(dense_forward(feat, m.head).first);
    }
    case ModelKind::Lstm: {
        if (!sample.sensors) throw ModalityMissing("lstm model needs a sensor frame");
        const auto& m = std::get<LstmModel>(bundle.model);
        Tensor feat = lstm_branch_features(m.branch, sensor_sequence(*sample.sensors));
        return softmax(dense_forward(feat, m.head).first);
    }
    case ModelKind::EarlyFusion: {
        if (!sample.image) throw ModalityMissing("early-fusion model needs a thermal image");
        if (!sample.sensors) throw ModalityMissing("early-fusion model needs a sensor frame");
        const auto& m = std::get<FusionModel>(bundle.model);
        Tensor cf = cnn_branch_features(m.cnn, bundle.cnn_spec,
                                        image_input(*sample.image, bundle.cnn_spec.input_hw));
        Tensor lf = lstm_branch_features(m.lstm, sensor_sequence(*sample.sensors));
        return fusion_head_probs(m, cf, lf);
    }
    }
    throw Error("unreachable model kind");
}

// ---- parameter registry ------------------------------------------------------------

namespace {

void cnn_branch_refs(CnnBranch& b, const std::string& prefix, std::vector<ParamRef>& out) {
    out.push_back({prefix + "conv1.kernels", &b.conv1.kernels, b.conv1.l1, b.conv1.l2});
    out.push_back({prefix + "conv1.bias", &b.conv1.bias, 0.0, 0.0});
    out.push_back({prefix + "conv2.kernels", &b.conv2.kernels, b.conv2.l1, b.conv2.l2});
    out.push_back({prefix + "conv2.bias", &b.conv2.bias, 0.0, 0.0});
    out.push_back({prefix + "conv3.kernels", &b.conv3.kernels, b.conv3.l1, b.conv3.l2});
    out.push_back({prefix + "conv3.bias", &b.conv3.bias, 0.0, 0.0});
    out.push_back({prefix + "feature.weights", &b.feature.weights, b.feature.l1, b.feature.l2});
    out.push_back({prefix + "feature.bias", &b.feature.bias, 0.0, 0.0});
}

void lstm_branch_refs(LstmBranch& b, const std::string& prefix, std::vector<ParamRef>& out) {
    const double l2 = b.lstm.l2;
    out.push_back({prefix + "lstm.wi", &b.lstm.wi, 0.0, l2});
    out.push_back({prefix + "lstm.wf", &b.lstm.wf, 0.0, l2});
    out.push_back({prefix + "lstm.wo", &b.lstm.wo, 0.0, l2});
    out.push_back({prefix + "lstm.wg", &b.lstm.wg, 0.0, l2});
    out.push_back({prefix + "lstm.ui", &b.lstm.ui, 0.0, l2});
    out.push_back({prefix + "lstm.uf", &b.lstm.uf, 0.0, l2});
    out.push_back({prefix + "lstm.uo", &b.lstm.uo, 0.0, l2});
    out.push_back({prefix + "lstm.ug", &b.lstm.ug, 0.0, l2});
    out.push_back({prefix + "lstm.bi", &b.lstm.bi, 0.0, 0.0});
    out.push_back({prefix + "lstm.bf", &b.lstm.bf, 0.0, 0.0});
    out.push_back({prefix + "lstm.bo", &b.lstm.bo, 0.0, 0.0});
    out.push_back({prefix + "lstm.bg", &b.lstm.bg, 0.0, 0.0});
    out.push_back({prefix + "feature.weights", &b.feature.weights, b.feature.l1, b.feature.l2});
    out.push_back({prefix + "feature.bias", &b.feature.bias, 0.0, 0.0});
}

void dense_refs(DenseParams& d, const std::string& prefix, std::vector<ParamRef>& out) {
    out.push_back({prefix + ".weights", &d.weights, d.l1, d.l2});
    out.push_back({prefix + ".bias", &d.bias, 0.0, 0.0});
}

} // namespace

std::vector<ParamRef> param_refs(ModelBundle& bundle) {
    std::vector<ParamRef> out;
    switch (bundle.kind) {
    case ModelKind::Cnn: {
        auto& m = std::get<CnnModel>(bundle.model);
        cnn_branch_refs(m.branch, "", out);
        dense_refs(m.head, "head", out);
        break;
    }
    case ModelKind::Lstm: {
        auto& m = std::get<LstmModel>(bundle.model);
        lstm_branch_refs(m.branch, "", out);
        dense_refs(m.head, "head", out);
        break;
    }
    case ModelKind::EarlyFusion: {
        auto& m = std::get<FusionModel>(bundle.model);
        cnn_branch_refs(m.cnn, "cnn.", out);
        lstm_branch_refs(m.lstm, "lstm.", out);
        dense_refs(m.merge, "merge", out);
        dense_refs(m.head, "head", out);
        break;
    }
    }
    return out;
}

// ---- training -------------------------------------------------------------------

History train(ModelBundle& bundle, const std::vector<LabeledSample>& train_set,
              const std::vector<LabeledSample>& val_set, const TrainConfig& cfg) {
    validate(cfg);
    if (train_set.empty()) {
        throw EmptyDataset("train() needs a non-empty training set");
    }
    if (cfg.batch_size > static_cast<int>(train_set.size())) {
        throw InvalidConfig("batch_size exceeds the training set size");
    }

    const bool needs_image = bundle.kind != ModelKind::Lstm;
    const bool needs_seq = bundle.kind != ModelKind::Cnn;
    const int hw = bundle.cnn_spec.input_hw;

    auto encode = [&](const std::vector<LabeledSample>& set, std::vector<Tensor>& images,
                      std::vector<Tensor>& seqs, std::vector<int>& labels) {
        images.resize(needs_image ? set.size() : 0);
        seqs.resize(needs_seq ? set.size() : 0);
        labels.resize(set.size());
        parallel_for(set.size(), [&](std::size_t i) {
            if (needs_image) images[i] = image_input(set[i].image, hw);
            if (needs_seq) seqs[i] = sensor_sequence(set[i].sensors);
            labels[i] = static_cast<int>(set[i].label);
        });
    };

    std::vector<Tensor> train_images, train_seqs, val_images, val_seqs;
    std::vector<int> train_labels, val_labels;
    encode(train_set, train_images, train_seqs, train_labels);
    encode(val_set, val_images, val_seqs, val_labels);

    std::vector<ParamRef> refs = param_refs(bundle);
    std::vector<const Tensor*> cparams;
    std::vector<Tensor*> params;
    for (const ParamRef& r : refs) {
        cparams.push_back(r.tensor);
        params.push_back(r.tensor);
    }
    AdamState adam = make_adam_state(cparams);

    const Rng shuffle_root = Rng(cfg.seed).stream(0xA1);
    const Rng dropout_root = Rng(cfg.seed).stream(0xB2);

    auto sample_pass = [&](std::size_t idx, Rng& rng, std::vector<Tensor>& grads) -> SamplePass {
        const int label = train_labels[idx];
        switch (bundle.kind) {
        case ModelKind::Cnn:
            return cnn_train_pass(std::get<CnnModel>(bundle.model), bundle.cnn_spec,
                                  train_images[idx], label, true, rng, grads);
        case ModelKind::Lstm:
            return lstm_train_pass(std::get<LstmModel>(bundle.model), train_seqs[idx], label,
                                   grads);
        case ModelKind::EarlyFusion:
            return fusion_train_pass(std::get<FusionModel>(bundle.model), bundle.cnn_spec,
                                     train_images[idx], train_seqs[idx], label, true, rng, grads);
        }
        throw Error("unreachable model kind");
    };

    auto penalty_now = [&]() {
        double p = 0.0;
        for (const ParamRef& r : refs) {
            if (r.l1 != 0.0 || r.l2 != 0.0) p += reg_penalty(*r.tensor, r.l1, r.l2);
        }
        return p;
    };

    auto eval_probs = [&](std::size_t idx) -> Tensor {
        switch (bundle.kind) {
        case ModelKind::Cnn: {
            const auto& m = std::get<CnnModel>(bundle.model);
            Tensor feat = cnn_branch_features(m.branch, bundle.cnn_spec, val_images[idx]);
            return softmax(dense_forward(feat, m.head).first);
        }
        case ModelKind::Lstm: {
            const auto& m = std::get<LstmModel>(bundle.model);
            Tensor feat = lstm_branch_features(m.branch, val_seqs[idx]);
            return softmax(dense_forward(feat, m.head).first);
        }
        case ModelKind::EarlyFusion: {
            const auto& m = std::get<FusionModel>(bundle.model);
            Tensor cf = cnn_branch_features(m.cnn, bundle.cnn_spec, val_images[idx]);
            Tensor lf = lstm_branch_features(m.lstm, val_seqs[idx]);
            return fusion_head_probs(m, cf, lf);
        }
        }
        throw Error("unreachable model kind");
    };

    History history;
    history.reserve(static_cast<std::size_t>(cfg.epochs));

    const std::size_t n = train_set.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    long global_step = 0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng = shuffle_root.stream(static_cast<std::uint64_t>(epoch));
        for (std::size_t i = n; i > 1; --i) {
            const std::size_t j =
                static_cast<std::size_t>(shuffle_rng.next_int(0, static_cast<int>(i)));
            std::swap(order[i - 1], order[j]);
        }

        double epoch_loss = 0.0;
        long batches = 0;
        long correct = 0;

        for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t count =
                std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), n - start);
            std::vector<std::vector<Tensor>> slot_grads(count);
            std::vector<SamplePass> slot_pass(count);
            parallel_for(count, [&](std::size_t k) {
                // Per-sample dropout stream keyed by epoch and epoch position.
                Rng rng = dropout_root.stream(static_cast<std::uint64_t>(epoch) * n +
                                              (start + k));
                slot_pass[k] = sample_pass(order[start + k], rng, slot_grads[k]);
            });

            std::vector<Tensor> gsum = std::move(slot_grads[0]);
            double ce = slot_pass[0].loss;
            correct += slot_pass[0].pred == train_labels[order[start]] ? 1 : 0;
            for (std::size_t k = 1; k < count; ++k) {
                for (std::size_t g = 0; g < gsum.size(); ++g) {
                    gsum[g] = add(gsum[g], slot_grads[k][g]);
                }
                ce += slot_pass[k].loss;
                correct += slot_pass[k].pred == train_labels[order[start + k]] ? 1 : 0;
            }
            const double inv = 1.0 / static_cast<double>(count);
            for (Tensor& g : gsum) {
                for (double& v : g.data) v *= inv;
            }
            for (std::size_t g = 0; g < refs.size(); ++g) {
                if (refs[g].l1 != 0.0 || refs[g].l2 != 0.0) {
                    reg_grad_accum(*refs[g].tensor, refs[g].l1, refs[g].l2, gsum[g]);
                }
            }

            epoch_loss += ce * inv + penalty_now();
            adam_step(params, gsum, adam, cfg, global_step);
            ++global_step;
            ++batches;
        }

        EpochStats stats;
        stats.train_loss = epoch_loss / static_cast<double>(batches);
        stats.train_acc = static_cast<double>(correct) / static_cast<double>(n);

        if (!val_set.empty()) {
            const std::size_t vn = val_set.size();
            std::vector<double> vloss(vn);
            std::vector<int> vpred(vn);
            parallel_for(vn, [&](std::size_t i) {
                Tensor probs = eval_probs(i);
                vpred[i] = static_cast<int>(predict_class(probs));
                vloss[i] = -std::log(std::max(probs.at(val_labels[i]), 1e-300));
            });
            double ce = 0.0;
            long vcorrect = 0;
            for (std::size_t i = 0; i < vn; ++i) {
                ce += vloss[i];
                vcorrect += vpred[i] == val_labels[i] ? 1 : 0;
            }
            stats.val_loss = ce / static_cast<double>(vn) + penalty_now();
            stats.val_acc = static_cast<double>(vcorrect) / static_cast<double>(vn);
        }
        history.push_back(stats);
    }

    bundle.meta.seed = cfg.seed;
    bundle.meta.epochs_run = cfg.epochs;
    if (!history.empty()) {
        bundle.meta.final_train_loss = history.back().train_loss;
        bundle.meta.final_train_acc = history.back().train_acc;
        bundle.meta.final_val_loss = history.back().val_loss;
        bundle.meta.final_val_acc = history.back().val_acc;
    }
    return history;
}

// ---- late fusion -------------------------------------------------------------------

namespace {

void require_simplex(const Tensor& p, const char* arg) {
    if (p.ndim() != 1 || p.shape[0] != kNumClasses) {
        throw InvalidDistribution(std::string(arg) + " must be a length-4 probability vector");
    }
    double sum = 0.0;
    for (double v : p.data) {
        if (!(v >= 0.0)) {
            throw InvalidDistribution(std::string(arg) + " has a negative entry");
        }
        sum += v;
    }
    if (std::fabs(sum - 1.0) > 1e-6) {
        throw InvalidDistribution(std::string(arg) + " does not sum to 1");
    }
}

} // namespace

Tensor late_fuse_max(const Tensor& pa, const Tensor& pb) {
    require_simplex(pa, "pA");
    require_simplex(pb, "pB");
    Tensor out = pa;
    double sum = 0.0;
    for (long i = 0; i < out.size(); ++i) {
        out[i] = std::max(pa[i], pb[i]);
        sum += out[i];
    }
    for (double& v : out.data) v /= sum;
    return out;
}

Tensor late_fuse_avg(const Tensor& pa, const Tensor& pb) {
    require_simplex(pa, "pA");
    require_simplex(pb, "pB");
    Tensor out = pa;
    for (long i = 0; i < out.size(); ++i) {
        out[i] = 0.5 * (pa[i] + pb[i]);
    }
    return out;
}

GasClass predict_class(const Tensor& probs) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(probs.size()); ++i) {
        if (probs.at(i) > probs.at(best)) best = i;
    }
    return static_cast<GasClass>(best);
}

} // namespace gasfusion
