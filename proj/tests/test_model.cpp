#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "gasfusion/dataset_io.hpp"
#include "gasfusion/model.hpp"
#include "gasfusion/model_io.hpp"

using namespace gasfusion;
namespace fs = std::filesystem;

namespace {

GenConfig desk_config(int per_class = 25) {
    GenConfig cfg = default_gen_config();
    cfg.samples_per_class = per_class;
    cfg.seed = 7;
    return cfg;
}

} // namespace

TEST_CASE("fresh bundles emit probabilities on the simplex") {
    const GenConfig cfg = desk_config(1);
    const auto ds = gen_dataset(cfg);
    for (ModelKind kind : {ModelKind::Cnn, ModelKind::Lstm, ModelKind::EarlyFusion}) {
        const ModelBundle bundle = init_bundle(kind, 5);
        for (const LabeledSample& s : ds) {
            const Tensor probs = forward(bundle, to_sample(s));
            REQUIRE(probs.shape == std::vector<int>{4});
            double sum = 0.0;
            for (double v : probs.data) {
                CHECK(std::isfinite(v));
                sum += v;
            }
            CHECK(std::fabs(sum - 1.0) < 1e-9);
        }
    }
}

TEST_CASE("forward is pure: identical samples give identical probs") {
    const GenConfig cfg = desk_config(1);
    const auto ds = gen_dataset(cfg);
    const ModelBundle bundle = init_bundle(ModelKind::EarlyFusion, 5);
    const Tensor a = forward(bundle, to_sample(ds[0]));
    const Tensor b = forward(bundle, to_sample(ds[0]));
    CHECK(a.data == b.data);
}

TEST_CASE("missing modalities are rejected") {
    const GenConfig cfg = desk_config(1);
    const auto ds = gen_dataset(cfg);
    Sample image_only;
    image_only.image = ds[0].image;
    Sample sensors_only;
    sensors_only.sensors = ds[0].sensors;

    const ModelBundle cnn = init_bundle(ModelKind::Cnn, 1);
    const ModelBundle lstm = init_bundle(ModelKind::Lstm, 1);
    const ModelBundle fusion = init_bundle(ModelKind::EarlyFusion, 1);

    CHECK_THROWS_AS(forward(cnn, sensors_only), ModalityMissing);
    CHECK_THROWS_AS(forward(lstm, image_only), ModalityMissing);
    CHECK_THROWS_AS(forward(fusion, image_only), ModalityMissing);
    CHECK_THROWS_AS(forward(fusion, sensors_only), ModalityMissing);
    CHECK_NOTHROW(forward(cnn, image_only));
    CHECK_NOTHROW(forward(lstm, sensors_only));
}

TEST_CASE("all-zero LSTM weights give a constant branch feature") {
    ModelBundle bundle = init_bundle(ModelKind::Lstm, 3);
    auto& m = std::get<LstmModel>(bundle.model);
    for (Tensor* t : {&m.branch.lstm.wi, &m.branch.lstm.wf, &m.branch.lstm.wo, &m.branch.lstm.wg,
                      &m.branch.lstm.ui, &m.branch.lstm.uf, &m.branch.lstm.uo, &m.branch.lstm.ug,
                      &m.branch.lstm.bi, &m.branch.lstm.bf, &m.branch.lstm.bo,
                      &m.branch.lstm.bg}) {
        for (double& v : t->data) v = 0.0;
    }
    const GenConfig cfg = desk_config(2);
    const auto ds = gen_dataset(cfg);
    const Tensor f0 = lstm_branch_features(m.branch, sensor_sequence(ds[0].sensors));
    for (const LabeledSample& s : ds) {
        const Tensor f = lstm_branch_features(m.branch, sensor_sequence(s.sensors));
        CHECK(f.data == f0.data);
    }
}

TEST_CASE("early-fusion branch isolation") {
    const ModelBundle bundle = init_bundle(ModelKind::EarlyFusion, 11);
    const auto& m = std::get<FusionModel>(bundle.model);
    const GenConfig cfg = desk_config(3);
    const auto ds = gen_dataset(cfg);
    const Tensor zero_feat = zeros({bundle.cnn_spec.feature_dim});

    // With the CNN feature zeroed, the output is a pure function of sensors.
    const Tensor seq = sensor_sequence(ds[0].sensors);
    const Tensor lf = lstm_branch_features(m.lstm, seq);
    const Tensor ref = fusion_head_probs(m, zero_feat, lf);
    for (const LabeledSample& s : ds) {
        const Tensor lf2 = lstm_branch_features(m.lstm, sensor_sequence(ds[0].sensors));
        const Tensor probs = fusion_head_probs(m, zero_feat, lf2);
        CHECK(probs.data == ref.data);
        (void)s;
    }

    // Varying the image changes nothing when the CNN feature stays zeroed.
    for (const LabeledSample& s : ds) {
        const Tensor probs = fusion_head_probs(m, zero_feat, lf);
        CHECK(probs.data == ref.data);
        (void)s;
    }
}

TEST_CASE("train with zero epochs is a no-op") {
    const GenConfig cfg = desk_config(25);
    const auto ds = gen_dataset(cfg);
    const SplitIndices idx = split(ds, cfg.seed);
    const auto train_set = take(ds, idx.train);
    const auto val_set = take(ds, idx.val);

    ModelBundle bundle = init_bundle(ModelKind::Lstm, 21);
    const ModelBundle before = bundle;
    TrainConfig tc;
    tc.epochs = 0;
    const History h = train(bundle, train_set, val_set, tc);
    CHECK(h.empty());

    std::vector<ParamRef> ra = param_refs(bundle);
    ModelBundle before_mut = before;
    std::vector<ParamRef> rb = param_refs(before_mut);
    for (std::size_t i = 0; i < ra.size(); ++i) {
        CHECK(ra[i].tensor->data == rb[i].tensor->data);
    }
}

TEST_CASE("train rejects bad inputs") {
    const GenConfig cfg = desk_config(25);
    const auto ds = gen_dataset(cfg);
    ModelBundle bundle = init_bundle(ModelKind::Lstm, 21);
    TrainConfig tc;
    tc.epochs = 1;
    CHECK_THROWS_AS(train(bundle, {}, {}, tc), EmptyDataset);

    TrainConfig big;
    big.batch_size = 1000;
    big.epochs = 1;
    const auto tiny = take(ds, split(ds, 1).val);
    CHECK_THROWS_AS(train(bundle, tiny, {}, big), InvalidConfig);
}

TEST_CASE("single-sample overfit drives the loss under 0.01") {
    const GenConfig cfg = desk_config(1);
    const auto ds = gen_dataset(cfg);
    const std::vector<LabeledSample> one{ds[1]};  // a perfume sample

    TrainConfig tc;
    tc.epochs = 200;
    tc.batch_size = 1;
    tc.lr0 = 0.01;
    tc.seed = 3;

    for (ModelKind kind : {ModelKind::Cnn, ModelKind::Lstm, ModelKind::EarlyFusion}) {
        ModelBundle bundle = init_bundle(kind, 3);
        const History h = train(bundle, one, {}, tc);
        REQUIRE(h.size() == 200);
        const Tensor probs = forward(bundle, to_sample(one[0]));
        const double ce = -std::log(probs.at(static_cast<int>(one[0].label)));
        CHECK(ce < 0.01);
    }
}

TEST_CASE("training is deterministic under the seed") {
    const GenConfig cfg = desk_config(25);
    const auto ds = gen_dataset(cfg);
    const SplitIndices idx = split(ds, cfg.seed);
    const auto train_set = take(ds, idx.train);
    const auto val_set = take(ds, idx.val);

    auto run = [&]() {
        ModelBundle bundle = init_bundle(ModelKind::EarlyFusion, 13);
        TrainConfig tc;
        tc.epochs = 2;
        tc.batch_size = 16;
        tc.seed = 13;
        train(bundle, train_set, val_set, tc);
        std::vector<double> flat;
        for (const ParamRef& r : param_refs(bundle)) {
            flat.insert(flat.end(), r.tensor->data.begin(), r.tensor->data.end());
        }
        return flat;
    };
    CHECK(run() == run());
}

TEST_CASE("desk-scale training reduces the loss for all three models") {
    const GenConfig cfg = desk_config(25);
    const auto ds = gen_dataset(cfg);
    const SplitIndices idx = split(ds, cfg.seed);
    const auto train_set = take(ds, idx.train);
    const auto val_set = take(ds, idx.val);

    TrainConfig tc;
    tc.epochs = 5;
    tc.batch_size = 16;
    tc.lr0 = 0.005;
    tc.seed = 29;

    for (ModelKind kind : {ModelKind::Cnn, ModelKind::Lstm, ModelKind::EarlyFusion}) {
        ModelBundle bundle = init_bundle(kind, 29);
        const History h = train(bundle, train_set, val_set, tc);
        REQUIRE(h.size() == 5);
        CHECK(h.back().train_loss < h.front().train_loss);
    }
}

TEST_CASE("bundle serialization round-trips bit-exactly") {
    const GenConfig cfg = desk_config(2);
    const auto ds = gen_dataset(cfg);
    const fs::path path = fs::temp_directory_path() / "gasfusion_test_bundle.gfm";

    for (ModelKind kind : {ModelKind::Cnn, ModelKind::Lstm, ModelKind::EarlyFusion}) {
        ModelBundle bundle = init_bundle(kind, 17);
        bundle.meta.epochs_run = 42;
        bundle.meta.final_val_acc = 0.875;
        save_bundle(bundle, path);
        ModelBundle back = load_bundle(path);

        CHECK(back.kind == bundle.kind);
        CHECK(back.meta.epochs_run == 42);
        CHECK(back.meta.final_val_acc == 0.875);

        std::vector<ParamRef> ra = param_refs(bundle);
        std::vector<ParamRef> rb = param_refs(back);
        REQUIRE(ra.size() == rb.size());
        for (std::size_t i = 0; i < ra.size(); ++i) {
            CHECK(ra[i].name == rb[i].name);
            CHECK(ra[i].tensor->shape == rb[i].tensor->shape);
            CHECK(ra[i].tensor->data == rb[i].tensor->data);
        }

        for (const LabeledSample& s : ds) {
            const Tensor pa = forward(bundle, to_sample(s));
            const Tensor pb = forward(back, to_sample(s));
            CHECK(pa.data == pb.data);
        }
    }
    fs::remove(path);
}

TEST_CASE("corrupt bundle files are rejected") {
    const fs::path path = fs::temp_directory_path() / "gasfusion_test_bad.gfm";
    ModelBundle bundle = init_bundle(ModelKind::Lstm, 1);
    save_bundle(bundle, path);
    fs::resize_file(path, fs::file_size(path) - 16);
    CHECK_THROWS_AS(load_bundle(path), FormatError);
    fs::remove(path);
    CHECK_THROWS_AS(load_bundle(path), FormatError);
}

TEST_CASE("late fusion examples") {
    const Tensor pa = from_data({4}, {0.7, 0.1, 0.1, 0.1});
    const Tensor pb = from_data({4}, {0.2, 0.5, 0.2, 0.1});

    const Tensor mx = late_fuse_max(pa, pb);
    CHECK(mx[0] == doctest::Approx(0.7 / 1.5).epsilon(1e-4));
    CHECK(mx[1] == doctest::Approx(0.5 / 1.5).epsilon(1e-4));
    CHECK(mx[2] == doctest::Approx(0.2 / 1.5).epsilon(1e-4));
    CHECK(mx[3] == doctest::Approx(0.1 / 1.5).epsilon(1e-4));

    const Tensor av = late_fuse_avg(pa, pb);
    const std::vector<double> av_expect{0.45, 0.3, 0.15, 0.1};
    for (long i = 0; i < av.size(); ++i) {
        CHECK(av[i] == 0.5 * (pa[i] + pb[i]));  // the mean, exactly
        CHECK(av[i] == doctest::Approx(av_expect[static_cast<std::size_t>(i)]).epsilon(1e-12));
    }

    // idempotence (max renormalizes, so allow an ulp there)
    const Tensor mi = late_fuse_max(pa, pa);
    for (long i = 0; i < mi.size(); ++i) {
        CHECK(mi[i] == doctest::Approx(pa[i]).epsilon(1e-12));
    }
    CHECK(late_fuse_avg(pa, pa).data == pa.data);

    CHECK_THROWS_AS(late_fuse_max(from_data({4}, {0.5, 0.5, 0.5, 0.5}), pb),
                    InvalidDistribution);
    CHECK_THROWS_AS(late_fuse_avg(pa, from_data({4}, {1.2, -0.2, 0.0, 0.0})),
                    InvalidDistribution);
}

TEST_CASE("late fusion symmetry and argmax dominance on random simplex pairs") {
    Rng rng(97);
    auto random_simplex = [&rng]() {
        Tensor p = uniform(rng, {4}, 1e-6, 1.0);
        double sum = 0.0;
        for (double v : p.data) sum += v;
        for (double& v : p.data) v /= sum;
        return p;
    };
    for (int trial = 0; trial < 500; ++trial) {
        const Tensor pa = random_simplex();
        const Tensor pb = random_simplex();

        const Tensor m1 = late_fuse_max(pa, pb), m2 = late_fuse_max(pb, pa);
        const Tensor a1 = late_fuse_avg(pa, pb), a2 = late_fuse_avg(pb, pa);
        CHECK(m1.data == m2.data);
        CHECK(a1.data == a2.data);

        double sum = 0.0;
        for (double v : a1.data) sum += v;
        CHECK(std::fabs(sum - 1.0) < 1e-12);

        const GasClass fused = predict_class(m1);
        CHECK((fused == predict_class(pa) || fused == predict_class(pb)));
    }
}

TEST_CASE("predict_class argmax and tie rule") {
    CHECK(predict_class(from_data({4}, {1, 0, 0, 0})) == GasClass::NoGas);
    CHECK(predict_class(from_data({4}, {0.25, 0.25, 0.25, 0.25})) == GasClass::NoGas);
    CHECK(predict_class(from_data({4}, {0.1, 0.2, 0.6, 0.1})) == GasClass::Smoke);
    CHECK(predict_class(from_data({4}, {0.1, 0.4, 0.4, 0.1})) == GasClass::Perfume);
}

TEST_CASE("inference ignores the dropout configuration entirely") {
    const GenConfig cfg = desk_config(1);
    const auto ds = gen_dataset(cfg);

    ModelBundle with = init_bundle(ModelKind::Cnn, 19);
    CnnSpec no_dropout_spec;  // same architecture, dropout disabled
    no_dropout_spec.dropout_rate = 0.0;
    ModelBundle without = init_bundle(ModelKind::Cnn, no_dropout_spec, LstmSpec{}, FusionSpec{}, 19);

    for (const LabeledSample& s : ds) {
        const Tensor pa = forward(with, to_sample(s));
        const Tensor pb = forward(without, to_sample(s));
        CHECK(pa.data == pb.data);  // bit-identical
    }
}
