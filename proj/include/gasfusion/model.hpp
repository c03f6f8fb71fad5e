#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "gasfusion/datagen.hpp"
#include "gasfusion/layers.hpp"
#include "gasfusion/optimizer.hpp"

namespace gasfusion {

enum class ModelKind : int { Cnn = 0, Lstm = 1, EarlyFusion = 2 };

const char* kind_name(ModelKind k);
std::optional<ModelKind> kind_from_name(const std::string& name);

// Three conv(3x3, valid, stride 1) -> relu -> maxpool(2x2) blocks, dropout,
// flatten, feature dense + relu. Regularizers apply to the first two conv
// kernels only. Input 30x30 keeps every pooled extent even through all
// three blocks (30>28>14>12>6>4>2).
struct CnnSpec {
    int input_hw = 30;
    int in_channels = 1;
    std::array<int, 3> filters{8, 16, 32};
    int kernel = 3;
    double reg_l1 = 0.005;
    double reg_l2 = 0.005;
    double dropout_rate = 0.25;
    int feature_dim = 32;
};

// Single LSTM layer, 5 cells, over the 7 sensor channels read as a length-7
// sequence of scalars (each ADC count / 1023), then feature dense + relu.
struct LstmSpec {
    int seq_len = 7;
    int in_dim = 1;
    int hidden = 5;
    double reg_l2 = 0.005;
    int feature_dim = 32;
};

struct FusionSpec {
    int merge_hidden = 32;
};

int flat_dim(const CnnSpec& spec);  // conv stack output length before the feature dense

struct CnnBranch {
    ConvParams conv1, conv2, conv3;
    DenseParams feature;
};

struct LstmBranch {
    LstmParams lstm;
    DenseParams feature;
};

struct CnnModel {
    CnnBranch branch;
    DenseParams head;
};

struct LstmModel {
    LstmBranch branch;
    DenseParams head;
};

struct FusionModel {
    CnnBranch cnn;
    LstmBranch lstm;
    DenseParams merge;
    DenseParams head;
};

struct TrainMeta {
    std::uint64_t seed = 0;
    int epochs_run = 0;
    double final_train_loss = 0.0;
    double final_train_acc = 0.0;
    double final_val_loss = 0.0;
    double final_val_acc = 0.0;
};

struct ModelBundle {
    ModelKind kind = ModelKind::Cnn;
    CnnSpec cnn_spec;
    LstmSpec lstm_spec;
    FusionSpec fusion_spec;
    std::variant<CnnModel, LstmModel, FusionModel> model;
    TrainMeta meta;
};

// Glorot-uniform weight init from the given seed; biases zero except the
// LSTM forget gate, which starts at 1.
ModelBundle init_bundle(ModelKind kind, std::uint64_t seed);
ModelBundle init_bundle(ModelKind kind, const CnnSpec& cnn, const LstmSpec& lstm,
                        const FusionSpec& fusion, std::uint64_t seed);

// A possibly-partial observation: inference rejects a bundle whose modality
// is absent with ModalityMissing.
struct Sample {
    std::optional<ThermalFrame> image;
    std::optional<SensorFrame> sensors;
};

Sample to_sample(const LabeledSample& s);

// Model-input encodings.
Tensor image_input(const ThermalFrame& img, int hw);   // [1,hw,hw], intensities/255
Tensor sensor_sequence(const SensorFrame& frame);      // [7,1], counts/1023

// Inference forward (dropout off); probabilities on the 4-class simplex.
Tensor forward(const ModelBundle& bundle, const Sample& sample);

// Branch features in inference mode, exposed for the fusion head so the
// two-modality paths can also be driven independently.
Tensor cnn_branch_features(const CnnBranch& branch, const CnnSpec& spec, const Tensor& img);
Tensor lstm_branch_features(const LstmBranch& branch, const Tensor& seq);
Tensor fusion_head_probs(const FusionModel& m, const Tensor& cnn_feat, const Tensor& lstm_feat);

// ---- training ----------------------------------------------------------------

struct EpochStats {
    double train_loss = 0.0;
    double train_acc = 0.0;
    double val_loss = 0.0;
    double val_acc = 0.0;
};

using History = std::vector<EpochStats>;

// Minimizes mean cross-entropy plus the parameter penalties with Adam.
// Sample order is reshuffled every epoch from cfg.seed; dropout noise also
// derives from cfg.seed, so identical inputs give bit-identical parameters.
History train(ModelBundle& bundle, const std::vector<LabeledSample>& train_set,
              const std::vector<LabeledSample>& val_set, const TrainConfig& cfg);

// Parameter registry in the fixed serialization order.
struct ParamRef {
    std::string name;
    Tensor* tensor;
    double l1 = 0.0;
    double l2 = 0.0;
};

std::vector<ParamRef> param_refs(ModelBundle& bundle);

// ---- late fusion ----------------------------------------------------------------

// Elementwise max of two probability vectors, renormalized to sum 1.
Tensor late_fuse_max(const Tensor& pa, const Tensor& pb);
// Arithmetic mean of two probability vectors.
Tensor late_fuse_avg(const Tensor& pa, const Tensor& pb);

// Argmax with ties broken toward the lowest class index.
GasClass predict_class(const Tensor& probs);

} // namespace gasfusion
