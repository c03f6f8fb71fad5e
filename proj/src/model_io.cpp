#include "gasfusion/model_io.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <string>

#include <json.hpp>

namespace gasfusion {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'G', 'F', 'M', 'B'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out.write(b, 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out.write(b, 8);
}

std::uint32_t get_u32(std::istream& in, const fs::path& path) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw FormatError(path.string() + ": truncated header field");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

std::uint64_t get_u64(std::istream& in, const fs::path& path) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw FormatError(path.string() + ": truncated value");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

json spec_to_json(const ModelBundle& b) {
    json j;
    j["kind"] = kind_name(b.kind);
    j["cnn"] = {{"input_hw", b.cnn_spec.input_hw},
                {"in_channels", b.cnn_spec.in_channels},
                {"filters", b.cnn_spec.filters},
                {"kernel", b.cnn_spec.kernel},
                {"reg_l1", b.cnn_spec.reg_l1},
                {"reg_l2", b.cnn_spec.reg_l2},
                {"dropout_rate", b.cnn_spec.dropout_rate},
                {"feature_dim", b.cnn_spec.feature_dim}};
    j["lstm"] = {{"seq_len", b.lstm_spec.seq_len},
                 {"in_dim", b.lstm_spec.in_dim},
                 {"hidden", b.lstm_spec.hidden},
                 {"reg_l2", b.lstm_spec.reg_l2},
                 {"feature_dim", b.lstm_spec.feature_dim}};
    j["fusion"] = {{"merge_hidden", b.fusion_spec.merge_hidden}};
    j["meta"] = {{"seed", b.meta.seed},
                 {"epochs_run", b.meta.epochs_run},
                 {"final_train_loss", b.meta.final_train_loss},
                 {"final_train_acc", b.meta.final_train_acc},
                 {"final_val_loss", b.meta.final_val_loss},
                 {"final_val_acc", b.meta.final_val_acc}};
    return j;
}

void spec_from_json(const json& j, ModelBundle& b, const fs::path& path) {
    const auto kind = kind_from_name(j.at("kind").get<std::string>());
    if (!kind) throw FormatError(path.string() + ": unknown model kind in header");
    b.kind = *kind;
    const json& c = j.at("cnn");
    b.cnn_spec.input_hw = c.at("input_hw").get<int>();
    b.cnn_spec.in_channels = c.at("in_channels").get<int>();
    b.cnn_spec.filters = c.at("filters").get<std::array<int, 3>>();
    b.cnn_spec.kernel = c.at("kernel").get<int>();
    b.cnn_spec.reg_l1 = c.at("reg_l1").get<double>();
    b.cnn_spec.reg_l2 = c.at("reg_l2").get<double>();
    b.cnn_spec.dropout_rate = c.at("dropout_rate").get<double>();
    b.cnn_spec.feature_dim = c.at("feature_dim").get<int>();
    const json& l = j.at("lstm");
    b.lstm_spec.seq_len = l.at("seq_len").get<int>();
    b.lstm_spec.in_dim = l.at("in_dim").get<int>();
    b.lstm_spec.hidden = l.at("hidden").get<int>();
    b.lstm_spec.reg_l2 = l.at("reg_l2").get<double>();
    b.lstm_spec.feature_dim = l.at("feature_dim").get<int>();
    b.fusion_spec.merge_hidden = j.at("fusion").at("merge_hidden").get<int>();
    const json& m = j.at("meta");
    b.meta.seed = m.at("seed").get<std::uint64_t>();
    b.meta.epochs_run = m.at("epochs_run").get<int>();
    b.meta.final_train_loss = m.at("final_train_loss").get<double>();
    b.meta.final_train_acc = m.at("final_train_acc").get<double>();
    b.meta.final_val_loss = m.at("final_val_loss").get<double>();
    b.meta.final_val_acc = m.at("final_val_acc").get<double>();
}

} // namespace

void save_bundle(const ModelBundle& bundle, const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw FormatError(path.string() + ": cannot open for writing");
    }
    out.write(kMagic, 4);
    put_u32(out, kVersion);

    const std::string header = spec_to_json(bundle).dump();
    put_u32(out, static_cast<std::uint32_t>(header.size()));
    out.write(header.data(), static_cast<std::streamsize>(header.size()));

    // param_refs needs a mutable bundle; serialization does not mutate.
    std::vector<ParamRef> refs = param_refs(const_cast<ModelBundle&>(bundle));
    put_u32(out, static_cast<std::uint32_t>(refs.size()));
    for (const ParamRef& r : refs) {
        put_u32(out, static_cast<std::uint32_t>(r.name.size()));
        out.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
        put_u32(out, static_cast<std::uint32_t>(r.tensor->ndim()));
        for (int e : r.tensor->shape) put_u32(out, static_cast<std::uint32_t>(e));
        for (double v : r.tensor->data) put_u64(out, std::bit_cast<std::uint64_t>(v));
    }
    if (!out) {
        throw FormatError(path.string() + ": write failed");
    }
}

ModelBundle load_bundle(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError(path.string() + ": cannot open");
    }
    char magic[4];
    in.read(magic, 4);
    if (!in || std::string(magic, 4) != std::string(kMagic, 4)) {
        throw FormatError(path.string() + ": not a model bundle file");
    }
    if (get_u32(in, path) != kVersion) {
        throw FormatError(path.string() + ": unsupported bundle version");
    }
    const std::uint32_t header_len = get_u32(in, path);
    std::string header(header_len, '\0');
    in.read(header.data(), header_len);
    if (!in) throw FormatError(path.string() + ": truncated header");

    ModelBundle bundle;
    json j;
    try {
        j = json::parse(header);
    } catch (const json::parse_error& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    spec_from_json(j, bundle, path);

    // Allocates parameters with the right shapes, then overwrites the values.
    bundle = [&] {
        ModelBundle fresh = init_bundle(bundle.kind, bundle.cnn_spec, bundle.lstm_spec,
                                        bundle.fusion_spec, 0);
        fresh.meta = bundle.meta;
        return fresh;
    }();

    std::vector<ParamRef> refs = param_refs(bundle);
    const std::uint32_t count = get_u32(in, path);
    if (count != refs.size()) {
        throw FormatError(path.string() + ": parameter count does not match the header spec");
    }
    for (ParamRef& r : refs) {
        const std::uint32_t name_len = get_u32(in, path);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        if (!in || name != r.name) {
            throw FormatError(path.string() + ": unexpected parameter '" + name + "'");
        }
        const std::uint32_t ndim = get_u32(in, path);
        std::vector<int> shape(ndim);
        for (auto& e : shape) e = static_cast<int>(get_u32(in, path));
        if (shape != r.tensor->shape) {
            throw FormatError(path.string() + ": parameter '" + name +
                              "' shape does not match the spec");
        }
        for (double& v : r.tensor->data) {
            v = std::bit_cast<double>(get_u64(in, path));
        }
    }
    return bundle;
}

} // namespace gasfusion
