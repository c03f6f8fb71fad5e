#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gasfusion/dataset_io.hpp"
#include "gasfusion/metrics.hpp"
#include "gasfusion/model.hpp"
#include "gasfusion/model_io.hpp"
#include "gasfusion/parallel.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gasfusion;

namespace {

constexpr int kExitData = 2;
constexpr int kExitUsage = 64;

// Built-in defaults, overridden by the config file, overridden by CLI flags.
struct RunConfig {
    GenConfig gen = default_gen_config();
    TrainConfig train;
    std::string model_kind = "early-fusion";
    std::string data_dir;
    std::string out_path;
    bool quiet = false;
};

void reject_unknown(const json& j, std::initializer_list<const char*> allowed,
                    const std::string& where) {
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (const char* a : allowed) {
            if (key == a) {
                ok = true;
                break;
            }
        }
        if (!ok) {
            throw InvalidConfig("config: unknown key '" + key + "' in " + where);
        }
    }
}

void apply_config_file(RunConfig& rc, const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw FormatError(path.string() + ": cannot open config file");
    }
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    reject_unknown(j, {"seed", "generate", "train", "model", "data", "out"}, "top level");
    if (j.contains("seed")) {
        rc.gen.seed = j["seed"].get<std::uint64_t>();
        rc.train.seed = rc.gen.seed;
    }
    if (j.contains("generate")) {
        const json& g = j["generate"];
        reject_unknown(g,
                       {"samples_per_class", "sensor_sigma", "pixel_sigma", "ambient",
                        "frame_period_s"},
                       "generate");
        if (g.contains("samples_per_class")) rc.gen.samples_per_class = g["samples_per_class"];
        if (g.contains("sensor_sigma")) rc.gen.sensor_sigma = g["sensor_sigma"];
        if (g.contains("pixel_sigma")) rc.gen.pixel_sigma = g["pixel_sigma"];
        if (g.contains("ambient")) rc.gen.ambient = g["ambient"];
        if (g.contains("frame_period_s")) rc.gen.frame_period_s = g["frame_period_s"];
    }
    if (j.contains("train")) {
        const json& t = j["train"];
        reject_unknown(t, {"epochs", "batch_size", "lr0", "decay"}, "train");
        if (t.contains("epochs")) rc.train.epochs = t["epochs"];
        if (t.contains("batch_size")) rc.train.batch_size = t["batch_size"];
        if (t.contains("lr0")) rc.train.lr0 = t["lr0"];
        if (t.contains("decay")) rc.train.decay = t["decay"];
    }
    if (j.contains("model")) rc.model_kind = j["model"].get<std::string>();
    if (j.contains("data")) rc.data_dir = j["data"].get<std::string>();
    if (j.contains("out")) rc.out_path = j["out"].get<std::string>();
}

void progress(const RunConfig& rc, const std::string& msg) {
    if (!rc.quiet) {
        std::cerr << msg << '\n';
    }
}

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string fmt4(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

// ---- generate -------------------------------------------------------------------

int cmd_generate(const RunConfig& rc) {
    validate(rc.gen);
    if (rc.out_path.empty()) {
        throw InvalidConfig("generate needs --out");
    }
    progress(rc, "generating " + std::to_string(rc.gen.samples_per_class * kNumClasses) +
                     " samples (seed " + std::to_string(rc.gen.seed) + ")");
    const std::vector<LabeledSample> samples = gen_dataset(rc.gen);
    save_dataset(samples, rc.out_path, rc.gen.seed);
    for (int c = 0; c < kNumClasses; ++c) {
        std::cout << class_name(static_cast<GasClass>(c)) << " " << rc.gen.samples_per_class
                  << "\n";
    }
    std::cout << "total " << samples.size() << "\n";
    return 0;
}

// ---- train ----------------------------------------------------------------------

int cmd_train(const RunConfig& rc) {
    if (rc.data_dir.empty() || rc.out_path.empty()) {
        throw InvalidConfig("train needs --data and --out");
    }
    const auto kind = kind_from_name(rc.model_kind);
    if (!kind) {
        // Unreachable through the CLI (the flag is validated); config files land here.
        throw InvalidConfig("unknown model kind '" + rc.model_kind + "'");
    }

    progress(rc, "loading dataset from " + rc.data_dir);
    const LoadedDataset ds = load_dataset(rc.data_dir);
    const SplitIndices idx = split(ds.samples, ds.seed);
    const std::vector<LabeledSample> train_set = take(ds.samples, idx.train);
    const std::vector<LabeledSample> val_set = take(ds.samples, idx.val);
    progress(rc, "split: train " + std::to_string(train_set.size()) + ", val " +
                     std::to_string(val_set.size()) + ", test " + std::to_string(idx.test.size()));

    ModelBundle bundle = init_bundle(*kind, rc.train.seed);
    History history;
    if (rc.train.epochs > 0) {
        TrainConfig cfg = rc.train;
        // Epoch-by-epoch outer loop so progress can be reported; the split of
        // one train() call into several is invisible to the math only if the
        // optimizer state persists, so run the whole thing in one call.
        history = train(bundle, train_set, val_set, cfg);
        for (std::size_t e = 0; e < history.size(); ++e) {
            if (!rc.quiet && (e + 1) % 10 == 0) {
                std::cerr << "epoch " << (e + 1) << "/" << history.size()
                          << " train_loss=" << fmt4(history[e].train_loss)
                          << " val_acc=" << fmt4(history[e].val_acc) << '\n';
            }
        }
    } else {
        bundle.meta.seed = rc.train.seed;
    }

    save_bundle(bundle, rc.out_path);
    const fs::path hist_path = rc.out_path + ".history.csv";
    {
        std::ofstream out(hist_path, std::ios::binary);
        out << "epoch,train_loss,train_acc,val_loss,val_acc\n";
        for (std::size_t e = 0; e < history.size(); ++e) {
            out << (e + 1) << ',' << fmt17(history[e].train_loss) << ','
                << fmt17(history[e].train_acc) << ',' << fmt17(history[e].val_loss) << ','
                << fmt17(history[e].val_acc) << '\n';
        }
        if (!out) throw FormatError(hist_path.string() + ": write failed");
    }

    std::cout << "model " << kind_name(*kind) << " epochs " << rc.train.epochs;
    if (!history.empty()) {
        std::cout << " train_loss " << fmt4(history.back().train_loss) << " train_acc "
                  << fmt4(history.back().train_acc) << " val_loss "
                  << fmt4(history.back().val_loss) << " val_acc "
                  << fmt4(history.back().val_acc);
    }
    std::cout << "\n";
    return 0;
}

// ---- eval -----------------------------------------------------------------------

int cmd_eval(const RunConfig& rc, const std::vector<std::string>& model_files,
             const std::string& late) {
    if (rc.data_dir.empty()) {
        throw InvalidConfig("eval needs --data");
    }
    if (late != "none" && model_files.size() != 2) {
        throw InvalidConfig("late fusion needs exactly two model files");
    }
    const fs::path out_dir = rc.out_path.empty() ? fs::path("reports") : fs::path(rc.out_path);
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) {
        throw FormatError(out_dir.string() + ": cannot create report directory");
    }

    progress(rc, "loading dataset from " + rc.data_dir);
    const LoadedDataset ds = load_dataset(rc.data_dir);
    const SplitIndices idx = split(ds.samples, ds.seed);
    const std::vector<LabeledSample> test_set = take(ds.samples, idx.test);

    std::vector<int> y_true;
    y_true.reserve(test_set.size());
    for (const LabeledSample& s : test_set) y_true.push_back(static_cast<int>(s.label));

    std::vector<ComparisonRow> rows;
    std::vector<std::vector<Tensor>> model_probs;

    auto emit_report = [&](const std::string& name, const std::vector<int>& y_pred) {
        const ConfusionMatrix cm = confusion(y_true, y_pred);
        const ClassReport rep = report(cm);
        rows.push_back(ComparisonRow{name, rep});
        {
            std::ofstream out(out_dir / (name + ".txt"), std::ios::binary);
            out << report_text(name, cm, rep);
        }
        {
            std::ofstream out(out_dir / (name + ".json"), std::ios::binary);
            out << report_json(name, cm, rep);
        }
        std::cout << name << " accuracy " << fmt4(rep.accuracy) << "\n";
    };

    for (const std::string& file : model_files) {
        const ModelBundle bundle = load_bundle(file);
        progress(rc, "evaluating " + file);
        std::vector<Tensor> probs(test_set.size());
        parallel_for(test_set.size(), [&](std::size_t i) {
            probs[i] = forward(bundle, to_sample(test_set[i]));
        });
        std::vector<int> y_pred(test_set.size());
        for (std::size_t i = 0; i < probs.size(); ++i) {
            y_pred[i] = static_cast<int>(predict_class(probs[i]));
        }
        emit_report(fs::path(file).stem().string(), y_pred);
        model_probs.push_back(std::move(probs));
    }

    if (late != "none") {
        const std::string name = late == "max" ? "max_fusion" : "avg_fusion";
        std::vector<int> y_pred(test_set.size());
        for (std::size_t i = 0; i < test_set.size(); ++i) {
            const Tensor fused = late == "max"
                                     ? late_fuse_max(model_probs[0][i], model_probs[1][i])
                                     : late_fuse_avg(model_probs[0][i], model_probs[1][i]);
            y_pred[i] = static_cast<int>(predict_class(fused));
        }
        emit_report(name, y_pred);
    }

    if (rows.size() >= 2) {
        {
            std::ofstream out(out_dir / "comparison.txt", std::ios::binary);
            out << comparison_text(rows);
        }
        {
            std::ofstream out(out_dir / "comparison.json", std::ios::binary);
            out << comparison_json(rows);
        }
    }
    return 0;
}

// ---- predict --------------------------------------------------------------------

int cmd_predict(const std::string& model_file, const std::string& image_file,
                const std::string& sensors_str) {
    const ModelBundle bundle = load_bundle(model_file);
    Sample sample;
    if (!image_file.empty()) {
        sample.image = read_pgm(image_file);
    }
    if (!sensors_str.empty()) {
        SensorFrame frame;
        std::size_t pos = 0;
        for (int i = 0; i < kNumSensors; ++i) {
            std::size_t next = sensors_str.find(',', pos);
            const std::string tok = sensors_str.substr(
                pos, next == std::string::npos ? std::string::npos : next - pos);
            const int v = std::stoi(tok);  // structure already validated at parse time
            if (v < 0 || v > kAdcMax) {
                throw InvalidRange("sensor value " + tok + " outside the 10-bit range");
            }
            frame.adc[static_cast<std::size_t>(i)] = v;
            pos = next == std::string::npos ? sensors_str.size() : next + 1;
        }
        sample.sensors = frame;
    }
    const Tensor probs = forward(bundle, sample);
    std::cout << class_name(predict_class(probs));
    for (long i = 0; i < probs.size(); ++i) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), " %.6f", probs[i]);
        std::cout << buf;
    }
    std::cout << "\n";
    return 0;
}

// Structural check only; range violations are data errors, not usage errors.
std::string sensors_format_check(const std::string& value) {
    int fields = 0;
    std::size_t pos = 0;
    while (true) {
        std::size_t next = value.find(',', pos);
        const std::string tok =
            value.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
        if (tok.empty() || tok.find_first_not_of("0123456789") != std::string::npos) {
            return "sensor list must be 7 comma-separated non-negative integers";
        }
        ++fields;
        if (next == std::string::npos) break;
        pos = next + 1;
    }
    if (fields != kNumSensors) {
        return "expected 7 sensor values, got " + std::to_string(fields);
    }
    return {};
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multimodal gas detection toolkit: synthetic data generation, CNN/LSTM/"
                 "early-fusion training, evaluation with late fusion, and single-sample "
                 "prediction."};
    app.require_subcommand(1);

    RunConfig rc;
    std::string config_file;
    std::uint64_t seed_flag = 0;
    app.add_option("--config", config_file, "JSON config file (flags override it)");
    auto* seed_opt = app.add_option("--seed", seed_flag, "Root seed for every random draw (default 7)");
    app.add_flag("--quiet", rc.quiet, "Suppress progress output on stderr");

    // generate
    auto* gen = app.add_subcommand("generate", "Write a synthetic dataset directory");
    std::string gen_out;
    int spc = 0;
    gen->add_option("--out", gen_out, "Output dataset directory")->required();
    auto* spc_opt = gen->add_option("--samples-per-class", spc, "Samples per gas class (default 1600)")
                        ->check(CLI::PositiveNumber);
    double sensor_sigma = 0.0, pixel_sigma = 0.0;
    auto* ss_opt = gen->add_option("--sensor-sigma", sensor_sigma,
                                   "Sensor noise in ADC counts (default 15)");
    auto* ps_opt = gen->add_option("--pixel-sigma", pixel_sigma,
                                   "Thermal pixel noise (default 6)");

    // train
    auto* tr = app.add_subcommand("train", "Train a model on a dataset directory");
    std::string tr_data, tr_model = "early-fusion", tr_out;
    int tr_epochs = 0, tr_batch = 0;
    double tr_lr = 0.0;
    tr->add_option("--data", tr_data, "Dataset directory")->required();
    tr->add_option("--model", tr_model, "Model kind (default early-fusion)")
        ->check(CLI::IsMember({"cnn", "lstm", "early-fusion"}));
    tr->add_option("--out", tr_out, "Output model file")->required();
    auto* ep_opt = tr->add_option("--epochs", tr_epochs, "Training epochs (default 300)")
                       ->check(CLI::NonNegativeNumber);
    auto* lr_opt = tr->add_option("--lr", tr_lr, "Initial learning rate (default 0.001)");
    auto* bs_opt = tr->add_option("--batch-size", tr_batch, "Mini-batch size (default 32)")
                       ->check(CLI::PositiveNumber);

    // eval
    auto* ev = app.add_subcommand("eval", "Evaluate models on the dataset's test split");
    std::string ev_data, ev_late = "none", ev_out;
    std::vector<std::string> ev_models;
    ev->add_option("--data", ev_data, "Dataset directory")->required();
    ev->add_option("--model", ev_models, "Model file(s)")->required()->expected(-1);
    ev->add_option("--late", ev_late, "Late-fusion rule over two models (default none)")
        ->check(CLI::IsMember({"none", "max", "avg"}));
    ev->add_option("--out", ev_out, "Report directory (default ./reports)");

    // predict
    auto* pr = app.add_subcommand("predict", "Classify one sample");
    std::string pr_model, pr_image, pr_sensors;
    pr->add_option("--model", pr_model, "Model file")->required();
    pr->add_option("--image", pr_image, "Thermal image (binary PGM)");
    pr->add_option("--sensors", pr_sensors, "7 comma-separated ADC values, MQ2..MQ135")
        ->check(CLI::Validator(sensors_format_check, "SENSORS"));

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (!config_file.empty()) {
            apply_config_file(rc, config_file);
        }
        if (seed_opt->count() > 0) {
            rc.gen.seed = seed_flag;
            rc.train.seed = seed_flag;
        }

        if (gen->parsed()) {
            rc.out_path = gen_out;
            if (spc_opt->count() > 0) rc.gen.samples_per_class = spc;
            if (ss_opt->count() > 0) rc.gen.sensor_sigma = sensor_sigma;
            if (ps_opt->count() > 0) rc.gen.pixel_sigma = pixel_sigma;
            return cmd_generate(rc);
        }
        if (tr->parsed()) {
            rc.data_dir = tr_data;
            rc.out_path = tr_out;
            if (tr->get_option("--model")->count() > 0) rc.model_kind = tr_model;
            if (ep_opt->count() > 0) rc.train.epochs = tr_epochs;
            if (lr_opt->count() > 0) rc.train.lr0 = tr_lr;
            if (bs_opt->count() > 0) rc.train.batch_size = tr_batch;
            return cmd_train(rc);
        }
        if (ev->parsed()) {
            rc.data_dir = ev_data;
            if (!ev_out.empty()) rc.out_path = ev_out;
            else rc.out_path.clear();
            return cmd_eval(rc, ev_models, ev_late);
        }
        if (pr->parsed()) {
            return cmd_predict(pr_model, pr_image, pr_sensors);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    }
    return 0;
}
