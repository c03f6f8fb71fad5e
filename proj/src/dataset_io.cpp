#include "gasfusion/dataset_io.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace gasfusion {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string sample_image_name(std::size_t id) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%06zu.pgm", id);
    return buf;
}

// Shortest exact text form for the CSV: integers undecorated, otherwise a
// round-trip-safe decimal.
std::string format_seconds(double v) {
    if (std::floor(v) == v && std::fabs(v) < 9.007199254740992e15) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%lld", static_cast<long long>(v));
        return buf;
    }
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

[[noreturn]] void format_fail(const fs::path& file, int line, const std::string& what) {
    throw FormatError(file.string() + ":" + std::to_string(line) + ": " + what);
}

int read_pnm_token(std::ifstream& in, const fs::path& path) {
    // Skips whitespace and '#' comments, then reads one non-negative integer.
    int ch = in.get();
    while (ch != EOF) {
        if (ch == '#') {
            while (ch != EOF && ch != '\n') ch = in.get();
        } else if (std::isspace(ch)) {
            ch = in.get();
        } else {
            break;
        }
    }
    if (ch == EOF || !std::isdigit(ch)) {
        throw FormatError(path.string() + ": malformed PGM header");
    }
    long value = 0;
    while (ch != EOF && std::isdigit(ch)) {
        value = value * 10 + (ch - '0');
        if (value > 1'000'000) throw FormatError(path.string() + ": PGM header value too large");
        ch = in.get();
    }
    return static_cast<int>(value);
}

} // namespace

void write_pgm(const ThermalFrame& img, const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw FormatError(path.string() + ": cannot open for writing");
    }
    out << "P5\n" << img.width << " " << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.pixels.data()),
              static_cast<std::streamsize>(img.pixels.size()));
    if (!out) {
        throw FormatError(path.string() + ": write failed");
    }
}

ThermalFrame read_pgm(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError(path.string() + ": cannot open");
    }
    char magic[2] = {0, 0};
    in.read(magic, 2);
    if (!in || magic[0] != 'P' || magic[1] != '5') {
        throw FormatError(path.string() + ": not a binary PGM (P5) file");
    }
    ThermalFrame img;
    img.width = read_pnm_token(in, path);
    img.height = read_pnm_token(in, path);
    const int maxval = read_pnm_token(in, path);
    if (img.width <= 0 || img.height <= 0 || maxval != 255) {
        throw FormatError(path.string() + ": unsupported PGM geometry or maxval");
    }
    // The header ends with exactly one whitespace byte, already consumed by
    // the token reader's final get(); step back one if it ate into the data.
    in.unget();
    int sep = in.get();
    if (sep == EOF || !std::isspace(sep)) {
        throw FormatError(path.string() + ": missing header terminator");
    }
    img.pixels.resize(static_cast<std::size_t>(img.width) * img.height);
    in.read(reinterpret_cast<char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
    if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) {
        throw FormatError(path.string() + ": truncated pixel data");
    }
    return img;
}

void save_dataset(const std::vector<LabeledSample>& samples, const fs::path& dir,
                  std::uint64_t seed) {
    std::error_code ec;
    fs::create_directories(dir / "images", ec);
    if (ec) {
        throw FormatError(dir.string() + ": cannot create dataset directory");
    }

    json manifest;
    manifest["version"] = 1;
    manifest["classes"] = json::array();
    for (int c = 0; c < kNumClasses; ++c) {
        manifest["classes"].push_back(class_name(static_cast<GasClass>(c)));
    }
    manifest["seed"] = seed;
    json records = json::array();

    std::ostringstream csv;
    csv << "id,mq2,mq3,mq5,mq6,mq7,mq8,mq135,t_seconds\n";
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const LabeledSample& s = samples[i];
        const std::string image_rel = "images/" + sample_image_name(i);
        write_pgm(s.image, dir / image_rel);
        records.push_back(json{{"id", i},
                               {"label", class_name(s.label)},
                               {"image", image_rel},
                               {"sensor_row", i}});
        csv << i;
        for (int v : s.sensors.adc) csv << ',' << v;
        csv << ',' << format_seconds(s.sensors.t_seconds) << '\n';
    }
    manifest["samples"] = std::move(records);

    {
        std::ofstream out(dir / "sensors.csv", std::ios::binary);
        out << csv.str();
        if (!out) throw FormatError((dir / "sensors.csv").string() + ": write failed");
    }
    {
        std::ofstream out(dir / "manifest.json", std::ios::binary);
        out << manifest.dump(2) << '\n';
        if (!out) throw FormatError((dir / "manifest.json").string() + ": write failed");
    }
}

LoadedDataset load_dataset(const fs::path& dir) {
    const fs::path manifest_path = dir / "manifest.json";
    std::ifstream min(manifest_path, std::ios::binary);
    if (!min) {
        throw FormatError(manifest_path.string() + ": cannot open");
    }
    json manifest;
    try {
        manifest = json::parse(min);
    } catch (const json::parse_error& e) {
        throw FormatError(manifest_path.string() + ": " + e.what());
    }
    if (!manifest.contains("version") || manifest["version"] != 1) {
        format_fail(manifest_path, 1, "unsupported manifest version");
    }
    if (!manifest.contains("samples") || !manifest["samples"].is_array()) {
        format_fail(manifest_path, 1, "missing sample records");
    }
    if (!manifest.contains("classes") || !manifest["classes"].is_array() ||
        manifest["classes"].size() != kNumClasses) {
        format_fail(manifest_path, 1, "manifest must list exactly 4 classes");
    }
    for (int c = 0; c < kNumClasses; ++c) {
        if (manifest["classes"][static_cast<std::size_t>(c)] !=
            class_name(static_cast<GasClass>(c))) {
            format_fail(manifest_path, 1, "unexpected class list in manifest");
        }
    }

    // Sensor rows keyed by id.
    const fs::path csv_path = dir / "sensors.csv";
    std::ifstream cin_(csv_path, std::ios::binary);
    if (!cin_) {
        throw FormatError(csv_path.string() + ": cannot open");
    }
    std::string line;
    if (!std::getline(cin_, line) || line != "id,mq2,mq3,mq5,mq6,mq7,mq8,mq135,t_seconds") {
        format_fail(csv_path, 1, "bad or missing CSV header");
    }
    std::vector<SensorFrame> rows;
    int lineno = 1;
    while (std::getline(cin_, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string tok;
        SensorFrame f;
        long id = -1;
        for (int field = 0; field < 9; ++field) {
            if (!std::getline(ss, tok, ',')) {
                format_fail(csv_path, lineno, "expected 9 comma-separated fields");
            }
            try {
                if (field == 0) {
                    id = std::stol(tok);
                } else if (field <= kNumSensors) {
                    const int v = std::stoi(tok);
                    if (v < 0 || v > kAdcMax) {
                        format_fail(csv_path, lineno, "ADC value out of the 10-bit range");
                    }
                    f.adc[static_cast<std::size_t>(field - 1)] = v;
                } else {
                    f.t_seconds = std::stod(tok);
                }
            } catch (const std::exception&) {
                format_fail(csv_path, lineno, "unparseable field '" + tok + "'");
            }
        }
        if (id != static_cast<long>(rows.size())) {
            format_fail(csv_path, lineno, "non-contiguous sensor row ids");
        }
        rows.push_back(f);
    }

    LoadedDataset out;
    out.seed = manifest.value("seed", std::uint64_t{0});
    for (const json& rec : manifest["samples"]) {
        if (!rec.contains("label") || !rec.contains("image") || !rec.contains("sensor_row")) {
            format_fail(manifest_path, 1, "sample record missing label/image/sensor_row");
        }
        const auto cls = class_from_name(rec["label"].get<std::string>());
        if (!cls) {
            format_fail(manifest_path, 1,
                        "unknown class label '" + rec["label"].get<std::string>() + "'");
        }
        const std::size_t row = rec["sensor_row"].get<std::size_t>();
        if (row >= rows.size()) {
            format_fail(manifest_path, 1, "sensor_row out of range");
        }
        LabeledSample s;
        s.label = *cls;
        s.sensors = rows[row];
        s.image = read_pgm(dir / rec["image"].get<std::string>());
        out.samples.push_back(std::move(s));
    }
    return out;
}

} // namespace gasfusion
