#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "gasfusion/datagen.hpp"
#include "gasfusion/dataset_io.hpp"

using namespace gasfusion;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
    const fs::path p = fs::temp_directory_path() / ("gasfusion_test_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

} // namespace

TEST_CASE("gen_sensor noise-free means follow the calibration table") {
    GenConfig cfg = default_gen_config();
    cfg.sensor_sigma = 0.0;
    Rng rng(1);

    // Frozen from the per-class means of the calibration rows, rounded
    // half-to-even: perfume (804, 520.5, 511.5, 483, 689, 750, 509).
    const SensorFrame perfume = gen_sensor(GasClass::Perfume, cfg, rng);
    CHECK(perfume.adc == std::array<int, 7>{804, 520, 512, 483, 689, 750, 509});

    // nogas means (674.5, 518, 443, 395.5, 677.5, 591.5, 474).
    const SensorFrame nogas = gen_sensor(GasClass::NoGas, cfg, rng);
    CHECK(nogas.adc == std::array<int, 7>{674, 518, 443, 396, 678, 592, 474});
}

TEST_CASE("gen_sensor clamps to the 10-bit range under extreme noise") {
    GenConfig cfg = default_gen_config();
    cfg.sensor_sigma = 1e6;
    Rng rng(2);
    for (int trial = 0; trial < 200; ++trial) {
        const SensorFrame f = gen_sensor(GasClass::Smoke, cfg, rng);
        for (int v : f.adc) {
            CHECK(v >= 0);
            CHECK(v <= kAdcMax);
        }
    }
}

TEST_CASE("gen_sensor class means converge with noise on") {
    GenConfig cfg = default_gen_config();
    Rng rng(3);
    const int n = 10000;
    for (int c = 0; c < kNumClasses; ++c) {
        std::array<double, kNumSensors> mean{};
        for (int i = 0; i < n; ++i) {
            const SensorFrame f = gen_sensor(static_cast<GasClass>(c), cfg, rng);
            for (int s = 0; s < kNumSensors; ++s) mean[static_cast<std::size_t>(s)] += f.adc[static_cast<std::size_t>(s)];
        }
        const double bound = 3.0 * cfg.sensor_sigma / std::sqrt(static_cast<double>(n)) + 0.5;
        for (int s = 0; s < kNumSensors; ++s) {
            mean[static_cast<std::size_t>(s)] /= n;
            CHECK(std::fabs(mean[static_cast<std::size_t>(s)] - cfg.sensor_mean[static_cast<std::size_t>(c)][static_cast<std::size_t>(s)]) < bound);
        }
    }
}

TEST_CASE("gen_thermal no-source and peak cases") {
    GenConfig cfg = default_gen_config();
    cfg.pixel_sigma = 0.0;
    Rng rng(4);
    const ThermalFrame flat = gen_thermal(GasClass::NoGas, cfg, rng);
    CHECK(flat.height == cfg.native_height);
    CHECK(flat.width == cfg.native_width);
    for (std::uint8_t v : flat.pixels) CHECK(v == static_cast<std::uint8_t>(cfg.ambient));

    // With a fixed amplitude and zero noise the blob peak sits exactly at
    // ambient + amplitude (blob centers are on the pixel grid).
    cfg.perfume_plume = PlumeSpec{80.0, 80.0, 8.0, 8.0};
    const ThermalFrame blob = gen_thermal(GasClass::Perfume, cfg, rng);
    int peak = 0;
    for (std::uint8_t v : blob.pixels) peak = std::max<int>(peak, v);
    CHECK(peak == static_cast<int>(cfg.ambient + 80.0));
}

TEST_CASE("gen_thermal determinism") {
    const GenConfig cfg = default_gen_config();
    Rng a(99), b(99);
    const ThermalFrame fa = gen_thermal(GasClass::Mixture, cfg, a);
    const ThermalFrame fb = gen_thermal(GasClass::Mixture, cfg, b);
    CHECK(fa.pixels == fb.pixels);
}

TEST_CASE("gen_dataset counts, timestamps, determinism") {
    GenConfig cfg = default_gen_config();
    cfg.samples_per_class = 25;  // desk-scale
    const auto ds = gen_dataset(cfg);
    CHECK(ds.size() == 100);

    std::array<int, kNumClasses> hist{};
    for (const LabeledSample& s : ds) ++hist[static_cast<int>(s.label)];
    for (int c = 0; c < kNumClasses; ++c) CHECK(hist[static_cast<std::size_t>(c)] == 25);

    CHECK(ds[0].sensors.t_seconds == 0.0);
    CHECK(ds[1].sensors.t_seconds == 2.0);
    CHECK(ds[99].sensors.t_seconds == 198.0);

    const auto ds2 = gen_dataset(cfg);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        CHECK(ds[i].sensors.adc == ds2[i].sensors.adc);
        CHECK(ds[i].image.pixels == ds2[i].image.pixels);
    }

    GenConfig tiny = cfg;
    tiny.samples_per_class = 1;
    CHECK(gen_dataset(tiny).size() == 4);
}

TEST_CASE("rotate identity and 180 degrees") {
    ThermalFrame img;
    img.height = 2;
    img.width = 2;
    img.pixels = {1, 2, 3, 4};
    const ThermalFrame same = rotate(img, 0.0, 0);
    CHECK(same.pixels == img.pixels);

    const ThermalFrame flipped = rotate(img, 180.0, 0);
    CHECK(flipped.pixels == std::vector<std::uint8_t>{4, 3, 2, 1});
}

TEST_CASE("shear identity") {
    ThermalFrame img;
    img.height = 4;
    img.width = 4;
    img.pixels.assign(16, 7);
    img.at(1, 2) = 200;
    const ThermalFrame same = shear(img, 0.0, 0);
    CHECK(same.pixels == img.pixels);
}

TEST_CASE("resize_area bounds and shape") {
    GenConfig cfg = default_gen_config();
    Rng rng(5);
    const ThermalFrame img = gen_thermal(GasClass::Smoke, cfg, rng);
    const ThermalFrame small = resize_area(img, 32, 32);
    CHECK(small.height == 32);
    CHECK(small.width == 32);
    int lo = 255, hi = 0;
    for (std::uint8_t v : img.pixels) {
        lo = std::min<int>(lo, v);
        hi = std::max<int>(hi, v);
    }
    for (std::uint8_t v : small.pixels) {
        CHECK(static_cast<int>(v) >= lo);
        CHECK(static_cast<int>(v) <= hi);
    }

    CHECK_THROWS_AS(resize_area(img, 4, 32), InvalidShape);
}

TEST_CASE("augmented images keep their intensity range") {
    GenConfig cfg = default_gen_config();
    Rng rng(6);
    const ThermalFrame img = gen_thermal(GasClass::Perfume, cfg, rng);
    const std::uint8_t fill = static_cast<std::uint8_t>(cfg.ambient);
    for (int trial = 0; trial < 8; ++trial) {
        const ThermalFrame aug = random_augment(img, rng, fill);
        CHECK(aug.height == img.height);
        CHECK(aug.width == img.width);
    }
}

TEST_CASE("to_unit_tensor rescales to [0,1]") {
    ThermalFrame img;
    img.height = 1;
    img.width = 3;
    img.pixels = {0, 128, 255};
    const Tensor t = to_unit_tensor(img);
    CHECK(t.shape == std::vector<int>{1, 1, 3});
    CHECK(t[0] == 0.0);
    CHECK(t[1] == doctest::Approx(128.0 / 255.0));
    CHECK(t[2] == 1.0);
}

TEST_CASE("split yields the exact stratified partition") {
    GenConfig cfg = default_gen_config();
    cfg.samples_per_class = 100;
    const auto ds = gen_dataset(cfg);
    const SplitIndices idx = split(ds, 7);
    CHECK(idx.train.size() == 256);
    CHECK(idx.val.size() == 64);
    CHECK(idx.test.size() == 80);

    // stratification: 64/16/20 of each class
    std::array<int, kNumClasses> train_hist{}, val_hist{}, test_hist{};
    for (std::size_t i : idx.train) ++train_hist[static_cast<int>(ds[i].label)];
    for (std::size_t i : idx.val) ++val_hist[static_cast<int>(ds[i].label)];
    for (std::size_t i : idx.test) ++test_hist[static_cast<int>(ds[i].label)];
    for (int c = 0; c < kNumClasses; ++c) {
        CHECK(train_hist[static_cast<std::size_t>(c)] == 64);
        CHECK(val_hist[static_cast<std::size_t>(c)] == 16);
        CHECK(test_hist[static_cast<std::size_t>(c)] == 20);
    }

    // disjoint and exhaustive
    std::set<std::size_t> all;
    for (std::size_t i : idx.train) all.insert(i);
    for (std::size_t i : idx.val) all.insert(i);
    for (std::size_t i : idx.test) all.insert(i);
    CHECK(all.size() == ds.size());
    CHECK(*all.rbegin() == ds.size() - 1);

    // deterministic under the seed
    const SplitIndices idx2 = split(ds, 7);
    CHECK(idx.train == idx2.train);
    CHECK(idx.test == idx2.test);
}

TEST_CASE("split rejects strata that cannot divide 64/16/20") {
    GenConfig cfg = default_gen_config();
    cfg.samples_per_class = 10;
    const auto ds = gen_dataset(cfg);
    CHECK_THROWS_AS(split(ds, 7), SplitError);
}

TEST_CASE("pgm round-trip") {
    const fs::path dir = fresh_dir("pgm");
    GenConfig cfg = default_gen_config();
    Rng rng(8);
    const ThermalFrame img = gen_thermal(GasClass::Mixture, cfg, rng);
    write_pgm(img, dir / "a.pgm");
    const ThermalFrame back = read_pgm(dir / "a.pgm");
    CHECK(back.height == img.height);
    CHECK(back.width == img.width);
    CHECK(back.pixels == img.pixels);
    fs::remove_all(dir);
}

TEST_CASE("dataset save/load round-trip is exact") {
    const fs::path dir = fresh_dir("roundtrip");
    GenConfig cfg = default_gen_config();
    cfg.samples_per_class = 5;
    const auto ds = gen_dataset(cfg);
    save_dataset(ds, dir, cfg.seed);
    const LoadedDataset back = load_dataset(dir);
    CHECK(back.seed == cfg.seed);
    REQUIRE(back.samples.size() == ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        CHECK(back.samples[i].label == ds[i].label);
        CHECK(back.samples[i].sensors.adc == ds[i].sensors.adc);
        CHECK(back.samples[i].sensors.t_seconds == ds[i].sensors.t_seconds);
        CHECK(back.samples[i].image.pixels == ds[i].image.pixels);
    }
    fs::remove_all(dir);
}

TEST_CASE("corrupt datasets fail with the offending file named") {
    const fs::path dir = fresh_dir("corrupt");
    GenConfig cfg = default_gen_config();
    cfg.samples_per_class = 2;
    const auto ds = gen_dataset(cfg);
    save_dataset(ds, dir, cfg.seed);

    SUBCASE("truncated image") {
        const fs::path img = dir / "images" / "000003.pgm";
        fs::resize_file(img, fs::file_size(img) / 2);
        try {
            load_dataset(dir);
            FAIL("expected FormatError");
        } catch (const FormatError& e) {
            CHECK(std::string(e.what()).find("000003.pgm") != std::string::npos);
        }
    }

    SUBCASE("unknown class label") {
        std::ifstream in(dir / "manifest.json");
        std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        in.close();
        const auto pos = text.find("Smoke");
        REQUIRE(pos != std::string::npos);
        text.replace(pos, 5, "Steam");
        std::ofstream out(dir / "manifest.json", std::ios::binary);
        out << text;
        out.close();
        CHECK_THROWS_AS(load_dataset(dir), FormatError);
    }

    SUBCASE("missing manifest") {
        fs::remove(dir / "manifest.json");
        CHECK_THROWS_AS(load_dataset(dir), FormatError);
    }

    fs::remove_all(dir);
}
