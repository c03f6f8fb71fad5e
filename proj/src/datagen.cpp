#include "gasfusion/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "gasfusion/parallel.hpp"

namespace gasfusion {

namespace {

constexpr const char* kClassNames[kNumClasses] = {"NoGas", "Perfume", "Smoke", "Mixture"};

// Exact half-to-even rounding, independent of the floating environment.
long round_half_even(double x) {
    const double f = std::floor(x);
    const double frac = x - f;
    const long fl = static_cast<long>(f);
    if (frac > 0.5) return fl + 1;
    if (frac < 0.5) return fl;
    return fl % 2 == 0 ? fl : fl + 1;
}

std::uint8_t quantize_pixel(double v) {
    const long q = round_half_even(v);
    return static_cast<std::uint8_t>(std::clamp<long>(q, 0, 255));
}

struct Blob {
    double cx, cy, sigma, amp;
};

Blob draw_blob(const PlumeSpec& spec, const GenConfig& cfg, Rng& rng) {
    Blob b;
    // Integer centers inside the central half of the frame keep the peak on
    // the pixel grid and the blob mostly in view.
    b.cx = rng.next_int(cfg.native_width / 4, 3 * cfg.native_width / 4);
    b.cy = rng.next_int(cfg.native_height / 4, 3 * cfg.native_height / 4);
    b.sigma = spec.width_lo + (spec.width_hi - spec.width_lo) * rng.next_double();
    b.amp = spec.amp_lo + (spec.amp_hi - spec.amp_lo) * rng.next_double();
    return b;
}

void add_blob(std::vector<double>& field, int h, int w, const Blob& b) {
    if (b.amp == 0.0) return;
    const double inv2s2 = 1.0 / (2.0 * b.sigma * b.sigma);
    for (int y = 0; y < h; ++y) {
        const double dy = y - b.cy;
        for (int x = 0; x < w; ++x) {
            const double dx = x - b.cx;
            field[static_cast<std::size_t>(y) * w + x] +=
                b.amp * std::exp(-(dx * dx + dy * dy) * inv2s2);
        }
    }
}

} // namespace

const char* class_name(GasClass c) { return kClassNames[static_cast<int>(c)]; }

std::optional<GasClass> class_from_name(const std::string& name) {
    for (int i = 0; i < kNumClasses; ++i) {
        if (name == kClassNames[i]) return static_cast<GasClass>(i);
    }
    return std::nullopt;
}

GenConfig default_gen_config() {
    GenConfig cfg;
    // Per-class means = arithmetic mean of the two observed readings per
    // class; mixture = elementwise max(perfume, smoke).
    const std::array<double, kNumSensors> nogas_a{558, 516, 376, 336, 665, 450, 415};
    const std::array<double, kNumSensors> nogas_b{791, 520, 510, 455, 690, 733, 533};
    const std::array<double, kNumSensors> perfume_a{808, 520, 515, 485, 692, 754, 513};
    const std::array<double, kNumSensors> perfume_b{800, 521, 508, 481, 686, 746, 505};
    const std::array<double, kNumSensors> smoke_a{550, 343, 371, 400, 572, 583, 304};
    const std::array<double, kNumSensors> smoke_b{537, 354, 337, 374, 562, 547, 279};
    for (int i = 0; i < kNumSensors; ++i) {
        cfg.sensor_mean[0][i] = (nogas_a[i] + nogas_b[i]) / 2.0;
        cfg.sensor_mean[1][i] = (perfume_a[i] + perfume_b[i]) / 2.0;
        cfg.sensor_mean[2][i] = (smoke_a[i] + smoke_b[i]) / 2.0;
        cfg.sensor_mean[3][i] = std::max(cfg.sensor_mean[1][i], cfg.sensor_mean[2][i]);
    }
    return cfg;
}

void validate(const GenConfig& cfg) {
    for (const auto& mean : cfg.sensor_mean) {
        for (double m : mean) {
            if (!(m >= 0.0 && m <= kAdcMax)) {
                throw InvalidConfig("sensor mean outside the 10-bit range");
            }
        }
    }
    if (!(cfg.sensor_sigma >= 0.0)) throw InvalidConfig("sensor_sigma must be >= 0");
    if (cfg.samples_per_class < 1) throw InvalidConfig("samples_per_class must be >= 1");
    if (cfg.native_height < 8 || cfg.native_width < 8) {
        throw InvalidConfig("native frame too small");
    }
    if (!(cfg.pixel_sigma >= 0.0)) throw InvalidConfig("pixel_sigma must be >= 0");
    if (!(cfg.frame_period_s > 0.0)) throw InvalidConfig("frame_period_s must be positive");
}

SensorFrame gen_sensor(GasClass cls, const GenConfig& cfg, Rng& rng) {
    validate(cfg);
    SensorFrame f;
    const auto& mean = cfg.sensor_mean[static_cast<int>(cls)];
    for (int i = 0; i < kNumSensors; ++i) {
        const double noisy =
            cfg.sensor_sigma > 0.0 ? rng.normal(mean[i], cfg.sensor_sigma) : mean[i];
        f.adc[static_cast<std::size_t>(i)] =
            static_cast<int>(std::clamp<long>(round_half_even(noisy), 0, kAdcMax));
    }
    return f;
}

ThermalFrame gen_thermal(GasClass cls, const GenConfig& cfg, Rng& rng) {
    validate(cfg);
    const int h = cfg.native_height, w = cfg.native_width;
    std::vector<double> field(static_cast<std::size_t>(h) * w, cfg.ambient);

    switch (cls) {
    case GasClass::NoGas:
        break;
    case GasClass::Perfume:
        add_blob(field, h, w, draw_blob(cfg.perfume_plume, cfg, rng));
        break;
    case GasClass::Smoke:
        add_blob(field, h, w, draw_blob(cfg.smoke_plume, cfg, rng));
        break;
    case GasClass::Mixture:
        add_blob(field, h, w, draw_blob(cfg.perfume_plume, cfg, rng));
        add_blob(field, h, w, draw_blob(cfg.smoke_plume, cfg, rng));
        break;
    }

    ThermalFrame img;
    img.height = h;
    img.width = w;
    img.pixels.resize(field.size());
    for (std::size_t i = 0; i < field.size(); ++i) {
        const double noise = cfg.pixel_sigma > 0.0 ? rng.normal(0.0, cfg.pixel_sigma) : 0.0;
        img.pixels[i] = quantize_pixel(field[i] + noise);
    }
    return img;
}

std::vector<LabeledSample> gen_dataset(const GenConfig& cfg) {
    validate(cfg);
    const long total = static_cast<long>(cfg.samples_per_class) * kNumClasses;
    std::vector<LabeledSample> out(static_cast<std::size_t>(total));
    const Rng root(cfg.seed);
    // One derived stream per sample, so parallel generation equals the
    // sequential result bit for bit.
    parallel_for(static_cast<std::size_t>(total), [&](std::size_t idx) {
        const GasClass cls =
            static_cast<GasClass>(static_cast<long>(idx) / cfg.samples_per_class);
        Rng rng = root.stream(static_cast<std::uint64_t>(idx));
        LabeledSample& s = out[idx];
        s.label = cls;
        s.sensors = gen_sensor(cls, cfg, rng);
        s.sensors.t_seconds = cfg.frame_period_s * static_cast<double>(idx);
        s.image = gen_thermal(cls, cfg, rng);
    });
    return out;
}

// ---- augmentation --------------------------------------------------------------

namespace {

ThermalFrame inverse_map(const ThermalFrame& img, std::uint8_t fill, double m00, double m01,
                         double m10, double m11) {
    // Output pixel -> source pixel via the given inverse linear map about the
    // image center, nearest neighbor.
    ThermalFrame out;
    out.height = img.height;
    out.width = img.width;
    out.pixels.assign(img.pixels.size(), fill);
    const double cy = (img.height - 1) / 2.0;
    const double cx = (img.width - 1) / 2.0;
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            const double ry = y - cy;
            const double rx = x - cx;
            const double sx = m00 * rx + m01 * ry + cx;
            const double sy = m10 * rx + m11 * ry + cy;
            const int ix = static_cast<int>(std::lround(sx));
            const int iy = static_cast<int>(std::lround(sy));
            if (ix >= 0 && ix < img.width && iy >= 0 && iy < img.height) {
                out.at(y, x) = img.at(iy, ix);
            }
        }
    }
    return out;
}

} // namespace

ThermalFrame rotate(const ThermalFrame& img, double degrees, std::uint8_t fill) {
    const double rad = degrees * std::numbers::pi / 180.0;
    const double c = std::cos(rad), s = std::sin(rad);
    // Inverse of a rotation by +degrees is the rotation by -degrees.
    return inverse_map(img, fill, c, s, -s, c);
}

ThermalFrame shear(const ThermalFrame& img, double kx, std::uint8_t fill) {
    // Forward map x' = x + kx*(y - cy); inverse subtracts the same term.
    return inverse_map(img, fill, 1.0, -kx, 0.0, 1.0);
}

ThermalFrame resize_area(const ThermalFrame& img, int out_h, int out_w) {
    if (out_h < 8 || out_w < 8) {
        throw InvalidShape("resize target must be at least 8x8");
    }
    ThermalFrame out;
    out.height = out_h;
    out.width = out_w;
    out.pixels.resize(static_cast<std::size_t>(out_h) * out_w);
    const double sy = static_cast<double>(img.height) / out_h;
    const double sx = static_cast<double>(img.width) / out_w;
    for (int oy = 0; oy < out_h; ++oy) {
        const double y0 = oy * sy, y1 = (oy + 1) * sy;
        for (int ox = 0; ox < out_w; ++ox) {
            const double x0 = ox * sx, x1 = (ox + 1) * sx;
            double acc = 0.0, area = 0.0;
            for (int y = static_cast<int>(std::floor(y0)); y < static_cast<int>(std::ceil(y1));
                 ++y) {
                const double hy = std::min<double>(y + 1, y1) - std::max<double>(y, y0);
                if (hy <= 0.0) continue;
                for (int x = static_cast<int>(std::floor(x0));
                     x < static_cast<int>(std::ceil(x1)); ++x) {
                    const double wx = std::min<double>(x + 1, x1) - std::max<double>(x, x0);
                    if (wx <= 0.0) continue;
                    acc += hy * wx * img.at(std::min(y, img.height - 1), std::min(x, img.width - 1));
                    area += hy * wx;
                }
            }
            out.at(oy, ox) = quantize_pixel(acc / area);
        }
    }
    return out;
}

Tensor to_unit_tensor(const ThermalFrame& img) {
    Tensor t = zeros({1, img.height, img.width});
    for (long i = 0; i < t.size(); ++i) {
        t[i] = img.pixels[static_cast<std::size_t>(i)] / 255.0;
    }
    return t;
}

ThermalFrame random_augment(const ThermalFrame& img, Rng& rng, std::uint8_t fill) {
    const double theta = -15.0 + 30.0 * rng.next_double();
    const double kx = -0.1 + 0.2 * rng.next_double();
    return shear(rotate(img, theta, fill), kx, fill);
}

// ---- split -----------------------------------------------------------------------

SplitIndices split(const std::vector<LabeledSample>& dataset, std::uint64_t seed) {
    std::array<std::vector<std::size_t>, kNumClasses> strata;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        strata[static_cast<int>(dataset[i].label)].push_back(i);
    }
    SplitIndices out;
    const Rng root(seed);
    for (int c = 0; c < kNumClasses; ++c) {
        auto& stratum = strata[c];
        const std::size_t n = stratum.size();
        if (n == 0 || n % 25 != 0) {
            throw SplitError("class " + std::string(kClassNames[c]) + " has " +
                             std::to_string(n) + " samples; 64/16/20 needs a multiple of 25");
        }
        Rng rng = root.stream(static_cast<std::uint64_t>(c));
        // Fisher-Yates over the stratum.
        for (std::size_t i = n; i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(rng.next_int(0, static_cast<int>(i)));
            std::swap(stratum[i - 1], stratum[j]);
        }
        const std::size_t n_train = n * 16 / 25;
        const std::size_t n_val = n * 4 / 25;
        out.train.insert(out.train.end(), stratum.begin(), stratum.begin() + n_train);
        out.val.insert(out.val.end(), stratum.begin() + n_train,
                       stratum.begin() + n_train + n_val);
        out.test.insert(out.test.end(), stratum.begin() + n_train + n_val, stratum.end());
    }
    return out;
}

std::vector<LabeledSample> take(const std::vector<LabeledSample>& dataset,
                                const std::vector<std::size_t>& idx) {
    std::vector<LabeledSample> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) {
        out.push_back(dataset[i]);
    }
    return out;
}

} // namespace gasfusion
