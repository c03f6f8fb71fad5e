#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gasfusion/tensor.hpp"

namespace gasfusion {

enum class GasClass : int { NoGas = 0, Perfume = 1, Smoke = 2, Mixture = 3 };

inline constexpr int kNumClasses = 4;
inline constexpr int kNumSensors = 7;
inline constexpr int kAdcMax = 1023;

const char* class_name(GasClass c);
std::optional<GasClass> class_from_name(const std::string& name);

// One reading of the 7-sensor array, fixed channel order
// MQ2, MQ3, MQ5, MQ6, MQ7, MQ8, MQ135. 10-bit ADC counts.
struct SensorFrame {
    std::array<int, kNumSensors> adc{};
    double t_seconds = 0.0;
};

// Single-channel temperature image; the camera native frame is 156x206.
struct ThermalFrame {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> pixels;  // row-major, intensities 0..255

    std::uint8_t at(int y, int x) const {
        return pixels[static_cast<std::size_t>(y) * width + x];
    }
    std::uint8_t& at(int y, int x) { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

struct LabeledSample {
    SensorFrame sensors;
    ThermalFrame image;
    GasClass label = GasClass::NoGas;
};

// Hot-spot blob parameters for one gas source; amplitude and width are drawn
// uniformly from the given bounds, the center from the central image region.
struct PlumeSpec {
    double amp_lo = 0.0;
    double amp_hi = 0.0;
    double width_lo = 1.0;  // Gaussian sigma in native pixels
    double width_hi = 1.0;
};

struct GenConfig {
    // Class-conditional sensor means in ADC counts, calibrated from observed
    // per-class readings; mixture defaults to the elementwise max of the
    // perfume and smoke means.
    std::array<std::array<double, kNumSensors>, kNumClasses> sensor_mean;
    double sensor_sigma = 15.0;

    int native_height = 156;
    int native_width = 206;
    double ambient = 96.0;
    double pixel_sigma = 6.0;
    PlumeSpec perfume_plume{60.0, 110.0, 6.0, 12.0};
    PlumeSpec smoke_plume{40.0, 80.0, 18.0, 34.0};

    int samples_per_class = 1600;
    double frame_period_s = 2.0;
    std::uint64_t seed = 7;
};

GenConfig default_gen_config();
void validate(const GenConfig& cfg);

// round(mean + N(0, sigma)) per channel, round-half-to-even, clamped to the
// 10-bit range.
SensorFrame gen_sensor(GasClass cls, const GenConfig& cfg, Rng& rng);

// ambient + per-class plume blob(s) + pixel noise. NoGas has no plume and
// Mixture superposes one perfume and one smoke blob.
ThermalFrame gen_thermal(GasClass cls, const GenConfig& cfg, Rng& rng);

// samples_per_class per class in class order, timestamps spaced by
// frame_period_s over the global index. Pure function of (cfg, cfg.seed):
// every sample draws from its own derived rng stream.
std::vector<LabeledSample> gen_dataset(const GenConfig& cfg);

// ---- augmentation ------------------------------------------------------------

// Rotation about the image center, nearest neighbor, out-of-frame fill.
ThermalFrame rotate(const ThermalFrame& img, double degrees, std::uint8_t fill);
// Horizontal shear about the center row, nearest neighbor.
ThermalFrame shear(const ThermalFrame& img, double kx, std::uint8_t fill);
// Area-average resampling; targets below 8x8 are rejected.
ThermalFrame resize_area(const ThermalFrame& img, int out_h, int out_w);
// Intensity rescale to [0,1] reals as a [1,H,W] tensor (the model input form).
Tensor to_unit_tensor(const ThermalFrame& img);
// Random rotate + shear in the training-augmentation ranges.
ThermalFrame random_augment(const ThermalFrame& img, Rng& rng, std::uint8_t fill);

// ---- split ---------------------------------------------------------------------

struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
    std::vector<std::size_t> test;
};

// Stratified 64/16/20 split. Every class stratum must divide exactly, which
// means each per-class count has to be a multiple of 25.
SplitIndices split(const std::vector<LabeledSample>& dataset, std::uint64_t seed);

std::vector<LabeledSample> take(const std::vector<LabeledSample>& dataset,
                                const std::vector<std::size_t>& idx);

} // namespace gasfusion
