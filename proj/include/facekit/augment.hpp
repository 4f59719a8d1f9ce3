#pragma once

#include <cstdint>
#include <optional>

#include "facekit/image.hpp"
#include "facekit/rng.hpp"

namespace facekit::augment {

// Training-time augmentation stack. Probabilities follow the adopted recipe;
// the strength ranges are not published anywhere, so they are config values
// with conventional defaults. Applied to [0,1] pixels before normalization.
struct AugmentationConfig {
    double flip_prob = 0.5;
    double grayscale_prob = 0.1;
    double gaussian_blur_prob = 0.05;
    double gaussian_noise_prob = 0.035;
    double motion_blur_prob = 0.05;
    double jpeg_prob = 0.05;
    double down_up_prob = 0.01;
    double color_jitter_prob = 0.1;

    // Jitter strengths: factor drawn uniformly in [1-s, 1+s] for brightness/
    // contrast/saturation; hue shift uniform in [-s, s] turns.
    double brightness = 0.15;
    double contrast = 0.30;
    double hue = 0.10;
    double saturation = 0.10;

    double blur_sigma_lo = 0.5, blur_sigma_hi = 1.5;
    // Noise standard deviation on the 0-255 scale.
    double noise_std_lo = 3.0, noise_std_hi = 7.0;
    int motion_length_lo = 3, motion_length_hi = 7;
    int jpeg_quality_lo = 30, jpeg_quality_hi = 90;
    double down_up_lo = 0.25, down_up_hi = 0.75;

    void validate() const;
};

// Fully resolved decisions for one image. Sampling the plan consumes the
// randomness; applying it is deterministic, so firing rates can be tested
// without touching pixels.
struct AugmentationPlan {
    bool flip = false;
    bool grayscale = false;
    std::optional<float> blur_sigma;
    std::optional<float> noise_std;            // 0-255 scale
    std::uint64_t noise_seed = 0;
    std::optional<std::pair<int, float>> motion;  // (length, angle)
    std::optional<int> jpeg_quality;
    std::optional<float> down_up_factor;
    struct Jitter {
        float brightness = 1.f;
        float contrast = 1.f;
        float saturation = 1.f;
        float hue_shift = 0.f;  // turns
    };
    std::optional<Jitter> jitter;

    bool any() const {
        return flip || grayscale || blur_sigma || noise_std || motion ||
               jpeg_quality || down_up_factor || jitter;
    }
};

// Each transform fires independently with its configured probability. The
// per-transform draw order is fixed (flip, grayscale, jitter, gaussian blur,
// motion blur, noise, down-up, jpeg) and each transform consumes its
// parameter draws only when it fires.
AugmentationPlan sample_plan(const AugmentationConfig& cfg, Rng& rng);

// Applies the plan in the order: flip, grayscale, color jitter, gaussian
// blur, motion blur, gaussian noise, down-up-scale, jpeg compression.
Image apply_plan(const Image& img, const AugmentationPlan& plan);

// sample_plan + apply_plan with a fresh generator; identical (input, config,
// seed) triples produce identical output bytes.
Image augment(const Image& img, const AugmentationConfig& cfg,
              std::uint64_t seed);

}  // namespace facekit::augment
