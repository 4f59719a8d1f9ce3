#include "facekit/augment.hpp"

#include <algorithm>
#include <cmath>

#include "facekit/errors.hpp"

namespace facekit::augment {

void AugmentationConfig::validate() const {
    auto prob = [](double p, const char* name) {
        if (p < 0.0 || p > 1.0)
            throw ValidationError(std::string("augment: '") + name +
                                  "' outside [0,1]");
    };
    prob(flip_prob, "flip_prob");
    prob(grayscale_prob, "grayscale_prob");
    prob(gaussian_blur_prob, "gaussian_blur_prob");
    prob(gaussian_noise_prob, "gaussian_noise_prob");
    prob(motion_blur_prob, "motion_blur_prob");
    prob(jpeg_prob, "jpeg_prob");
    prob(down_up_prob, "down_up_prob");
    prob(color_jitter_prob, "color_jitter_prob");
    if (brightness < 0 || contrast < 0 || hue < 0 || saturation < 0)
        throw ValidationError("augment: negative jitter strength");
    if (blur_sigma_lo > blur_sigma_hi || noise_std_lo > noise_std_hi ||
        motion_length_lo > motion_length_hi ||
        jpeg_quality_lo > jpeg_quality_hi || down_up_lo > down_up_hi)
        throw ValidationError("augment: range lo > hi");
    if (down_up_lo <= 0.0 || down_up_hi > 1.0)
        throw ValidationError("augment: down_up factor must be in (0,1]");
}

AugmentationPlan sample_plan(const AugmentationConfig& cfg, Rng& rng) {
    AugmentationPlan plan;
    plan.flip = rng.bernoulli(cfg.flip_prob);
    plan.grayscale = rng.bernoulli(cfg.grayscale_prob);
    if (rng.bernoulli(cfg.color_jitter_prob)) {
        AugmentationPlan::Jitter j;
        j.brightness = static_cast<float>(
            rng.uniform(1.0 - cfg.brightness, 1.0 + cfg.brightness));
        j.contrast = static_cast<float>(
            rng.uniform(1.0 - cfg.contrast, 1.0 + cfg.contrast));
        j.saturation = static_cast<float>(
            rng.uniform(1.0 - cfg.saturation, 1.0 + cfg.saturation));
        j.hue_shift = static_cast<float>(rng.uniform(-cfg.hue, cfg.hue));
        plan.jitter = j;
    }
    if (rng.bernoulli(cfg.gaussian_blur_prob))
        plan.blur_sigma = static_cast<float>(
            rng.uniform(cfg.blur_sigma_lo, cfg.blur_sigma_hi));
    if (rng.bernoulli(cfg.motion_blur_prob)) {
        const int len = cfg.motion_length_lo +
                        static_cast<int>(rng.uniform_index(
                            cfg.motion_length_hi - cfg.motion_length_lo + 1));
        plan.motion = {len, static_cast<float>(rng.uniform(
                                0.0, 3.14159265358979323846))};
    }
    if (rng.bernoulli(cfg.gaussian_noise_prob)) {
        plan.noise_std = static_cast<float>(
            rng.uniform(cfg.noise_std_lo, cfg.noise_std_hi));
        plan.noise_seed = rng.next_u64();
    }
    if (rng.bernoulli(cfg.down_up_prob))
        plan.down_up_factor =
            static_cast<float>(rng.uniform(cfg.down_up_lo, cfg.down_up_hi));
    if (rng.bernoulli(cfg.jpeg_prob))
        plan.jpeg_quality = cfg.jpeg_quality_lo +
                            static_cast<int>(rng.uniform_index(
                                cfg.jpeg_quality_hi - cfg.jpeg_quality_lo + 1));
    return plan;
}

namespace {

inline float clamp01(float v) { return std::clamp(v, 0.f, 1.f); }

// Hue rotation about the gray axis (YIQ-style); cheap and invertible, good
// enough for jitter purposes.
void apply_jitter(Image& img, const AugmentationPlan::Jitter& j) {
    const float theta = j.hue_shift * 2.f * 3.14159265f;
    const float c = std::cos(theta), s = std::sin(theta);
    // Rotation matrix in RGB space around (1,1,1)/sqrt(3).
    const float k = 1.f / 3.f;
    const float sq = std::sqrt(1.f / 3.f);
    float m[3][3];
    m[0][0] = c + (1 - c) * k;
    m[0][1] = k * (1 - c) - sq * s;
    m[0][2] = k * (1 - c) + sq * s;
    m[1][0] = k * (1 - c) + sq * s;
    m[1][1] = c + (1 - c) * k;
    m[1][2] = k * (1 - c) - sq * s;
    m[2][0] = k * (1 - c) - sq * s;
    m[2][1] = k * (1 - c) + sq * s;
    m[2][2] = c + (1 - c) * k;

    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            float r = img.at(x, y, 0), g = img.at(x, y, 1), b = img.at(x, y, 2);
            // Hue.
            float r2 = m[0][0] * r + m[0][1] * g + m[0][2] * b;
            float g2 = m[1][0] * r + m[1][1] * g + m[1][2] * b;
            float b2 = m[2][0] * r + m[2][1] * g + m[2][2] * b;
            // Saturation: lerp against luma.
            const float luma = 0.299f * r2 + 0.587f * g2 + 0.114f * b2;
            r2 = luma + (r2 - luma) * j.saturation;
            g2 = luma + (g2 - luma) * j.saturation;
            b2 = luma + (b2 - luma) * j.saturation;
            // Contrast about mid-gray, then brightness.
            r2 = ((r2 - 0.5f) * j.contrast + 0.5f) * j.brightness;
            g2 = ((g2 - 0.5f) * j.contrast + 0.5f) * j.brightness;
            b2 = ((b2 - 0.5f) * j.contrast + 0.5f) * j.brightness;
            img.at(x, y, 0) = clamp01(r2);
            img.at(x, y, 1) = clamp01(g2);
            img.at(x, y, 2) = clamp01(b2);
        }
}

}  // namespace

Image apply_plan(const Image& img, const AugmentationPlan& plan) {
    if (!plan.any()) return img;
    Image out = img;
    if (plan.flip) out = flip_horizontal(out);
    if (plan.grayscale) out = to_grayscale(out);
    if (plan.jitter) apply_jitter(out, *plan.jitter);
    if (plan.blur_sigma) out = gaussian_blur(out, *plan.blur_sigma);
    if (plan.motion) out = motion_blur(out, plan.motion->first, plan.motion->second);
    if (plan.noise_std) {
        Rng noise(plan.noise_seed);
        const float std01 = *plan.noise_std / 255.f;
        for (float& v : out.data)
            v = clamp01(v + std01 * static_cast<float>(noise.normal()));
    }
    if (plan.down_up_factor) {
        const int small_w = std::max(
            1, static_cast<int>(std::lround(out.width * *plan.down_up_factor)));
        const int small_h = std::max(
            1, static_cast<int>(std::lround(out.height * *plan.down_up_factor)));
        const int w = out.width, h = out.height;
        out = resize_bilinear(resize_bilinear(out, small_w, small_h), w, h);
    }
    if (plan.jpeg_quality) out = jpeg_roundtrip(out, *plan.jpeg_quality);
    return out;
}

Image augment(const Image& img, const AugmentationConfig& cfg,
              std::uint64_t seed) {
    Rng rng(seed);
    return apply_plan(img, sample_plan(cfg, rng));
}

}  // namespace facekit::augment
