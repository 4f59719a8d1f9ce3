#include "facekit/toygen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "facekit/errors.hpp"
#include "facekit/rng.hpp"

namespace facekit::toy {

namespace fs = std::filesystem;
using sampler::Gender;
using sampler::HdriPeriod;
using sampler::SceneConfig;

namespace {

struct Rgb {
    float r = 0, g = 0, b = 0;
    Rgb scaled(float k) const { return {r * k, g * k, b * k}; }
};

Rgb lerp(const Rgb& a, const Rgb& b, float t) {
    return {a.r + (b.r - a.r) * t, a.g + (b.g - a.g) * t,
            a.b + (b.b - a.b) * t};
}

float hash_unit(const std::string& s, const char* tag) {
    return static_cast<float>(
        static_cast<double>(splitmix64(fnv1a64(s) ^ fnv1a64(tag)) >> 11) *
        0x1.0p-53);
}

// Painter over a float image; soft-edged primitives so small parameter
// changes produce smooth pixel changes.
struct Painter {
    Image& img;

    void blend(int x, int y, const Rgb& c, float alpha) {
        if (x < 0 || y < 0 || x >= img.width || y >= img.height || alpha <= 0)
            return;
        img.at(x, y, 0) += (c.r - img.at(x, y, 0)) * alpha;
        img.at(x, y, 1) += (c.g - img.at(x, y, 1)) * alpha;
        img.at(x, y, 2) += (c.b - img.at(x, y, 2)) * alpha;
    }

    void ellipse(float cx, float cy, float rx, float ry, const Rgb& c,
                 float soft = 1.5f) {
        if (rx <= 0 || ry <= 0) return;
        const int x0 = std::max(0, static_cast<int>(cx - rx - soft));
        const int x1 = std::min(img.width - 1, static_cast<int>(cx + rx + soft));
        const int y0 = std::max(0, static_cast<int>(cy - ry - soft));
        const int y1 = std::min(img.height - 1, static_cast<int>(cy + ry + soft));
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                const float dx = (x - cx) / rx;
                const float dy = (y - cy) / ry;
                // Approximate signed distance in pixels.
                const float d =
                    (std::sqrt(dx * dx + dy * dy) - 1.f) * std::min(rx, ry);
                blend(x, y, c, std::clamp(0.5f - d / soft, 0.f, 1.f));
            }
    }

    void ring(float cx, float cy, float radius, float thickness, const Rgb& c) {
        const float outer = radius + thickness;
        const int x0 = std::max(0, static_cast<int>(cx - outer - 2));
        const int x1 = std::min(img.width - 1, static_cast<int>(cx + outer + 2));
        const int y0 = std::max(0, static_cast<int>(cy - outer - 2));
        const int y1 = std::min(img.height - 1, static_cast<int>(cy + outer + 2));
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                const float d =
                    std::abs(std::hypot(x - cx, y - cy) - radius) - thickness / 2;
                blend(x, y, c, std::clamp(0.5f - d, 0.f, 1.f));
            }
    }

    void rect(float x0f, float y0f, float x1f, float y1f, const Rgb& c,
              float alpha = 1.f) {
        const int x0 = std::max(0, static_cast<int>(x0f));
        const int x1 = std::min(img.width - 1, static_cast<int>(x1f));
        const int y0 = std::max(0, static_cast<int>(y0f));
        const int y1 = std::min(img.height - 1, static_cast<int>(y1f));
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) blend(x, y, c, alpha);
    }

    // Band following y(x) = cy + bow * (1 - (2(x-cx)/w)^2); bow > 0 bends the
    // ends upward (screen-y decreases toward the corners).
    void curved_band(float cx, float cy, float w, float bow, float thickness,
                     const Rgb& c) {
        const int x0 = std::max(0, static_cast<int>(cx - w / 2 - 2));
        const int x1 = std::min(img.width - 1, static_cast<int>(cx + w / 2 + 2));
        for (int x = x0; x <= x1; ++x) {
            const float u = (x - cx) / (w / 2);
            if (std::abs(u) > 1.f) continue;
            const float yc = cy + bow * (u * u) - 0.f;
            const int yy0 = std::max(0, static_cast<int>(yc - thickness - 1));
            const int yy1 =
                std::min(img.height - 1, static_cast<int>(yc + thickness + 1));
            for (int y = yy0; y <= yy1; ++y) {
                const float d = std::abs(y - yc) - thickness / 2;
                blend(x, y, c, std::clamp(0.5f - d, 0.f, 1.f));
            }
        }
    }
};

struct ExpressionShape {
    float mouth_bow = 0.f;    // pixels of corner lift (+ = corners up)
    float mouth_open = 0.15f; // fraction of mouth width
    float eye_open = 1.f;
    float brow_raise = 0.f;   // fraction of face height
};

ExpressionShape expression_shape(const SceneConfig& scene) {
    ExpressionShape e;
    if (scene.expression.preset) {
        const std::string& p = *scene.expression.preset;
        if (p == "happiness") e = {-0.8f, 0.30f, 0.9f, 0.01f};
        else if (p == "sadness") e = {0.8f, 0.10f, 0.8f, -0.01f};
        else if (p == "surprise") e = {0.0f, 0.70f, 1.30f, 0.03f};
        else if (p == "anger") e = {0.5f, 0.12f, 0.85f, -0.03f};
        else if (p == "fear") e = {0.3f, 0.50f, 1.2f, 0.02f};
        else if (p == "contempt") e = {-0.4f, 0.12f, 0.95f, 0.0f};
        else if (p == "disgust") e = {0.6f, 0.22f, 0.7f, -0.02f};
        else if (p == "mouth-open") e = {0.0f, 1.0f, 1.0f, 0.0f};
        // neutral keeps the defaults
    } else {
        if (scene.expression.eye_au) {
            const float u = hash_unit(*scene.expression.eye_au, "eye-au");
            e.eye_open = 0.5f + u;         // 0.5 .. 1.5
            e.brow_raise = (u - 0.5f) * 0.05f;
        }
        if (scene.expression.mouth_au) {
            const float u = hash_unit(*scene.expression.mouth_au, "mouth-au");
            e.mouth_open = 0.1f + 0.8f * u;
            e.mouth_bow = (u - 0.5f) * 1.6f;
        }
    }
    return e;
}

Rgb skin_base(const std::string& ethnicity) {
    if (ethnicity == "north_european") return {0.93f, 0.78f, 0.67f};
    if (ethnicity == "african") return {0.45f, 0.30f, 0.20f};
    if (ethnicity == "hispanic") return {0.80f, 0.60f, 0.45f};
    if (ethnicity == "mediterranean") return {0.85f, 0.65f, 0.50f};
    if (ethnicity == "southeast_asian") return {0.88f, 0.70f, 0.52f};
    if (ethnicity == "south_asian") return {0.70f, 0.50f, 0.35f};
    const float u = hash_unit(ethnicity, "skin");
    return lerp({0.45f, 0.30f, 0.20f}, {0.93f, 0.78f, 0.67f}, u);
}

Rgb eye_base(const std::string& eye_color) {
    if (eye_color == "brown") return {0.35f, 0.20f, 0.08f};
    if (eye_color == "blue") return {0.25f, 0.45f, 0.75f};
    if (eye_color == "green") return {0.25f, 0.55f, 0.30f};
    if (eye_color == "hazel") return {0.48f, 0.38f, 0.15f};
    if (eye_color == "gray") return {0.48f, 0.50f, 0.55f};
    const float u = hash_unit(eye_color, "eye");
    return {0.2f + 0.5f * u, 0.3f, 0.6f - 0.4f * u};
}

// Stable per-identity geometry drawn once from the identity seed.
struct FaceTraits {
    float aspect;        // face height / width
    float eye_y;         // fractions of face half-extent
    float eye_spacing;
    float eye_size;
    float brow_offset;
    float brow_thick;
    float brow_tilt;
    float brow_length;
    float nose_len;
    float mouth_y;
    float mouth_w;
    float hairline;
    float skin_shift;
    Rgb hair;
    Rgb lips;
};

FaceTraits face_traits(const sampler::IdentityRecord& id) {
    Rng rng(derive_seed(id.seed, "face"));
    FaceTraits t;
    t.aspect = static_cast<float>(rng.uniform(1.25, 1.45));
    t.eye_y = static_cast<float>(rng.uniform(-0.28, -0.12));
    t.eye_spacing = static_cast<float>(rng.uniform(0.38, 0.56));
    t.eye_size = static_cast<float>(rng.uniform(0.085, 0.14));
    t.brow_offset = static_cast<float>(rng.uniform(0.10, 0.17));
    t.nose_len = static_cast<float>(rng.uniform(0.22, 0.40));
    t.mouth_y = static_cast<float>(rng.uniform(0.42, 0.58));
    t.mouth_w = static_cast<float>(rng.uniform(0.40, 0.62));
    t.hairline = static_cast<float>(rng.uniform(-0.72, -0.52));
    t.skin_shift = static_cast<float>(rng.uniform(-0.06, 0.06));
    const float hair_dark = static_cast<float>(rng.uniform(0.05, 0.55));
    t.hair = {hair_dark, hair_dark * 0.8f, hair_dark * 0.6f};
    t.lips = {static_cast<float>(rng.uniform(0.55, 0.75)),
              static_cast<float>(rng.uniform(0.25, 0.40)),
              static_cast<float>(rng.uniform(0.28, 0.42))};
    // Eyebrow shape comes from the trait id so identities sharing a style
    // share the shape exactly.
    t.brow_thick = 0.02f + 0.035f * hash_unit(id.eyebrow_style, "thick");
    t.brow_tilt = (hash_unit(id.eyebrow_style, "tilt") - 0.5f) * 0.35f;
    t.brow_length = 0.8f + 0.5f * hash_unit(id.eyebrow_style, "len");
    return t;
}

}  // namespace

RenderResult render_scene(const SceneConfig& scene) {
    const int size = scene.resolution;
    if (size != 256 && size != 512)
        throw ValidationError("toy renderer: resolution must be 256 or 512");
    RenderResult out;
    out.image = Image(size, size);
    Painter paint{out.image};
    Rng scene_rng(derive_seed(scene.rng_seed, "render"));
    const FaceTraits traits = face_traits(scene.identity);
    const ExpressionShape expr = expression_shape(scene);

    // --- Background: period sets palette, rotation sets gradient axis. ---
    Rgb bg_hi, bg_lo;
    switch (scene.hdri_period) {
        case HdriPeriod::Daytime:
            bg_hi = {0.65f, 0.78f, 0.92f};
            bg_lo = {0.45f, 0.58f, 0.72f};
            break;
        case HdriPeriod::Evening:
            bg_hi = {0.80f, 0.55f, 0.35f};
            bg_lo = {0.40f, 0.28f, 0.30f};
            break;
        case HdriPeriod::Night:
            bg_hi = {0.18f, 0.20f, 0.32f};
            bg_lo = {0.05f, 0.06f, 0.12f};
            break;
    }
    const float grad_theta =
        static_cast<float>(scene.hdri_rotation_deg * 3.14159265358979 / 180.0);
    const float gx = std::cos(grad_theta), gy = std::sin(grad_theta);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const float u = ((x - size / 2.f) * gx + (y - size / 2.f) * gy) /
                                static_cast<float>(size) +
                            0.5f;
            const Rgb c = lerp(bg_lo, bg_hi, std::clamp(u, 0.f, 1.f));
            out.image.at(x, y, 0) = c.r;
            out.image.at(x, y, 1) = c.g;
            out.image.at(x, y, 2) = c.b;
        }

    // Light level also follows the period; evening/night darken the face.
    const float light = scene.hdri_period == HdriPeriod::Daytime  ? 1.0f
                        : scene.hdri_period == HdriPeriod::Evening ? 0.85f
                                                                   : 0.65f;

    // --- Head placement. Camera pose pans/zooms, head pose moves features.
    const float yaw = static_cast<float>(scene.head_pose.yaw * 3.14159265 / 180.0);
    const float pitch =
        static_cast<float>(scene.head_pose.pitch * 3.14159265 / 180.0);
    const float roll =
        static_cast<float>((scene.head_pose.roll + scene.camera_pose.roll) *
                           3.14159265 / 180.0);
    const float cam_dx =
        static_cast<float>(scene.camera_pose.yaw / 180.0) * size * 0.25f;
    const float cam_dy =
        static_cast<float>(scene.camera_pose.pitch / 180.0) * size * 0.35f;

    const float cx = size / 2.f + cam_dx;
    const float cy = size / 2.f + cam_dy;
    const float half_w = size * 0.30f * (1.f + traits.skin_shift);
    const float half_h = half_w * traits.aspect;
    const float squash = std::max(0.35f, std::cos(yaw));  // profile squeeze
    const float feat_shift = std::sin(yaw) * half_w * 0.35f;
    const float pitch_shift = std::sin(pitch) * half_h * 0.35f;

    // Feature placement in face units, then rolled into canvas coordinates.
    const float cr = std::cos(roll), sr = std::sin(roll);
    auto place = [&](float fx, float fy) {
        const float px = fx * half_w * squash + feat_shift;
        const float py = fy * half_h + pitch_shift;
        return std::array<float, 2>{cx + px * cr - py * sr,
                                    cy + px * sr + py * cr};
    };

    Rgb skin = skin_base(scene.identity.ethnicity);
    skin = lerp(skin, {1, 1, 1}, traits.skin_shift).scaled(light);

    // Face.
    paint.ellipse(cx, cy, half_w * squash, half_h, skin, 2.5f);

    // Hair: cap above the hairline, tinted by the per-sample multipliers.
    Rgb hair = traits.hair;
    hair.r = std::clamp(hair.r * static_cast<float>(scene.hair_color.melanin) +
                            0.12f * static_cast<float>(scene.hair_color.redness - 1.0),
                        0.f, 1.f);
    hair.g = std::clamp(hair.g * static_cast<float>(scene.hair_color.melanin),
                        0.f, 1.f);
    hair.b = std::clamp(hair.b * static_cast<float>(scene.hair_color.melanin),
                        0.f, 1.f);
    const float white =
        std::clamp(static_cast<float>(scene.hair_color.whiteness - 1.0), -0.2f,
                   0.25f);
    hair = lerp(hair, {0.95f, 0.95f, 0.92f}, std::max(0.f, white));
    hair = hair.scaled(light);
    {
        const auto top = place(0.f, traits.hairline);
        paint.ellipse(top[0], top[1] - half_h * 0.18f, half_w * squash * 1.02f,
                      half_h * 0.42f, hair, 2.f);
        // Roughness adds speckle to the cap.
        const int speckles = static_cast<int>(
            120.f * std::clamp(static_cast<float>(scene.hair_color.roughness),
                               0.5f, 1.6f));
        for (int i = 0; i < speckles; ++i) {
            const float ang = static_cast<float>(scene_rng.uniform(0, 6.2831853));
            const float rad = static_cast<float>(scene_rng.uniform(0, 1));
            const float sx = top[0] + std::cos(ang) * half_w * squash * rad;
            const float sy =
                top[1] - half_h * 0.18f + std::sin(ang) * half_h * 0.35f * rad;
            paint.ellipse(sx, sy, 1.2f, 1.2f, hair.scaled(0.8f), 1.f);
        }
    }

    // Eyes and brows.
    const float eye_dx = traits.eye_spacing;
    const auto left_eye = place(-eye_dx, traits.eye_y);
    const auto right_eye = place(eye_dx, traits.eye_y);
    const float eye_r = traits.eye_size * half_w;
    const float eye_open = std::clamp(expr.eye_open, 0.15f, 1.6f);

    Rgb iris = eye_base(scene.identity.eye_color).scaled(light);
    const float iris_tex = hash_unit(scene.identity.iris_texture, "iris");
    for (const auto* e : {&left_eye, &right_eye}) {
        paint.ellipse((*e)[0], (*e)[1], eye_r * 1.35f, eye_r * eye_open,
                      Rgb{0.97f, 0.97f, 0.95f}.scaled(light), 1.2f);
        // Gaze shifts the iris; distance shrinks the pupil slightly.
        const float px =
            (*e)[0] + static_cast<float>(scene.gaze.horizontal) * eye_r * 0.9f;
        const float py =
            (*e)[1] -
            static_cast<float>(scene.gaze.vertical - 0.925) * eye_r * 1.5f;
        paint.ellipse(px, py, eye_r * 0.62f, eye_r * 0.62f * eye_open, iris,
                      1.f);
        // Iris texture ring.
        paint.ring(px, py, eye_r * (0.38f + 0.18f * iris_tex), 1.2f,
                   iris.scaled(0.55f));
        const float pupil =
            eye_r * (0.30f - 0.06f * static_cast<float>(
                                         (scene.gaze.distance - 0.3) / 5.7));
        paint.ellipse(px, py, pupil, pupil * eye_open, {0.03f, 0.03f, 0.03f},
                      1.f);
    }

    Rgb brow = traits.hair.scaled(0.55f * light);
    for (int side = -1; side <= 1; side += 2) {
        const auto b = place(side * eye_dx,
                             traits.eye_y - traits.brow_offset - expr.brow_raise);
        const float bw = eye_r * 2.6f * traits.brow_length;
        const float tilt = traits.brow_tilt * static_cast<float>(side);
        // Thick tilted band, drawn as overlapping dots.
        const int taps = 14;
        for (int i = 0; i < taps; ++i) {
            const float u = (i / (taps - 1.f) - 0.5f);
            paint.ellipse(b[0] + u * bw * cr,
                          b[1] + u * bw * sr + u * bw * tilt,
                          traits.brow_thick * half_w * 1.4f,
                          traits.brow_thick * half_w, brow, 1.f);
        }
    }

    // Makeup: eyelid tint + saturated lips.
    if (scene.accessories.makeup) {
        const Rgb shadow = {0.55f, 0.25f, 0.45f};
        for (const auto* e : {&left_eye, &right_eye})
            paint.ellipse((*e)[0], (*e)[1] - eye_r * 0.9f, eye_r * 1.4f,
                          eye_r * 0.6f, shadow, 1.5f);
    }

    // Nose: bridge band plus tip.
    const auto nose_top = place(0.f, traits.eye_y + 0.06f);
    const auto nose_tip = place(0.f, traits.eye_y + traits.nose_len);
    {
        const Rgb shade = skin.scaled(0.82f);
        const int taps = 12;
        for (int i = 0; i < taps; ++i) {
            const float u = i / (taps - 1.f);
            paint.ellipse(nose_top[0] + (nose_tip[0] - nose_top[0]) * u,
                          nose_top[1] + (nose_tip[1] - nose_top[1]) * u,
                          half_w * 0.045f * (0.6f + 0.7f * u),
                          half_w * 0.04f, shade, 1.f);
        }
        paint.ellipse(nose_tip[0], nose_tip[1], half_w * 0.085f,
                      half_w * 0.055f, skin.scaled(0.72f), 1.f);
    }

    // Mouth. Corners are the landmark anchors.
    const auto mouth_c = place(0.f, traits.mouth_y);
    const float mouth_w = traits.mouth_w * half_w * squash;
    const float open_h =
        std::max(1.5f, expr.mouth_open * mouth_w * 0.22f);
    Rgb lips = scene.accessories.makeup ? Rgb{0.80f, 0.12f, 0.25f}
                                        : traits.lips;
    lips = lips.scaled(light);
    // Corner lift is drawn by bowing the lip band; positive bow lifts
    // corners (smaller screen y at the ends).
    paint.curved_band(mouth_c[0], mouth_c[1], mouth_w,
                      -expr.mouth_bow * open_h, open_h, lips);
    if (expr.mouth_open > 0.4f)
        paint.ellipse(mouth_c[0], mouth_c[1] + open_h * 0.15f, mouth_w * 0.28f,
                      open_h * 0.55f, Rgb{0.12f, 0.05f, 0.06f}, 1.f);

    // Beard: jaw region below the mouth.
    if (scene.accessories.beard) {
        const Rgb beard = traits.hair.scaled(0.5f * light);
        const auto chin = place(0.f, traits.mouth_y + 0.28f);
        paint.ellipse(chin[0], chin[1], half_w * squash * 0.72f, half_h * 0.30f,
                      beard, 2.f);
        paint.curved_band(mouth_c[0], mouth_c[1] + open_h * 2.2f,
                          mouth_w * 1.5f, open_h, open_h * 1.2f, beard);
    }

    // Glasses.
    if (scene.accessories.glasses) {
        const Rgb frame = {0.08f, 0.08f, 0.10f};
        paint.ring(left_eye[0], left_eye[1], eye_r * 1.8f, 2.2f, frame);
        paint.ring(right_eye[0], right_eye[1], eye_r * 1.8f, 2.2f, frame);
        const int taps = 8;
        for (int i = 0; i < taps; ++i) {
            const float u = i / (taps - 1.f);
            paint.ellipse(left_eye[0] + (right_eye[0] - left_eye[0]) * u,
                          left_eye[1] + (right_eye[1] - left_eye[1]) * u -
                              eye_r * 0.9f,
                          1.6f, 1.6f, frame, 1.f);
        }
    }

    // Hat: band + crown over the hair.
    if (scene.accessories.hat) {
        Rgb hat{static_cast<float>(scene_rng.uniform(0.15, 0.85)),
                static_cast<float>(scene_rng.uniform(0.15, 0.85)),
                static_cast<float>(scene_rng.uniform(0.15, 0.85))};
        hat = hat.scaled(light);
        const auto brim = place(0.f, traits.hairline + 0.08f);
        paint.ellipse(brim[0], brim[1], half_w * squash * 1.25f, half_h * 0.10f,
                      hat, 1.5f);
        paint.ellipse(brim[0], brim[1] - half_h * 0.28f, half_w * squash * 0.85f,
                      half_h * 0.30f, hat, 1.5f);
    }

    // Occlusion: a blocking card at a seeded position over the lower face.
    if (scene.accessories.occlusion) {
        const float ox = static_cast<float>(scene_rng.uniform(-0.5, 0.5));
        const float oy = static_cast<float>(scene_rng.uniform(0.0, 0.6));
        const auto o = place(ox, oy);
        const float ow = half_w * static_cast<float>(scene_rng.uniform(0.35, 0.6));
        const float oh = half_h * static_cast<float>(scene_rng.uniform(0.2, 0.4));
        paint.rect(o[0] - ow, o[1] - oh, o[0] + ow, o[1] + oh,
                   Rgb{0.35f, 0.33f, 0.31f}.scaled(light));
    }

    // Sensor-style noise so no two renders are bit-identical by accident.
    for (float& v : out.image.data)
        v = std::clamp(
            v + static_cast<float>(scene_rng.normal(0.0, 0.008)), 0.f, 1.f);

    // Landmarks: drawn feature anchors (eye centers, nose tip, mouth
    // corners). Mouth corners sit at the ends of the lip band.
    out.landmarks.points[0] = {left_eye[0], left_eye[1]};
    out.landmarks.points[1] = {right_eye[0], right_eye[1]};
    out.landmarks.points[2] = {nose_tip[0], nose_tip[1]};
    // The lip band is drawn axis-aligned, so its corners are too.
    const float bow_px = -expr.mouth_bow * open_h;
    const float half_mw = mouth_w / 2.f;
    out.landmarks.points[3] = {mouth_c[0] - half_mw, mouth_c[1] + bow_px};
    out.landmarks.points[4] = {mouth_c[0] + half_mw, mouth_c[1] + bow_px};
    return out;
}

align::LandmarkFile render_manifest(const sampler::DatasetManifest& manifest,
                                    const std::string& out_dir) {
    fs::create_directories(out_dir);
    align::LandmarkFile landmarks;
    for (const auto& rec : manifest.records) {
        const auto rendered = render_scene(rec);
        const fs::path dir = fs::path(out_dir) / rec.identity.id;
        fs::create_directories(dir);
        char name[32];
        std::snprintf(name, sizeof(name), "%s_%04d.ppm",
                      rec.identity.id.c_str(), rec.sample_index + 1);
        const std::string path = (dir / name).string();
        write_ppm(rendered.image, path);
        landmarks.rows.emplace_back(path, rendered.landmarks);
    }
    align::write_landmark_csv(landmarks,
                              (fs::path(out_dir) / "landmarks.csv").string());
    return landmarks;
}

}  // namespace facekit::toy
