#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "facekit/rng.hpp"

namespace facekit::sampler {

// ---------------------------------------------------------------------------
// Scene-parameter distributions. Defaults mirror the generation recipe this
// toolkit reproduces; every knob is a config value.
// ---------------------------------------------------------------------------

struct DemographicsSpec {
    // (label, proportion) pairs; proportions must sum to 1 within 1e-9.
    std::vector<std::pair<std::string, double>> groups;

    void validate() const;
    static DemographicsSpec defaults();
};

struct GaussianComponent {
    double weight = 1.0;
    double mean_deg = 0.0;
    double spread_deg = 0.0;
};

// Per-axis mixture of Gaussians. The default is one zero-mean component per
// axis with spreads 25 / 10 / 2.5 degrees for yaw / pitch / roll. "Spread"
// is the per-component standard deviation in degrees.
struct PoseDistribution {
    std::vector<GaussianComponent> yaw;
    std::vector<GaussianComponent> pitch;
    std::vector<GaussianComponent> roll;

    void validate() const;
    static PoseDistribution defaults();
};

struct GazeSpec {
    double horizontal_lo = -0.5, horizontal_hi = 0.5;  // meters
    double vertical_lo = 0.85, vertical_hi = 1.0;      // meters
    double distance_lo = 0.3, distance_hi = 6.0;       // meters

    void validate() const;
};

struct AccessoryPolicy {
    double batch2_fraction = 0.17;
    // Batch 1 draws at most one accessory; probabilities must sum to <= 1,
    // the remainder means "none".
    double batch1_makeup = 0.03;
    double batch1_occlusion = 0.025;
    double batch1_hat = 0.035;
    // Batch 2 draws each flag independently.
    double batch2_makeup = 0.15;
    double batch2_occlusion = 0.50;
    double batch2_hat = 0.70;
    double batch2_random_expression = 0.50;
    // Drawn for every sample regardless of batch.
    double beard_prob_if_male = 0.15;
    double glasses_prob = 0.15;

    void validate() const;
};

struct HairColorConfig {
    // Each multiplier is sampled uniformly in [1 - range, 1 + range].
    double range = 0.25;

    void validate() const;
};

struct HairColorDelta {
    double melanin = 1.0;
    double whiteness = 1.0;
    double roughness = 1.0;
    double redness = 1.0;
};

// Opaque per-identity trait vocabularies. The renderer interprets the ids;
// the sampler only guarantees they stay fixed across an identity's samples.
struct IdentityTraitLists {
    std::vector<std::string> eye_colors = {"brown", "blue", "green", "hazel",
                                           "gray"};
    std::vector<std::string> iris_textures = {"iris01", "iris02", "iris03",
                                              "iris04", "iris05", "iris06"};
    std::vector<std::string> eyebrow_styles = {"brow01", "brow02", "brow03",
                                               "brow04", "brow05", "brow06",
                                               "brow07", "brow08"};
    double male_prob = 0.5;

    void validate() const;
};

inline const std::vector<std::string>& expression_presets() {
    static const std::vector<std::string> presets = {
        "neutral",  "happiness", "sadness",  "surprise",  "anger",
        "fear",     "contempt",  "disgust",  "mouth-open"};
    return presets;
}

struct ActionUnitLists {
    std::vector<std::string> eye_aus = {"au-eye-01", "au-eye-02", "au-eye-04",
                                        "au-eye-05", "au-eye-06", "au-eye-07"};
    std::vector<std::string> mouth_aus = {"au-mouth-10", "au-mouth-12",
                                          "au-mouth-15", "au-mouth-20",
                                          "au-mouth-23", "au-mouth-26"};

    void validate() const;
};

struct SamplerConfig {
    int identities = 100;
    int samples_per_identity = 20;
    DemographicsSpec demographics = DemographicsSpec::defaults();
    PoseDistribution head_pose = PoseDistribution::defaults();
    // Camera block defaults to the head distribution; both are drawn
    // independently per sample.
    std::optional<PoseDistribution> camera_pose;
    GazeSpec gaze;
    AccessoryPolicy accessories;
    HairColorConfig hair;
    IdentityTraitLists traits;
    ActionUnitLists action_units;
    double resolution_512_prob = 0.5;
    // Daytime / evening / night; uniform unless configured otherwise.
    std::vector<double> hdri_period_probs = {1.0 / 3, 1.0 / 3, 1.0 / 3};

    const PoseDistribution& camera_distribution() const {
        return camera_pose ? *camera_pose : head_pose;
    }
    void validate() const;
};

// ---------------------------------------------------------------------------
// Sampled records.
// ---------------------------------------------------------------------------

enum class Gender { Male, Female };
enum class HdriPeriod { Daytime, Evening, Night };

std::string to_string(Gender g);
std::string to_string(HdriPeriod p);
Gender gender_from_string(const std::string& s);
HdriPeriod hdri_period_from_string(const std::string& s);

struct IdentityRecord {
    std::string id;
    std::string ethnicity;
    Gender gender = Gender::Female;
    std::string eye_color;
    std::string iris_texture;
    std::string eyebrow_style;
    std::uint64_t seed = 0;
};

struct PoseAngles {
    double yaw = 0.0;
    double pitch = 0.0;
    double roll = 0.0;
};

// Exactly one of `preset` / action-unit form is populated. In AU form at
// least one of the two units is set.
struct Expression {
    std::optional<std::string> preset;
    std::optional<std::string> eye_au;
    std::optional<std::string> mouth_au;

    bool is_preset() const { return preset.has_value(); }
    bool is_action_units() const {
        return !preset && (eye_au || mouth_au);
    }
};

struct GazeTarget {
    double horizontal = 0.0;
    double vertical = 0.0;
    double distance = 0.0;
};

struct AccessoryFlags {
    bool makeup = false;
    bool occlusion = false;
    bool hat = false;
    bool glasses = false;
    bool beard = false;
};

struct SceneConfig {
    IdentityRecord identity;
    int sample_index = 0;
    int resolution = 256;  // 256 or 512
    PoseAngles head_pose;
    PoseAngles camera_pose;
    HdriPeriod hdri_period = HdriPeriod::Daytime;
    double hdri_rotation_deg = 0.0;  // [0, 360)
    Expression expression;
    GazeTarget gaze;
    HairColorDelta hair_color;
    AccessoryFlags accessories;
    int batch = 1;  // 1 or 2
    std::uint64_t rng_seed = 0;
};

struct ManifestHeader {
    std::string format = "facekit-manifest/1";
    std::uint64_t seed = 0;
    int identities = 0;
    int samples_per_identity = 0;
    std::size_t records = 0;
};

struct DatasetManifest {
    ManifestHeader header;
    SamplerConfig config;  // embedded for validation and replay
    std::vector<SceneConfig> records;
};

struct Violation {
    // Record index within the manifest body, or npos for manifest-level
    // violations (counts, header mismatches).
    static constexpr std::size_t kManifestLevel = static_cast<std::size_t>(-1);
    std::size_t record = kManifestLevel;
    std::string message;
};

struct ManifestSummary {
    std::size_t records = 0;
    std::size_t identities = 0;
    std::map<std::string, std::size_t> ethnicity_counts;
    std::map<std::string, std::size_t> expression_preset_counts;
    // Overall rates (fraction of all records); 0 when records == 0.
    double makeup_rate = 0, occlusion_rate = 0, hat_rate = 0;
    double glasses_rate = 0, beard_rate = 0;
    double batch2_fraction = 0, resolution_512_rate = 0;
    double random_expression_rate = 0;
    // Conditional rates used by the statistical checks.
    std::size_t batch1_count = 0, batch2_count = 0, male_sample_count = 0;
    double batch1_makeup_rate = 0, batch1_occlusion_rate = 0,
           batch1_hat_rate = 0;
    double batch2_makeup_rate = 0, batch2_occlusion_rate = 0,
           batch2_hat_rate = 0, batch2_random_expression_rate = 0;
    double beard_rate_among_males = 0;
    // Mean / standard deviation per numeric field.
    double yaw_mean = 0, yaw_std = 0;
    double pitch_mean = 0, pitch_std = 0;
    double roll_mean = 0, roll_std = 0;
    double hdri_rotation_mean = 0;
    double gaze_horizontal_mean = 0, gaze_vertical_mean = 0,
           gaze_distance_mean = 0;
    double hair_melanin_mean = 0, hair_whiteness_mean = 0,
           hair_roughness_mean = 0, hair_redness_mean = 0;
};

// ---------------------------------------------------------------------------
// Operations.
// ---------------------------------------------------------------------------

// Deterministic identity pool. Per-ethnicity counts follow the
// largest-remainder rule (floor quotas, then distribute the shortfall by
// descending fractional remainder, earlier group wins ties) so totals are
// exact. Trait defaults are drawn once per identity from a per-identity
// sub-seed and never resampled.
std::vector<IdentityRecord> sample_identity_pool(int n,
                                                 const DemographicsSpec& demo,
                                                 const IdentityTraitLists& traits,
                                                 std::uint64_t seed);

// Largest-remainder apportionment of n among the given proportions.
std::vector<int> apportion_counts(int n, const DemographicsSpec& demo);

// One draw per axis from its mixture. Angles are wrapped into (-180, 180]
// so every sampled pose is a valid orientation.
PoseAngles sample_pose(const PoseDistribution& dist, Rng& rng);

// Fully samples one scene. The draw order is fixed; re-seeding with the same
// record seed reproduces the record bit for bit.
SceneConfig sample_scene_config(const IdentityRecord& identity, int index,
                                const SamplerConfig& cfg, std::uint64_t seed);

// Samples the pool and every record. Record seeds derive from the global
// seed via (seed -> identity index -> sample index), so identities could be
// sampled in parallel with identical output; this implementation is serial.
DatasetManifest build_manifest(const SamplerConfig& cfg, std::uint64_t seed);

std::vector<Violation> validate_manifest(const DatasetManifest& manifest);

ManifestSummary summarize_manifest(const DatasetManifest& manifest);

// Newline-delimited serialization: one header line, then one self-contained
// scene object per line. Serialization is byte-deterministic for a given
// manifest.
std::string manifest_to_jsonl(const DatasetManifest& manifest);
DatasetManifest manifest_from_jsonl(const std::string& text);
void write_manifest(const DatasetManifest& manifest, const std::string& path);
DatasetManifest read_manifest(const std::string& path);

std::string summary_to_json(const ManifestSummary& s);

// JSON bridging, shared with the config loader.
nlohmann::json sampler_config_to_json(const SamplerConfig& cfg);
SamplerConfig sampler_config_from_json(const nlohmann::json& j);

}  // namespace facekit::sampler
