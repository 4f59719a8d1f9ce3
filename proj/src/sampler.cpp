#include "facekit/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "facekit/errors.hpp"

namespace facekit::sampler {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Validation.
// ---------------------------------------------------------------------------

void DemographicsSpec::validate() const {
    if (groups.empty())
        throw ValidationError("demographics: at least one group required");
    double sum = 0.0;
    for (const auto& [label, p] : groups) {
        if (label.empty())
            throw ValidationError("demographics: empty group label");
        if (p < 0.0)
            throw ValidationError("demographics: negative proportion for '" +
                                  label + "'");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw ValidationError(
            "demographics: proportions sum to " + std::to_string(sum) +
            ", expected 1.0 +/- 1e-9");
}

DemographicsSpec DemographicsSpec::defaults() {
    // The published mix sums to 99.99%; the remaining 0.01% is held by an
    // explicit filler group so the spec-level sum-to-one invariant holds
    // without disturbing any of the published proportions.
    return DemographicsSpec{{{"north_european", 0.6882},
                             {"african", 0.0852},
                             {"hispanic", 0.0794},
                             {"mediterranean", 0.0638},
                             {"southeast_asian", 0.0501},
                             {"south_asian", 0.0332},
                             {"unspecified", 0.0001}}};
}

namespace {

void validate_axis(const std::vector<GaussianComponent>& axis,
                   const char* name) {
    if (axis.empty())
        throw ValidationError(std::string("pose: axis '") + name +
                              "' has no components");
    double sum = 0.0;
    for (const auto& c : axis) {
        if (c.weight < 0.0)
            throw ValidationError(std::string("pose: negative weight on '") +
                                  name + "'");
        if (c.spread_deg < 0.0)
            throw ValidationError(std::string("pose: negative spread on '") +
                                  name + "'");
        sum += c.weight;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw ValidationError(std::string("pose: weights on '") + name +
                              "' sum to " + std::to_string(sum));
}

}  // namespace

void PoseDistribution::validate() const {
    validate_axis(yaw, "yaw");
    validate_axis(pitch, "pitch");
    validate_axis(roll, "roll");
}

PoseDistribution PoseDistribution::defaults() {
    PoseDistribution d;
    d.yaw = {{1.0, 0.0, 25.0}};
    d.pitch = {{1.0, 0.0, 10.0}};
    d.roll = {{1.0, 0.0, 2.5}};
    return d;
}

void GazeSpec::validate() const {
    if (horizontal_lo > horizontal_hi || vertical_lo > vertical_hi ||
        distance_lo > distance_hi)
        throw ValidationError("gaze: range lo > hi");
}

void AccessoryPolicy::validate() const {
    auto prob = [](double p, const char* name) {
        if (p < 0.0 || p > 1.0)
            throw ValidationError(std::string("accessories: '") + name +
                                  "' outside [0,1]");
    };
    prob(batch2_fraction, "batch2_fraction");
    prob(batch1_makeup, "batch1_makeup");
    prob(batch1_occlusion, "batch1_occlusion");
    prob(batch1_hat, "batch1_hat");
    prob(batch2_makeup, "batch2_makeup");
    prob(batch2_occlusion, "batch2_occlusion");
    prob(batch2_hat, "batch2_hat");
    prob(batch2_random_expression, "batch2_random_expression");
    prob(beard_prob_if_male, "beard_prob_if_male");
    prob(glasses_prob, "glasses_prob");
    if (batch1_makeup + batch1_occlusion + batch1_hat > 1.0 + 1e-12)
        throw ValidationError("accessories: batch-1 probabilities sum > 1");
}

void HairColorConfig::validate() const {
    if (range < 0.0 || range > 1.0)
        throw ValidationError("hair: range outside [0,1]");
}

void IdentityTraitLists::validate() const {
    if (eye_colors.empty() || iris_textures.empty() || eyebrow_styles.empty())
        throw ValidationError("traits: empty trait vocabulary");
    if (male_prob < 0.0 || male_prob > 1.0)
        throw ValidationError("traits: male_prob outside [0,1]");
}

void ActionUnitLists::validate() const {
    if (eye_aus.empty() || mouth_aus.empty())
        throw ValidationError("action_units: empty list");
}

void SamplerConfig::validate() const {
    if (identities < 0) throw ValidationError("sampler: identities < 0");
    if (samples_per_identity < 1)
        throw ValidationError("sampler: samples_per_identity < 1");
    demographics.validate();
    head_pose.validate();
    if (camera_pose) camera_pose->validate();
    gaze.validate();
    accessories.validate();
    hair.validate();
    traits.validate();
    action_units.validate();
    if (resolution_512_prob < 0.0 || resolution_512_prob > 1.0)
        throw ValidationError("sampler: resolution_512_prob outside [0,1]");
    if (hdri_period_probs.size() != 3)
        throw ValidationError("sampler: hdri_period_probs must have 3 entries");
    double sum = 0.0;
    for (double p : hdri_period_probs) {
        if (p < 0.0) throw ValidationError("sampler: negative hdri period prob");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw ValidationError("sampler: hdri_period_probs must sum to 1");
}

// ---------------------------------------------------------------------------
// Enum names.
// ---------------------------------------------------------------------------

std::string to_string(Gender g) {
    return g == Gender::Male ? "male" : "female";
}

std::string to_string(HdriPeriod p) {
    switch (p) {
        case HdriPeriod::Daytime: return "daytime";
        case HdriPeriod::Evening: return "evening";
        case HdriPeriod::Night: return "night";
    }
    return "daytime";
}

Gender gender_from_string(const std::string& s) {
    if (s == "male") return Gender::Male;
    if (s == "female") return Gender::Female;
    throw ValidationError("unknown gender: " + s);
}

HdriPeriod hdri_period_from_string(const std::string& s) {
    if (s == "daytime") return HdriPeriod::Daytime;
    if (s == "evening") return HdriPeriod::Evening;
    if (s == "night") return HdriPeriod::Night;
    throw ValidationError("unknown hdri period: " + s);
}

// ---------------------------------------------------------------------------
// Identity pool.
// ---------------------------------------------------------------------------

std::vector<int> apportion_counts(int n, const DemographicsSpec& demo) {
    demo.validate();
    const std::size_t k = demo.groups.size();
    std::vector<int> counts(k, 0);
    std::vector<double> remainders(k, 0.0);
    long long assigned = 0;
    for (std::size_t i = 0; i < k; ++i) {
        const double quota = static_cast<double>(n) * demo.groups[i].second;
        // Snap quotas that are integral up to rounding noise so exact
        // products like 30000 * 0.6882 do not lose a unit to the floor.
        double f = std::floor(quota);
        double r = quota - f;
        if (r > 1.0 - 1e-9) {
            f += 1.0;
            r = 0.0;
        }
        counts[i] = static_cast<int>(f);
        remainders[i] = r;
        assigned += counts[i];
    }
    long long shortfall = static_cast<long long>(n) - assigned;
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return remainders[a] > remainders[b];
    });
    for (std::size_t j = 0; shortfall > 0; j = (j + 1) % k, --shortfall)
        counts[order[j]] += 1;
    return counts;
}

std::vector<IdentityRecord> sample_identity_pool(int n,
                                                 const DemographicsSpec& demo,
                                                 const IdentityTraitLists& traits,
                                                 std::uint64_t seed) {
    if (n < 0) throw ValidationError("identity pool: n < 0");
    traits.validate();
    const auto counts = apportion_counts(n, demo);

    std::vector<IdentityRecord> pool;
    pool.reserve(static_cast<std::size_t>(n));
    int index = 0;
    for (std::size_t g = 0; g < demo.groups.size(); ++g) {
        for (int j = 0; j < counts[g]; ++j, ++index) {
            IdentityRecord rec;
            char buf[16];
            std::snprintf(buf, sizeof(buf), "id%06d", index);
            rec.id = buf;
            rec.ethnicity = demo.groups[g].first;
            rec.seed = derive_seed(seed, "identity", static_cast<std::uint64_t>(index));
            Rng rng(rec.seed);
            rec.gender = rng.bernoulli(traits.male_prob) ? Gender::Male
                                                         : Gender::Female;
            rec.eye_color = traits.eye_colors[rng.uniform_index(traits.eye_colors.size())];
            rec.iris_texture =
                traits.iris_textures[rng.uniform_index(traits.iris_textures.size())];
            rec.eyebrow_style =
                traits.eyebrow_styles[rng.uniform_index(traits.eyebrow_styles.size())];
            pool.push_back(std::move(rec));
        }
    }
    return pool;
}

// ---------------------------------------------------------------------------
// Scene sampling.
// ---------------------------------------------------------------------------

namespace {

// Wrap into (-180, 180].
double wrap_angle(double deg) {
    double x = std::fmod(deg + 180.0, 360.0);
    if (x <= 0.0) x += 360.0;
    return x - 180.0;
}

double sample_axis(const std::vector<GaussianComponent>& axis, Rng& rng) {
    const double u = rng.uniform();
    double cum = 0.0;
    std::size_t pick = axis.size() - 1;
    for (std::size_t i = 0; i < axis.size(); ++i) {
        cum += axis[i].weight;
        if (u < cum) {
            pick = i;
            break;
        }
    }
    return wrap_angle(rng.normal(axis[pick].mean_deg, axis[pick].spread_deg));
}

}  // namespace

PoseAngles sample_pose(const PoseDistribution& dist, Rng& rng) {
    PoseAngles p;
    p.yaw = sample_axis(dist.yaw, rng);
    p.pitch = sample_axis(dist.pitch, rng);
    p.roll = sample_axis(dist.roll, rng);
    return p;
}

SceneConfig sample_scene_config(const IdentityRecord& identity, int index,
                                const SamplerConfig& cfg, std::uint64_t seed) {
    if (index < 0 || index >= cfg.samples_per_identity)
        throw ValidationError("scene: sample index out of range");

    SceneConfig sc;
    sc.identity = identity;
    sc.sample_index = index;
    sc.rng_seed = seed;
    Rng rng(seed);

    // Draw order is part of the determinism contract; do not reorder.
    const bool batch2 = rng.bernoulli(cfg.accessories.batch2_fraction);
    sc.batch = batch2 ? 2 : 1;
    sc.resolution = rng.bernoulli(cfg.resolution_512_prob) ? 512 : 256;
    sc.head_pose = sample_pose(cfg.head_pose, rng);
    sc.camera_pose = sample_pose(cfg.camera_distribution(), rng);

    {
        const double u = rng.uniform();
        sc.hdri_period = u < cfg.hdri_period_probs[0] ? HdriPeriod::Daytime
                         : u < cfg.hdri_period_probs[0] + cfg.hdri_period_probs[1]
                             ? HdriPeriod::Evening
                             : HdriPeriod::Night;
    }
    sc.hdri_rotation_deg = rng.uniform(0.0, 360.0);

    const auto& presets = expression_presets();
    sc.expression.preset = presets[rng.uniform_index(presets.size())];

    sc.gaze.horizontal = rng.uniform(cfg.gaze.horizontal_lo, cfg.gaze.horizontal_hi);
    sc.gaze.vertical = rng.uniform(cfg.gaze.vertical_lo, cfg.gaze.vertical_hi);
    sc.gaze.distance = rng.uniform(cfg.gaze.distance_lo, cfg.gaze.distance_hi);

    const double r = cfg.hair.range;
    sc.hair_color.melanin = rng.uniform(1.0 - r, 1.0 + r);
    sc.hair_color.whiteness = rng.uniform(1.0 - r, 1.0 + r);
    sc.hair_color.roughness = rng.uniform(1.0 - r, 1.0 + r);
    sc.hair_color.redness = rng.uniform(1.0 - r, 1.0 + r);

    bool random_expression = false;
    if (batch2) {
        sc.accessories.makeup = rng.bernoulli(cfg.accessories.batch2_makeup);
        sc.accessories.occlusion = rng.bernoulli(cfg.accessories.batch2_occlusion);
        sc.accessories.hat = rng.bernoulli(cfg.accessories.batch2_hat);
        random_expression = rng.bernoulli(cfg.accessories.batch2_random_expression);
    } else {
        // At most one accessory; a single draw keeps them mutually exclusive.
        const double u = rng.uniform();
        const auto& a = cfg.accessories;
        if (u < a.batch1_makeup) {
            sc.accessories.makeup = true;
        } else if (u < a.batch1_makeup + a.batch1_occlusion) {
            sc.accessories.occlusion = true;
        } else if (u < a.batch1_makeup + a.batch1_occlusion + a.batch1_hat) {
            sc.accessories.hat = true;
        }
    }

    if (random_expression) {
        // One of: eye unit only, mouth unit only, both; equal probability.
        sc.expression.preset.reset();
        const auto form = rng.uniform_index(3);
        if (form == 0 || form == 2)
            sc.expression.eye_au =
                cfg.action_units.eye_aus[rng.uniform_index(cfg.action_units.eye_aus.size())];
        if (form == 1 || form == 2)
            sc.expression.mouth_au =
                cfg.action_units.mouth_aus[rng.uniform_index(cfg.action_units.mouth_aus.size())];
    }

    sc.accessories.glasses = rng.bernoulli(cfg.accessories.glasses_prob);
    if (identity.gender == Gender::Male)
        sc.accessories.beard = rng.bernoulli(cfg.accessories.beard_prob_if_male);

    return sc;
}

DatasetManifest build_manifest(const SamplerConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    DatasetManifest m;
    m.config = cfg;
    m.header.seed = seed;
    m.header.identities = cfg.identities;
    m.header.samples_per_identity = cfg.samples_per_identity;

    const auto pool =
        sample_identity_pool(cfg.identities, cfg.demographics, cfg.traits, seed);
    m.records.reserve(pool.size() *
                      static_cast<std::size_t>(cfg.samples_per_identity));
    for (const auto& identity : pool) {
        for (int s = 0; s < cfg.samples_per_identity; ++s) {
            const std::uint64_t rec_seed =
                derive_seed(identity.seed, "sample", static_cast<std::uint64_t>(s));
            m.records.push_back(sample_scene_config(identity, s, cfg, rec_seed));
        }
    }
    m.header.records = m.records.size();
    return m;
}

// ---------------------------------------------------------------------------
// Validation of assembled manifests.
// ---------------------------------------------------------------------------

std::vector<Violation> validate_manifest(const DatasetManifest& m) {
    std::vector<Violation> out;
    auto flag = [&](std::size_t rec, std::string msg) {
        out.push_back({rec, std::move(msg)});
    };

    const auto& cfg = m.config;
    const auto& presets = expression_presets();
    std::map<std::string, std::size_t> per_identity;
    std::map<std::string, const IdentityRecord*> first_traits;

    for (std::size_t i = 0; i < m.records.size(); ++i) {
        const auto& r = m.records[i];
        const std::string where = "record " + std::to_string(i) + " (" +
                                  r.identity.id + "/" +
                                  std::to_string(r.sample_index) + ")";
        if (r.identity.id.empty()) flag(i, where + ": empty identity id");
        if (r.resolution != 256 && r.resolution != 512)
            flag(i, where + ": resolution " + std::to_string(r.resolution) +
                        " not in {256, 512}");
        if (r.batch != 1 && r.batch != 2)
            flag(i, where + ": batch " + std::to_string(r.batch));
        if (r.sample_index < 0 || r.sample_index >= cfg.samples_per_identity)
            flag(i, where + ": sample index out of range");

        auto angle = [&](double v, const char* name) {
            if (!std::isfinite(v) || v < -180.0 || v > 180.0)
                flag(i, where + ": " + name + " " + std::to_string(v) +
                            " outside [-180, 180]");
        };
        angle(r.head_pose.yaw, "head yaw");
        angle(r.head_pose.pitch, "head pitch");
        angle(r.head_pose.roll, "head roll");
        angle(r.camera_pose.yaw, "camera yaw");
        angle(r.camera_pose.pitch, "camera pitch");
        angle(r.camera_pose.roll, "camera roll");

        if (!(r.hdri_rotation_deg >= 0.0 && r.hdri_rotation_deg < 360.0))
            flag(i, where + ": hdri rotation outside [0, 360)");

        const bool preset_form = r.expression.preset.has_value();
        const bool au_form =
            r.expression.eye_au.has_value() || r.expression.mouth_au.has_value();
        if (preset_form == au_form) {
            flag(i, where + ": expression must be exactly one of preset or "
                        "action-unit form");
        } else if (preset_form) {
            if (std::find(presets.begin(), presets.end(), *r.expression.preset) ==
                presets.end())
                flag(i, where + ": unknown expression preset '" +
                            *r.expression.preset + "'");
        } else {
            const auto& au = cfg.action_units;
            if (r.expression.eye_au &&
                std::find(au.eye_aus.begin(), au.eye_aus.end(),
                          *r.expression.eye_au) == au.eye_aus.end())
                flag(i, where + ": unknown eye action unit");
            if (r.expression.mouth_au &&
                std::find(au.mouth_aus.begin(), au.mouth_aus.end(),
                          *r.expression.mouth_au) == au.mouth_aus.end())
                flag(i, where + ": unknown mouth action unit");
        }

        auto in_range = [&](double v, double lo, double hi, const char* name) {
            if (!std::isfinite(v) || v < lo - 1e-12 || v > hi + 1e-12)
                flag(i, where + ": " + name + " outside [" + std::to_string(lo) +
                            ", " + std::to_string(hi) + "]");
        };
        in_range(r.gaze.horizontal, cfg.gaze.horizontal_lo, cfg.gaze.horizontal_hi,
                 "gaze horizontal");
        in_range(r.gaze.vertical, cfg.gaze.vertical_lo, cfg.gaze.vertical_hi,
                 "gaze vertical");
        in_range(r.gaze.distance, cfg.gaze.distance_lo, cfg.gaze.distance_hi,
                 "gaze distance");
        in_range(r.hair_color.melanin, 1 - cfg.hair.range, 1 + cfg.hair.range,
                 "hair melanin");
        in_range(r.hair_color.whiteness, 1 - cfg.hair.range, 1 + cfg.hair.range,
                 "hair whiteness");
        in_range(r.hair_color.roughness, 1 - cfg.hair.range, 1 + cfg.hair.range,
                 "hair roughness");
        in_range(r.hair_color.redness, 1 - cfg.hair.range, 1 + cfg.hair.range,
                 "hair redness");

        if (r.batch == 1) {
            const int n = (r.accessories.makeup ? 1 : 0) +
                          (r.accessories.occlusion ? 1 : 0) +
                          (r.accessories.hat ? 1 : 0);
            if (n > 1)
                flag(i, where + ": batch-1 record carries " + std::to_string(n) +
                            " accessories, at most one allowed");
            if (r.expression.eye_au || r.expression.mouth_au)
                flag(i, where + ": batch-1 record carries action units");
        }
        if (r.accessories.beard && r.identity.gender != Gender::Male)
            flag(i, where + ": beard on non-male identity");

        per_identity[r.identity.id] += 1;
        auto [it, inserted] = first_traits.emplace(r.identity.id, &r.identity);
        if (!inserted) {
            const auto& f = *it->second;
            if (f.gender != r.identity.gender ||
                f.ethnicity != r.identity.ethnicity ||
                f.eye_color != r.identity.eye_color ||
                f.iris_texture != r.identity.iris_texture ||
                f.eyebrow_style != r.identity.eyebrow_style)
                flag(i, where + ": identity traits differ from earlier records");
        }
    }

    for (const auto& [id, count] : per_identity)
        if (count != static_cast<std::size_t>(cfg.samples_per_identity))
            out.push_back({Violation::kManifestLevel,
                           "identity " + id + " has " + std::to_string(count) +
                               " records, expected " +
                               std::to_string(cfg.samples_per_identity)});
    if (m.records.size() != m.header.records)
        out.push_back({Violation::kManifestLevel,
                       "header record count " + std::to_string(m.header.records) +
                           " != body " + std::to_string(m.records.size())});
    if (per_identity.size() != static_cast<std::size_t>(m.header.identities))
        out.push_back({Violation::kManifestLevel,
                       "header identity count " +
                           std::to_string(m.header.identities) + " != body " +
                           std::to_string(per_identity.size())});
    return out;
}

// ---------------------------------------------------------------------------
// Summary.
// ---------------------------------------------------------------------------

ManifestSummary summarize_manifest(const DatasetManifest& m) {
    ManifestSummary s;
    s.records = m.records.size();
    std::map<std::string, bool> seen;
    if (s.records == 0) return s;

    double yaw_sum = 0, pitch_sum = 0, roll_sum = 0;
    std::size_t makeup = 0, occlusion = 0, hat = 0, glasses = 0, beard = 0,
                res512 = 0, random_expr = 0;
    std::size_t b1_makeup = 0, b1_occlusion = 0, b1_hat = 0;
    std::size_t b2_makeup = 0, b2_occlusion = 0, b2_hat = 0, b2_rand = 0;
    std::size_t male_beard = 0;

    for (const auto& r : m.records) {
        seen[r.identity.id] = true;
        s.ethnicity_counts[r.identity.ethnicity] += 1;
        if (r.expression.preset)
            s.expression_preset_counts[*r.expression.preset] += 1;

        yaw_sum += r.head_pose.yaw;
        pitch_sum += r.head_pose.pitch;
        roll_sum += r.head_pose.roll;
        s.hdri_rotation_mean += r.hdri_rotation_deg;
        s.gaze_horizontal_mean += r.gaze.horizontal;
        s.gaze_vertical_mean += r.gaze.vertical;
        s.gaze_distance_mean += r.gaze.distance;
        s.hair_melanin_mean += r.hair_color.melanin;
        s.hair_whiteness_mean += r.hair_color.whiteness;
        s.hair_roughness_mean += r.hair_color.roughness;
        s.hair_redness_mean += r.hair_color.redness;

        const bool is_rand_expr = !r.expression.preset.has_value();
        makeup += r.accessories.makeup;
        occlusion += r.accessories.occlusion;
        hat += r.accessories.hat;
        glasses += r.accessories.glasses;
        beard += r.accessories.beard;
        res512 += r.resolution == 512;
        random_expr += is_rand_expr;
        if (r.batch == 2) {
            s.batch2_count += 1;
            b2_makeup += r.accessories.makeup;
            b2_occlusion += r.accessories.occlusion;
            b2_hat += r.accessories.hat;
            b2_rand += is_rand_expr;
        } else {
            s.batch1_count += 1;
            b1_makeup += r.accessories.makeup;
            b1_occlusion += r.accessories.occlusion;
            b1_hat += r.accessories.hat;
        }
        if (r.identity.gender == Gender::Male) {
            s.male_sample_count += 1;
            male_beard += r.accessories.beard;
        }
    }

    const double n = static_cast<double>(s.records);
    s.identities = seen.size();
    s.makeup_rate = makeup / n;
    s.occlusion_rate = occlusion / n;
    s.hat_rate = hat / n;
    s.glasses_rate = glasses / n;
    s.beard_rate = beard / n;
    s.resolution_512_rate = res512 / n;
    s.batch2_fraction = s.batch2_count / n;
    s.random_expression_rate = random_expr / n;
    if (s.batch1_count) {
        s.batch1_makeup_rate = static_cast<double>(b1_makeup) / s.batch1_count;
        s.batch1_occlusion_rate =
            static_cast<double>(b1_occlusion) / s.batch1_count;
        s.batch1_hat_rate = static_cast<double>(b1_hat) / s.batch1_count;
    }
    if (s.batch2_count) {
        s.batch2_makeup_rate = static_cast<double>(b2_makeup) / s.batch2_count;
        s.batch2_occlusion_rate =
            static_cast<double>(b2_occlusion) / s.batch2_count;
        s.batch2_hat_rate = static_cast<double>(b2_hat) / s.batch2_count;
        s.batch2_random_expression_rate =
            static_cast<double>(b2_rand) / s.batch2_count;
    }
    if (s.male_sample_count)
        s.beard_rate_among_males =
            static_cast<double>(male_beard) / s.male_sample_count;

    s.yaw_mean = yaw_sum / n;
    s.pitch_mean = pitch_sum / n;
    s.roll_mean = roll_sum / n;
    s.hdri_rotation_mean /= n;
    s.gaze_horizontal_mean /= n;
    s.gaze_vertical_mean /= n;
    s.gaze_distance_mean /= n;
    s.hair_melanin_mean /= n;
    s.hair_whiteness_mean /= n;
    s.hair_roughness_mean /= n;
    s.hair_redness_mean /= n;

    double yaw_sq = 0, pitch_sq = 0, roll_sq = 0;
    for (const auto& r : m.records) {
        yaw_sq += (r.head_pose.yaw - s.yaw_mean) * (r.head_pose.yaw - s.yaw_mean);
        pitch_sq += (r.head_pose.pitch - s.pitch_mean) *
                    (r.head_pose.pitch - s.pitch_mean);
        roll_sq +=
            (r.head_pose.roll - s.roll_mean) * (r.head_pose.roll - s.roll_mean);
    }
    s.yaw_std = std::sqrt(yaw_sq / n);
    s.pitch_std = std::sqrt(pitch_sq / n);
    s.roll_std = std::sqrt(roll_sq / n);
    return s;
}

// ---------------------------------------------------------------------------
// JSON serialization.
// ---------------------------------------------------------------------------

namespace {

json axis_to_json(const std::vector<GaussianComponent>& axis) {
    json arr = json::array();
    for (const auto& c : axis)
        arr.push_back({{"weight", c.weight},
                       {"mean", c.mean_deg},
                       {"spread", c.spread_deg}});
    return arr;
}

std::vector<GaussianComponent> axis_from_json(const json& arr) {
    std::vector<GaussianComponent> axis;
    for (const auto& c : arr)
        axis.push_back({c.at("weight").get<double>(), c.at("mean").get<double>(),
                        c.at("spread").get<double>()});
    return axis;
}

json pose_to_json(const PoseDistribution& d) {
    return {{"yaw", axis_to_json(d.yaw)},
            {"pitch", axis_to_json(d.pitch)},
            {"roll", axis_to_json(d.roll)}};
}

PoseDistribution pose_from_json(const json& j) {
    PoseDistribution d;
    d.yaw = axis_from_json(j.at("yaw"));
    d.pitch = axis_from_json(j.at("pitch"));
    d.roll = axis_from_json(j.at("roll"));
    return d;
}

}  // namespace

json sampler_config_to_json(const SamplerConfig& cfg) {
    json demo = json::array();
    for (const auto& [label, p] : cfg.demographics.groups)
        demo.push_back({{"label", label}, {"proportion", p}});
    json j{{"identities", cfg.identities},
           {"samples_per_identity", cfg.samples_per_identity},
           {"demographics", demo},
           {"head_pose", pose_to_json(cfg.head_pose)},
           {"camera_pose",
            cfg.camera_pose ? pose_to_json(*cfg.camera_pose) : json(nullptr)},
           {"gaze",
            {{"horizontal", {cfg.gaze.horizontal_lo, cfg.gaze.horizontal_hi}},
             {"vertical", {cfg.gaze.vertical_lo, cfg.gaze.vertical_hi}},
             {"distance", {cfg.gaze.distance_lo, cfg.gaze.distance_hi}}}},
           {"accessories",
            {{"batch2_fraction", cfg.accessories.batch2_fraction},
             {"batch1_makeup", cfg.accessories.batch1_makeup},
             {"batch1_occlusion", cfg.accessories.batch1_occlusion},
             {"batch1_hat", cfg.accessories.batch1_hat},
             {"batch2_makeup", cfg.accessories.batch2_makeup},
             {"batch2_occlusion", cfg.accessories.batch2_occlusion},
             {"batch2_hat", cfg.accessories.batch2_hat},
             {"batch2_random_expression",
              cfg.accessories.batch2_random_expression},
             {"beard_prob_if_male", cfg.accessories.beard_prob_if_male},
             {"glasses_prob", cfg.accessories.glasses_prob}}},
           {"hair", {{"range", cfg.hair.range}}},
           {"traits",
            {{"eye_colors", cfg.traits.eye_colors},
             {"iris_textures", cfg.traits.iris_textures},
             {"eyebrow_styles", cfg.traits.eyebrow_styles},
             {"male_prob", cfg.traits.male_prob}}},
           {"action_units",
            {{"eye", cfg.action_units.eye_aus},
             {"mouth", cfg.action_units.mouth_aus}}},
           {"resolution_512_prob", cfg.resolution_512_prob},
           {"hdri_period_probs", cfg.hdri_period_probs}};
    return j;
}

SamplerConfig sampler_config_from_json(const json& j) {
    SamplerConfig cfg;
    cfg.identities = j.at("identities").get<int>();
    cfg.samples_per_identity = j.at("samples_per_identity").get<int>();
    cfg.demographics.groups.clear();
    for (const auto& g : j.at("demographics"))
        cfg.demographics.groups.emplace_back(g.at("label").get<std::string>(),
                                             g.at("proportion").get<double>());
    cfg.head_pose = pose_from_json(j.at("head_pose"));
    if (!j.at("camera_pose").is_null())
        cfg.camera_pose = pose_from_json(j.at("camera_pose"));
    const auto& gz = j.at("gaze");
    cfg.gaze.horizontal_lo = gz.at("horizontal")[0].get<double>();
    cfg.gaze.horizontal_hi = gz.at("horizontal")[1].get<double>();
    cfg.gaze.vertical_lo = gz.at("vertical")[0].get<double>();
    cfg.gaze.vertical_hi = gz.at("vertical")[1].get<double>();
    cfg.gaze.distance_lo = gz.at("distance")[0].get<double>();
    cfg.gaze.distance_hi = gz.at("distance")[1].get<double>();
    const auto& ac = j.at("accessories");
    cfg.accessories.batch2_fraction = ac.at("batch2_fraction").get<double>();
    cfg.accessories.batch1_makeup = ac.at("batch1_makeup").get<double>();
    cfg.accessories.batch1_occlusion = ac.at("batch1_occlusion").get<double>();
    cfg.accessories.batch1_hat = ac.at("batch1_hat").get<double>();
    cfg.accessories.batch2_makeup = ac.at("batch2_makeup").get<double>();
    cfg.accessories.batch2_occlusion = ac.at("batch2_occlusion").get<double>();
    cfg.accessories.batch2_hat = ac.at("batch2_hat").get<double>();
    cfg.accessories.batch2_random_expression =
        ac.at("batch2_random_expression").get<double>();
    cfg.accessories.beard_prob_if_male = ac.at("beard_prob_if_male").get<double>();
    cfg.accessories.glasses_prob = ac.at("glasses_prob").get<double>();
    cfg.hair.range = j.at("hair").at("range").get<double>();
    const auto& tr = j.at("traits");
    cfg.traits.eye_colors = tr.at("eye_colors").get<std::vector<std::string>>();
    cfg.traits.iris_textures =
        tr.at("iris_textures").get<std::vector<std::string>>();
    cfg.traits.eyebrow_styles =
        tr.at("eyebrow_styles").get<std::vector<std::string>>();
    cfg.traits.male_prob = tr.at("male_prob").get<double>();
    cfg.action_units.eye_aus =
        j.at("action_units").at("eye").get<std::vector<std::string>>();
    cfg.action_units.mouth_aus =
        j.at("action_units").at("mouth").get<std::vector<std::string>>();
    cfg.resolution_512_prob = j.at("resolution_512_prob").get<double>();
    cfg.hdri_period_probs =
        j.at("hdri_period_probs").get<std::vector<double>>();
    return cfg;
}

namespace {

json record_to_json(const SceneConfig& r) {
    json expr;
    if (r.expression.preset) {
        expr = {{"preset", *r.expression.preset}};
    } else {
        expr = json::object();
        if (r.expression.eye_au) expr["eye_au"] = *r.expression.eye_au;
        if (r.expression.mouth_au) expr["mouth_au"] = *r.expression.mouth_au;
    }
    return {{"identity_id", r.identity.id},
            {"identity",
             {{"ethnicity", r.identity.ethnicity},
              {"gender", to_string(r.identity.gender)},
              {"eye_color", r.identity.eye_color},
              {"iris_texture", r.identity.iris_texture},
              {"eyebrow_style", r.identity.eyebrow_style},
              {"seed", r.identity.seed}}},
            {"sample_index", r.sample_index},
            {"resolution", r.resolution},
            {"head_pose",
             {{"yaw", r.head_pose.yaw},
              {"pitch", r.head_pose.pitch},
              {"roll", r.head_pose.roll}}},
            {"camera_pose",
             {{"yaw", r.camera_pose.yaw},
              {"pitch", r.camera_pose.pitch},
              {"roll", r.camera_pose.roll}}},
            {"hdri_period", to_string(r.hdri_period)},
            {"hdri_rotation", r.hdri_rotation_deg},
            {"expression", expr},
            {"gaze",
             {{"horizontal", r.gaze.horizontal},
              {"vertical", r.gaze.vertical},
              {"distance", r.gaze.distance}}},
            {"hair_color",
             {{"melanin", r.hair_color.melanin},
              {"whiteness", r.hair_color.whiteness},
              {"roughness", r.hair_color.roughness},
              {"redness", r.hair_color.redness}}},
            {"accessories",
             {{"makeup", r.accessories.makeup},
              {"occlusion", r.accessories.occlusion},
              {"hat", r.accessories.hat},
              {"glasses", r.accessories.glasses},
              {"beard", r.accessories.beard}}},
            {"batch", r.batch},
            {"rng_seed", r.rng_seed}};
}

SceneConfig record_from_json(const json& j) {
    SceneConfig r;
    r.identity.id = j.at("identity_id").get<std::string>();
    const auto& id = j.at("identity");
    r.identity.ethnicity = id.at("ethnicity").get<std::string>();
    r.identity.gender = gender_from_string(id.at("gender").get<std::string>());
    r.identity.eye_color = id.at("eye_color").get<std::string>();
    r.identity.iris_texture = id.at("iris_texture").get<std::string>();
    r.identity.eyebrow_style = id.at("eyebrow_style").get<std::string>();
    r.identity.seed = id.at("seed").get<std::uint64_t>();
    r.sample_index = j.at("sample_index").get<int>();
    r.resolution = j.at("resolution").get<int>();
    r.head_pose = {j.at("head_pose").at("yaw").get<double>(),
                   j.at("head_pose").at("pitch").get<double>(),
                   j.at("head_pose").at("roll").get<double>()};
    r.camera_pose = {j.at("camera_pose").at("yaw").get<double>(),
                     j.at("camera_pose").at("pitch").get<double>(),
                     j.at("camera_pose").at("roll").get<double>()};
    r.hdri_period =
        hdri_period_from_string(j.at("hdri_period").get<std::string>());
    r.hdri_rotation_deg = j.at("hdri_rotation").get<double>();
    const auto& expr = j.at("expression");
    if (expr.contains("preset")) {
        r.expression.preset = expr.at("preset").get<std::string>();
    } else {
        if (expr.contains("eye_au"))
            r.expression.eye_au = expr.at("eye_au").get<std::string>();
        if (expr.contains("mouth_au"))
            r.expression.mouth_au = expr.at("mouth_au").get<std::string>();
    }
    r.gaze = {j.at("gaze").at("horizontal").get<double>(),
              j.at("gaze").at("vertical").get<double>(),
              j.at("gaze").at("distance").get<double>()};
    r.hair_color = {j.at("hair_color").at("melanin").get<double>(),
                    j.at("hair_color").at("whiteness").get<double>(),
                    j.at("hair_color").at("roughness").get<double>(),
                    j.at("hair_color").at("redness").get<double>()};
    const auto& acc = j.at("accessories");
    r.accessories.makeup = acc.at("makeup").get<bool>();
    r.accessories.occlusion = acc.at("occlusion").get<bool>();
    r.accessories.hat = acc.at("hat").get<bool>();
    r.accessories.glasses = acc.at("glasses").get<bool>();
    r.accessories.beard = acc.at("beard").get<bool>();
    r.batch = j.at("batch").get<int>();
    r.rng_seed = j.at("rng_seed").get<std::uint64_t>();
    return r;
}

}  // namespace

std::string manifest_to_jsonl(const DatasetManifest& m) {
    std::string out;
    json header{{"format", m.header.format},
                {"seed", m.header.seed},
                {"identities", m.header.identities},
                {"samples_per_identity", m.header.samples_per_identity},
                {"records", m.header.records},
                {"config", sampler_config_to_json(m.config)}};
    out += header.dump();
    out += '\n';
    for (const auto& r : m.records) {
        out += record_to_json(r).dump();
        out += '\n';
    }
    return out;
}

DatasetManifest manifest_from_jsonl(const std::string& text) {
    DatasetManifest m;
    std::istringstream is(text);
    std::string line;
    std::size_t line_no = 0;
    bool have_header = false;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError(std::string("manifest: ") + e.what(), line_no);
        }
        try {
            if (!have_header) {
                m.header.format = j.at("format").get<std::string>();
                if (m.header.format != "facekit-manifest/1")
                    throw ValidationError("manifest: unsupported format '" +
                                          m.header.format + "'");
                m.header.seed = j.at("seed").get<std::uint64_t>();
                m.header.identities = j.at("identities").get<int>();
                m.header.samples_per_identity =
                    j.at("samples_per_identity").get<int>();
                m.header.records = j.at("records").get<std::size_t>();
                m.config = sampler_config_from_json(j.at("config"));
                have_header = true;
            } else {
                m.records.push_back(record_from_json(j));
            }
        } catch (const json::exception& e) {
            throw ParseError(std::string("manifest: ") + e.what(), line_no);
        }
    }
    if (!have_header) throw ValidationError("manifest: missing header line");
    return m;
}

void write_manifest(const DatasetManifest& m, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw RuntimeError("cannot open for writing: " + path);
    const std::string text = manifest_to_jsonl(m);
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!f) throw RuntimeError("write failed: " + path);
}

DatasetManifest read_manifest(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw RuntimeError("cannot open: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return manifest_from_jsonl(ss.str());
}

std::string summary_to_json(const ManifestSummary& s) {
    json eth = json::object();
    for (const auto& [k, v] : s.ethnicity_counts) eth[k] = v;
    json presets = json::object();
    for (const auto& [k, v] : s.expression_preset_counts) presets[k] = v;
    json j{{"records", s.records},
           {"identities", s.identities},
           {"ethnicity_counts", eth},
           {"expression_preset_counts", presets},
           {"rates",
            {{"makeup", s.makeup_rate},
             {"occlusion", s.occlusion_rate},
             {"hat", s.hat_rate},
             {"glasses", s.glasses_rate},
             {"beard", s.beard_rate},
             {"batch2", s.batch2_fraction},
             {"resolution_512", s.resolution_512_rate},
             {"random_expression", s.random_expression_rate}}},
           {"conditional_rates",
            {{"batch1_count", s.batch1_count},
             {"batch2_count", s.batch2_count},
             {"male_sample_count", s.male_sample_count},
             {"batch1_makeup", s.batch1_makeup_rate},
             {"batch1_occlusion", s.batch1_occlusion_rate},
             {"batch1_hat", s.batch1_hat_rate},
             {"batch2_makeup", s.batch2_makeup_rate},
             {"batch2_occlusion", s.batch2_occlusion_rate},
             {"batch2_hat", s.batch2_hat_rate},
             {"batch2_random_expression", s.batch2_random_expression_rate},
             {"beard_among_males", s.beard_rate_among_males}}},
           {"pose",
            {{"yaw_mean", s.yaw_mean},
             {"yaw_std", s.yaw_std},
             {"pitch_mean", s.pitch_mean},
             {"pitch_std", s.pitch_std},
             {"roll_mean", s.roll_mean},
             {"roll_std", s.roll_std}}},
           {"means",
            {{"hdri_rotation", s.hdri_rotation_mean},
             {"gaze_horizontal", s.gaze_horizontal_mean},
             {"gaze_vertical", s.gaze_vertical_mean},
             {"gaze_distance", s.gaze_distance_mean},
             {"hair_melanin", s.hair_melanin_mean},
             {"hair_whiteness", s.hair_whiteness_mean},
             {"hair_roughness", s.hair_roughness_mean},
             {"hair_redness", s.hair_redness_mean}}}};
    return j.dump(2);
}

}  // namespace facekit::sampler
