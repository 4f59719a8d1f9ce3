#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "facekit/sampler.hpp"
#include "facekit/trainer.hpp"
#include "facekit/verify.hpp"

namespace facekit::experiments {

// ---------------------------------------------------------------------------
// Variance swap: replace a seeded subset of baseline records with the
// variant records for the same (identity, sample) slot. Slot matching keeps
// the controlled-variable contract: a swapped record differs from the one it
// replaced only in whatever the variant manifest changed.
// ---------------------------------------------------------------------------

struct SwapEntry {
    std::string identity;
    int sample_index = 0;
};

struct SwapPlan {
    double target_fraction = 0.0;
    std::size_t target_count = 0;
    std::vector<SwapEntry> entries;
};

struct SwapResult {
    sampler::DatasetManifest manifest;
    SwapPlan plan;
};

// Swaps round-robin across identities (seeded slot choice per identity) so
// per-identity swap counts stay within one of each other; the global count
// is round(fraction * records), within one sample when capacity allows.
// Errors: identity sets differ, or total variant capacity < target.
SwapResult swap_variants(const sampler::DatasetManifest& baseline,
                         const sampler::DatasetManifest& variants,
                         double fraction, std::uint64_t seed);

nlohmann::json swap_plan_to_json(const SwapPlan& plan);
SwapPlan swap_plan_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Sensitivity probe: embedding-space distance between a fixed reference and
// controlled condition sets.
// ---------------------------------------------------------------------------

struct ProbeCondition {
    std::string label;
    double parameter = 0.0;  // ordering key for the curve output
    std::vector<std::string> image_refs;
};

struct ConditionStats {
    std::string label;
    double parameter = 0.0;
    std::vector<double> distances;
    double mean = 0.0;
    double stddev = 0.0;  // population
};

struct ProbeReport {
    std::string reference;
    std::vector<ConditionStats> conditions;  // ordered by parameter
};

// L2 distances on normalized embeddings between each condition image and the
// reference. Statistics are two-pass; a missing embedding is an error naming
// the image.
ProbeReport sensitivity_probe(const std::string& reference_ref,
                              const std::vector<ProbeCondition>& conditions,
                              const verify::EmbeddingTable& embeddings);

// Pointwise difference between two matched condition series (altered minus
// baseline), the summary used for the intra-class vs altered comparison.
struct GapStats {
    std::vector<double> differences;
    double mean = 0.0;
    double stddev = 0.0;
};

GapStats condition_gap(const std::vector<ConditionStats>& baseline,
                       const std::vector<ConditionStats>& altered);

nlohmann::json probe_report_to_json(const ProbeReport& report,
                                    const std::optional<GapStats>& gap = {});

// Controlled-variable check: every record must match the first one on every
// field except the varied axis (a '/'-separated JSON path, e.g.
// "head_pose/yaw" or "identity/eyebrow_style"). Returns violation messages.
std::vector<std::string> check_controlled_fields(
    const std::vector<sampler::SceneConfig>& records,
    const std::vector<std::string>& varied_axes);

// Scene-config condition builders: copy the reference and vary one axis.
std::vector<sampler::SceneConfig> vary_yaw(const sampler::SceneConfig& ref,
                                           const std::vector<double>& degrees);
std::vector<sampler::SceneConfig> vary_eyebrow_style(
    const sampler::SceneConfig& ref, const std::vector<std::string>& styles);
std::vector<sampler::SceneConfig> vary_eye_traits(
    const sampler::SceneConfig& ref,
    const std::vector<std::pair<std::string, std::string>>& color_texture);

// Reference distances reported by the original full-scale study (not
// reproducible here; they required the original rendering platform and a
// third-party embedder). Carried as documentation targets in probe reports.
struct ReferenceTargets {
    double eyebrow_swap_mean = 0.664;
    double eyebrow_swap_std = 0.16;
    double eye_swap_mean = 0.027;
    double condition_gap_mean = 0.415;
    double condition_gap_std = 0.107;
};

// ---------------------------------------------------------------------------
// Finetune sweep.
// ---------------------------------------------------------------------------

struct EvalSet {
    std::vector<verify::VerificationPair> pairs;
    std::map<std::string, Image> images;  // ref -> aligned crop
    verify::Metric metric = verify::Metric::L2;
    verify::SweepPolicy policy;
    int folds = 10;
};

verify::AccuracyReport evaluate_model(train::Model& model, const EvalSet& eval);

struct SweepRow {
    int identities = 0;
    std::optional<verify::AccuracyReport> finetuned;
    std::optional<verify::AccuracyReport> scratch;
};

struct SweepResult {
    verify::AccuracyReport pretrained;
    std::vector<SweepRow> rows;
};

// For each identity-count batch: finetune the pretrained model on that many
// identities (fresh head, backbone lr/100, head lr/10) and also train a
// from-scratch model on the same data for comparison. Batch 0 rows carry the
// pretrained evaluation only.
SweepResult finetune_sweep(const std::string& pretrained_ckpt,
                           const std::string& real_data_dir,
                           const std::vector<int>& batches,
                           const train::TrainConfig& cfg, const EvalSet& eval);

nlohmann::json sweep_result_to_json(const SweepResult& result);

// ---------------------------------------------------------------------------
// Report assembly over a run directory.
// ---------------------------------------------------------------------------

struct EmittedReport {
    std::vector<std::string> files_written;
    std::vector<std::string> warnings;
};

// Collects metrics.jsonl / report.json / probe_report.json / sweep.json /
// swap_plan.json files under run_dir and writes summary.md, results.json and
// columnar .tsv plot data next to them. Missing inputs become warnings; a
// partial report is still produced.
EmittedReport emit_report(const std::string& run_dir);

}  // namespace facekit::experiments
